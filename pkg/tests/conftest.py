import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ksp.data_model import (  # noqa: E402
    BoundingBox,
    BoxKind,
    DetectionBox,
    GroundTruthBox,
    LesionType,
    SliceRecord,
    Study,
)


def make_slice(m, scores=0.0, dets=(), gts=(), width=32, height=32, probs=None):
    """Compact slice builder: ``dets`` as ((x0,y0,x1,y1), conf) pairs, ``gts`` as boxes or (box, kind)."""
    if not isinstance(scores, (list, tuple)):
        scores = [scores] * 5
    detections = tuple(DetectionBox(BoundingBox(*b), c, 1 + k % 5) for k, (b, c) in enumerate(dets))
    gt = []
    for g in gts:
        if len(g) == 2:
            gt.append(GroundTruthBox(BoundingBox(*g[0]), BoxKind(g[1])))
        else:
            gt.append(GroundTruthBox(BoundingBox(*g)))
    cs = {j + 1: float(v) for j, v in enumerate(scores)}
    return SliceRecord(m, width, height, cs, detections, tuple(gt), probs)


def make_study(slices, study_id="s0", label=LesionType.HCC, spans=None):
    return Study(study_id, label, tuple(slices), spans)


@pytest.fixture
def tiny_manifest():
    return {
        "studies": [
            {
                "study_id": "p1",
                "label": "ICC",
                "slices": [
                    {
                        "m": m,
                        "width": 16,
                        "height": 16,
                        "class_scores": {str(j): 0.1 * j for j in range(1, 6)},
                        "detections": [{"box": [1, 1, 4, 4], "confidence": 0.7, "sequence_id": 2}],
                        "gt_boxes": [{"box": [1, 1, 5, 5], "kind": "lesion"}],
                        "roi_class_probs": {"roi": [0.2, 0.7, 0.1]},
                    }
                    for m in range(3)
                ],
            }
        ]
    }
