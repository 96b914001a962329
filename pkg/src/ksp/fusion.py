"""Slice-wise confidence fusion.

Three scores per slice: the mean of the five sequence classifier scores,
an area-biased maximum over detection confidences, and their average.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .data_model import SEQUENCE_IDS, DetectionBox, Study


@dataclass(frozen=True)
class FusedSliceScores:
    slice_index: int
    s_cls: float
    s_det: float
    s_combined: float
    areas: Mapping[int, float]

    def to_dict(self) -> dict:
        return {
            "m": self.slice_index,
            "s_cls": self.s_cls,
            "s_det": self.s_det,
            "s_combined": self.s_combined,
            "areas": {str(k): a for k, a in self.areas.items()},
        }


def _check_unit(name: str, v: float) -> None:
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name}={v!r} outside [0, 1]")


def fuse_classification(class_scores: Mapping[int, float] | Sequence[float]) -> float:
    values = list(class_scores.values()) if isinstance(class_scores, Mapping) else list(class_scores)
    if len(values) != len(SEQUENCE_IDS):
        raise ValueError(f"expected {len(SEQUENCE_IDS)} sequence scores, got {len(values)}")
    for v in values:
        _check_unit("class score", v)
    return sum(values) / len(values)


def normalize_areas(study: Study) -> dict[tuple[int, int], float]:
    """Detection areas divided by the largest detection area in the study.

    Keys are ``(slice_index, detection_index)``. A study without detections
    yields an empty map.
    """
    areas = {(s.slice_index, k): d.box.area for s in study.slices for k, d in enumerate(s.detections)}
    if not areas:
        return {}
    largest = max(areas.values())
    return {key: a / largest for key, a in areas.items()}


def slice_detection_confidence(detections: Sequence[DetectionBox], areas: Mapping[int, float] | Sequence[float]) -> float:
    if not detections:
        return 0.0
    return max((areas[k] + d.confidence) / 2.0 for k, d in enumerate(detections))


def combined_score(s_cls: float, s_det: float) -> float:
    _check_unit("s_cls", s_cls)
    _check_unit("s_det", s_det)
    return (s_cls + s_det) / 2.0


def score_study(study: Study) -> list[FusedSliceScores]:
    """Fused scores for every slice, in slice order."""
    norm = normalize_areas(study)
    out = []
    for s in study.slices:
        areas = {k: norm[(s.slice_index, k)] for k in range(len(s.detections))}
        s_cls = fuse_classification(s.class_scores)
        s_det = slice_detection_confidence(s.detections, areas)
        out.append(FusedSliceScores(s.slice_index, s_cls, s_det, combined_score(s_cls, s_det), areas))
    return out
