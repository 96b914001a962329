"""Domain types, manifest I/O and structural validation.

Boxes use integer pixel coordinates with inclusive corners, so a box
``(x0, y0, x1, y1)`` covers ``(x1 - x0 + 1) * (y1 - y0 + 1)`` pixels.
"""
from __future__ import annotations

import enum
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)

SEQUENCE_IDS = (1, 2, 3, 4, 5)
# documentation only; the engine treats sequences symmetrically
SEQUENCE_NAMES = {
    1: "T2WI",
    2: "T1WI+T2WI",
    3: "T1WI-A+T2WI",
    4: "T1WI-V+T2WI",
    5: "DWI+T2WI",
}
PROB_TOL = 1e-6


class LesionType(str, enum.Enum):
    HCC = "HCC"
    ICC = "ICC"
    METASTASIS = "Metastasis"


# argmax tie-break order for diagnosis
CLASS_ORDER = (LesionType.HCC, LesionType.ICC, LesionType.METASTASIS)


class BoxKind(str, enum.Enum):
    LESION = "lesion"
    CLUSTER = "cluster"


class SliceLabel(str, enum.Enum):
    KEY = "key"
    MARGINAL = "marginal"
    NONKEY = "nonkey"


class ManifestError(ValueError):
    """Base class for manifest problems; carries the offending location."""

    def __init__(self, message: str, study_id: Optional[str] = None, slice_index: Optional[int] = None):
        where = []
        if study_id is not None:
            where.append(f"study {study_id!r}")
        if slice_index is not None:
            where.append(f"slice {slice_index}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.study_id = study_id
        self.slice_index = slice_index


class MissingField(ManifestError):
    pass


class MalformedBox(ManifestError):
    pass


class BadSequenceCount(ManifestError):
    pass


class OutOfBounds(ManifestError):
    pass


class InvalidValue(ManifestError):
    pass


class EmptyDataset(ManifestError):
    pass


@dataclass(frozen=True)
class BoundingBox:
    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0

    def is_well_formed(self) -> bool:
        return 0 <= self.x0 <= self.x1 and 0 <= self.y0 <= self.y1

    def fits(self, width: int, height: int) -> bool:
        return self.is_well_formed() and self.x1 < width and self.y1 < height

    def contains(self, x: int, y: int) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def intersection_area(self, other: "BoundingBox") -> int:
        w = min(self.x1, other.x1) - max(self.x0, other.x0) + 1
        h = min(self.y1, other.y1) - max(self.y0, other.y0) + 1
        if w <= 0 or h <= 0:
            return 0
        return w * h

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class GroundTruthBox:
    box: BoundingBox
    kind: BoxKind = BoxKind.LESION
    lesion_id: Optional[str] = None


@dataclass(frozen=True)
class DetectionBox:
    box: BoundingBox
    confidence: float
    sequence_id: int


@dataclass(frozen=True)
class LesionSpan:
    first: int
    last: int


@dataclass(frozen=True)
class SliceRecord:
    """One axial slice: five classifier scores, pooled detections, GT boxes.

    ``roi_class_probs`` maps an ROI identity to a probability vector ordered
    as :data:`CLASS_ORDER`. The key ``"roi"`` denotes the single ROI the
    parser regresses on this slice.
    """

    slice_index: int
    width: int
    height: int
    class_scores: Mapping[int, float]
    detections: tuple[DetectionBox, ...] = ()
    gt_boxes: tuple[GroundTruthBox, ...] = ()
    roi_class_probs: Optional[Mapping[str, tuple[float, ...]]] = None


@dataclass(frozen=True)
class Study:
    study_id: str
    label: LesionType
    slices: tuple[SliceRecord, ...]
    lesion_spans: Optional[tuple[LesionSpan, ...]] = None

    def slice_at(self, m: int) -> SliceRecord:
        return self.slices[m - self.slices[0].slice_index]

    @property
    def slice_indices(self) -> range:
        first = self.slices[0].slice_index
        return range(first, first + len(self.slices))


@dataclass(frozen=True)
class Dataset:
    studies: tuple[Study, ...]
    rejected: tuple[tuple[str, str], ...] = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.studies)

    def __iter__(self):
        return iter(self.studies)

    def by_id(self) -> dict[str, Study]:
        return {s.study_id: s for s in self.studies}


@dataclass
class ValidationReport:
    violations: list[tuple[str, str]]
    n_studies: int = 0
    n_slices: int = 0
    n_lesion_boxes: int = 0
    n_cluster_boxes: int = 0
    n_detections: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, Any]:
        return {
            "violations": [{"study_id": s, "message": m} for s, m in self.violations],
            "counts": {
                "studies": self.n_studies,
                "slices": self.n_slices,
                "lesion_boxes": self.n_lesion_boxes,
                "cluster_boxes": self.n_cluster_boxes,
                "detections": self.n_detections,
            },
        }


# ---------------------------------------------------------------------------
# validation


def study_violations(study: Study) -> list[str]:
    """All TYPE-invariant violations of one study, as messages."""
    out: list[str] = []
    if not study.slices:
        return ["study has no slices"]
    if not isinstance(study.label, LesionType):
        out.append(f"unknown label {study.label!r}")
    prev = None
    for s in study.slices:
        m = s.slice_index
        if m < 0:
            out.append(f"slice {m}: negative index")
        if prev is not None and m != prev + 1:
            out.append(f"slice {m}: indices not contiguous after {prev}")
        prev = m
        if s.width < 1 or s.height < 1:
            out.append(f"slice {m}: non-positive dimensions {s.width}x{s.height}")
        if sorted(s.class_scores) != list(SEQUENCE_IDS):
            out.append(f"slice {m}: expected class scores for sequences 1..5, got {sorted(s.class_scores)}")
        for j, v in s.class_scores.items():
            if not _in_unit(v):
                out.append(f"slice {m}: class score {v!r} for sequence {j} outside [0,1]")
        for k, d in enumerate(s.detections):
            if not d.box.fits(s.width, s.height):
                out.append(f"slice {m}: detection {k} box {d.box.as_list()} malformed or out of bounds")
            if not _in_unit(d.confidence):
                out.append(f"slice {m}: detection {k} confidence {d.confidence!r} outside [0,1]")
            if d.sequence_id not in SEQUENCE_IDS:
                out.append(f"slice {m}: detection {k} sequence id {d.sequence_id} not in 1..5")
        for k, g in enumerate(s.gt_boxes):
            if not g.box.fits(s.width, s.height):
                out.append(f"slice {m}: gt box {k} {g.box.as_list()} malformed or out of bounds")
        for key, vec in (s.roi_class_probs or {}).items():
            if len(vec) != len(CLASS_ORDER) or any(not _in_unit(p) for p in vec):
                out.append(f"slice {m}: roi_class_probs[{key!r}] is not a 3-vector in [0,1]")
            elif abs(sum(vec) - 1.0) > PROB_TOL:
                out.append(f"slice {m}: roi_class_probs[{key!r}] sums to {sum(vec):.6g}, not 1")
    if study.lesion_spans:
        lo, hi = study.slice_indices[0], study.slice_indices[-1]
        for sp in study.lesion_spans:
            if not lo <= sp.first <= sp.last <= hi:
                out.append(f"lesion span [{sp.first},{sp.last}] outside study range [{lo},{hi}]")
    return out


def validate_dataset(d: Dataset) -> ValidationReport:
    report = ValidationReport(violations=[])
    for study in d.studies:
        report.n_studies += 1
        report.n_slices += len(study.slices)
        for s in study.slices:
            report.n_detections += len(s.detections)
            for g in s.gt_boxes:
                if g.kind is BoxKind.CLUSTER:
                    report.n_cluster_boxes += 1
                else:
                    report.n_lesion_boxes += 1
        report.violations.extend((study.study_id, msg) for msg in study_violations(study))
    return report


def _in_unit(v: float) -> bool:
    return isinstance(v, (int, float)) and math.isfinite(v) and 0.0 <= v <= 1.0


# ---------------------------------------------------------------------------
# parsing

_STUDY_KEYS = {"study_id", "label", "slices", "lesion_spans"}
_SLICE_KEYS = {"m", "width", "height", "class_scores", "detections", "gt_boxes", "roi_class_probs"}


def _require(obj: Mapping[str, Any], key: str, study_id=None, m=None):
    if key not in obj:
        raise MissingField(f"missing field {key!r}", study_id, m)
    return obj[key]


def _parse_box(raw, study_id, m) -> BoundingBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise MalformedBox(f"box must be [x0, y0, x1, y1], got {raw!r}", study_id, m)
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in raw):
        raise MalformedBox(f"box coordinates must be integers, got {raw!r}", study_id, m)
    box = BoundingBox(*raw)
    if not box.is_well_formed():
        raise MalformedBox(f"box {raw!r} has x1<x0, y1<y0 or negative coordinates", study_id, m)
    return box


def _warn_unknown(obj: Mapping[str, Any], known: set[str], where: str) -> None:
    extra = sorted(set(obj) - known)
    if extra:
        logger.warning("%s: ignoring unknown fields %s", where, extra)


def slice_from_dict(raw: Mapping[str, Any], study_id: str) -> SliceRecord:
    m = _require(raw, "m", study_id)
    _warn_unknown(raw, _SLICE_KEYS, f"study {study_id!r} slice {m}")
    width = _require(raw, "width", study_id, m)
    height = _require(raw, "height", study_id, m)
    scores_raw = _require(raw, "class_scores", study_id, m)
    if not isinstance(scores_raw, Mapping) or len(scores_raw) != 5:
        n = len(scores_raw) if hasattr(scores_raw, "__len__") else "?"
        raise BadSequenceCount(f"expected 5 class scores, got {n}", study_id, m)
    try:
        class_scores = {int(k): float(v) for k, v in scores_raw.items()}
    except (TypeError, ValueError) as exc:
        raise InvalidValue(f"bad class score entry: {exc}", study_id, m) from None
    if sorted(class_scores) != list(SEQUENCE_IDS):
        raise BadSequenceCount(f"class score keys must be 1..5, got {sorted(class_scores)}", study_id, m)

    detections = []
    for d in raw.get("detections", []):
        box = _parse_box(_require(d, "box", study_id, m), study_id, m)
        if not box.fits(width, height):
            raise OutOfBounds(f"detection box {box.as_list()} outside {width}x{height}", study_id, m)
        detections.append(
            DetectionBox(box, float(_require(d, "confidence", study_id, m)), int(_require(d, "sequence_id", study_id, m)))
        )
    gt = []
    for g in raw.get("gt_boxes", []):
        box = _parse_box(_require(g, "box", study_id, m), study_id, m)
        if not box.fits(width, height):
            raise OutOfBounds(f"gt box {box.as_list()} outside {width}x{height}", study_id, m)
        try:
            kind = BoxKind(g.get("kind", "lesion"))
        except ValueError:
            raise InvalidValue(f"unknown gt kind {g.get('kind')!r}", study_id, m) from None
        lid = g.get("lesion_id")
        gt.append(GroundTruthBox(box, kind, None if lid is None else str(lid)))

    probs = raw.get("roi_class_probs")
    if probs is not None:
        probs = {str(k): tuple(float(p) for p in v) for k, v in probs.items()}
    return SliceRecord(int(m), int(width), int(height), class_scores, tuple(detections), tuple(gt), probs)


def study_from_dict(raw: Mapping[str, Any]) -> Study:
    study_id = str(_require(raw, "study_id"))
    _warn_unknown(raw, _STUDY_KEYS, f"study {study_id!r}")
    label_raw = _require(raw, "label", study_id)
    try:
        label = LesionType(label_raw)
    except ValueError:
        raise InvalidValue(f"unknown label {label_raw!r}", study_id) from None
    slices = tuple(slice_from_dict(s, study_id) for s in _require(raw, "slices", study_id))
    spans = raw.get("lesion_spans")
    if spans is not None:
        spans = tuple(LesionSpan(int(a), int(b)) for a, b in spans)
    study = Study(study_id, label, slices, spans)
    problems = study_violations(study)
    if problems:
        raise InvalidValue("; ".join(problems), study_id)
    return study


def dataset_from_dict(doc: Mapping[str, Any], strict: bool = False) -> Dataset:
    """Build a dataset, rejecting (and logging) any study that fails to parse.

    With ``strict=True`` the first problem is raised instead.
    """
    if "studies" not in doc:
        raise MissingField("missing top-level field 'studies'")
    studies, rejected = [], []
    for raw in doc["studies"]:
        try:
            studies.append(study_from_dict(raw))
        except ManifestError as exc:
            if strict:
                raise
            sid = exc.study_id or str(raw.get("study_id", "?"))
            logger.warning("rejecting study %s: %s", sid, exc)
            rejected.append((sid, str(exc)))
    if not studies:
        raise EmptyDataset("manifest contains no valid studies")
    return Dataset(tuple(studies), tuple(rejected))


def load_manifest(path: str | os.PathLike, strict: bool = False) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return dataset_from_dict(doc, strict=strict)


# ---------------------------------------------------------------------------
# serialization


def slice_to_dict(s: SliceRecord) -> dict[str, Any]:
    out: dict[str, Any] = {
        "m": s.slice_index,
        "width": s.width,
        "height": s.height,
        "class_scores": {str(j): s.class_scores[j] for j in sorted(s.class_scores)},
        "detections": [
            {"box": d.box.as_list(), "confidence": d.confidence, "sequence_id": d.sequence_id} for d in s.detections
        ],
        "gt_boxes": [],
    }
    for g in s.gt_boxes:
        gd: dict[str, Any] = {"box": g.box.as_list(), "kind": g.kind.value}
        if g.lesion_id is not None:
            gd["lesion_id"] = g.lesion_id
        out["gt_boxes"].append(gd)
    if s.roi_class_probs is not None:
        out["roi_class_probs"] = {k: list(v) for k, v in s.roi_class_probs.items()}
    return out


def study_to_dict(study: Study) -> dict[str, Any]:
    out: dict[str, Any] = {
        "study_id": study.study_id,
        "label": study.label.value,
        "slices": [slice_to_dict(s) for s in study.slices],
    }
    if study.lesion_spans is not None:
        out["lesion_spans"] = [[sp.first, sp.last] for sp in study.lesion_spans]
    return out


def dataset_to_dict(d: Dataset | Iterable[Study]) -> dict[str, Any]:
    studies = d.studies if isinstance(d, Dataset) else d
    return {"studies": [study_to_dict(s) for s in studies]}


def write_json(path: str | os.PathLike, obj: Any) -> None:
    """Write JSON atomically (temp file in the target directory, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=1, allow_nan=False)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_manifest(path: str | os.PathLike, d: Dataset | Sequence[Study]) -> None:
    write_json(path, dataset_to_dict(d))
