"""Localization and characterization metrics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .data_model import CLASS_ORDER, BoundingBox, BoxKind, GroundTruthBox, LesionType, Study
from .voting import KeyROI

DEFAULT_CUTOFFS = (0.0, 0.25, 0.5)


def box_overlap(pred: BoundingBox, gt: GroundTruthBox) -> float:
    """IoU against a lesion box, IoBB (intersection over predicted area) against a cluster box."""
    inter = pred.intersection_area(gt.box)
    if gt.kind is BoxKind.CLUSTER:
        return inter / pred.area
    return inter / (pred.area + gt.box.area - inter)


def roi_overlap(roi: KeyROI, study: Study) -> float:
    """Best overlap of an ROI with any GT box on its slice; 0 without GT there."""
    if roi.slice_index not in study.slice_indices:
        return 0.0
    gts = study.slice_at(roi.slice_index).gt_boxes
    return max((box_overlap(roi.box, g) for g in gts), default=0.0)


@dataclass(frozen=True)
class PatientOverlap:
    study_id: str
    mean_overlap: float
    lb_overlap: float
    n_rois: int

    def to_dict(self) -> dict:
        return {
            "study_id": self.study_id,
            "mean_overlap": self.mean_overlap,
            "lb_overlap": self.lb_overlap,
            "n_rois": self.n_rois,
        }


def patient_overlap_stats(rois: Sequence[KeyROI], study: Study) -> PatientOverlap:
    if not rois:
        return PatientOverlap(study.study_id, 0.0, 0.0, 0)
    ov = [roi_overlap(r, study) for r in rois]
    return PatientOverlap(study.study_id, sum(ov) / len(ov), min(ov), len(ov))


@dataclass
class EmpiricalCDF:
    """Right-continuous step CDF plus a cutoff table in percent.

    ``steps`` are ``(value, fraction of samples <= value)`` at every
    distinct sample value. The table entry for cutoff ``c`` is the
    percentage of samples ``<= c``; for ``c = 0`` on overlaps that is the
    percentage exactly equal to zero.
    """

    steps: list[tuple[float, float]]
    table: dict[float, float]
    n: int

    def fraction_at(self, x: float) -> float:
        frac = 0.0
        for v, f in self.steps:
            if v <= x:
                frac = f
            else:
                break
        return frac

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "steps": [[v, f] for v, f in self.steps],
            "table": [{"cutoff": c, "percent": p} for c, p in self.table.items()],
        }


def empirical_cdf(values: Sequence[float], cutoffs: Sequence[float] = DEFAULT_CUTOFFS) -> EmpiricalCDF:
    if len(values) == 0:
        raise ValueError("empirical_cdf needs at least one value")
    arr = np.sort(np.asarray(values, dtype=np.float64))
    n = arr.size
    uniq = np.unique(arr)
    counts = np.searchsorted(arr, uniq, side="right")
    steps = [(float(v), int(c) / n) for v, c in zip(uniq, counts)]
    table = {float(c): 100.0 * int(np.searchsorted(arr, c, side="right")) / n for c in cutoffs}
    return EmpiricalCDF(steps, table, n)


class Undiagnosable(ValueError):
    pass


@dataclass(frozen=True)
class Diagnosis:
    label: LesionType
    probs: tuple[float, float, float]


def diagnose_patient(rois: Sequence[KeyROI], probs: Sequence[Sequence[float]]) -> Diagnosis:
    """Confidence-weighted mean of per-ROI class probabilities, then argmax.

    ``probs[i]`` is the probability vector (HCC, ICC, Metastasis) for
    ``rois[i]``; the weight is the ROI's slice confidence. Ties resolve in
    the order HCC, ICC, Metastasis.
    """
    if not rois:
        raise Undiagnosable("no ROIs to diagnose from")
    if len(probs) != len(rois):
        raise ValueError("one probability vector per ROI required")
    w = np.array([r.slice_confidence for r in rois], dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("ROI weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise Undiagnosable("all ROI weights are zero")
    p = (w[:, None] * np.asarray(probs, dtype=np.float64)).sum(axis=0) / total
    return Diagnosis(CLASS_ORDER[int(np.argmax(p))], tuple(float(v) for v in p))


def roi_probabilities(rois: Sequence[KeyROI], study: Study, key: str = "roi") -> tuple[list[KeyROI], list[tuple[float, ...]]]:
    """Pair each ROI with the class probabilities stored for its slice; ROIs without one are dropped."""
    kept, probs = [], []
    for r in rois:
        if r.slice_index not in study.slice_indices:
            continue
        table = study.slice_at(r.slice_index).roi_class_probs or {}
        if key in table:
            kept.append(r)
            probs.append(table[key])
    return kept, probs


def diagnose_study(rois: Sequence[KeyROI], study: Study) -> Optional[Diagnosis]:
    kept, probs = roi_probabilities(rois, study)
    try:
        return diagnose_patient(kept, probs)
    except Undiagnosable:
        return None


@dataclass
class CharacterizationReport:
    accuracy: float
    f1_hcc: float
    f1_icc: float
    f1_meta: float
    mean_f1: float
    confusion: list[list[int]]
    undiagnosed: list[int] = field(default_factory=lambda: [0, 0, 0])
    undefined_f1: list[str] = field(default_factory=list)

    @property
    def f1(self) -> dict[str, float]:
        return {"HCC": self.f1_hcc, "ICC": self.f1_icc, "Metastasis": self.f1_meta}

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1_hcc": self.f1_hcc,
            "f1_icc": self.f1_icc,
            "f1_meta": self.f1_meta,
            "mean_f1": self.mean_f1,
            "classes": [c.value for c in CLASS_ORDER],
            "confusion": self.confusion,
            "undiagnosed": self.undiagnosed,
            "undefined_f1": self.undefined_f1,
        }


def characterization_metrics(
    predictions: Mapping[str, Optional[LesionType]], labels: Mapping[str, LesionType]
) -> CharacterizationReport:
    """Patient-wise accuracy and one-vs-all F1.

    A ``None`` prediction marks an undiagnosable study: it is kept out of
    the 3x3 confusion matrix, counted in ``undiagnosed`` for its true
    class, and scored as wrong.
    """
    if set(predictions) != set(labels):
        raise ValueError("predictions and labels cover different studies")
    if not labels:
        raise ValueError("no studies to score")
    idx = {c: i for i, c in enumerate(CLASS_ORDER)}
    conf = np.zeros((3, 3), dtype=np.int64)
    undiag = np.zeros(3, dtype=np.int64)
    for sid, truth in labels.items():
        pred = predictions[sid]
        if pred is None:
            undiag[idx[LesionType(truth)]] += 1
        else:
            conf[idx[LesionType(truth)], idx[LesionType(pred)]] += 1
    total = conf.sum() + undiag.sum()
    f1s, undefined = [], []
    for c in range(3):
        tp = conf[c, c]
        pred_pos = conf[:, c].sum()
        true_pos = conf[c, :].sum() + undiag[c]
        prec = tp / pred_pos if pred_pos else 0.0
        rec = tp / true_pos if true_pos else 0.0
        if prec + rec == 0:
            f1s.append(0.0)
            if pred_pos == 0 and true_pos == 0:
                undefined.append(CLASS_ORDER[c].value)
        else:
            f1s.append(float(2 * prec * rec / (prec + rec)))
    return CharacterizationReport(
        accuracy=float(np.trace(conf) / total),
        f1_hcc=f1s[0],
        f1_icc=f1s[1],
        f1_meta=f1s[2],
        mean_f1=float(sum(f1s) / 3),
        confusion=conf.tolist(),
        undiagnosed=undiag.tolist(),
        undefined_f1=undefined,
    )


@dataclass
class LocalizationReport:
    patients: list[PatientOverlap]
    mean_cdf: EmpiricalCDF
    lb_cdf: EmpiricalCDF

    def to_dict(self) -> dict:
        return {
            "patients": [p.to_dict() for p in self.patients],
            "mean_overlap_cdf": self.mean_cdf.to_dict(),
            "lb_overlap_cdf": self.lb_cdf.to_dict(),
        }


def localization_report(
    rois_by_study: Mapping[str, Sequence[KeyROI]], studies: Sequence[Study], cutoffs: Sequence[float] = DEFAULT_CUTOFFS
) -> LocalizationReport:
    """Per-patient overlaps and their CDFs; studies missing from ``rois_by_study`` count as empty."""
    patients = [patient_overlap_stats(rois_by_study.get(s.study_id, ()), s) for s in studies]
    return LocalizationReport(
        patients,
        empirical_cdf([p.mean_overlap for p in patients], cutoffs),
        empirical_cdf([p.lb_overlap for p in patients], cutoffs),
    )
