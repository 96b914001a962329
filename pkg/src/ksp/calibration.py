"""Validation-set selection of the ROI threshold ``t`` and top percentage ``T``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .curve import admissible_slices, rank_slices, study_zones, top_count
from .data_model import Dataset, SliceLabel, Study
from .evaluation import roi_overlap
from .fusion import score_study
from .labeler import key_slices, label_study_slices, marginal_slices
from .voting import regress_roi

DEFAULT_T_GRID = tuple(round(0.05 * i, 2) for i in range(20))
DEFAULT_TOP_GRID = tuple(range(2, 101, 2))
MIN_AVG_RECALL = 0.5
MIN_Q1_PRECISION = 0.6


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class PRQuartilePoint:
    T: float
    avg_recall: float
    precision_q1: float
    precision_median: float
    precision_q3: float
    n_precision: int

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "avg_recall": self.avg_recall,
            "precision_q1": self.precision_q1,
            "precision_median": self.precision_median,
            "precision_q3": self.precision_q3,
            "n_precision": self.n_precision,
        }


def _labels_for(validation: Sequence[Study], labels) -> dict[str, dict[int, SliceLabel]]:
    if labels is None:
        return {s.study_id: label_study_slices(s) for s in validation}
    missing = [s.study_id for s in validation if s.study_id not in labels]
    if missing:
        raise CalibrationError(f"no slice labels for studies {missing}")
    return dict(labels)


def ranked_admissible(study: Study, t: float) -> list[int]:
    scores = score_study(study)
    zones = study_zones(study, scores)
    adm = admissible_slices(zones, study.slices, t)
    return rank_slices(adm, {s.slice_index: s.s_combined for s in scores})


def within_study_pr(selected: Sequence[int], key: set[int], marginal: set[int]) -> tuple[float, Optional[float]]:
    """Recall over Key slices (1 when there are none) and precision ignoring Marginal picks.

    Precision is ``None`` when undefined: no Key slices, or nothing
    selected outside the Marginal set.
    """
    sel = set(selected)
    hits = len(sel & key)
    if not key:
        return 1.0, None
    recall = hits / len(key)
    denom = len(sel - marginal)
    return recall, (hits / denom if denom else None)


def pr_quartile_curve(
    validation: Dataset | Sequence[Study],
    labels: Optional[Mapping[str, Mapping[int, SliceLabel]]],
    t: float,
    T_grid: Sequence[float] = DEFAULT_TOP_GRID,
) -> list[PRQuartilePoint]:
    studies = list(validation)
    if not studies:
        raise CalibrationError("empty validation set")
    if not T_grid:
        raise CalibrationError("empty T grid")
    labels = _labels_for(studies, labels)
    prepared = []
    for s in studies:
        lab = labels[s.study_id]
        prepared.append((ranked_admissible(s, t), key_slices(lab), marginal_slices(lab)))

    curve = []
    for T in T_grid:
        recalls, precisions = [], []
        for ranked, key, marg in prepared:
            sel = ranked[:top_count(len(ranked), T)]
            r, p = within_study_pr(sel, key, marg)
            recalls.append(r)
            if p is not None:
                precisions.append(p)
        if precisions:
            q1, med, q3 = (float(v) for v in np.percentile(precisions, [25, 50, 75]))
        else:
            q1 = med = q3 = 0.0
        curve.append(PRQuartilePoint(T, float(np.mean(recalls)), q1, med, q3, len(precisions)))
    return curve


@dataclass(frozen=True)
class TopPercentChoice:
    T: float
    feasible: bool


def calibrate_top_percent(
    curve: Sequence[PRQuartilePoint], min_recall: float = MIN_AVG_RECALL, min_q1: float = MIN_Q1_PRECISION
) -> TopPercentChoice:
    """Smallest grid T with mean recall >= 0.5 and Q1 precision >= 0.6.

    Without a feasible T, falls back to the T maximizing
    ``min(recall / 0.5, q1 / 0.6)`` (smaller T on ties) and clears the flag.
    """
    if not curve:
        raise CalibrationError("empty PR curve")
    pts = sorted(curve, key=lambda p: p.T)
    for p in pts:
        if p.avg_recall >= min_recall and p.precision_q1 >= min_q1:
            return TopPercentChoice(p.T, True)
    best = max(pts, key=lambda p: (min(p.avg_recall / min_recall, p.precision_q1 / min_q1), -p.T))
    return TopPercentChoice(best.T, False)


@dataclass(frozen=True)
class ThresholdScore:
    t: float
    mean_overlap: float
    missed: int
    total_key: int
    score: float

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "mean_overlap": self.mean_overlap,
            "missed": self.missed,
            "total_key": self.total_key,
            "score": self.score,
        }


@dataclass(frozen=True)
class ThresholdChoice:
    t: float
    scores: tuple[ThresholdScore, ...]


def calibrate_threshold(
    validation: Dataset | Sequence[Study],
    t_grid: Sequence[float] = DEFAULT_T_GRID,
    miss_penalty: float = 1.0,
    labels: Optional[Mapping[str, Mapping[int, SliceLabel]]] = None,
) -> ThresholdChoice:
    """Pick t maximizing mean ROI overlap on Key slices minus a penalty on the missed fraction."""
    studies = list(validation)
    if not studies:
        raise CalibrationError("empty validation set")
    if not t_grid or any(not 0.0 <= t <= 1.0 for t in t_grid):
        raise CalibrationError("t grid must be non-empty and inside [0, 1]")
    labels = _labels_for(studies, labels)

    # voting does not depend on t; only the filter does
    votes: list[tuple[float, float]] = []  # (max supporter confidence, overlap)
    total = 0
    for s in studies:
        for m in sorted(key_slices(labels[s.study_id])):
            total += 1
            rec = s.slice_at(m)
            res = regress_roi(rec.detections, rec.width, rec.height, m)
            if res is not None:
                votes.append((res.max_confidence, roi_overlap(res.roi, s)))
    if total == 0:
        raise CalibrationError("validation set has no Key slices")

    scores = []
    for t in sorted(set(t_grid)):
        kept = [ov for conf, ov in votes if conf > t]
        mean_ov = sum(kept) / len(kept) if kept else 0.0
        missed = total - len(kept)
        scores.append(ThresholdScore(t, mean_ov, missed, total, mean_ov - miss_penalty * missed / total))
    best = max(scores, key=lambda s: (s.score, -s.t))
    return ThresholdChoice(best.t, tuple(scores))


@dataclass
class CalibrationResult:
    t: float
    T: float
    feasible: bool
    pr_curve: list[PRQuartilePoint]
    threshold_scores: list[ThresholdScore] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "T": self.T,
            "feasible": self.feasible,
            "pr_curve": [p.to_dict() for p in self.pr_curve],
            "threshold_scores": [s.to_dict() for s in self.threshold_scores],
        }


def calibrate(
    validation: Dataset | Sequence[Study],
    t_grid: Sequence[float] = DEFAULT_T_GRID,
    T_grid: Sequence[float] = DEFAULT_TOP_GRID,
    miss_penalty: float = 1.0,
) -> CalibrationResult:
    """Choose t first, then T on the PR curve produced at that t."""
    studies = list(validation)
    labels = _labels_for(studies, None)
    tc = calibrate_threshold(studies, t_grid, miss_penalty, labels)
    curve = pr_quartile_curve(studies, labels, tc.t, T_grid)
    choice = calibrate_top_percent(curve)
    return CalibrationResult(tc.t, choice.T, choice.feasible, curve, list(tc.scores))
