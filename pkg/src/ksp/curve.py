"""Confidence-curve parsing: key-slice zones, admission, ranking, and the full parser."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .data_model import SliceRecord, Study
from .fusion import FusedSliceScores, score_study
from .voting import KeyROI, regress_roi, with_confidence


@dataclass(frozen=True)
class KeySliceZone:
    """Contiguous slice interval around a curve peak.

    ``peak_index``/``peak_value`` belong to the highest constituent peak;
    ``peaks`` lists every peak whose half-peak region was merged in.
    ``lo``/``hi`` are slice positions (offsets into the curve) unless the
    zone came from :func:`parse_trace`, which shifts them to slice indices.
    """

    peak_index: int
    peak_value: float
    lo: int
    hi: int
    peaks: tuple[tuple[int, float], ...] = field(default=(), compare=False)

    def __contains__(self, m: int) -> bool:
        return self.lo <= m <= self.hi

    def to_dict(self) -> dict:
        return {"peak_index": self.peak_index, "peak_value": self.peak_value, "range": [self.lo, self.hi]}


def find_peaks(curve: Sequence[float]) -> list[int]:
    """Strict local maxima; a plateau counts once, at its leftmost index."""
    n = len(curve)
    peaks = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and curve[j + 1] == curve[i]:
            j += 1
        left_ok = i == 0 or curve[i - 1] < curve[i]
        right_ok = j == n - 1 or curve[j + 1] < curve[i]
        if left_ok and right_ok:
            peaks.append(i)
        i = j + 1
    return peaks


def extract_zones(curve: Sequence[float]) -> list[KeySliceZone]:
    if len(curve) == 0:
        raise ValueError("confidence curve is empty")
    n = len(curve)
    raw = []
    for p in find_peaks(curve):
        half = curve[p] / 2.0
        lo = p
        while lo > 0 and curve[lo - 1] >= half:
            lo -= 1
        hi = p
        while hi < n - 1 and curve[hi + 1] >= half:
            hi += 1
        raw.append(KeySliceZone(p, curve[p], lo, hi, ((p, curve[p]),)))
    raw.sort(key=lambda z: (z.lo, z.peak_index))

    merged: list[KeySliceZone] = []
    for z in raw:
        if merged and z.lo <= merged[-1].hi + 1:
            cur = merged[-1]
            # higher peak wins; equal heights keep the leftmost peak
            best = max((cur, z), key=lambda q: (q.peak_value, -q.peak_index))
            merged[-1] = KeySliceZone(
                best.peak_index, best.peak_value, cur.lo, max(cur.hi, z.hi), cur.peaks + z.peaks
            )
        else:
            merged.append(z)
    return merged


def _detections_of(slices) -> Mapping[int, Sequence]:
    if isinstance(slices, Mapping):
        return slices
    return {s.slice_index: s.detections for s in slices}


def admissible_slices(zones: Iterable[KeySliceZone], slices: Iterable[SliceRecord] | Mapping[int, Sequence], t: float) -> set[int]:
    """Slices inside a zone that hold at least one detection with confidence > t.

    ``slices`` is either slice records or a map slice index -> detections.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold t={t!r} outside [0, 1]")
    dets = _detections_of(slices)
    out = set()
    for z in zones:
        for m in range(z.lo, z.hi + 1):
            if any(d.confidence > t for d in dets.get(m, ())):
                out.add(m)
    return out


def top_count(n: int, top_percent: float) -> int:
    """``ceil(n * T / 100)`` without float round-off."""
    if not 0.0 < top_percent <= 100.0:
        raise ValueError(f"top percent {top_percent!r} outside (0, 100]")
    frac = Fraction(top_percent).limit_denominator(10**6)
    return min(n, math.ceil(frac * n / 100))


def rank_slices(admissible: Iterable[int], combined: Mapping[int, float]) -> list[int]:
    return sorted(admissible, key=lambda m: (-combined[m], m))


def rank_and_select(admissible: Iterable[int], combined: Mapping[int, float], top_percent: float) -> list[int]:
    ranked = rank_slices(admissible, combined)
    return ranked[:top_count(len(ranked), top_percent)]


@dataclass
class ParseTrace:
    """Intermediate products of parsing one study (zones in slice indices)."""

    scores: list[FusedSliceScores]
    zones: list[KeySliceZone]
    admissible: set[int]
    ranked: list[int]
    selected: list[int]
    rois: list[KeyROI]


def study_zones(study: Study, scores: Sequence[FusedSliceScores] | None = None) -> list[KeySliceZone]:
    """Zones of the study's classification curve, shifted to slice indices."""
    if scores is None:
        scores = score_study(study)
    base = study.slices[0].slice_index
    zones = extract_zones([s.s_cls for s in scores])
    if base == 0:
        return zones
    return [
        KeySliceZone(z.peak_index + base, z.peak_value, z.lo + base, z.hi + base, tuple((p + base, v) for p, v in z.peaks))
        for z in zones
    ]


def parse_trace(study: Study, t: float, top_percent: float) -> ParseTrace:
    scores = score_study(study)
    zones = study_zones(study, scores)
    admissible = admissible_slices(zones, study.slices, t)
    combined = {s.slice_index: s.s_combined for s in scores}
    ranked = rank_slices(admissible, combined)
    selected = ranked[:top_count(len(ranked), top_percent)]
    rois = []
    for m in selected:
        s = study.slice_at(m)
        res = regress_roi(s.detections, s.width, s.height, m)
        if res is not None and res.passes(t):
            rois.append(with_confidence(res.roi, combined[m]))
    return ParseTrace(scores, zones, admissible, ranked, selected, rois)


def parse_study(study: Study, t: float, top_percent: float) -> list[KeyROI]:
    """Key ROIs of a study, best-ranked slice first."""
    return parse_trace(study, t, top_percent).rois
