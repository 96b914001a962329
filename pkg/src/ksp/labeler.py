"""Key / marginal / non-key slice labels derived from ground-truth boxes."""
from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Optional, Sequence

from .data_model import LesionSpan, SliceLabel, Study

_RANK = {SliceLabel.NONKEY: 0, SliceLabel.MARGINAL: 1, SliceLabel.KEY: 2}


class SpanOutOfRange(ValueError):
    pass


def lesion_spans(study: Study) -> list[LesionSpan]:
    """Lesion spans for a study.

    Explicit ``lesion_spans`` win; otherwise GT boxes tagged with a
    ``lesion_id`` give one span per id; untagged boxes fall back to
    connected runs of slices that carry any untagged GT box.
    """
    if study.lesion_spans is not None:
        return list(study.lesion_spans)
    by_id: dict[str, list[int]] = defaultdict(list)
    untagged: list[int] = []
    for s in study.slices:
        ids = {g.lesion_id for g in s.gt_boxes}
        for lid in ids:
            if lid is None:
                untagged.append(s.slice_index)
            else:
                by_id[lid].append(s.slice_index)
    spans = [LesionSpan(min(v), max(v)) for _, v in sorted(by_id.items())]
    run_start: Optional[int] = None
    prev: Optional[int] = None
    for m in untagged:
        if run_start is None:
            run_start = m
        elif m != prev + 1:
            spans.append(LesionSpan(run_start, prev))
            run_start = m
        prev = m
    if run_start is not None:
        spans.append(LesionSpan(run_start, prev))
    return spans


def label_slices(indices: Sequence[int], spans: Iterable[LesionSpan]) -> dict[int, SliceLabel]:
    lo, hi = indices[0], indices[-1]
    labels = {m: SliceLabel.NONKEY for m in indices}
    for sp in spans:
        if not (lo <= sp.first <= sp.last <= hi):
            raise SpanOutOfRange(f"lesion span [{sp.first},{sp.last}] outside study range [{lo},{hi}]")
        for m in (sp.first - 1, sp.first, sp.last, sp.last + 1):
            if lo <= m <= hi:
                _promote(labels, m, SliceLabel.MARGINAL)
        for m in range(sp.first + 1, sp.last):
            _promote(labels, m, SliceLabel.KEY)
    return labels


def _promote(labels: dict[int, SliceLabel], m: int, label: SliceLabel) -> None:
    if _RANK[label] > _RANK[labels[m]]:
        labels[m] = label


def label_study_slices(study: Study, spans: Optional[Iterable[LesionSpan]] = None) -> dict[int, SliceLabel]:
    if spans is None:
        spans = lesion_spans(study)
    return label_slices(list(study.slice_indices), spans)


def key_slices(labels: dict[int, SliceLabel]) -> set[int]:
    return {m for m, lab in labels.items() if lab is SliceLabel.KEY}


def marginal_slices(labels: dict[int, SliceLabel]) -> set[int]:
    return {m for m, lab in labels.items() if lab is SliceLabel.MARGINAL}
