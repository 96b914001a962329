"""Detector-only baseline: keep the top-T% raw detections of a study as ROIs."""
from __future__ import annotations

from typing import Sequence

from .curve import top_count
from .data_model import Dataset, Study
from .voting import KeyROI


def baseline_study(study: Study, top_percent: float) -> list[KeyROI]:
    pool = [(d.confidence, s.slice_index, k, d) for s in study.slices for k, d in enumerate(s.detections)]
    pool.sort(key=lambda e: (-e[0], e[1], e[2]))
    keep = pool[:top_count(len(pool), top_percent)]
    return [KeyROI(m, d.box, conf, (k,), conf) for conf, m, k, d in keep]


def run_baseline(dataset: Dataset | Sequence[Study], top_percent: float) -> dict[str, list[KeyROI]]:
    return {s.study_id: baseline_study(s, top_percent) for s in dataset}
