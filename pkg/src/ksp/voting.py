"""Single-ROI regression by pixel-confidence voting over pooled detections."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .data_model import BoundingBox, DetectionBox


@dataclass(frozen=True)
class KeyROI:
    slice_index: int
    box: BoundingBox
    vote_mass: float
    support: tuple[int, ...]
    slice_confidence: float = 0.0

    def to_dict(self) -> dict:
        return {
            "m": self.slice_index,
            "box": self.box.as_list(),
            "vote_mass": self.vote_mass,
            "slice_confidence": self.slice_confidence,
            "support": list(self.support),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KeyROI":
        return cls(
            int(d["m"]),
            BoundingBox(*d["box"]),
            float(d.get("vote_mass", 0.0)),
            tuple(d.get("support", ())),
            float(d.get("slice_confidence", 0.0)),
        )


def accumulate_votes(detections: Sequence[DetectionBox], width: int, height: int) -> np.ndarray:
    """Per-pixel sum of confidences of the boxes covering it, shape ``(height, width)``."""
    grid = np.zeros((height, width), dtype=np.float64)
    for d in detections:
        b = d.box
        grid[b.y0:b.y1 + 1, b.x0:b.x1 + 1] += d.confidence
    return grid


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def mean_box(boxes: Sequence[BoundingBox], width: int, height: int) -> BoundingBox:
    """Box with the mean center and mean extent of ``boxes``.

    The left edge lands on the first pixel whose center is at or right of
    ``mean_center - mean_extent / 2``; the extent is rounded half away from
    zero. Integer arithmetic keeps this exact.
    """
    n = len(boxes)
    # mean_center - mean_extent/2 == mean(x0) - 1/2
    x0 = _ceil_div(2 * sum(b.x0 for b in boxes) - n, 2 * n)
    y0 = _ceil_div(2 * sum(b.y0 for b in boxes) - n, 2 * n)
    w = (2 * sum(b.width for b in boxes) + n) // (2 * n)
    h = (2 * sum(b.height for b in boxes) + n) // (2 * n)
    x1, y1 = x0 + w - 1, y0 + h - 1
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, width - 1), min(y1, height - 1)
    return BoundingBox(x0, y0, x1, y1)


@dataclass(frozen=True)
class VoteResult:
    """Unfiltered voting outcome; ``max_confidence`` decides threshold filtering."""

    roi: KeyROI
    max_confidence: float
    pixel: tuple[int, int]

    def passes(self, t: float) -> bool:
        return self.max_confidence > t


def regress_roi(detections: Sequence[DetectionBox], width: int, height: int, slice_index: int = 0) -> Optional[VoteResult]:
    if not detections:
        return None
    grid = accumulate_votes(detections, width, height)
    # row-major argmax returns the first maximum: smallest y, then smallest x
    flat = int(np.argmax(grid))
    y, x = divmod(flat, width)
    support = tuple(k for k, d in enumerate(detections) if d.box.contains(x, y))
    if not support:
        # only possible when every confidence is 0; nothing would pass t >= 0
        return None
    box = mean_box([detections[k].box for k in support], width, height)
    roi = KeyROI(slice_index, box, float(grid[y, x]), support)
    return VoteResult(roi, max(detections[k].confidence for k in support), (x, y))


def vote_roi(detections: Sequence[DetectionBox], width: int, height: int, t: float, slice_index: int = 0) -> Optional[KeyROI]:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold t={t!r} outside [0, 1]")
    res = regress_roi(detections, width, height, slice_index)
    if res is None or not res.passes(t):
        return None
    return res.roi


def with_confidence(roi: KeyROI, slice_confidence: float) -> KeyROI:
    return replace(roi, slice_confidence=slice_confidence)
