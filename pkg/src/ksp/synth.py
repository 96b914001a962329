"""Seeded synthetic studies: GT lesions plus simulated classifier and detector outputs.

Each study draws from its own RNG stream spawned from the config seed, so
studies can be generated independently and in any order.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .data_model import (
    CLASS_ORDER,
    SEQUENCE_IDS,
    BoundingBox,
    BoxKind,
    Dataset,
    DetectionBox,
    GroundTruthBox,
    LesionSpan,
    SliceLabel,
    SliceRecord,
    Study,
)
from .labeler import label_slices

_TEMPLATE = {SliceLabel.KEY: 1.0, SliceLabel.MARGINAL: 0.5, SliceLabel.NONKEY: 0.0}


class SynthError(ValueError):
    pass


@dataclass
class SynthConfig:
    n_studies: int = 20
    slices_per_study: tuple[int, int] = (30, 50)
    lesions_per_study: tuple[int, int] = (1, 3)
    lesion_span: tuple[int, int] = (3, 9)
    lesion_size: tuple[int, int] = (12, 40)
    slice_size: tuple[int, int] = (128, 128)
    cluster_probability: float = 0.15
    # classifier
    cls_noise_sigma: float = 0.2
    sequence_sensitivity: tuple[float, ...] = (0.95, 0.8, 0.85, 0.8, 0.7)
    # detector
    box_jitter_sigma: float = 2.0
    det_conf_key: float = 0.85
    det_conf_edge: float = 0.4
    conf_noise_sigma: float = 0.15
    fp_rate: float = 0.15
    fp_conf_max: float = 0.8
    fp_size: tuple[int, int] = (6, 30)
    miss_rate: float = 0.2
    # labels and ROI classifier
    class_distribution: tuple[float, float, float] = (207 / 430, 113 / 430, 110 / 430)
    class_prob_concentration: float = 0.25
    seed: int = 0
    study_prefix: str = "S"

    def __post_init__(self) -> None:
        for name in ("slices_per_study", "lesions_per_study", "lesion_span", "lesion_size", "slice_size", "fp_size",
                     "sequence_sensitivity", "class_distribution"):
            setattr(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        for name in ("slices_per_study", "lesions_per_study", "lesion_span", "lesion_size", "fp_size"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise SynthError(f"{name}: empty range {lo}..{hi}")
        if self.slices_per_study[0] < 1 or self.lesion_span[0] < 1 or self.lesion_size[0] < 1 or self.fp_size[0] < 1:
            raise SynthError("ranges must start at >= 1")
        if self.lesions_per_study[0] < 0 or self.n_studies < 0:
            raise SynthError("counts must be non-negative")
        for name in ("cluster_probability", "fp_rate", "miss_rate", "class_prob_concentration",
                     "det_conf_key", "det_conf_edge", "fp_conf_max"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SynthError(f"{name}={v} outside [0, 1]")
        for name in ("cls_noise_sigma", "box_jitter_sigma", "conf_noise_sigma"):
            if getattr(self, name) < 0:
                raise SynthError(f"{name} must be >= 0")
        if len(self.sequence_sensitivity) != len(SEQUENCE_IDS) or any(
            not 0.0 <= v <= 1.0 for v in self.sequence_sensitivity
        ):
            raise SynthError("sequence_sensitivity needs five values in [0, 1]")
        dist = self.class_distribution
        if len(dist) != 3 or any(p < 0 for p in dist) or not math.isclose(sum(dist), 1.0, abs_tol=1e-9):
            raise SynthError("class_distribution must be three probabilities summing to 1")

    @classmethod
    def noiseless(cls, **overrides: Any) -> "SynthConfig":
        base = dict(
            cls_noise_sigma=0.0,
            sequence_sensitivity=(1.0,) * 5,
            box_jitter_sigma=0.0,
            conf_noise_sigma=0.0,
            fp_rate=0.0,
            miss_rate=0.0,
            class_prob_concentration=1.0,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SynthConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise SynthError(f"unknown config fields {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}


@dataclass
class _Lesion:
    lesion_id: str
    first: int
    last: int
    x0: int
    y0: int
    w: int
    h: int
    kind: BoxKind

    def box_at(self, m: int) -> BoundingBox:
        """Cross-section shrinks toward the span ends like an ellipsoid."""
        half = (self.last - self.first) / 2.0
        d = m - (self.first + self.last) / 2.0
        scale = math.sqrt(max(0.0, 1.0 - (d / (half + 1.0)) ** 2))
        w = min(self.w, max(3, round(self.w * scale)))
        h = min(self.h, max(3, round(self.h * scale)))
        x0 = self.x0 + (self.w - w) // 2
        y0 = self.y0 + (self.h - h) // 2
        return BoundingBox(x0, y0, x0 + w - 1, y0 + h - 1)


def _place_lesions(cfg: SynthConfig, rng: np.random.Generator, n_slices: int) -> list[_Lesion]:
    width, height = cfg.slice_size
    lesions: list[_Lesion] = []
    for li in range(int(rng.integers(cfg.lesions_per_study[0], cfg.lesions_per_study[1] + 1))):
        span = min(int(rng.integers(cfg.lesion_span[0], cfg.lesion_span[1] + 1)), n_slices)
        first = int(rng.integers(0, n_slices - span + 1))
        w = int(rng.integers(cfg.lesion_size[0], cfg.lesion_size[1] + 1))
        h = int(rng.integers(cfg.lesion_size[0], cfg.lesion_size[1] + 1))
        if w > width or h > height:
            raise SynthError(f"lesion {w}x{h} does not fit a {width}x{height} slice")
        kind = BoxKind.CLUSTER if rng.random() < cfg.cluster_probability else BoxKind.LESION
        for _ in range(200):
            cand = _Lesion(f"L{li}", first, first + span - 1, int(rng.integers(0, width - w + 1)),
                           int(rng.integers(0, height - h + 1)), w, h, kind)
            if all(not _clash(cand, other) for other in lesions):
                lesions.append(cand)
                break
        else:
            raise SynthError("could not place non-overlapping lesions; slice too small for lesion count/size")
    return lesions


def _clash(a: _Lesion, b: _Lesion) -> bool:
    # lesions sharing a slice (or its one-slice buffer) must not overlap in-plane
    if a.first > b.last + 1 or b.first > a.last + 1:
        return False
    return not (a.x0 + a.w <= b.x0 or b.x0 + b.w <= a.x0 or a.y0 + a.h <= b.y0 or b.y0 + b.h <= a.y0)


def _jitter(box: BoundingBox, sigma: float, rng: np.random.Generator, width: int, height: int) -> BoundingBox:
    if sigma == 0:
        return box
    dx0, dy0, dx1, dy1 = (int(round(v)) for v in rng.normal(0.0, sigma, 4))
    x0 = min(max(box.x0 + dx0, 0), width - 1)
    y0 = min(max(box.y0 + dy0, 0), height - 1)
    x1 = min(max(box.x1 + dx1, x0), width - 1)
    y1 = min(max(box.y1 + dy1, y0), height - 1)
    return BoundingBox(x0, y0, x1, y1)


def _unit(v: float) -> float:
    return float(min(1.0, max(0.0, v)))


def generate_study(cfg: SynthConfig, rng: np.random.Generator, study_id: str) -> Study:
    width, height = cfg.slice_size
    label = CLASS_ORDER[int(rng.choice(3, p=cfg.class_distribution))]
    n = int(rng.integers(cfg.slices_per_study[0], cfg.slices_per_study[1] + 1))
    lesions = _place_lesions(cfg, rng, n)
    labels = label_slices(range(n), [LesionSpan(l.first, l.last) for l in lesions])
    onehot = np.array([1.0 if c is label else 0.0 for c in CLASS_ORDER])
    conc = cfg.class_prob_concentration

    slices = []
    for m in range(n):
        base = _TEMPLATE[labels[m]]
        scores = {}
        for j, sens in zip(SEQUENCE_IDS, cfg.sequence_sensitivity):
            noise = rng.normal(0.0, cfg.cls_noise_sigma) if cfg.cls_noise_sigma > 0 else 0.0
            scores[j] = _unit(base * sens + noise)

        gts = [(l, l.box_at(m)) for l in lesions if l.first <= m <= l.last]
        dets = []
        for j in SEQUENCE_IDS:
            for l, box in gts:
                if cfg.miss_rate > 0 and rng.random() < cfg.miss_rate:
                    continue
                mean = cfg.det_conf_edge if m in (l.first, l.last) else cfg.det_conf_key
                noise = rng.normal(0.0, cfg.conf_noise_sigma) if cfg.conf_noise_sigma > 0 else 0.0
                dets.append(DetectionBox(_jitter(box, cfg.box_jitter_sigma, rng, width, height), _unit(mean + noise), j))
            if cfg.fp_rate > 0 and rng.random() < cfg.fp_rate:
                fw, fh = (int(v) for v in rng.integers(cfg.fp_size[0], cfg.fp_size[1] + 1, 2))
                fw, fh = min(fw, width), min(fh, height)
                x0 = int(rng.integers(0, width - fw + 1))
                y0 = int(rng.integers(0, height - fh + 1))
                dets.append(DetectionBox(BoundingBox(x0, y0, x0 + fw - 1, y0 + fh - 1),
                                         float(rng.uniform(0.0, cfg.fp_conf_max)), j))

        if gts:
            vec = conc * onehot + (1.0 - conc) * rng.dirichlet(np.ones(3)) if conc < 1 else onehot
        else:
            vec = rng.dirichlet(np.ones(3))
        probs = {"roi": tuple(float(p) for p in vec / vec.sum())}
        gt_boxes = tuple(GroundTruthBox(box, l.kind, l.lesion_id) for l, box in gts)
        slices.append(SliceRecord(m, width, height, scores, tuple(dets), gt_boxes, probs))
    return Study(study_id, label, tuple(slices))


def generate_dataset(cfg: SynthConfig) -> Dataset:
    cfg.validate()
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_studies)
    width = max(3, len(str(max(cfg.n_studies - 1, 0))))
    studies = tuple(
        generate_study(cfg, np.random.default_rng(ss), f"{cfg.study_prefix}{i:0{width}d}") for i, ss in enumerate(children)
    )
    return Dataset(studies)
