"""Stage functions shared by the CLI: parse, evaluate, diagnose, and file formats for ROIs."""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .curve import parse_trace
from .data_model import Dataset, Study
from .evaluation import (
    DEFAULT_CUTOFFS,
    characterization_metrics,
    diagnose_study,
    localization_report,
)
from .voting import KeyROI


def parse_dataset(dataset: Dataset | Sequence[Study], t: float, top_percent: float, keep_scores: bool = False):
    """KeyROIs per study, plus fused slice scores per study when ``keep_scores``."""
    rois, scores = {}, {}
    for study in dataset:
        trace = parse_trace(study, t, top_percent)
        rois[study.study_id] = trace.rois
        if keep_scores:
            scores[study.study_id] = {
                "slices": [s.to_dict() for s in trace.scores],
                "zones": [z.to_dict() for z in trace.zones],
                "admissible": sorted(trace.admissible),
                "selected": trace.selected,
            }
    return rois, scores


def rois_to_dict(rois: Mapping[str, Sequence[KeyROI]]) -> dict:
    return {sid: [r.to_dict() for r in lst] for sid, lst in rois.items()}


def rois_from_dict(doc: Mapping) -> dict[str, list[KeyROI]]:
    return {sid: [KeyROI.from_dict(r) for r in lst] for sid, lst in doc.items()}


def load_rois(path: str | os.PathLike) -> dict[str, list[KeyROI]]:
    with open(path, encoding="utf-8") as fh:
        return rois_from_dict(json.load(fh))


def diagnose_dataset(rois: Mapping[str, Sequence[KeyROI]], dataset: Dataset | Sequence[Study]) -> dict:
    out = {}
    for study in dataset:
        dx = diagnose_study(rois.get(study.study_id, ()), study)
        out[study.study_id] = {
            "label": study.label.value,
            "prediction": None if dx is None else dx.label.value,
            "probs": None if dx is None else list(dx.probs),
        }
    return out


def evaluate(
    rois: Mapping[str, Sequence[KeyROI]], dataset: Dataset | Sequence[Study], cutoffs: Sequence[float] = DEFAULT_CUTOFFS
) -> dict:
    """Localization report, cutoff tables and (when class probabilities exist) characterization."""
    studies = list(dataset)
    loc = localization_report(rois, studies, cutoffs)
    report = {
        "n_studies": len(studies),
        "localization": loc.to_dict(),
        "cutoff_tables": {"mean": loc.mean_cdf.to_dict()["table"], "lb": loc.lb_cdf.to_dict()["table"]},
    }
    if any(s.roi_class_probs for st in studies for s in st.slices):
        dx = diagnose_dataset(rois, studies)
        preds = {sid: v["prediction"] for sid, v in dx.items()}
        labels = {s.study_id: s.label for s in studies}
        report["characterization"] = characterization_metrics(preds, labels).to_dict()
        report["undiagnosable"] = sorted(sid for sid, p in preds.items() if p is None)
    return report


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_report_csv(report: Mapping, out_dir: str | os.PathLike) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    loc = report["localization"]
    written = []
    p = out / "patients.csv"
    _write_csv(p, ["study_id", "mean_overlap", "lb_overlap", "n_rois"],
               ([r["study_id"], r["mean_overlap"], r["lb_overlap"], r["n_rois"]] for r in loc["patients"]))
    written.append(p)
    for name in ("mean", "lb"):
        p = out / f"cdf_{name}.csv"
        _write_csv(p, ["overlap", "fraction"], loc[f"{name}_overlap_cdf"]["steps"])
        written.append(p)
    p = out / "cutoffs.csv"
    rows = []
    for name in ("mean", "lb"):
        rows.extend([name, e["cutoff"], e["percent"]] for e in report["cutoff_tables"][name])
    _write_csv(p, ["statistic", "cutoff", "percent"], rows)
    written.append(p)
    ch: Optional[Mapping] = report.get("characterization")
    if ch is not None:
        p = out / "characterization.csv"
        _write_csv(p, ["metric", "value"], [[k, ch[k]] for k in ("accuracy", "f1_hcc", "f1_icc", "f1_meta", "mean_f1")])
        written.append(p)
    return written


def write_calibration_csv(calib: Mapping, out_dir: str | os.PathLike) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pr = out / "pr_curve.csv"
    cols = ["T", "avg_recall", "precision_q1", "precision_median", "precision_q3", "n_precision"]
    _write_csv(pr, cols, ([p[c] for c in cols] for p in calib["pr_curve"]))
    th = out / "threshold_scores.csv"
    cols = ["t", "mean_overlap", "missed", "total_key", "score"]
    _write_csv(th, cols, ([s[c] for c in cols] for s in calib["threshold_scores"]))
    return [pr, th]
