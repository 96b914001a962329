"""``ksp`` command line.

Exit codes: 0 success, 1 validation failure, 2 I/O or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .baseline import run_baseline
from .calibration import DEFAULT_T_GRID, DEFAULT_TOP_GRID, CalibrationError, calibrate
from .data_model import Dataset, ManifestError, load_manifest, save_manifest, validate_dataset, write_json
from .labeler import SpanOutOfRange, label_study_slices
from .pipeline import (
    diagnose_dataset,
    evaluate,
    load_rois,
    parse_dataset,
    rois_to_dict,
    write_calibration_csv,
    write_report_csv,
)
from .synth import SynthConfig, SynthError, generate_dataset

logger = logging.getLogger("ksp")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class StageError(Exception):
    def __init__(self, stage: str, message: str, code: int):
        super().__init__(f"[{stage}] {message}")
        self.code = code


def _load(path: str, stage: str) -> Dataset:
    if not Path(path).is_file():
        raise StageError(stage, f"manifest not found: {path}", EXIT_IO)
    try:
        ds = load_manifest(path)
    except json.JSONDecodeError as exc:
        raise StageError(stage, f"{path}: not valid JSON ({exc})", EXIT_IO) from None
    except ManifestError as exc:
        raise StageError(stage, f"{path}: {exc}", EXIT_INVALID) from None
    for sid, msg in ds.rejected:
        print(f"[{stage}] rejected study {sid}: {msg}", file=sys.stderr)
    return ds


def _load_rois(path: str, stage: str):
    if not Path(path).is_file():
        raise StageError(stage, f"ROI file not found: {path}", EXIT_IO)
    try:
        return load_rois(path)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise StageError(stage, f"{path}: malformed ROI file ({exc})", EXIT_IO) from None


def _grid(text: str | None, default):
    if text is None:
        return list(default)
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise StageError("args", f"bad grid {text!r}; expected comma-separated numbers", EXIT_IO) from None


def _check_t(t: float) -> None:
    if not 0.0 <= t <= 1.0:
        raise StageError("args", f"--t {t} outside [0, 1]", EXIT_IO)


def _check_T(T: float) -> None:
    if not 0.0 < T <= 100.0:
        raise StageError("args", f"--top-percent {T} outside (0, 100]", EXIT_IO)


def _operating_point(args) -> tuple[float, float]:
    t, T = args.t, args.top_percent
    if args.calib:
        with open(args.calib, encoding="utf-8") as fh:
            calib = json.load(fh)
        t = calib["t"] if t is None else t
        T = calib["T"] if T is None else T
    if t is None or T is None:
        raise StageError("args", "need --t and --top-percent (or --calib)", EXIT_IO)
    _check_t(t)
    _check_T(T)
    return t, T


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    try:
        cfg = SynthConfig.from_json(args.config) if args.config else SynthConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.n_studies is not None:
            cfg.n_studies = args.n_studies
        ds = generate_dataset(cfg)
    except FileNotFoundError as exc:
        raise StageError("synth", f"config not found: {exc.filename}", EXIT_IO) from None
    except (SynthError, TypeError, json.JSONDecodeError) as exc:
        raise StageError("synth", str(exc), EXIT_IO) from None
    save_manifest(args.out, ds)
    print(f"wrote {len(ds)} studies to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    ds = _load(args.manifest, "validate")
    report = validate_dataset(ds)
    doc = report.to_dict()
    doc["rejected"] = [{"study_id": s, "message": m} for s, m in ds.rejected]
    if args.out:
        write_json(args.out, doc)
    print(json.dumps(doc["counts"]))
    return EXIT_OK if report.ok and not ds.rejected else EXIT_INVALID


def cmd_label(args) -> int:
    ds = _load(args.manifest, "label")
    out = {}
    for s in ds:
        try:
            labels = label_study_slices(s)
        except SpanOutOfRange as exc:
            raise StageError("label", f"study {s.study_id}: {exc}", EXIT_INVALID) from None
        out[s.study_id] = {str(m): lab.value for m, lab in sorted(labels.items())}
    write_json(args.out, out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    ds = _load(args.manifest, "calibrate")
    result = _calibrate(ds, args)
    doc = result.to_dict()
    write_json(args.out, doc)
    if args.csv:
        write_calibration_csv(doc, Path(args.out).parent if args.csv is True else args.csv)
    flag = "" if result.feasible else " (infeasible: fallback T)"
    print(f"t={result.t} T={result.T}{flag}")
    return EXIT_OK


def _calibrate(ds, args):
    t_grid = _grid(args.t_grid, DEFAULT_T_GRID)
    top_grid = _grid(args.top_grid, DEFAULT_TOP_GRID)
    try:
        return calibrate(ds, t_grid, top_grid, args.miss_penalty)
    except (CalibrationError, SpanOutOfRange) as exc:
        raise StageError("calibrate", str(exc), EXIT_INVALID) from None


def cmd_parse(args) -> int:
    ds = _load(args.manifest, "parse")
    t, T = _operating_point(args)
    rois, scores = parse_dataset(ds, t, T, keep_scores=args.dump_scores)
    write_json(args.out, rois_to_dict(rois))
    if args.dump_scores:
        out = Path(args.out)
        write_json(out.with_name(out.stem + "_scores.json"), scores)
    return EXIT_OK


def cmd_baseline(args) -> int:
    ds = _load(args.manifest, "baseline")
    T = args.top_percent
    if T is None and args.calib:
        with open(args.calib, encoding="utf-8") as fh:
            T = json.load(fh)["T"]
    if T is None:
        raise StageError("args", "need --top-percent (or --calib)", EXIT_IO)
    _check_T(T)
    write_json(args.out, rois_to_dict(run_baseline(ds, T)))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ds = _load(args.manifest, "evaluate")
    rois = _load_rois(args.rois, "evaluate")
    report = evaluate(rois, ds)
    write_json(args.out, report)
    if args.csv:
        write_report_csv(report, args.csv)
    _print_tables(report)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    ds = _load(args.manifest, "diagnose")
    rois = _load_rois(args.rois, "diagnose")
    write_json(args.out, diagnose_dataset(rois, ds))
    return EXIT_OK


def cmd_all(args) -> int:
    if args.train:
        _load(args.train, "all/train")
    val = _load(args.validation, "all/calibrate")
    test = _load(args.test, "all/parse")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    calib = _calibrate(val, args)
    calib_doc = calib.to_dict()
    write_json(out / "calib.json", calib_doc)

    rois, _ = parse_dataset(test, calib.t, calib.T)
    write_json(out / "rois.json", rois_to_dict(rois))
    report = evaluate(rois, test)
    report["operating_point"] = {"t": calib.t, "T": calib.T, "feasible": calib.feasible}
    write_json(out / "report.json", report)
    write_json(out / "diagnoses.json", diagnose_dataset(rois, test))
    if args.csv:
        write_calibration_csv(calib_doc, out / "csv")
        write_report_csv(report, out / "csv")

    if args.baseline:
        base = run_baseline(test, calib.T)
        write_json(out / "baseline_rois.json", rois_to_dict(base))
        base_report = evaluate(base, test)
        base_report["operating_point"] = {"T": calib.T}
        write_json(out / "baseline_report.json", base_report)
        if args.csv:
            write_report_csv(base_report, out / "csv_baseline")
    print(f"t={calib.t} T={calib.T} feasible={calib.feasible}")
    _print_tables(report)
    return EXIT_OK


def _print_tables(report) -> None:
    for name in ("mean", "lb"):
        cells = "  ".join(f"<={e['cutoff']:.2f}: {e['percent']:.1f}%" for e in report["cutoff_tables"][name])
        print(f"{name:>4} overlap  {cells}")
    ch = report.get("characterization")
    if ch:
        print(f"accuracy {ch['accuracy']:.4f}  mean F1 {ch['mean_f1']:.4f}  F1(HCC) {ch['f1_hcc']:.4f}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ksp", description="Key-slice parsing of multi-sequence MR model outputs.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic manifest")
    p.add_argument("--config", help="JSON file with SynthConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-studies", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="check manifest invariants")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("label", help="key/marginal/non-key slice labels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label)

    def grids(p):
        p.add_argument("--t-grid", help="comma-separated thresholds (default 0.00..0.95 step 0.05)")
        p.add_argument("--top-grid", help="comma-separated percentages (default 2..100 step 2)")
        p.add_argument("--miss-penalty", type=float, default=1.0)

    p = sub.add_parser("calibrate", help="choose t and T on a validation manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", nargs="?", const=True, default=None, help="also write CSV mirrors (optional directory)")
    grids(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("parse", help="run the key-slice parser")
    p.add_argument("--manifest", required=True)
    p.add_argument("--t", type=float)
    p.add_argument("--top-percent", type=float)
    p.add_argument("--calib", help="calibration JSON supplying t and T")
    p.add_argument("--out", required=True)
    p.add_argument("--dump-scores", action="store_true")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("baseline", help="top-T%% raw detections as ROIs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--top-percent", type=float)
    p.add_argument("--calib")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", help="overlap CDFs and characterization metrics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--rois", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="directory for CSV mirrors")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("diagnose", help="patient diagnoses from ROI class probabilities")
    p.add_argument("--manifest", required=True)
    p.add_argument("--rois", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("all", help="calibrate -> parse -> evaluate -> diagnose")
    p.add_argument("--train")
    p.add_argument("--validation", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--baseline", action="store_true", help="also evaluate the detector-only baseline")
    p.add_argument("--csv", action="store_true")
    grids(p)
    p.set_defaults(func=cmd_all)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"ksp: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"ksp: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
