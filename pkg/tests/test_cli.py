import json

import pytest

from ksp.cli import main
from ksp.data_model import save_manifest
from ksp.synth import SynthConfig, generate_dataset


@pytest.fixture
def triple(tmp_path):
    paths = {}
    for name, seed, n in (("train", 7, 10), ("val", 8, 20), ("test", 9, 25)):
        p = tmp_path / f"{name}.json"
        save_manifest(p, generate_dataset(SynthConfig(seed=seed, n_studies=n)))
        paths[name] = p
    return paths


def test_missing_manifest_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    code = main(["parse", "--manifest", str(missing), "--t", "0.5", "--top-percent", "50", "--out", str(tmp_path / "r.json")])
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_invalid_manifest_exit_1(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"studies": []}))
    assert main(["label", "--manifest", str(p), "--out", str(tmp_path / "l.json")]) == 1


def test_bad_threshold_is_config_error(triple, tmp_path):
    code = main(["parse", "--manifest", str(triple["test"]), "--t", "1.5", "--top-percent", "50", "--out", str(tmp_path / "r.json")])
    assert code == 2


def test_synth_and_validate(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_studies": 3, "seed": 7}))
    out = tmp_path / "m.json"
    assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["studies"]) == 3
    assert main(["validate", "--manifest", str(out)]) == 0


def test_label_output(triple, tmp_path):
    out = tmp_path / "labels.json"
    assert main(["label", "--manifest", str(triple["train"]), "--out", str(out)]) == 0
    labels = json.loads(out.read_text())
    assert len(labels) == 10
    assert set(v for study in labels.values() for v in study.values()) <= {"key", "marginal", "nonkey"}


def test_stagewise_run(triple, tmp_path):
    calib = tmp_path / "calib.json"
    assert main(["calibrate", "--manifest", str(triple["val"]), "--out", str(calib), "--csv", str(tmp_path / "c")]) == 0
    doc = json.loads(calib.read_text())
    assert {"t", "T", "feasible", "pr_curve", "threshold_scores"} <= set(doc)
    assert (tmp_path / "c" / "pr_curve.csv").exists()

    rois = tmp_path / "rois.json"
    assert main(["parse", "--manifest", str(triple["test"]), "--calib", str(calib), "--out", str(rois), "--dump-scores"]) == 0
    parsed = json.loads(rois.read_text())
    assert len(parsed) == 25
    first = next(r for lst in parsed.values() for r in lst)
    assert {"m", "box", "vote_mass", "slice_confidence"} <= set(first)
    scores = json.loads((tmp_path / "rois_scores.json").read_text())
    assert {"slices", "zones", "admissible", "selected"} <= set(next(iter(scores.values())))

    base = tmp_path / "base.json"
    assert main(["baseline", "--manifest", str(triple["test"]), "--calib", str(calib), "--out", str(base)]) == 0

    report = tmp_path / "report.json"
    assert main(["evaluate", "--manifest", str(triple["test"]), "--rois", str(rois), "--out", str(report),
                 "--csv", str(tmp_path / "csv")]) == 0
    rep = json.loads(report.read_text())
    assert len(rep["localization"]["patients"]) == 25
    assert "characterization" in rep
    for name in ("patients", "cdf_mean", "cdf_lb", "cutoffs", "characterization"):
        assert (tmp_path / "csv" / f"{name}.csv").exists()

    dx = tmp_path / "dx.json"
    assert main(["diagnose", "--manifest", str(triple["test"]), "--rois", str(rois), "--out", str(dx)]) == 0
    assert all(v["prediction"] in (None, "HCC", "ICC", "Metastasis") for v in json.loads(dx.read_text()).values())


def test_threshold_one_gives_empty_rois(triple, tmp_path):
    rois = tmp_path / "rois.json"
    assert main(["parse", "--manifest", str(triple["test"]), "--t", "1.0", "--top-percent", "50", "--out", str(rois)]) == 0
    assert all(v == [] for v in json.loads(rois.read_text()).values())
    report = tmp_path / "report.json"
    assert main(["evaluate", "--manifest", str(triple["test"]), "--rois", str(rois), "--out", str(report)]) == 0
    rep = json.loads(report.read_text())
    assert rep["cutoff_tables"]["mean"][0] == {"cutoff": 0.0, "percent": 100.0}
    assert rep["cutoff_tables"]["lb"][0] == {"cutoff": 0.0, "percent": 100.0}


def test_all_smoke_and_idempotent(triple, tmp_path):
    args = ["all", "--train", str(triple["train"]), "--validation", str(triple["val"]), "--test", str(triple["test"]),
            "--baseline", "--csv"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert "cutoff_tables" in rep and "characterization" in rep
    for f in ("calib.json", "rois.json", "report.json", "diagnoses.json", "baseline_rois.json", "baseline_report.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
