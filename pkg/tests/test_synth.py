import json
import math

import numpy as np
import pytest

from ksp.curve import parse_trace
from ksp.data_model import LesionType, dataset_to_dict, validate_dataset
from ksp.evaluation import roi_overlap
from ksp.labeler import label_study_slices
from ksp.synth import SynthConfig, SynthError, generate_dataset


def test_seed7_defaults_valid():
    assert validate_dataset(generate_dataset(SynthConfig(seed=7, n_studies=20))).violations == []


def test_same_seed_bit_identical():
    a = json.dumps(dataset_to_dict(generate_dataset(SynthConfig(seed=9, n_studies=8))))
    b = json.dumps(dataset_to_dict(generate_dataset(SynthConfig(seed=9, n_studies=8))))
    c = json.dumps(dataset_to_dict(generate_dataset(SynthConfig(seed=10, n_studies=8))))
    assert a == b and a != c


def test_studies_independent_of_count():
    # per-study streams: the first studies don't change when more are generated
    few = generate_dataset(SynthConfig(seed=5, n_studies=3))
    many = generate_dataset(SynthConfig(seed=5, n_studies=6))
    assert few.studies == many.studies[:3]


def test_noiseless_template_and_boxes():
    ds = generate_dataset(SynthConfig.noiseless(seed=1, n_studies=10))
    template = {"key": 1.0, "marginal": 0.5, "nonkey": 0.0}
    for study in ds:
        labels = label_study_slices(study)
        for s in study.slices:
            assert set(s.class_scores.values()) == {template[labels[s.slice_index].value]}
            gt_boxes = {g.box for g in s.gt_boxes}
            assert {d.box for d in s.detections} == gt_boxes
            assert len(s.detections) == 5 * len(s.gt_boxes)


def test_noiseless_parse_selects_key_slices_exactly():
    ds = generate_dataset(SynthConfig.noiseless(seed=3, n_studies=25))
    for study in ds:
        labels = label_study_slices(study)
        key_with_dets = {m for m, lab in labels.items() if lab.value == "key" and study.slice_at(m).detections}
        tr = parse_trace(study, 0.5, 100)
        assert set(tr.selected) == key_with_dets
        assert all(roi_overlap(r, study) == 1.0 for r in tr.rois)


def test_label_frequencies_within_three_sigma():
    dist = (0.5, 0.3, 0.2)
    ds = generate_dataset(SynthConfig(seed=13, n_studies=400, class_distribution=dist, slices_per_study=(5, 8),
                                      lesion_span=(1, 3)))
    n = len(ds)
    counts = {c: 0 for c in LesionType}
    for s in ds:
        counts[s.label] += 1
    for c, p in zip(LesionType, dist):
        assert abs(counts[c] - n * p) <= 3 * math.sqrt(n * p * (1 - p))


def test_probability_vectors_peak_on_lesion_slices():
    ds = generate_dataset(SynthConfig(seed=2, n_studies=10, class_prob_concentration=0.6))
    order = list(LesionType)
    for study in ds:
        for s in study.slices:
            p = s.roi_class_probs["roi"]
            assert sum(p) == pytest.approx(1.0, abs=1e-9)
            if s.gt_boxes:
                assert int(np.argmax(p)) == order.index(study.label)


def test_infeasible_geometry():
    with pytest.raises(SynthError, match="does not fit"):
        generate_dataset(SynthConfig(slice_size=(16, 16), lesion_size=(20, 30), n_studies=1))
    with pytest.raises(SynthError, match="non-overlapping"):
        generate_dataset(SynthConfig(slice_size=(20, 20), lesion_size=(15, 15), lesions_per_study=(4, 4),
                                     lesion_span=(10, 10), slices_per_study=(10, 10), n_studies=1))


def test_config_validation_and_json(tmp_path):
    with pytest.raises(SynthError):
        SynthConfig(miss_rate=1.5)
    with pytest.raises(SynthError):
        SynthConfig(slices_per_study=(10, 5))
    with pytest.raises(SynthError):
        SynthConfig.from_dict({"bogus": 1})
    cfg = SynthConfig(seed=4, n_studies=3)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert SynthConfig.from_json(path) == cfg
