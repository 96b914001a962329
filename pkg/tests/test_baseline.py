from ksp.baseline import baseline_study, run_baseline
from ksp.evaluation import roi_overlap
from ksp.synth import SynthConfig, generate_dataset
from ksp.voting import vote_roi

from conftest import make_slice, make_study


def test_T100_keeps_every_detection():
    ds = generate_dataset(SynthConfig(seed=1, n_studies=4))
    out = run_baseline(ds, 100)
    for s in ds:
        assert len(out[s.study_id]) == sum(len(sl.detections) for sl in s.slices)


def test_ranked_by_raw_confidence():
    study = make_study([
        make_slice(0, dets=[((0, 0, 3, 3), 0.2), ((4, 4, 6, 6), 0.9)]),
        make_slice(1, dets=[((1, 1, 2, 2), 0.5)]),
    ])
    rois = baseline_study(study, 50)
    assert [(r.slice_index, r.vote_mass) for r in rois] == [(0, 0.9), (1, 0.5)]


def test_single_detection_matches_vote_roi():
    study = make_study([make_slice(0), make_slice(1, dets=[((3, 4, 11, 9), 0.8)])])
    b = baseline_study(study, 30)[0]
    v = vote_roi(study.slice_at(1).detections, 32, 32, 0.0, 1)
    assert (b.slice_index, b.box) == (v.slice_index, v.box)


def test_noiseless_baseline_hits_truth_and_fp_surface():
    clean = generate_dataset(SynthConfig.noiseless(seed=6, n_studies=5, det_conf_edge=0.85))
    for s in clean:
        assert all(roi_overlap(r, s) == 1.0 for r in baseline_study(s, 100))
    noisy = generate_dataset(SynthConfig.noiseless(seed=6, n_studies=5, fp_rate=0.5, fp_conf_max=1.0))
    zero = [roi_overlap(r, s) == 0 for s in noisy for r in baseline_study(s, 100)]
    assert any(zero)
