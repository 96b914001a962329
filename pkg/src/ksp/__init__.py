"""Key-slice parsing for multi-sequence MR lesion localization and characterization."""
from .baseline import run_baseline
from .calibration import (
    PRQuartilePoint,
    calibrate,
    calibrate_threshold,
    calibrate_top_percent,
    pr_quartile_curve,
)
from .curve import KeySliceZone, admissible_slices, extract_zones, parse_study, rank_and_select
from .data_model import (
    BoundingBox,
    BoxKind,
    Dataset,
    DetectionBox,
    GroundTruthBox,
    LesionSpan,
    LesionType,
    SliceLabel,
    SliceRecord,
    Study,
    load_manifest,
    save_manifest,
    validate_dataset,
)
from .evaluation import (
    box_overlap,
    characterization_metrics,
    diagnose_patient,
    empirical_cdf,
    patient_overlap_stats,
)
from .fusion import combined_score, fuse_classification, normalize_areas, slice_detection_confidence
from .labeler import label_study_slices
from .synth import SynthConfig, generate_dataset
from .voting import KeyROI, accumulate_votes, vote_roi

__version__ = "0.1.0"
