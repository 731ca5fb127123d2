"""Dual-filter fuzzy neural network for channels-by-time classification.

The model pairs a spatial fuzzy filter (over the channel vector at each
timestep) and a temporal fuzzy filter (over each channel's time-course),
each built from TSK-style rules with Modified-Laplace or Gaussian
membership functions evaluated in a learned query space, feeding a linear
classifier. Training uses exact hand-derived gradients; every decision is
explainable down to per-rule, per-channel membership degrees.
"""

from .data import (
    ChannelStats,
    Dataset,
    SyntheticSpec,
    Trial,
    generate_synthetic,
    load_dataset,
    save_dataset,
    standardize,
    stratified_split,
)
from .estimator import DuoClassifier
from .inference import (
    FiringStrengths,
    RuleBank,
    log_firing_strengths,
    normalized_firing_strengths,
    tsk_aggregate,
)
from .interpret import (
    CurveSamples,
    ExplanationReport,
    cohens_d_paired,
    explain_trial,
    fdr_bh,
    paired_t_test,
    query_histogram,
    render_report_table,
    sample_mf_curves,
)
from .membership import MfFamily, MfParams
from .model import (
    DuoModelParams,
    FuzzyFilterParams,
    ModelShape,
    cross_entropy,
    filter_forward,
    load_model,
    model_forward,
    predict,
    save_model,
    signed_log1p,
    spatial_forward,
    temporal_forward,
)
from .training import (
    EpochStats,
    GradientSet,
    TrainConfig,
    backward,
    evaluate,
    finite_diff_check,
    fit,
    init_params,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelStats",
    "CurveSamples",
    "Dataset",
    "DuoClassifier",
    "DuoModelParams",
    "EpochStats",
    "ExplanationReport",
    "FiringStrengths",
    "FuzzyFilterParams",
    "GradientSet",
    "MfFamily",
    "MfParams",
    "ModelShape",
    "RuleBank",
    "SyntheticSpec",
    "TrainConfig",
    "Trial",
    "backward",
    "cohens_d_paired",
    "cross_entropy",
    "evaluate",
    "explain_trial",
    "fdr_bh",
    "filter_forward",
    "finite_diff_check",
    "fit",
    "generate_synthetic",
    "init_params",
    "load_dataset",
    "load_model",
    "log_firing_strengths",
    "model_forward",
    "normalized_firing_strengths",
    "paired_t_test",
    "predict",
    "query_histogram",
    "render_report_table",
    "sample_mf_curves",
    "save_dataset",
    "save_model",
    "signed_log1p",
    "spatial_forward",
    "standardize",
    "stratified_split",
    "temporal_forward",
    "tsk_aggregate",
]
