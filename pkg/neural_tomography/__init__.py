"""Qudit tomography with a denoising neural network against state-preparation and measurement
errors."""

from __future__ import annotations

from neural_tomography._denoiser import (
    NetworkParams,
    OptimizerState,
    TrainConfig,
    TrainHistory,
    backward,
    fit,
    forward,
    init_params,
    kl_loss,
    predict_batch,
    rmsprop_step,
    train,
)
from neural_tomography._errors import (
    DataFormatError,
    NumericalError,
    PipelineStageError,
    TomographyError,
    UsageError,
)
from neural_tomography._experiments import (
    EvaluationReport,
    PipelineConfig,
    bhattacharyya,
    evaluate,
    learning_curve,
    run_pipeline,
)
from neural_tomography._mle import (
    Estimate,
    MleConfig,
    ReconstructionResult,
    mle_density,
    mle_pure,
    reconstruct,
    reconstruct_batch,
)
from neural_tomography._optics import (
    HG_BASIS,
    SPAM_SCENARIOS,
    DetectionModel,
    HgModeIndex,
    SpamModel,
    crosstalk_matrix,
    effective_povm,
    gouy_channel,
    gouy_unitary,
    overlap_matrix,
    smf_overlap,
)
from neural_tomography._povm import SicSearchConfig, build_sic, verify_ic
from neural_tomography._process import (
    ChiMatrix,
    GouyPhases,
    calibrate_gouy,
    dominant_kraus,
    extract_gouy_phases,
    reconstruct_process,
    simulate_process_data,
)
from neural_tomography._quantum import (
    DensityMatrix,
    KrausChannel,
    Povm,
    ProbDistribution,
    PureState,
    born_probabilities,
    fidelity,
    haar_random_pure,
    purity,
)
from neural_tomography._sampler import DatasetConfig, TomographyRecord, generate_dataset

__all__ = [
    # states and measurements
    "PureState",
    "DensityMatrix",
    "ProbDistribution",
    "Povm",
    "KrausChannel",
    "haar_random_pure",
    "born_probabilities",
    "fidelity",
    "purity",
    "SicSearchConfig",
    "build_sic",
    "verify_ic",
    # optics and SPAM
    "HgModeIndex",
    "HG_BASIS",
    "DetectionModel",
    "SpamModel",
    "SPAM_SCENARIOS",
    "smf_overlap",
    "overlap_matrix",
    "gouy_unitary",
    "gouy_channel",
    "effective_povm",
    "crosstalk_matrix",
    # data
    "DatasetConfig",
    "TomographyRecord",
    "generate_dataset",
    # denoiser
    "NetworkParams",
    "OptimizerState",
    "TrainConfig",
    "TrainHistory",
    "init_params",
    "forward",
    "backward",
    "kl_loss",
    "rmsprop_step",
    "fit",
    "train",
    "predict_batch",
    # reconstruction
    "MleConfig",
    "ReconstructionResult",
    "Estimate",
    "mle_density",
    "mle_pure",
    "reconstruct",
    "reconstruct_batch",
    # process tomography
    "ChiMatrix",
    "GouyPhases",
    "simulate_process_data",
    "reconstruct_process",
    "dominant_kraus",
    "extract_gouy_phases",
    "calibrate_gouy",
    # experiments
    "PipelineConfig",
    "EvaluationReport",
    "evaluate",
    "bhattacharyya",
    "run_pipeline",
    "learning_curve",
    # errors
    "TomographyError",
    "UsageError",
    "NumericalError",
    "DataFormatError",
    "PipelineStageError",
]
