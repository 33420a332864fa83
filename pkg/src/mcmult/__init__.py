"""Multi-scale cooperative crossmodal transformer (MCMulT) in numpy.

The package bundles a small reverse-mode autodiff core (:mod:`mcmult.tensor`),
the crossmodal layers and variant scheduler, a planted-signal synthetic
dataset, and the training, metrics, ablation and export harness.
"""

from .config import Branch, ModelConfig, Modality, Variant
from .connectivity import ConnectivityGraph, build_connectivity
from .data import (
    Batch,
    MultimodalSample,
    SyntheticSpec,
    batch_and_pad,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split,
)
from .errors import (
    ConfigError,
    ContractError,
    DatasetLoadError,
    DegenerateMaskError,
    DimensionError,
    MCMulTError,
    SchedulingError,
    TrainingError,
)
from .metrics import MetricsReport, compute_metrics
from .model import MCMulT, count_parameters
from .tensor import Tape, Tensor, backward
from .training import RunHistory, TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "Batch", "Branch", "ConfigError", "ConnectivityGraph", "ContractError",
    "DatasetLoadError", "DegenerateMaskError", "DimensionError", "MCMulT",
    "MCMulTError", "MetricsReport", "ModelConfig", "Modality", "MultimodalSample",
    "RunHistory", "SchedulingError", "SyntheticSpec", "Tape", "Tensor",
    "TrainConfig", "TrainingError", "Variant", "backward", "batch_and_pad",
    "build_connectivity", "compute_metrics", "count_parameters", "evaluate",
    "generate_synthetic", "load_dataset", "save_dataset", "split", "train",
]
