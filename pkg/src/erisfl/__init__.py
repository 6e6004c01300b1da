"""Serverless federated-learning simulator with partitioned aggregation,
shifted gradient compression, communication-time bounds, and
mutual-information leakage accounting."""

from .compression import (
    CompressedUpdate,
    CompressorSpec,
    StepsizeBundle,
    compress,
    lr_bound,
    make_stepsizes,
    omega_of,
    potential,
    shift_stepsize,
    shifted_compress,
)
from .errors import (
    ConfigError,
    DimensionError,
    DivergenceError,
    InfeasibilityError,
    ModelViolationError,
    ProtocolError,
)
from .protocol import (
    AggregatorState,
    ClientState,
    RoundConfig,
    Task,
    TrainLog,
    aggregator_round,
    client_round,
    dropout_schedule,
    equivalence_check,
    run_eris,
    run_fedavg,
    shift_consistency_check,
)
from .tasks import (
    Dataset,
    EstimatorSpec,
    ModelSpec,
    concat_datasets,
    dirichlet_partition,
    grad,
    initial_params,
    loss,
    smoothness_estimate,
    split_iid,
    stochastic_grad,
    synth_dataset,
)
from .vectorcore import (
    PartitionMaskSet,
    Shard,
    extract_shard,
    make_partition_masks,
    reassemble,
)

__version__ = "0.1.0"

__all__ = [
    "AggregatorState",
    "ClientState",
    "CompressedUpdate",
    "CompressorSpec",
    "ConfigError",
    "Dataset",
    "DimensionError",
    "DivergenceError",
    "EstimatorSpec",
    "InfeasibilityError",
    "ModelSpec",
    "ModelViolationError",
    "PartitionMaskSet",
    "ProtocolError",
    "RoundConfig",
    "Shard",
    "StepsizeBundle",
    "Task",
    "TrainLog",
    "aggregator_round",
    "client_round",
    "compress",
    "concat_datasets",
    "dirichlet_partition",
    "dropout_schedule",
    "equivalence_check",
    "extract_shard",
    "grad",
    "initial_params",
    "loss",
    "lr_bound",
    "make_partition_masks",
    "make_stepsizes",
    "omega_of",
    "potential",
    "reassemble",
    "run_eris",
    "run_fedavg",
    "shift_consistency_check",
    "shift_stepsize",
    "shifted_compress",
    "smoothness_estimate",
    "split_iid",
    "stochastic_grad",
    "synth_dataset",
    "__version__",
]
