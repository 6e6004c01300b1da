"""Client/aggregator state machines and the round loops.

One round: regenerate partition masks, let every client compress its shifted
gradient and cut it into per-aggregator shards, let every surviving
aggregator average its shard across clients (ascending client id, so runs
are bit-reproducible), apply the descent step to its model segment, and
broadcast; clients then reassemble the full model.  A single-server baseline
with the same per-(client, round) gradient streams is provided for
equivalence checking: with the identity compressor and shifts frozen at
zero, both loops produce identical iterates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from ._rng import TAG_COMPRESS, TAG_DROPOUT, TAG_GRAD, stream
from .compression import CompressorSpec, potential, shifted_compress
from .errors import ConfigError, DivergenceError, ProtocolError
from .tasks import (
    Dataset,
    EstimatorSpec,
    MINIBATCH_SGD,
    ModelSpec,
    concat_datasets,
    grad,
    initial_params,
    loss,
    smoothness_estimate,
    stochastic_grad,
)
from .vectorcore import (
    BALANCED,
    MASK_MODES,
    PartitionMaskSet,
    Shard,
    extract_shard,
    make_partition_masks,
    reassemble,
)

UNIFORM = "uniform"
SAMPLE_WEIGHTED = "sample-weighted"
WEIGHTINGS = (UNIFORM, SAMPLE_WEIGHTED)

_BYTES_PER_COORD = 4  # 32-bit payloads on the wire


@dataclass(frozen=True)
class RoundConfig:
    """Everything a run needs besides the task and the initial point.

    ``shift_stepsize = 0`` freezes the reference vectors at zero (the
    no-shift baseline mode); ``learning_rate`` is always explicit here,
    callers wanting the analysis bound compute it via ``lr_bound``.
    """

    num_clients: int
    num_aggregators: int
    rounds: int
    learning_rate: float
    shift_stepsize: float
    compressor: CompressorSpec = CompressorSpec()
    mask_mode: str = BALANCED
    estimator: EstimatorSpec = EstimatorSpec()
    dropout_rate: float = 0.0
    seed: int = 0
    weighting: str = UNIFORM
    beta: float = 1.0

    def __post_init__(self):
        if self.num_clients < 1:
            raise ConfigError("need at least one client")
        if not 1 <= self.num_aggregators <= self.num_clients:
            raise ConfigError("aggregators are clients: need 1 <= A <= K")
        if self.rounds < 0:
            raise ConfigError("rounds must be non-negative")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if not 0.0 <= self.shift_stepsize <= 1.0:
            raise ConfigError("shift stepsize must lie in [0, 1]")
        if self.mask_mode not in MASK_MODES:
            raise ConfigError(f"unknown mask mode {self.mask_mode!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout rate must lie in [0, 1)")
        if self.weighting not in WEIGHTINGS:
            raise ConfigError(f"unknown weighting {self.weighting!r}")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")


@dataclass(frozen=True)
class Task:
    """A model plus one private dataset per client."""

    model: ModelSpec
    client_data: tuple[Dataset, ...]

    def __post_init__(self):
        if not self.client_data:
            raise ConfigError("task needs at least one client dataset")

    @property
    def num_clients(self) -> int:
        return len(self.client_data)


@dataclass(frozen=True)
class ClientState:
    """Per-client protocol state; ``shift`` is the reference vector."""

    client_id: int
    params: np.ndarray
    shift: np.ndarray
    data: Dataset


@dataclass(frozen=True)
class AggregatorState:
    """One aggregator's view for a single round: its shard of the model and
    of the global reference vector."""

    aggregator_id: int
    coords: np.ndarray
    shard_params: np.ndarray
    shard_shift: np.ndarray
    alive: bool = True


class ClientUpdate(NamedTuple):
    """Everything a client emits in one round.

    ``residual`` is the pre-compression shifted gradient; it never goes on
    the wire but feeds leakage diagnostics.
    """

    shards: list[Shard]
    new_shift: np.ndarray
    retained: np.ndarray
    residual: np.ndarray


@dataclass(frozen=True)
class ProtocolState:
    """Post-round snapshot handed to state hooks."""

    round_index: int
    params: np.ndarray
    shift_global: np.ndarray
    client_shifts: tuple[np.ndarray, ...]


@dataclass
class RoundRecord:
    """Diagnostics measured on the model entering round ``t`` plus that
    round's traffic and exposure accounting."""

    t: int
    loss: float
    grad_norm_sq: float
    shift_gap: float  # (1/K) sum_k ||grad_k - s_k||^2
    phi: float
    bytes_up_per_client: float
    bytes_down_per_client: float
    exposed_coords_mean: float
    exposed_client0: tuple[int, ...]
    dropped: tuple[int, ...]


_CSV_COLUMNS = (
    "t",
    "loss",
    "grad_norm_sq",
    "S_t",
    "phi",
    "bytes_up_per_client",
    "bytes_down_per_client",
    "exposed_coords_mean",
)


@dataclass
class TrainLog:
    """Per-round records plus the final model."""

    config: RoundConfig
    records: list[RoundRecord]
    final_params: np.ndarray
    param_history: list[np.ndarray] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return int(self.final_params.size)

    def to_csv_text(self) -> str:
        lines = [",".join(_CSV_COLUMNS)]
        for r in self.records:
            values = (
                r.loss,
                r.grad_norm_sq,
                r.shift_gap,
                r.phi,
                r.bytes_up_per_client,
                r.bytes_down_per_client,
                r.exposed_coords_mean,
            )
            lines.append(",".join([str(r.t)] + [repr(float(v)) for v in values]))
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())


StateHook = Callable[[ProtocolState], None]
# (round, client id, model entering the round, the client's emitted update)
ClientHook = Callable[[int, int, np.ndarray, ClientUpdate], None]


def _client_weights(config: RoundConfig, task: Task) -> np.ndarray | None:
    if config.weighting == UNIFORM:
        return None
    sizes = np.array([d.num_samples for d in task.client_data], dtype=np.float64)
    return sizes / sizes.sum()


def _weighted_sum(vectors: Sequence[np.ndarray], weights: np.ndarray | None) -> np.ndarray:
    """Mean (or weighted mean) with a fixed sequential reduction order."""
    acc = np.zeros_like(vectors[0])
    if weights is None:
        for v in vectors:
            acc = acc + v
        return acc / len(vectors)
    for v, w in zip(vectors, weights):
        acc = acc + w * v
    return acc


def _validate_run(config: RoundConfig, task: Task, x0: np.ndarray) -> np.ndarray:
    if task.num_clients != config.num_clients:
        raise ConfigError(
            f"config says {config.num_clients} clients but task has {task.num_clients}"
        )
    n = task.model.param_count
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (n,):
        raise ConfigError(f"initial params must have length {n}")
    if config.num_aggregators > n:
        raise ConfigError("cannot have more aggregators than coordinates")
    if config.estimator.kind == MINIBATCH_SGD:
        smallest = min(d.num_samples for d in task.client_data)
        if config.estimator.batch > smallest:
            raise ConfigError(
                f"mini-batch {config.estimator.batch} exceeds smallest client dataset {smallest}"
            )
    return x0


def client_round(
    client: ClientState,
    x_global: np.ndarray,
    masks: PartitionMaskSet,
    config: RoundConfig,
    model: ModelSpec,
) -> ClientUpdate:
    """One client's work: gradient estimate, shifted compression, sharding,
    and the reference-vector update (always with the full compressed vector,
    never cut by the partition masks)."""
    t = masks.round_index
    k = client.client_id
    g = stochastic_grad(
        model, x_global, client.data, config.estimator, stream(config.seed, TAG_GRAD, k, t)
    )
    update = shifted_compress(
        g, client.shift, config.compressor, stream(config.seed, TAG_COMPRESS, k, t)
    )
    shards = [
        extract_shard(update.values, masks, a) for a in range(masks.num_aggregators)
    ]
    new_shift = client.shift + config.shift_stepsize * update.values
    return ClientUpdate(shards, new_shift, update.retained, g - client.shift)


def aggregator_round(
    agg: AggregatorState,
    contributions: Sequence[Shard],
    config: RoundConfig,
    weights: np.ndarray | None = None,
) -> AggregatorState:
    """Average one contribution per client (ascending id), compensate the
    shift, and apply the descent step to this aggregator's model segment."""
    if len(contributions) != config.num_clients:
        raise ProtocolError(
            f"aggregator {agg.aggregator_id} expected {config.num_clients} "
            f"contributions, got {len(contributions)}"
        )
    for shard in contributions:
        if shard.aggregator != agg.aggregator_id:
            raise ProtocolError(
                f"shard for aggregator {shard.aggregator} delivered to {agg.aggregator_id}"
            )
        if shard.values.shape != agg.shard_params.shape:
            raise ProtocolError("contribution size does not match the shard")
    mean_update = _weighted_sum([s.values for s in contributions], weights)
    v = agg.shard_shift + mean_update
    return replace(
        agg,
        shard_params=agg.shard_params - config.learning_rate * v,
        shard_shift=agg.shard_shift + config.shift_stepsize * mean_update,
    )


def dropout_schedule(rate: float, num_aggregators: int, round_index: int, seed: int) -> frozenset[int]:
    """Aggregators independently dropped with probability ``rate`` this
    round; deterministic per (seed, round)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError("dropout rate must lie in [0, 1)")
    draws = stream(seed, TAG_DROPOUT, round_index).random(num_aggregators)
    return frozenset(int(a) for a in np.flatnonzero(draws < rate))


def shift_consistency_check(state: ProtocolState, weights: np.ndarray | None = None) -> float:
    """Max per-coordinate gap between the aggregator-side global shift and
    the (weighted) mean of the client shifts.  Both sides accumulate the
    same increments, so this should stay at floating-point noise."""
    mean_shift = _weighted_sum(list(state.client_shifts), weights)
    return float(np.max(np.abs(state.shift_global - mean_shift)))


def run_eris(
    config: RoundConfig,
    task: Task,
    x0: np.ndarray,
    *,
    track_params: bool = False,
    state_hook: StateHook | None = None,
    client_hook: ClientHook | None = None,
) -> TrainLog:
    """Run the partitioned-aggregation protocol for ``config.rounds`` rounds.

    Diagnostics in each record are measured on the model *entering* the
    round.  Dropped aggregators leave their coordinates of the model and the
    global shift untouched for that round; clients still apply the full
    shift update.  Raises ``DivergenceError`` (carrying the partial log) if
    the loss stops being finite.
    """
    model = task.model
    x = _validate_run(config, task, x0).copy()
    n = x.size
    K, A = config.num_clients, config.num_aggregators
    weights = _client_weights(config, task)
    global_data = concat_datasets(task.client_data)
    L = smoothness_estimate(model, global_data)
    clients = [
        ClientState(k, x.copy(), np.zeros(n), task.client_data[k]) for k in range(K)
    ]
    s_global = np.zeros(n)
    log = TrainLog(config, [], x, [])
    if track_params:
        log.param_history.append(x.copy())

    for t in range(config.rounds):
        record = _diagnostics(t, model, x, clients, global_data, weights, config, L)
        if not np.isfinite(record.loss):
            log.final_params = x
            raise DivergenceError(f"loss diverged at round {t}", partial_log=log)

        masks = make_partition_masks(n, A, t, config.seed, config.mask_mode)
        dropped = dropout_schedule(config.dropout_rate, A, t, config.seed)
        shard_sizes = masks.shard_sizes()

        updates = []
        for k in range(K):
            update = client_round(clients[k], x, masks, config, model)
            if client_hook is not None:
                client_hook(t, k, x, update)
            updates.append(update)

        _account_traffic(record, updates, masks, shard_sizes, K, A, n)

        x_work = x.copy()
        for a in range(A):
            if a in dropped:
                continue
            coords = masks.coords_of(a)
            agg = AggregatorState(a, coords, x_work[coords], s_global[coords])
            agg = aggregator_round(agg, [updates[k].shards[a] for k in range(K)], config, weights)
            x_work[coords] = agg.shard_params
            s_global[coords] = agg.shard_shift

        x = reassemble(
            [Shard(a, masks.coords_of(a), x_work[masks.coords_of(a)]) for a in range(A)],
            masks,
        )
        clients = [
            replace(clients[k], params=x.copy(), shift=updates[k].new_shift)
            for k in range(K)
        ]

        record.dropped = tuple(sorted(dropped))
        log.records.append(record)
        if track_params:
            log.param_history.append(x.copy())
        if state_hook is not None:
            state_hook(
                ProtocolState(t, x.copy(), s_global.copy(), tuple(c.shift for c in clients))
            )

    log.final_params = x
    return log


def run_fedavg(
    config: RoundConfig,
    task: Task,
    x0: np.ndarray,
    *,
    track_params: bool = False,
) -> TrainLog:
    """Single-server baseline: no compression, no shifts, no partitioning.

    Gradient streams are keyed by (seed, client, round) exactly as in
    ``run_eris``, so with a shared seed both loops see identical estimates.
    """
    model = task.model
    x = _validate_run(config, task, x0).copy()
    n = x.size
    K = config.num_clients
    weights = _client_weights(config, task)
    global_data = concat_datasets(task.client_data)
    L = smoothness_estimate(model, global_data)
    clients = [
        ClientState(k, x.copy(), np.zeros(n), task.client_data[k]) for k in range(K)
    ]
    log = TrainLog(config, [], x, [])
    if track_params:
        log.param_history.append(x.copy())

    for t in range(config.rounds):
        record = _diagnostics(t, model, x, clients, global_data, weights, config, L)
        if not np.isfinite(record.loss):
            log.final_params = x
            raise DivergenceError(f"loss diverged at round {t}", partial_log=log)
        estimates = [
            stochastic_grad(
                model, x, clients[k].data, config.estimator, stream(config.seed, TAG_GRAD, k, t)
            )
            for k in range(K)
        ]
        x = x - config.learning_rate * _weighted_sum(estimates, weights)

        # The server observes every coordinate of every client update.
        record.bytes_up_per_client = float(_BYTES_PER_COORD * n)
        record.bytes_down_per_client = float(_BYTES_PER_COORD * n)
        record.exposed_coords_mean = float(n)
        record.exposed_client0 = (n,)
        log.records.append(record)
        if track_params:
            log.param_history.append(x.copy())

    log.final_params = x
    return log


def equivalence_check(config: RoundConfig, task: Task, rounds: int | None = None) -> float:
    """Max |x_partitioned - x_single_server| over all rounds and coordinates
    when compression is the identity and shifts are frozen at zero.

    The two loops share gradient streams and reduce in the same order, so
    the expected result is exactly 0.
    """
    base = replace(
        config,
        compressor=CompressorSpec(),
        shift_stepsize=0.0,
        dropout_rate=0.0,
        rounds=config.rounds if rounds is None else rounds,
    )
    x0 = initial_params(task.model, base.seed)
    log_e = run_eris(base, task, x0, track_params=True)
    log_f = run_fedavg(base, task, x0, track_params=True)
    diff = 0.0
    for xe, xf in zip(log_e.param_history, log_f.param_history):
        diff = max(diff, float(np.max(np.abs(xe - xf))))
    return diff


def _diagnostics(
    t: int,
    model: ModelSpec,
    x: np.ndarray,
    clients: Sequence[ClientState],
    global_data: Dataset,
    weights: np.ndarray | None,
    config: RoundConfig,
    L: float,
) -> RoundRecord:
    client_grads = [grad(model, x, c.data) for c in clients]
    g_bar = _weighted_sum(client_grads, weights)
    shift_gap = float(
        np.mean([np.sum((g - c.shift) ** 2) for g, c in zip(client_grads, clients)])
    )
    f_t = loss(model, x, global_data)
    phi = potential(f_t, shift_gap, 0.0, 0.0, config.beta, L)
    return RoundRecord(
        t=t,
        loss=f_t,
        grad_norm_sq=float(np.sum(g_bar * g_bar)),
        shift_gap=shift_gap,
        phi=phi,
        bytes_up_per_client=0.0,
        bytes_down_per_client=0.0,
        exposed_coords_mean=0.0,
        exposed_client0=(),
        dropped=(),
    )


def _account_traffic(
    record: RoundRecord,
    updates: Sequence[ClientUpdate],
    masks: PartitionMaskSet,
    shard_sizes: np.ndarray,
    K: int,
    A: int,
    n: int,
) -> None:
    """Fill traffic and exposure fields.

    Only retained coordinates travel (4 bytes each); a client acting as
    aggregator ``a = k`` neither uploads its own shard nor downloads it back
    (self-delivery is free).  Downloads are the dense broadcast of every
    updated shard.
    """
    up = 0.0
    down = 0.0
    exposed_total = 0.0
    exposed_client0: tuple[int, ...] = ()
    for k in range(K):
        counts = np.bincount(masks.assignment[updates[k].retained], minlength=A)
        retained_total = int(counts.sum())
        own = int(counts[k]) if k < A else 0
        own_shard = int(shard_sizes[k]) if k < A else 0
        up += _BYTES_PER_COORD * (retained_total - own)
        down += _BYTES_PER_COORD * (n - own_shard)
        exposed_total += retained_total / A
        if k == 0:
            exposed_client0 = tuple(int(c) for c in counts)
    record.bytes_up_per_client = float(up / K)
    record.bytes_down_per_client = float(down / K)
    record.exposed_coords_mean = float(exposed_total / K)
    record.exposed_client0 = exposed_client0
