"""Mutual-information leakage accounting and empirical exposure statistics.

The per-client leakage toward a single observer over ``T`` rounds is bounded
by ``n * T * (p / A) * C_max`` nats: an observer sees one of ``A`` disjoint
coordinate shards, thinned further by the compression retention probability
``p``, and each revealed coordinate leaks at most ``C_max`` nats per round.
A coalition of ``A_c`` pooling observers scales the bound linearly.  Under
Gaussian marginal/conditional weight models, ``C_max`` is half the log
variance ratio; this module estimates those variances from repeated
simulations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ._rng import TAG_TRACE, stream
from .errors import ConfigError, DimensionError, ModelViolationError
from .protocol import RoundConfig, Task, TrainLog, run_eris
from .tasks import initial_params
from .vectorcore import PartitionMaskSet

_MIN_TRACE_RUNS = 30


# ---------------------------------------------------------------------------
# Closed-form bounds


def leakage_bound(n: int, T: int, p: float, A: int, c_max: float) -> float:
    """Per-client mutual-information bound in nats for one observer."""
    if n < 1 or T < 0:
        raise ConfigError("need n >= 1 and T >= 0")
    if not 0.0 <= p <= 1.0:
        raise ConfigError("retention probability must lie in [0, 1]")
    if A < 1:
        raise ConfigError("need at least one aggregator")
    if c_max < 0:
        raise ConfigError("c_max must be non-negative")
    return n * T * (p / A) * c_max


def collusion_bound(n: int, T: int, p: float, A: int, A_c: int, c_max: float) -> float:
    """Bound for a coalition of ``A_c`` observers pooling disjoint shards.

    ``A_c = 1`` recovers ``leakage_bound``; ``A_c = A`` removes the sharding
    protection entirely, leaving only compression.
    """
    if not 1 <= A_c <= A:
        raise ConfigError(f"coalition size must satisfy 1 <= A_c <= A, got {A_c}")
    return leakage_bound(n, T, p, A, c_max) * A_c


def nats_to_bits(nats: float) -> float:
    return nats / math.log(2.0)


@dataclass(frozen=True)
class LeakageBound:
    """A fully-parameterised bound evaluation."""

    n: int
    T: int
    p: float
    A: int
    A_c: int
    c_max: float

    @property
    def bound_nats(self) -> float:
        return collusion_bound(self.n, self.T, self.p, self.A, self.A_c, self.c_max)

    @property
    def bound_bits(self) -> float:
        return nats_to_bits(self.bound_nats)


# ---------------------------------------------------------------------------
# Exposure counting


def count_exposed(masks: PartitionMaskSet, retained: np.ndarray, aggregator: int) -> int:
    """Coordinates of one client's update visible to ``aggregator``: the
    intersection of its shard with the compression retention mask."""
    retained = np.asarray(retained, dtype=bool)
    if retained.shape != masks.assignment.shape:
        raise DimensionError("retention mask length does not match the partition masks")
    return int(np.count_nonzero((masks.assignment == aggregator) & retained))


@dataclass
class ExposureLedger:
    """Per-(round, aggregator) exposed-coordinate counts for one observed
    client, with cumulative totals."""

    n: int
    num_aggregators: int
    rounds: list[tuple[int, ...]] = field(default_factory=list)

    def record(self, counts: Sequence[int]) -> None:
        counts = tuple(int(c) for c in counts)
        if len(counts) != self.num_aggregators:
            raise DimensionError("need one count per aggregator")
        cap = -(-self.n // self.num_aggregators)  # ceil(n / A)
        if any(c < 0 or c > cap for c in counts):
            raise ConfigError("per-round exposure cannot exceed the shard size")
        self.rounds.append(counts)

    @classmethod
    def from_train_log(cls, log: TrainLog) -> "ExposureLedger":
        ledger = cls(log.dimension, log.config.num_aggregators)
        for rec in log.records:
            ledger.record(rec.exposed_client0)
        return ledger

    @property
    def num_rounds(self) -> int:
        return len(self.rounds)

    def cumulative_per_aggregator(self) -> np.ndarray:
        if not self.rounds:
            return np.zeros(self.num_aggregators, dtype=np.int64)
        return np.asarray(self.rounds, dtype=np.int64).sum(axis=0)

    def total(self) -> int:
        return int(self.cumulative_per_aggregator().sum())


# ---------------------------------------------------------------------------
# Gaussian per-coordinate fits


@dataclass(frozen=True)
class GaussianFit:
    """Marginal vs conditional variance of one revealed coordinate, plus
    normality moments of the conditional sample."""

    coordinate: int
    round_index: int
    sigma_sq: float
    sigma_cond_sq: float
    mean: float
    std: float
    excess_kurtosis: float

    @property
    def degenerate(self) -> bool:
        """Conditional point mass; the Gaussian bound is infinite."""
        return self.sigma_cond_sq == 0.0


def c_max_gaussian(fit: GaussianFit) -> float:
    """Per-coordinate bound ``0.5 * ln(sigma^2 / sigma_cond^2)`` in nats.

    A degenerate conditional (zero variance) signals infinite leakage and
    returns ``inf``; a marginal variance below the conditional one violates
    the model and raises instead of being clamped.
    """
    if fit.sigma_cond_sq == 0.0:
        return math.inf
    if fit.sigma_sq < fit.sigma_cond_sq:
        raise ModelViolationError(
            f"marginal variance {fit.sigma_sq} below conditional {fit.sigma_cond_sq}"
        )
    return 0.5 * math.log(fit.sigma_sq / fit.sigma_cond_sq)


def c_max_from_snr(snr: float) -> float:
    """Equivalent form ``0.5 * ln(1 + SNR)`` with
    ``SNR = (sigma^2 - sigma_cond^2) / sigma_cond^2``."""
    if snr < 0:
        raise ConfigError("SNR must be non-negative")
    return 0.5 * math.log1p(snr)


# ---------------------------------------------------------------------------
# Trace collection


@dataclass
class TraceReport:
    """Output of ``weight_trace_collect``.

    ``c_max_nats`` is the max finite per-coordinate bound over sampled
    coordinates and rounds, or ``None`` when any sampled coordinate is
    conditionally deterministic (the degenerate, infinite-leakage case).
    """

    fits: list[GaussianFit]
    coordinates: np.ndarray
    num_runs: int
    num_rounds: int
    c_max_nats: float | None
    degenerate: bool
    fraction_marginal_ge_cond: float
    warnings: list[str] = field(default_factory=list)


def weight_trace_collect(
    task_factory: Callable[[int], Task],
    config: RoundConfig,
    R: int,
    coord_sample_size: int = 16,
    observed_client: int = 0,
) -> TraceReport:
    """Estimate per-coordinate marginal and conditional weight variances.

    Runs the protocol ``R`` times with fresh protocol randomness and the
    client datasets *resampled* per run (marginal population), and ``R``
    times with the datasets *fixed* (conditional population).
    ``task_factory(data_seed)`` must build the task for a given data seed.
    The traced value is the locally updated weight a client would reveal,
    ``x_i - lr * (g_i - s_i)``, at a seeded sample of coordinates.  For each
    coordinate the round with the largest variance ratio is kept (the
    history supremum is approximated by the supremum over observed rounds).
    Everything is deterministic given ``config.seed``.
    """
    if R < 2:
        raise ConfigError("need at least two runs to estimate a variance")
    warnings = []
    if R < _MIN_TRACE_RUNS:
        warnings.append(
            f"only {R} runs (< {_MIN_TRACE_RUNS}): variance estimates have low statistical power"
        )
    master = config.seed
    fixed_task = task_factory(master)
    n = fixed_task.model.param_count
    T = config.rounds
    if T < 1:
        raise ConfigError("trace collection needs at least one round")
    pick = stream(master, TAG_TRACE, 0)
    coords = np.sort(pick.choice(n, size=min(coord_sample_size, n), replace=False))

    x0 = initial_params(fixed_task.model, master)

    def collect(population: str) -> np.ndarray:
        values = np.zeros((R, T, coords.size))
        for r in range(R):
            run_seed = int(
                stream(master, TAG_TRACE, 1 if population == "cond" else 2, r).integers(2**62)
            )
            task = fixed_task if population == "cond" else task_factory(run_seed)
            cfg = replace(config, seed=run_seed)

            def hook(t, k, x_global, update, r=r):
                if k == observed_client:
                    values[r, t] = (
                        x_global[coords] - cfg.learning_rate * update.residual[coords]
                    )

            run_eris(cfg, task, x0, client_hook=hook)
        return values

    cond = collect("cond")
    marg = collect("marg")
    var_cond = cond.var(axis=0, ddof=1)  # (T, coords)
    var_marg = marg.var(axis=0, ddof=1)

    fits = []
    degenerate = False
    best_overall = None
    for j, c in enumerate(coords):
        ratios = np.full(T, -np.inf)
        for t in range(T):
            if var_cond[t, j] > 0.0:
                ratios[t] = var_marg[t, j] / var_cond[t, j]
        if np.all(np.isneginf(ratios)):
            t_star = 0
            degenerate = True
        else:
            t_star = int(np.argmax(ratios))
        sample = cond[:, t_star, j]
        fit = GaussianFit(
            coordinate=int(c),
            round_index=t_star,
            sigma_sq=float(var_marg[t_star, j]),
            sigma_cond_sq=float(var_cond[t_star, j]),
            mean=float(sample.mean()),
            std=float(sample.std(ddof=1)),
            excess_kurtosis=_excess_kurtosis(sample),
        )
        if fit.degenerate and fit.sigma_sq > 0.0:
            degenerate = True
        fits.append(fit)
        if not fit.degenerate and fit.sigma_sq >= fit.sigma_cond_sq:
            value = c_max_gaussian(fit)
            if best_overall is None or value > best_overall:
                best_overall = value

    comparable = var_cond > 0.0
    frac = (
        float(np.mean(var_marg[comparable] >= var_cond[comparable]))
        if comparable.any()
        else 0.0
    )
    return TraceReport(
        fits=fits,
        coordinates=coords,
        num_runs=R,
        num_rounds=T,
        c_max_nats=None if degenerate else best_overall,
        degenerate=degenerate,
        fraction_marginal_ge_cond=frac,
        warnings=warnings,
    )


def _excess_kurtosis(sample: np.ndarray) -> float:
    mu = sample.mean()
    centered = sample - mu
    m2 = float(np.mean(centered**2))
    if m2 == 0.0:
        return 0.0
    m4 = float(np.mean(centered**4))
    return m4 / (m2 * m2) - 3.0


# ---------------------------------------------------------------------------
# Collusion curve


@dataclass(frozen=True)
class CollusionPoint:
    coalition_size: int
    exposed_fraction: float
    bound_nats: float


def collusion_curve(
    log: TrainLog, coalition_sizes: Sequence[int], c_max: float = 1.0
) -> list[CollusionPoint]:
    """Empirical exposure and the matching bound for growing coalitions.

    The coalition of size ``A_c`` is the first ``A_c`` aggregators; shards
    are disjoint, so its per-round exposure is the sum of per-aggregator
    counts.  ``exposed_fraction`` is the mean per-round exposed fraction of
    the whole model; the bound is cumulative over the logged rounds.
    """
    ledger = ExposureLedger.from_train_log(log)
    if ledger.num_rounds == 0:
        raise ConfigError("run log holds no completed rounds")
    A = log.config.num_aggregators
    n = log.dimension
    T = ledger.num_rounds
    spec = log.config.compressor
    p = 1.0 if spec.kind == "identity" else spec.p
    counts = np.asarray(ledger.rounds, dtype=np.int64)
    points = []
    for size in coalition_sizes:
        if not 0 <= size <= A:
            raise ConfigError(f"coalition size must lie in [0, {A}], got {size}")
        if size == 0:
            points.append(CollusionPoint(0, 0.0, 0.0))
            continue
        per_round = counts[:, :size].sum(axis=1)
        points.append(
            CollusionPoint(
                coalition_size=size,
                exposed_fraction=float(per_round.mean() / n),
                bound_nats=collusion_bound(n, T, p, A, size, c_max),
            )
        )
    return points


def collusion_curve_csv_text(points: Sequence[CollusionPoint]) -> str:
    lines = ["coalition_size,exposed_fraction,bound_nats"]
    for pt in points:
        lines.append(f"{pt.coalition_size},{repr(pt.exposed_fraction)},{repr(pt.bound_nats)}")
    return "\n".join(lines) + "\n"
