"""Payload-size models and per-round minimum distribution-time lower bounds.

These are closed-form lower bounds on the wall-clock time a round needs for
every party to send and receive its updates, given per-node link rates; they
model no queueing or congestion.  All conversions are decimal (1 MB = 1e6
bytes) and a parameter occupies 32 bits on the wire.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

FEDAVG = "fedavg"
PRIPRUNE = "priprune"
SOTERIAFL = "soteriafl"
ERIS = "eris"
AKO = "ako"
SHATTER = "shatter"
METHODS = (FEDAVG, PRIPRUNE, SOTERIAFL, ERIS, AKO, SHATTER)

BITS_PER_PARAM = 32


@dataclass(frozen=True)
class NetworkProfile:
    """Per-node link rates in bits/second.

    ``client_up``/``client_down`` may be scalars (homogeneous clients) or
    per-client arrays; the server rates matter only for the single-server
    bound.
    """

    client_up: np.ndarray
    client_down: np.ndarray
    server_up: float
    server_down: float

    def __post_init__(self):
        for rates in (self.client_up, self.client_down):
            if np.any(np.asarray(rates) <= 0):
                raise ConfigError("all link rates must be positive")
        if self.server_up <= 0 or self.server_down <= 0:
            raise ConfigError("all link rates must be positive")

    @classmethod
    def homogeneous(cls, rate_bits_per_s: float, num_clients: int = 1) -> "NetworkProfile":
        """Every link (client and server, both directions) runs at the same
        rate."""
        rates = np.full(num_clients, float(rate_bits_per_s))
        return cls(rates, rates.copy(), float(rate_bits_per_s), float(rate_bits_per_s))

    def min_client_up(self, count: int | None = None) -> float:
        return float(np.min(np.asarray(self.client_up)[: count or None]))

    def min_client_down(self, count: int | None = None) -> float:
        return float(np.min(np.asarray(self.client_down)[: count or None]))

    def total_client_up(self) -> float:
        return float(np.sum(self.client_up))


def rate_from_megabytes_per_s(mb_per_s: float) -> float:
    """Convert a decimal MB/s link rate to bits/second."""
    return mb_per_s * 1e6 * 8


@dataclass(frozen=True)
class SizeModel:
    """Per-round payload model for one method.

    ``p`` is the pruning fraction (priprune), ``omega`` the compressor
    variance (soteriafl / eris), ``r`` the gossip fan-in (shatter, only used
    by the time bound).
    """

    method: str
    n: int
    p: float | None = None
    omega: float | None = None
    r: int | None = None
    bits_per_param: int = BITS_PER_PARAM

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.n < 1:
            raise ConfigError("model size must be positive")
        if self.method == PRIPRUNE and not (self.p is not None and 0.0 <= self.p < 1.0):
            raise ConfigError("priprune needs a pruning fraction p in [0, 1)")
        if self.method in (SOTERIAFL, ERIS) and not (
            self.omega is not None and self.omega >= 0.0
        ):
            raise ConfigError(f"{self.method} needs omega >= 0")
        if self.method == SHATTER and not (self.r is not None and self.r >= 1):
            raise ConfigError("shatter needs a fan-in r >= 1")


def payload_bits(sm: SizeModel) -> float:
    """Effective per-round model payload in bits.

    Full size for fedavg/ako/shatter, ``(1 - p)`` of it after pruning, and a
    ``1 / (omega + 1)`` fraction for the compressed methods.
    """
    full = float(sm.bits_per_param * sm.n)
    if sm.method == PRIPRUNE:
        return full * (1.0 - sm.p)
    if sm.method in (SOTERIAFL, ERIS):
        return full / (sm.omega + 1.0)
    return full


def upload_bits(sm: SizeModel, K: int) -> float:
    """Worst-case per-client upload in bits.

    Under partitioned aggregation a client that is itself an aggregator does
    not ship its own shard, so with ``A = K`` the upload is ``(K-1)/K`` of
    the payload; every other method uploads the full payload.
    """
    if K < 1:
        raise ConfigError("K must be at least 1")
    b = payload_bits(sm)
    if sm.method == ERIS:
        return b * (K - 1) / K
    return b


def dist_time_fedavg(K: int, b_bits: float, prof: NetworkProfile) -> float:
    """Single-server bound: collect K uploads, then broadcast K downloads,
    each phase gated by the server aggregate and by the slowest client."""
    if K < 1:
        raise ConfigError("K must be at least 1")
    collect = max(K * b_bits / prof.server_down, b_bits / prof.min_client_up())
    broadcast = max(K * b_bits / prof.server_up, b_bits / prof.min_client_down())
    return collect + broadcast


def dist_time_eris(K: int, A: int, b_bits: float, prof: NetworkProfile) -> float:
    """Partitioned-aggregation bound with ``A`` aggregators drawn from the
    first ``A`` clients; each aggregator moves ``(K-1)/A`` of the payload per
    phase while non-aggregator clients move the whole payload."""
    if not 1 <= A <= K:
        raise ConfigError("need 1 <= A <= K")
    collect = max(
        (K - 1) * b_bits / (A * prof.min_client_down(A)),
        b_bits / prof.min_client_up(),
    )
    broadcast = max(
        (K - 1) * b_bits / (A * prof.min_client_up(A)),
        b_bits / prof.min_client_down(),
    )
    return collect + broadcast


def dist_time_ako(K: int, b_bits: float, prof: NetworkProfile) -> float:
    """Partition-exchange bound; independent of ``K`` because every node
    moves one full model's worth of partitions regardless of peers."""
    del K
    return max(b_bits / prof.min_client_down(), b_bits / prof.min_client_up())


def dist_time_shatter(K: int, b_bits: float, r: int, prof: NetworkProfile) -> float:
    """Gossip-overlay bound: upload the own model once, download ``r``
    models, and push ``r`` copies through the pooled upload capacity."""
    if K < 1:
        raise ConfigError("K must be at least 1")
    if r < 1:
        raise ConfigError("fan-in r must be at least 1")
    return max(
        b_bits / prof.min_client_up(),
        r * b_bits / prof.min_client_down(),
        r * b_bits / prof.total_client_up(),
    )


def dist_time(sm: SizeModel, K: int, A: int, prof: NetworkProfile) -> float:
    """Dispatch to the method's bound using its effective payload."""
    if sm.method == ERIS:
        return dist_time_eris(K, A, upload_bits(sm, K), prof)
    if sm.method == AKO:
        return dist_time_ako(K, payload_bits(sm), prof)
    if sm.method == SHATTER:
        return dist_time_shatter(K, payload_bits(sm), sm.r, prof)
    return dist_time_fedavg(K, payload_bits(sm), prof)


@dataclass(frozen=True)
class SweepRow:
    method: str
    K: int
    A: int
    n: int
    payload_bytes: float
    time_seconds: float


def sweep(
    vary: str,
    grid: Sequence[int],
    size_models: Iterable[SizeModel],
    prof_rate_bits: float,
    K: int | None = None,
    n: int | None = None,
    A: int | None = None,
) -> list[SweepRow]:
    """Evaluate the bounds over a grid of ``K`` or ``n`` at a homogeneous
    link rate.  ``A`` defaults to K (maximum parallelism)."""
    if vary not in ("K", "n"):
        raise ConfigError("vary must be 'K' or 'n'")
    rows = []
    for value in grid:
        cur_K = int(value) if vary == "K" else int(K)
        cur_n = int(n) if vary == "K" else int(value)
        cur_A = min(A if A is not None else cur_K, cur_K)
        prof = NetworkProfile.homogeneous(prof_rate_bits, cur_K)
        for sm in size_models:
            sm_n = SizeModel(sm.method, cur_n, sm.p, sm.omega, sm.r, sm.bits_per_param)
            rows.append(
                SweepRow(
                    method=sm.method,
                    K=cur_K,
                    A=cur_A,
                    n=cur_n,
                    payload_bytes=upload_bits(sm_n, cur_K) / 8.0,
                    time_seconds=dist_time(sm_n, cur_K, cur_A, prof),
                )
            )
    return rows


def sweep_to_csv_text(rows: Sequence[SweepRow]) -> str:
    lines = ["method,K,A,n,payload_bytes,time_seconds"]
    for r in rows:
        lines.append(
            f"{r.method},{r.K},{r.A},{r.n},{repr(r.payload_bytes)},{repr(r.time_seconds)}"
        )
    return "\n".join(lines) + "\n"
