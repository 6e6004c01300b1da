"""Dense parameter vectors, coordinate partition masks, and shard algebra.

A round's partition assigns every model coordinate to exactly one of ``A``
aggregators.  The assignment is stored as a single integer array
(coordinate -> aggregator), so disjointness and completeness hold by
construction and splitting a vector into shards followed by reassembly is an
exact identity, not an approximation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._rng import TAG_MASK, stream
from .errors import ConfigError, DimensionError, ProtocolError

BALANCED = "balanced"
IID_CATEGORICAL = "iid-categorical"
MASK_MODES = (BALANCED, IID_CATEGORICAL)


def as_param_vector(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Coerce ``values`` to a 1-D float64 array and validate it.

    Raises ``DimensionError`` on empty or non-1-D input and ``ValueError`` on
    NaN/Inf entries.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise DimensionError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("parameter vector contains NaN or Inf")
    return v


@dataclass(frozen=True)
class PartitionMaskSet:
    """Round-scoped coordinate ownership: ``assignment[i]`` is the aggregator
    that owns coordinate ``i``."""

    assignment: np.ndarray
    num_aggregators: int
    round_index: int

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if a.ndim != 1:
            raise DimensionError("assignment must be 1-D")
        if self.num_aggregators < 1:
            raise ConfigError("need at least one aggregator")
        if a.size and (a.min() < 0 or a.max() >= self.num_aggregators):
            raise ConfigError("assignment entries must lie in [0, num_aggregators)")

    @property
    def dimension(self) -> int:
        return int(self.assignment.size)

    def coords_of(self, aggregator: int) -> np.ndarray:
        """Sorted coordinate indices owned by ``aggregator``."""
        if not 0 <= aggregator < self.num_aggregators:
            raise ConfigError(f"aggregator index {aggregator} out of range")
        return np.flatnonzero(self.assignment == aggregator)

    def shard_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.num_aggregators)


@dataclass(frozen=True)
class Shard:
    """The restriction of a vector to one aggregator's coordinates."""

    aggregator: int
    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.coords.shape != self.values.shape:
            raise DimensionError("coords and values must align")
        if self.coords.size > 1 and not np.all(np.diff(self.coords) > 0):
            raise ValueError("shard coords must be strictly increasing")


def make_partition_masks(
    n: int, num_aggregators: int, round_index: int, seed: int, mode: str = BALANCED
) -> PartitionMaskSet:
    """Generate the round's coordinate-to-aggregator assignment.

    ``balanced`` shuffles the coordinates with a seeded permutation and cuts
    them into contiguous blocks whose sizes differ by at most one.
    ``iid-categorical`` assigns every coordinate independently and uniformly.
    The result is a pure function of ``(n, num_aggregators, round_index,
    seed, mode)``.
    """
    if n < 1:
        raise ConfigError("dimension must be positive")
    if num_aggregators < 1 or num_aggregators > n:
        raise ConfigError(
            f"aggregator count must satisfy 1 <= A <= n, got A={num_aggregators}, n={n}"
        )
    if mode not in MASK_MODES:
        raise ConfigError(f"unknown mask mode {mode!r}")
    rng = stream(seed, TAG_MASK, round_index)
    if mode == BALANCED:
        perm = rng.permutation(n)
        assignment = np.empty(n, dtype=np.int64)
        base, extra = divmod(n, num_aggregators)
        start = 0
        for a in range(num_aggregators):
            size = base + (1 if a < extra else 0)
            assignment[perm[start : start + size]] = a
            start += size
    else:
        assignment = rng.integers(0, num_aggregators, size=n, dtype=np.int64)
    assignment.setflags(write=False)
    return PartitionMaskSet(assignment, num_aggregators, round_index)


def extract_shard(v: np.ndarray, masks: PartitionMaskSet, aggregator: int) -> Shard:
    """Pick out of ``v`` the coordinates owned by ``aggregator``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != masks.assignment.shape:
        raise DimensionError(
            f"vector length {v.shape} does not match mask length {masks.assignment.shape}"
        )
    coords = masks.coords_of(aggregator)
    return Shard(aggregator, coords, v[coords].copy())


def reassemble(shards: Iterable[Shard], masks: PartitionMaskSet) -> np.ndarray:
    """Stitch one shard per aggregator back into a full vector.

    Exact inverse of ``extract_shard``: no arithmetic touches the values, so
    the round trip is bit-identical.
    """
    shard_list = sorted(shards, key=lambda s: s.aggregator)
    ids = [s.aggregator for s in shard_list]
    if ids != list(range(masks.num_aggregators)):
        raise ProtocolError(
            f"need exactly one shard per aggregator 0..{masks.num_aggregators - 1}, got {ids}"
        )
    out = np.full(masks.dimension, np.nan)
    covered = 0
    for shard in shard_list:
        expected = masks.coords_of(shard.aggregator)
        if shard.coords.shape != expected.shape or not np.array_equal(shard.coords, expected):
            raise ProtocolError(
                f"shard {shard.aggregator} coordinates do not match the round's masks"
            )
        out[shard.coords] = shard.values
        covered += shard.coords.size
    if covered != masks.dimension:
        raise ProtocolError("shards do not cover every coordinate")
    return out
