"""Unbiased compression operators and the stepsize constants they induce.

The only non-identity compressor is random sparsification: each coordinate is
kept independently with probability ``p`` and scaled by ``1/p``, which is
unbiased and has relative variance ``omega = (1 - p) / p``.  The retention
mask is materialised because downstream leakage accounting counts exactly
which coordinates a round exposes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, InfeasibilityError
from .vectorcore import as_param_vector

IDENTITY = "identity"
RANDOM_SPARSIFICATION = "random-sparsification"
COMPRESSOR_KINDS = (IDENTITY, RANDOM_SPARSIFICATION)

_BISECTION_TOL = 1e-12


@dataclass(frozen=True)
class CompressorSpec:
    """Which compressor to apply; ``p`` is ignored for the identity."""

    kind: str = IDENTITY
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in COMPRESSOR_KINDS:
            raise ConfigError(f"unknown compressor kind {self.kind!r}")
        if self.kind == RANDOM_SPARSIFICATION and not 0.0 < self.p <= 1.0:
            raise ConfigError(f"retention probability must be in (0, 1], got {self.p}")


@dataclass(frozen=True)
class CompressedUpdate:
    """Compressor output: scaled retained values plus the retention mask."""

    values: np.ndarray
    retained: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.retained.shape:
            raise DimensionError("values and retention mask must align")


def omega_of(spec: CompressorSpec) -> float:
    """Relative variance bound of the compressor (0 for the identity)."""
    if spec.kind == IDENTITY:
        return 0.0
    return (1.0 - spec.p) / spec.p


def compress(v: np.ndarray, spec: CompressorSpec, rng: np.random.Generator) -> CompressedUpdate:
    """Apply the compressor to ``v`` using draws from ``rng``.

    Random sparsification keeps coordinate ``i`` iff the i-th uniform draw is
    below ``p``, then scales survivors by ``1/p``; the identity returns ``v``
    with an all-true mask.
    """
    v = as_param_vector(v)
    if spec.kind == IDENTITY:
        return CompressedUpdate(v.copy(), np.ones(v.size, dtype=bool))
    retained = rng.random(v.size) < spec.p
    values = np.where(retained, v / spec.p, 0.0)
    return CompressedUpdate(values, retained)


def shifted_compress(
    g: np.ndarray, s: np.ndarray, spec: CompressorSpec, rng: np.random.Generator
) -> CompressedUpdate:
    """Compress the residual ``g - s`` against the reference vector ``s``."""
    g = as_param_vector(g)
    s = as_param_vector(s)
    if g.shape != s.shape:
        raise DimensionError(f"gradient length {g.size} != shift length {s.size}")
    return compress(g - s, spec, rng)


def shift_stepsize(omega: float) -> float:
    """Reference-vector stepsize ``sqrt((1 + 2*omega) / (2*(1 + omega)^3))``.

    Equals ``1/sqrt(2)`` at ``omega = 0`` and decreases strictly in
    ``omega``.
    """
    if omega < 0:
        raise ConfigError("omega must be non-negative")
    return math.sqrt((1.0 + 2.0 * omega) / (2.0 * (1.0 + omega) ** 3))


def lr_bound(
    L: float,
    omega: float,
    K: int,
    beta: float = 1.0,
    C1: float = 0.0,
    C2: float = 0.0,
    C3: float = 0.0,
    C4: float = 0.0,
    theta: float = 1.0,
) -> float:
    """Largest admissible learning rate for the given analysis constants.

    Returns the minimum of

    * ``sqrt(beta*K) / (sqrt(1 + 2*alpha*C4 + 4*beta*(1+omega)) * (1+omega) * L)``
    * the largest ``lam`` with
      ``lam <= 1 / ((1 + 2*alpha*C4 + 4*beta*(1+omega) + 2*alpha*C3/lam^2) * L)``

    where ``alpha = 3*beta*C1 / (2*(1+omega)*L^2*theta)``.  With ``C3 = 0``
    the second constraint is closed-form; with ``C3 > 0`` it references
    ``lam`` on both sides and is resolved by bisection on the increasing
    branch to within 1e-12.  ``C2`` does not constrain the stepsize (it only
    enters the utility residual) but is accepted for a uniform signature.
    """
    del C2
    if L <= 0:
        raise ConfigError("L must be positive")
    if K < 1:
        raise ConfigError("K must be at least 1")
    if beta <= 0:
        raise ConfigError("beta must be positive")
    if omega < 0:
        raise ConfigError("omega must be non-negative")
    if C1 > 0 and not 0.0 < theta <= 1.0:
        raise ConfigError("theta must be in (0, 1] when C1 > 0")
    alpha = 0.0 if C1 == 0 else 3.0 * beta * C1 / (2.0 * (1.0 + omega) * L * L * theta)
    c = 1.0 + 2.0 * alpha * C4 + 4.0 * beta * (1.0 + omega)
    term1 = math.sqrt(beta * K) / (math.sqrt(c) * (1.0 + omega) * L)
    if alpha * C3 == 0.0:
        return min(term1, 1.0 / (c * L))

    d = 2.0 * alpha * C3

    def violation(lam: float) -> float:
        # Positive when lam exceeds 1 / ((c + d/lam^2) * L).
        return lam * (c + d / (lam * lam)) * L - 1.0

    # violation() is convex with minimum at sqrt(d/c); the largest feasible
    # lam lies on the increasing branch.
    lam_knee = math.sqrt(d / c)
    if violation(lam_knee) > 0:
        raise InfeasibilityError(
            "no learning rate satisfies the stepsize constraint for these constants"
        )
    if violation(term1) <= 0:
        return term1
    lo, hi = lam_knee, term1
    while hi - lo > _BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if violation(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo


def potential(
    f_value: float,
    S_value: float,
    Delta_value: float,
    alpha: float,
    beta: float,
    L: float,
) -> float:
    """Descent potential ``f + alpha*L*Delta + (beta/L)*S``.

    The (unknown) optimal value is a constant offset and is dropped;
    monotonicity diagnostics are unaffected.
    """
    if L <= 0:
        raise ConfigError("L must be positive")
    return f_value + alpha * L * Delta_value + (beta / L) * S_value


@dataclass(frozen=True)
class StepsizeBundle:
    """All stepsize-analysis constants for one configuration."""

    omega: float
    gamma: float
    lambda_max: float
    beta: float
    alpha: float
    theta: float
    C1: float
    C2: float
    C3: float
    C4: float
    L: float


def make_stepsizes(
    L: float,
    omega: float,
    K: int,
    beta: float = 1.0,
    C1: float = 0.0,
    C2: float = 0.0,
    C3: float = 0.0,
    C4: float = 0.0,
    theta: float = 1.0,
) -> StepsizeBundle:
    """Bundle ``shift_stepsize`` and ``lr_bound`` for one configuration."""
    alpha = 0.0 if C1 == 0 else 3.0 * beta * C1 / (2.0 * (1.0 + omega) * L * L * theta)
    return StepsizeBundle(
        omega=omega,
        gamma=shift_stepsize(omega),
        lambda_max=lr_bound(L, omega, K, beta, C1, C2, C3, C4, theta),
        beta=beta,
        alpha=alpha,
        theta=theta,
        C1=C1,
        C2=C2,
        C3=C3,
        C4=C4,
        L=L,
    )
