import math

import numpy as np
import pytest

from erisfl._rng import stream
from erisfl.compression import (
    CompressorSpec,
    compress,
    lr_bound,
    make_stepsizes,
    omega_of,
    potential,
    shift_stepsize,
    shifted_compress,
)
from erisfl.errors import ConfigError, DimensionError, InfeasibilityError

IDENTITY = CompressorSpec("identity")


def test_omega_identity_is_zero():
    assert omega_of(IDENTITY) == 0.0


def test_omega_formula():
    assert omega_of(CompressorSpec("random-sparsification", 0.5)) == pytest.approx(1.0)
    assert omega_of(CompressorSpec("random-sparsification", 0.05)) == pytest.approx(19.0)


def test_invalid_retention_probability():
    with pytest.raises(ConfigError):
        CompressorSpec("random-sparsification", 0.0)
    with pytest.raises(ConfigError):
        CompressorSpec("random-sparsification", 1.5)
    with pytest.raises(ConfigError):
        CompressorSpec("topk", 0.5)


def test_identity_compress_returns_input_with_full_mask():
    v = np.array([1.0, -2.0, 0.0])
    cu = compress(v, IDENTITY, stream(0, 0))
    assert np.array_equal(cu.values, v)
    assert cu.retained.all()


def test_p_equal_one_degenerates_to_identity():
    v = np.linspace(-1, 1, 17)
    cu = compress(v, CompressorSpec("random-sparsification", 1.0), stream(0, 0))
    assert np.array_equal(cu.values, v)
    assert cu.retained.all()


def test_retained_coordinates_are_scaled_dropped_are_zero():
    v = np.ones(50)
    spec = CompressorSpec("random-sparsification", 0.25)
    cu = compress(v, spec, stream(3, 1))
    assert np.array_equal(cu.values[cu.retained], np.full(cu.retained.sum(), 4.0))
    assert not cu.values[~cu.retained].any()


class _AllOnesRng:
    """Stub stream whose uniforms are all 1.0, so nothing is retained."""

    def random(self, size):
        return np.ones(size)


def test_forced_empty_retention_yields_zero_update():
    cu = compress(np.ones(6), CompressorSpec("random-sparsification", 0.5), _AllOnesRng())
    assert not cu.retained.any()
    assert not cu.values.any()


def test_shifted_compress_zero_residual():
    g = np.arange(5.0)
    cu = shifted_compress(g, g, CompressorSpec("random-sparsification", 0.5), stream(1, 2))
    assert not cu.values.any()


def test_shifted_compress_zero_shift_identity():
    g = np.arange(5.0)
    cu = shifted_compress(g, np.zeros(5), IDENTITY, stream(1, 2))
    assert np.array_equal(cu.values, g)


def test_shifted_compress_length_mismatch():
    with pytest.raises(DimensionError):
        shifted_compress(np.zeros(4), np.zeros(5), IDENTITY, stream(0, 0))


def test_shifted_compress_unbiased():
    # Per-coordinate fluctuation of the mean is sqrt(omega/N)*|r_i|, so each
    # coordinate gets a 5-sigma band and the signed aggregate gets the 1%.
    rng = stream(7, 3)
    g = rng.standard_normal(30)
    s = rng.standard_normal(30)
    spec = CompressorSpec("random-sparsification", 0.3)
    N = 20_000
    draw = stream(7, 4)
    acc = np.zeros(30)
    for _ in range(N):
        acc += shifted_compress(g, s, spec, draw).values
    mean = acc / N
    residual = g - s
    sigma = np.sqrt(omega_of(spec) / N) * np.abs(residual)
    assert np.all(np.abs(mean - residual) <= 5 * sigma)
    assert abs(np.sum(mean - residual)) <= 0.01 * np.abs(residual).sum()


def test_unbiasedness_per_coordinate_tolerance():
    # At p = 0.5 (omega = 1) the stated tolerance 5/sqrt(N)*|v_i| is a
    # 5-sigma band for every coordinate.
    v = stream(11, 0).standard_normal(100)
    spec = CompressorSpec("random-sparsification", 0.5)
    N = 20_000
    draw = stream(11, 1)
    acc = np.zeros(100)
    for _ in range(N):
        acc += compress(v, spec, draw).values
    assert np.all(np.abs(acc / N - v) <= 5.0 / math.sqrt(N) * np.abs(v))


def test_variance_identity_random_sparsification():
    # For this compressor E||C(v)-v||^2 = omega * ||v||^2 exactly.
    v = stream(13, 0).standard_normal(200)
    spec = CompressorSpec("random-sparsification", 0.5)
    N = 20_000
    draw = stream(13, 1)
    total = 0.0
    for _ in range(N):
        diff = compress(v, spec, draw).values - v
        total += float(diff @ diff)
    ratio = total / N / float(v @ v)
    assert ratio == pytest.approx(omega_of(spec), rel=0.02)


def test_shift_stepsize_values():
    assert shift_stepsize(0.0) == pytest.approx(math.sqrt(0.5), abs=1e-15)
    assert shift_stepsize(1.0) == pytest.approx(math.sqrt(3.0 / 16.0), abs=1e-15)
    assert shift_stepsize(19.0) == pytest.approx(math.sqrt(39.0 / 16000.0), abs=1e-15)


def test_shift_stepsize_strictly_decreasing():
    grid = [0.0, 0.5, 1.0, 2.0, 5.0, 9.0, 19.0, 99.0, 500.0]
    values = [shift_stepsize(w) for w in grid]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[0] <= 1.0 / math.sqrt(2.0) + 1e-15


def test_lr_bound_full_gradient_cases():
    # C1..C4 = 0, omega = 0, beta = 1, L = 1: min(sqrt(K)/sqrt(5), 1/5).
    assert lr_bound(1.0, 0.0, 1) == pytest.approx(0.2, abs=1e-15)
    assert lr_bound(1.0, 0.0, 100) == pytest.approx(0.2, abs=1e-15)


@pytest.mark.parametrize("K", [10, 100])
def test_lr_bound_self_consistent_with_C3(K):
    # K = 10 leaves the first branch binding; K = 100 pushes it above the
    # self-referential constraint, which bisection must then solve.
    L, omega, beta = 1.0, 1.0, 0.1
    C1, C3, C4, theta = 0.1, 0.5, 0.2, 1.0
    lam = lr_bound(L, omega, K, beta, C1=C1, C3=C3, C4=C4, theta=theta)
    alpha = 3 * beta * C1 / (2 * (1 + omega) * L * L * theta)
    c = 1 + 2 * alpha * C4 + 4 * beta * (1 + omega)
    assert lam <= 1.0 / ((c + 2 * alpha * C3 / lam**2) * L) + 1e-12
    term1 = math.sqrt(beta * K) / (math.sqrt(c) * (1 + omega) * L)
    assert lam <= term1 + 1e-15
    if K == 100:
        # The bisected solution saturates its own defining equality.
        assert lam * (c + 2 * alpha * C3 / lam**2) * L == pytest.approx(1.0, abs=1e-9)


def test_lr_bound_infeasible_constants():
    with pytest.raises(InfeasibilityError):
        lr_bound(1.0, 0.0, 1, C1=1.0, C3=1e9, theta=1.0)


def test_lr_bound_monotone_in_omega_and_L():
    omegas = [0.0, 1.0, 4.0, 9.0, 19.0]
    values = [lr_bound(1.0, w, 10) for w in omegas]
    assert all(a >= b for a, b in zip(values, values[1:]))
    ls = [0.5, 1.0, 2.0, 4.0]
    values = [lr_bound(L, 1.0, 10) for L in ls]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_lr_bound_validation():
    with pytest.raises(ConfigError):
        lr_bound(0.0, 0.0, 1)
    with pytest.raises(ConfigError):
        lr_bound(1.0, 0.0, 0)
    with pytest.raises(ConfigError):
        lr_bound(1.0, 0.0, 1, C1=1.0, theta=0.0)


def test_potential_arithmetic():
    assert potential(0.0, 0.0, 0.0, alpha=0.0, beta=1.0, L=1.0) == 0.0
    assert potential(1.0, 2.0, 0.0, alpha=0.0, beta=1.0, L=2.0) == pytest.approx(2.0)
    assert potential(1.0, 0.0, 3.0, alpha=2.0, beta=1.0, L=2.0) == pytest.approx(13.0)


def test_stepsize_bundle_consistency():
    bundle = make_stepsizes(L=2.0, omega=1.0, K=10, beta=1.0, C1=1.0, theta=0.5)
    assert bundle.gamma == pytest.approx(shift_stepsize(1.0))
    assert bundle.alpha == pytest.approx(3.0 / (2 * 2 * 4 * 0.5))
    assert bundle.lambda_max == pytest.approx(
        lr_bound(2.0, 1.0, 10, 1.0, C1=1.0, theta=0.5)
    )
