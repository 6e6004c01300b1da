"""Acceptance criteria, one test per criterion.

Each test prints a single pass/fail line (visible with ``pytest -s`` or in
the captured output) and asserts the criterion at its stated tolerance.
Monte-Carlo checks run at their full stated sample counts; stated runtime
budgets are asserted.
"""

import math
import time

import numpy as np
import pytest

import erisfl as E
from erisfl.commodel import (
    NetworkProfile,
    SizeModel,
    dist_time_eris,
    dist_time_fedavg,
    dist_time_shatter,
    payload_bits,
    rate_from_megabytes_per_s,
    upload_bits,
)
from erisfl.privacy import collusion_bound, count_exposed, leakage_bound
from erisfl.suites import (
    compressor_suite,
    equivalence_suite,
    masks_suite,
    shift_suite,
    variance_suite,
)
from erisfl.tasks import Dataset


def _report(num, name, passed, detail=""):
    print(f"[criterion {num:02d}] {'PASS' if passed else 'FAIL'} {name} {detail}".rstrip())
    assert passed, f"criterion {num} failed: {name} {detail}"


def _quadratic_task(K, d, S, noise, w_scale, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((S, d))
    w = w_scale * rng.standard_normal(d)
    y = X @ w + noise * rng.standard_normal(S)
    data = Dataset(X, y, planted=w)
    return E.Task(E.ModelSpec("linear-regression", (d,)), tuple(E.split_iid(data, K, seed)))


def _sigfigs(x, digits=2):
    if x == 0:
        return 0.0
    return round(x, digits - 1 - math.floor(math.log10(abs(x))))


def test_criterion_01_equivalence_with_single_server():
    start = time.perf_counter()
    result = equivalence_suite()
    elapsed = time.perf_counter() - start
    diff = result.details["max_diff_full_gradient"]
    _report(
        1,
        "partitioned aggregation matches the single-server baseline",
        result.passed and elapsed < 1.0,
        f"(max diff {diff:g}, minibatch {result.details['max_diff_minibatch']:g}, {elapsed:.2f}s)",
    )


def test_criterion_02_compressor_contract():
    start = time.perf_counter()
    result = compressor_suite(trials=100_000)
    elapsed = time.perf_counter() - start
    worst_var = max(c["variance_rel_err"] for c in result.details["checks"])
    _report(
        2,
        "random sparsification is unbiased with variance ratio omega",
        result.passed and elapsed < 30.0,
        f"(worst variance error {worst_var:.3%}, {elapsed:.1f}s)",
    )


def test_criterion_03_mask_algebra():
    result = masks_suite(cases=1000, max_dim=10_000)
    _report(
        3,
        "mask disjointness, completeness, exact reassembly",
        result.passed and result.details["failure_count"] == 0,
        f"({result.details['cases']} cases, {result.details['failure_count']} failures)",
    )


def test_criterion_04_shift_consistency():
    result = shift_suite(rounds=100)
    _report(
        4,
        "aggregator shift equals mean client shift every round",
        result.passed,
        f"(max diff {result.details['max_diff']:.2e} <= 1e-10)",
    )


def test_criterion_05_stepsize_constants():
    # Independent evaluation of the shift stepsize as sqrt of a rational.
    expected = {
        0: math.sqrt(1.0 / 2.0),
        1: math.sqrt(3.0 / 16.0),
        9: math.sqrt(19.0 / 2000.0),
        19: math.sqrt(39.0 / 16000.0),
        99: math.sqrt(199.0 / 2_000_000.0),
    }
    gamma_ok = all(
        abs(E.shift_stepsize(float(w)) - v) <= 1e-12 for w, v in expected.items()
    )
    exact_half = E.shift_stepsize(0.0) == math.sqrt(0.5)

    L, omega, K, beta = 1.0, 1.0, 100, 0.1
    C1, C3, C4, theta = 0.1, 0.5, 0.2, 1.0
    lam = E.lr_bound(L, omega, K, beta, C1=C1, C3=C3, C4=C4, theta=theta)
    alpha = 3 * beta * C1 / (2 * (1 + omega) * L * L * theta)
    c = 1 + 2 * alpha * C4 + 4 * beta * (1 + omega)
    self_consistent = lam <= 1.0 / ((c + 2 * alpha * C3 / lam**2) * L) + 1e-12
    _report(
        5,
        "shift stepsize grid and learning-rate bound self-consistency",
        gamma_ok and exact_half and self_consistent,
        f"(gamma(0)={E.shift_stepsize(0.0):.12f}, lambda={lam:.6g})",
    )


def test_criterion_06_convergence_with_compression():
    start = time.perf_counter()
    task = _quadratic_task(K=10, d=5, S=100, noise=0.0, w_scale=0.015, seed=42)
    L = E.smoothness_estimate(task.model, E.concat_datasets(task.client_data))
    spec = E.CompressorSpec("random-sparsification", 0.1)
    omega = E.omega_of(spec)
    lam = E.lr_bound(L, omega, 10)
    means = []
    for seed in range(5):
        config = E.RoundConfig(
            num_clients=10, num_aggregators=4, rounds=2000,
            learning_rate=lam, shift_stepsize=E.shift_stepsize(omega),
            compressor=spec, seed=seed,
        )
        log = E.run_eris(config, task, np.zeros(5))
        means.append(np.mean([r.grad_norm_sq for r in log.records]))
    elapsed = time.perf_counter() - start
    avg = float(np.mean(means))
    _report(
        6,
        "omega=9 full-gradient runs drive the mean squared gradient below 1e-4",
        avg < 1e-4 and elapsed < 30.0,
        f"(5-seed average {avg:.2e}, {elapsed:.1f}s)",
    )


def test_criterion_07_potential_descent():
    task = _quadratic_task(K=10, d=20, S=200, noise=0.1, w_scale=1.0, seed=3)
    L = E.smoothness_estimate(task.model, E.concat_datasets(task.client_data))
    lam = E.lr_bound(L, 0.0, 10)
    config = E.RoundConfig(
        num_clients=10, num_aggregators=4, rounds=200,
        learning_rate=lam, shift_stepsize=E.shift_stepsize(0.0), seed=5,
    )
    log = E.run_eris(config, task, E.initial_params(task.model, 5))
    phis = [r.phi for r in log.records]
    worst = max(b - a for a, b in zip(phis, phis[1:]))
    _report(
        7,
        "descent potential is non-increasing in the deterministic regime",
        worst <= 1e-10,
        f"(worst increase {worst:.2e} over 200 rounds)",
    )


def test_criterion_08_sgd_variance_bound():
    result = variance_suite(draws=10_000)
    checks = result.details["checks"]
    detail = ", ".join(
        f"b={c['batch']}: {c['empirical_variance']:.3g}<={c['bound'] * 1.05:.3g}" for c in checks
    )
    _report(8, "mini-batch variance respects the finite-population bound", result.passed, f"({detail})")


def test_criterion_09_communication_tables():
    start = time.perf_counter()
    rate = rate_from_megabytes_per_s(20)
    failures = []

    def check(label, actual, reference):
        if _sigfigs(actual) != _sigfigs(reference):
            failures.append(f"{label}: {actual:g} vs {reference:g}")

    # Large-model column: K = 10, n = 1.3e9.
    K, n = 10, 1_300_000_000
    prof = NetworkProfile.homogeneous(rate, K)
    fed = SizeModel("fedavg", n)
    check("cnn fedavg size", payload_bits(fed) / 8, 5.2e9)
    check("cnn fedavg time", dist_time_fedavg(K, payload_bits(fed), prof), 5200)
    check("cnn shatter time", dist_time_shatter(K, payload_bits(fed), 3, prof), 780)
    for p, size, seconds in ((0.1, 4.68e9, 4680), (0.2, 4.16e9, 4160), (0.3, 3.64e9, 3640)):
        pp = SizeModel("priprune", n, p=p)
        check(f"cnn priprune {p} size", payload_bits(pp) / 8, size)
        check(f"cnn priprune {p} time", dist_time_fedavg(K, payload_bits(pp), prof), seconds)
    sot = SizeModel("soteriafl", n, omega=19.0)
    check("cnn soteriafl size", payload_bits(sot) / 8, 0.26e9)
    check("cnn soteriafl time", dist_time_fedavg(K, payload_bits(sot), prof), 260)
    er = SizeModel("eris", n, omega=99.0)
    check("cnn eris size", upload_bits(er, K) / 8, 46.8e6)
    check("cnn eris time", dist_time_eris(K, K, upload_bits(er, K), prof), 4.68)

    # Small-model column: K = 50, n = 1.65e6.
    K, n = 50, 1_650_000
    prof = NetworkProfile.homogeneous(rate, K)
    fed = SizeModel("fedavg", n)
    check("cifar fedavg size", payload_bits(fed) / 8, 6.6e6)
    check("cifar fedavg time", dist_time_fedavg(K, payload_bits(fed), prof), 33)
    check("cifar shatter time", dist_time_shatter(K, payload_bits(fed), 4, prof), 1.32)
    for p, size, seconds in ((0.01, 6.53e6, 32.65), (0.05, 6.27e6, 31.35), (0.1, 5.9e6, 29.5)):
        pp = SizeModel("priprune", n, p=p)
        check(f"cifar priprune {p} size", payload_bits(pp) / 8, size)
        check(f"cifar priprune {p} time", dist_time_fedavg(K, payload_bits(pp), prof), seconds)
    sot = SizeModel("soteriafl", n, omega=19.0)
    check("cifar soteriafl size", payload_bits(sot) / 8, 0.33e6)
    check("cifar soteriafl time", dist_time_fedavg(K, payload_bits(sot), prof), 1.65)
    er = SizeModel("eris", n, omega=1.0 / 0.006 - 1.0)
    check("cifar eris size", upload_bits(er, K) / 8, 38.81e3)
    check("cifar eris time", dist_time_eris(K, K, upload_bits(er, K), prof), 0.0039)

    # Spot rows from the extended per-dataset tables.
    prof25 = NetworkProfile.homogeneous(rate, 25)
    b67 = 32 * 67_000_000
    check("67M fedavg time", dist_time_fedavg(25, b67, prof25), 670)
    check("67M shatter time", dist_time_shatter(25, b67, 4, prof25), 53.6)
    er5 = SizeModel("eris", 67_000_000, omega=19.0)
    check("67M eris-5% size", upload_bits(er5, 25) / 8, 12.86e6)
    check("67M eris-5% time", dist_time_eris(25, 25, upload_bits(er5, 25), prof25), 1.29)
    prof50 = NetworkProfile.homogeneous(rate, 50)
    b62 = 32 * 62_000
    check("62K fedavg time", dist_time_fedavg(50, b62, prof50), 1.24)
    check("62K shatter time", dist_time_shatter(50, b62, 4, prof50), 0.05)
    er33 = SizeModel("eris", 62_000, omega=1.0 / 0.033 - 1.0)
    check("62K eris-3.3% size", upload_bits(er33, 50) / 8, 8.02e3)
    er_cnn5 = SizeModel("eris", 1_300_000_000, omega=19.0)
    prof10 = NetworkProfile.homogeneous(rate, 10)
    check("1.3B eris-5% size", upload_bits(er_cnn5, 10) / 8, 234e6)
    check("1.3B eris-5% time", dist_time_eris(10, 10, upload_bits(er_cnn5, 10), prof10), 23.4)

    elapsed = time.perf_counter() - start
    _report(
        9,
        "reference communication table reproduced to 2 significant figures",
        not failures and elapsed < 1.0,
        f"({'; '.join(failures) if failures else '26 cells'}, {elapsed:.2f}s)",
    )


def test_criterion_10_leakage_accounting():
    base = leakage_bound(100, 10, 0.1, 5, 0.7)
    ratios_ok = (
        leakage_bound(200, 10, 0.1, 5, 0.7) == pytest.approx(2 * base)
        and leakage_bound(100, 20, 0.1, 5, 0.7) == pytest.approx(2 * base)
        and leakage_bound(100, 10, 0.2, 5, 0.7) == pytest.approx(2 * base)
        and leakage_bound(100, 10, 0.1, 10, 0.7) == pytest.approx(base / 2)
        and collusion_bound(100, 10, 0.1, 5, 3, 0.7) == pytest.approx(3 * base)
    )
    full_coalition_exact = collusion_bound(64, 7, 0.3, 4, 4, 1.3) == 64 * 7 * 0.3 * 1.3

    n, p, A, rounds = 10_000, 0.1, 4, 1000
    rng = np.random.default_rng(77)
    counts = []
    for t in range(rounds):
        masks = E.make_partition_masks(n, A, t, 17)
        retained = rng.random(n) < p
        counts.append(count_exposed(masks, retained, t % A))
    sigma = math.sqrt(n / A * p * (1 - p))
    gap = abs(float(np.mean(counts)) - n * p / A)
    exposure_ok = gap <= 3 * sigma / math.sqrt(rounds)
    _report(
        10,
        "leakage bound linearity and empirical exposure concentration",
        ratios_ok and full_coalition_exact and exposure_ok,
        f"(exposure mean off by {gap:.2f}, 3-sigma {3 * sigma / math.sqrt(rounds):.2f})",
    )


def test_criterion_11_dropout_robustness():
    task = _quadratic_task(K=10, d=10, S=200, noise=0.3, w_scale=1.0, seed=7)
    global_data = E.concat_datasets(task.client_data)
    L = E.smoothness_estimate(task.model, global_data)
    lam = E.lr_bound(L, 0.0, 10)
    T = 240
    rates = (0.0, 0.3, 0.5, 0.7)

    def run(rate, seed, rounds):
        config = E.RoundConfig(
            num_clients=10, num_aggregators=4, rounds=rounds,
            learning_rate=lam, shift_stepsize=0.0, dropout_rate=rate, seed=seed,
        )
        return E.run_eris(config, task, np.zeros(10))

    rounds_to_threshold = {rate: [] for rate in rates}
    doubled_ok = True
    for seed in (0, 1, 2):
        base_log = run(0.0, seed, T)
        base_final = E.loss(task.model, base_log.final_params, global_data)
        threshold = base_final + 0.05 * (base_log.records[0].loss - base_final)
        for rate in rates:
            log = base_log if rate == 0.0 else run(rate, seed, T)
            reached = next((r.t for r in log.records if r.loss < threshold), T)
            rounds_to_threshold[rate].append(reached)
        double_log = run(0.5, seed, 2 * T)
        double_final = E.loss(task.model, double_log.final_params, global_data)
        if abs(double_final - base_final) > 0.1 * base_final:
            doubled_ok = False
    means = [float(np.mean(rounds_to_threshold[rate])) for rate in rates]
    monotone = all(a <= b for a, b in zip(means, means[1:]))
    _report(
        11,
        "dropout slows convergence monotonically and double budget recovers the loss",
        monotone and doubled_ok,
        f"(mean rounds to threshold {means})",
    )
