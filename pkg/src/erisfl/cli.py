"""Command-line front end.

Subcommands: ``run`` (train and write a reproducible run directory),
``verify`` (invariant suites), ``comm`` (distribution-time tables),
``leakage`` (trace collection and leakage bounds), ``dropout`` (aggregator
failure sweeps).  Exit codes: 0 success, 2 configuration error, 3 property
failure, 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
import yaml

from . import __version__
from .commodel import (
    ERIS,
    FEDAVG,
    METHODS,
    PRIPRUNE,
    SHATTER,
    SOTERIAFL,
    NetworkProfile,
    SizeModel,
    SweepRow,
    dist_time,
    rate_from_megabytes_per_s,
    sweep,
    sweep_to_csv_text,
    upload_bits,
)
from .compression import CompressorSpec, lr_bound, omega_of, shift_stepsize
from .config_schema import CONFIG_SCHEMA, merged_with_defaults
from .errors import ConfigError, DivergenceError
from .privacy import (
    collusion_curve,
    collusion_curve_csv_text,
    leakage_bound,
    nats_to_bits,
    weight_trace_collect,
)
from .protocol import RoundConfig, Task, run_eris, run_fedavg
from .suites import SUITES, run_suite
from .tasks import (
    EstimatorSpec,
    ModelSpec,
    concat_datasets,
    dirichlet_partition,
    initial_params,
    loss,
    smoothness_estimate,
    split_iid,
    synth_dataset,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROPERTY = 3
EXIT_DIVERGED = 4


# ---------------------------------------------------------------------------
# Config loading and resolution


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> dict:
    """Load a YAML config (or the config section of a manifest JSON), apply
    ``key=value`` overrides, merge defaults, and validate."""
    raw: dict[str, Any] = {}
    if path is not None:
        text = Path(path).read_text()
        if str(path).endswith(".json"):
            doc = json.loads(text)
            raw = doc.get("config", doc)
        else:
            raw = yaml.safe_load(text) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config root in {path} must be a mapping")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        _set_dotted(raw, key.strip(), yaml.safe_load(value))
    config = merged_with_defaults(raw)
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {exc.message}") from exc
    return config


def _set_dotted(target: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = target
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override through non-mapping field {key!r}")
    node[keys[-1]] = value


def build_task(config: dict, data_seed: int | None = None) -> Task:
    """Materialise the synthetic task described by ``config['task']``."""
    tc = config["task"]
    seed = config["seed"] if data_seed is None else data_seed
    K = config["clients"]
    if tc["kind"] == "regression":
        if tc["model"] != "linear-regression":
            raise ConfigError("regression tasks pair with the linear-regression model")
        model = ModelSpec("linear-regression", (tc["dim"],))
        data = synth_dataset("regression", tc["samples"], tc["dim"], noise=tc["noise"], seed=seed)
        parts = split_iid(data, K, seed=seed)
    else:
        data = synth_dataset(
            "classification", tc["samples"], tc["dim"], classes=tc["classes"],
            noise=tc["noise"], seed=seed,
        )
        if tc["model"] == "logistic-regression":
            if tc["classes"] != 2:
                raise ConfigError("logistic regression is binary; set task.classes = 2")
            model = ModelSpec("logistic-regression", (tc["dim"],))
        elif tc["model"] == "mlp":
            model = ModelSpec("mlp", (tc["dim"], tc["hidden"], tc["classes"]))
        else:
            raise ConfigError("classification tasks pair with logistic-regression or mlp")
        if tc["partition"] == "dirichlet":
            parts = dirichlet_partition(data, K, tc["dirichlet_alpha"], seed=seed)
        else:
            parts = split_iid(data, K, seed=seed)
    return Task(model, tuple(parts))


def resolve_round_config(config: dict, task: Task) -> tuple[RoundConfig, dict]:
    """Turn the config dict into a ``RoundConfig``, resolving ``auto``
    stepsizes from the analysis bounds.  Returns the RoundConfig and the
    fully resolved (numeric) config dict for the manifest."""
    method = config["method"]
    comp_cfg = config["compressor"]
    compressor = CompressorSpec(comp_cfg["kind"], comp_cfg["p"])
    if method == "eris-base":
        compressor = CompressorSpec("identity")
    omega = omega_of(compressor)
    gamma_cfg = config["shift_stepsize"]
    if method in ("eris-base", "fedavg"):
        gamma = 0.0
    elif gamma_cfg == "auto":
        gamma = shift_stepsize(omega)
    else:
        gamma = float(gamma_cfg)
    lr_cfg = config["learning_rate"]
    if lr_cfg == "auto":
        L = smoothness_estimate(task.model, concat_datasets(task.client_data))
        lam = lr_bound(L, omega, config["clients"], beta=config["beta"])
    else:
        lam = float(lr_cfg)
    estimator = EstimatorSpec(config["estimator"]["kind"], config["estimator"]["batch"])
    rc = RoundConfig(
        num_clients=config["clients"],
        num_aggregators=config["aggregators"],
        rounds=config["rounds"],
        learning_rate=lam,
        shift_stepsize=gamma,
        compressor=compressor,
        mask_mode=config["mask_mode"],
        estimator=estimator,
        dropout_rate=config["dropout_rate"],
        seed=config["seed"],
        weighting=config["weighting"],
        beta=config["beta"],
    )
    resolved = json.loads(json.dumps(config))
    resolved["learning_rate"] = lam
    resolved["shift_stepsize"] = gamma
    resolved["compressor"] = {"kind": compressor.kind, "p": compressor.p}
    return rc, resolved


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and (obj != obj or obj in (float("inf"), float("-inf"))):
        return repr(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonify(dataclasses.asdict(obj))
    return obj


def _make_run_dir(out_root: str, seed: int) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
    base = Path(out_root) / f"{stamp}-{seed}"
    run_dir = base
    suffix = 1
    while run_dir.exists():
        run_dir = Path(f"{base}-{suffix}")
        suffix += 1
    (run_dir / "reports").mkdir(parents=True)
    return run_dir


def _write_manifest(run_dir: Path, resolved: dict) -> None:
    manifest = {
        "artifact_version": __version__,
        "seed": resolved["seed"],
        "config": resolved,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_run(args) -> int:
    config = load_config(args.config, args.set)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.method is not None:
        config["method"] = args.method
    task = build_task(config)
    rc, resolved = resolve_round_config(config, task)
    x0 = initial_params(task.model, rc.seed)
    run_dir = _make_run_dir(args.out, rc.seed)
    _write_manifest(run_dir, resolved)
    try:
        if config["method"] == "fedavg":
            log = run_fedavg(rc, task, x0)
        else:
            log = run_eris(rc, task, x0)
    except DivergenceError as exc:
        if exc.partial_log is not None:
            exc.partial_log.to_csv(run_dir / "trainlog.csv")
        print(f"error: {exc}; partial log flushed to {run_dir}", file=sys.stderr)
        return EXIT_DIVERGED
    log.to_csv(run_dir / "trainlog.csv")
    print(run_dir)
    return EXIT_OK


def cmd_verify(args) -> int:
    names = sorted(SUITES) if args.suite == "all" else [args.suite]
    report = {}
    ok = True
    for name in names:
        kwargs = {}
        if name == "masks" and args.cases:
            kwargs["cases"] = args.cases
        if name == "compressor" and args.trials:
            kwargs["trials"] = args.trials
        if name == "variance" and args.trials:
            kwargs["draws"] = args.trials
        result = run_suite(name, **kwargs)
        report[name] = {"passed": result.passed, "details": _jsonify(result.details)}
        ok = ok and result.passed
        print(f"{name}: {'pass' if result.passed else 'FAIL'}")
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_PROPERTY


_PRESETS = {
    # Ten clients sharing a 1.3e9-parameter model at 20 MB/s links.
    "table3-cnn": {
        "K": 10,
        "n": 1_300_000_000,
        "rate_mb": 20.0,
        "rows": [
            (FEDAVG, {}),
            (SHATTER, {"r": 3}),
            (PRIPRUNE, {"p": 0.1}),
            (PRIPRUNE, {"p": 0.2}),
            (PRIPRUNE, {"p": 0.3}),
            (SOTERIAFL, {"omega": 19.0}),
            (ERIS, {"omega": 99.0}),
        ],
    },
    # Fifty clients sharing a 1.65e6-parameter model at 20 MB/s links.
    "table3-cifar": {
        "K": 50,
        "n": 1_650_000,
        "rate_mb": 20.0,
        "rows": [
            (FEDAVG, {}),
            (SHATTER, {"r": 4}),
            (PRIPRUNE, {"p": 0.01}),
            (PRIPRUNE, {"p": 0.05}),
            (PRIPRUNE, {"p": 0.1}),
            (SOTERIAFL, {"omega": 19.0}),
            (ERIS, {"omega": 1.0 / 0.006 - 1.0}),
        ],
    },
}


def _preset_rows(name: str) -> list[SweepRow]:
    preset = _PRESETS[name]
    K, n = preset["K"], preset["n"]
    prof = NetworkProfile.homogeneous(rate_from_megabytes_per_s(preset["rate_mb"]), K)
    rows = []
    for method, params in preset["rows"]:
        sm = SizeModel(method, n, **params)
        rows.append(
            SweepRow(
                method=method,
                K=K,
                A=K,
                n=n,
                payload_bytes=upload_bits(sm, K) / 8.0,
                time_seconds=dist_time(sm, K, K, prof),
            )
        )
    return rows


def _size_model(method: str, n: int, args) -> SizeModel:
    if method == PRIPRUNE:
        return SizeModel(method, n, p=args.priprune_p)
    if method in (SOTERIAFL, ERIS):
        omega = args.omega if args.omega is not None else 1.0 / args.ratio - 1.0
        return SizeModel(method, n, omega=omega)
    if method == SHATTER:
        return SizeModel(method, n, r=args.r)
    return SizeModel(method, n)


def cmd_comm(args) -> int:
    if args.preset:
        rows = _preset_rows(args.preset)
    else:
        methods = [m.strip() for m in args.methods.split(",")]
        for m in methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        size_models = [_size_model(m, args.params, args) for m in methods]
        rate = rate_from_megabytes_per_s(args.rate)
        if args.vary:
            grid = [int(v) for v in args.grid.split(",")]
            rows = sweep(
                args.vary, grid, size_models, rate,
                K=args.clients, n=args.params, A=args.aggregators,
            )
        else:
            K = args.clients
            A = args.aggregators if args.aggregators is not None else K
            prof = NetworkProfile.homogeneous(rate, K)
            rows = [
                SweepRow(
                    method=sm.method,
                    K=K,
                    A=A,
                    n=sm.n,
                    payload_bytes=upload_bits(sm, K) / 8.0,
                    time_seconds=dist_time(sm, K, A, prof),
                )
                for sm in size_models
            ]
    text = sweep_to_csv_text(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_leakage(args) -> int:
    config = load_config(args.config, args.set)
    if args.seed is not None:
        config["seed"] = args.seed
    coalition = [int(v) for v in args.coalition.split(",")] if args.coalition else []
    task = build_task(config)
    rc, resolved = resolve_round_config(config, task)
    if rc.rounds < 1:
        raise ConfigError("leakage accounting needs at least one round")
    log = run_eris(rc, task, initial_params(task.model, rc.seed))

    trace = weight_trace_collect(
        lambda data_seed: build_task(config, data_seed=data_seed),
        rc,
        R=args.runs,
        coord_sample_size=args.coords,
    )
    n, T, A = log.dimension, len(log.records), rc.num_aggregators
    p = 1.0 if rc.compressor.kind == "identity" else rc.compressor.p
    c_max = trace.c_max_nats
    curve_c_max = c_max if c_max is not None else 1.0
    points = collusion_curve(log, coalition or list(range(1, A + 1)), c_max=curve_c_max)

    # Exposure toward a single observer: mean per-(round, aggregator) count.
    exposed = np.array(
        [count for rec in log.records for count in rec.exposed_client0], dtype=np.float64
    )
    report = {
        "config": resolved,
        "model_dimension": n,
        "rounds": T,
        "retention_probability": p,
        "aggregators": A,
        "c_max_nats": c_max,
        "degenerate_conditional": trace.degenerate,
        "bound_nats": None if c_max is None else leakage_bound(n, T, p, A, c_max),
        "bound_bits": None if c_max is None else nats_to_bits(leakage_bound(n, T, p, A, c_max)),
        "exposure": {
            "per_round_mean": float(exposed.mean()),
            "per_round_expected": n * p / A,
        },
        "fraction_marginal_ge_cond": trace.fraction_marginal_ge_cond,
        "trace_warnings": trace.warnings,
        "fits": _jsonify(trace.fits),
        "collusion_curve": _jsonify(points),
        "collusion_c_max_nats": curve_c_max,
    }
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "leakage.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    (out_dir / "collusion.csv").write_text(collusion_curve_csv_text(points))
    print(out_dir / "leakage.json")
    return EXIT_OK


def cmd_dropout(args) -> int:
    config = load_config(args.config, args.set)
    if args.seed is not None:
        config["seed"] = args.seed
    rates = [float(v) for v in args.rates.split(",")]
    task = build_task(config)
    global_data = concat_datasets(task.client_data)
    lines = ["rate,final_loss,rounds_to_threshold"]
    threshold = None if args.threshold == "auto" else float(args.threshold)
    for rate in rates:
        cfg_rate = dict(config)
        cfg_rate["dropout_rate"] = rate
        rc, _ = resolve_round_config(cfg_rate, task)
        log = run_eris(rc, task, initial_params(task.model, rc.seed))
        final = loss(task.model, log.final_params, global_data)
        if threshold is None:
            # From the first (lowest-rate) run: most of the way from the
            # initial loss down to its final loss.
            threshold = final + 0.05 * (log.records[0].loss - final)
        reached = next((r.t for r in log.records if r.loss < threshold), -1)
        lines.append(f"{repr(rate)},{repr(final)},{reached}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="erisfl",
        description="Serverless federated-learning simulator and analysis tools",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="YAML config file or a manifest.json to replay")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE",
            help="override a config field (dotted keys, YAML values)",
        )

    p_run = sub.add_parser("run", help="train and write a run directory")
    add_config_flags(p_run)
    p_run.add_argument("--method", choices=["eris", "eris-base", "fedavg"])
    p_run.add_argument("--out", default="runs", help="parent directory for run outputs")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="run invariant suites")
    p_verify.add_argument(
        "--suite", default="all", choices=sorted(SUITES) + ["all"],
    )
    p_verify.add_argument("--cases", type=int, help="mask suite case count")
    p_verify.add_argument("--trials", type=int, help="Monte-Carlo trial count")
    p_verify.add_argument("--out", help="write the JSON report here")
    p_verify.set_defaults(func=cmd_verify)

    p_comm = sub.add_parser("comm", help="payloads and distribution-time bounds")
    p_comm.add_argument("--preset", choices=sorted(_PRESETS))
    p_comm.add_argument("--methods", default="fedavg,eris", help="comma-separated methods")
    p_comm.add_argument("--clients", type=int, default=10)
    p_comm.add_argument("--aggregators", type=int)
    p_comm.add_argument("--params", type=int, default=1_000_000, help="model size n")
    p_comm.add_argument("--rate", type=float, default=20.0, help="link rate in MB/s")
    p_comm.add_argument("--r", type=int, default=4, help="shatter gossip fan-in")
    p_comm.add_argument("--priprune-p", type=float, default=0.1)
    p_comm.add_argument("--omega", type=float, help="compressor variance for soteriafl/eris")
    p_comm.add_argument("--ratio", type=float, default=0.05, help="compression ratio 1/(omega+1)")
    p_comm.add_argument("--vary", choices=["K", "n"], help="sweep over a grid")
    p_comm.add_argument("--grid", default="", help="comma-separated grid values")
    p_comm.add_argument("--out", help="write CSV here instead of stdout")
    p_comm.set_defaults(func=cmd_comm)

    p_leak = sub.add_parser("leakage", help="leakage bounds and weight traces")
    add_config_flags(p_leak)
    p_leak.add_argument("--runs", type=int, default=30, help="trace resample count R")
    p_leak.add_argument("--coords", type=int, default=16, help="sampled coordinates")
    p_leak.add_argument("--coalition", default="", help="comma-separated coalition sizes")
    p_leak.add_argument("--out", default="reports", help="output directory")
    p_leak.set_defaults(func=cmd_leakage)

    p_drop = sub.add_parser("dropout", help="aggregator-dropout robustness sweep")
    add_config_flags(p_drop)
    p_drop.add_argument("--rates", default="0,0.3,0.5,0.7", help="comma-separated dropout rates")
    p_drop.add_argument("--threshold", default="auto", help="loss threshold or 'auto'")
    p_drop.add_argument("--out", help="write CSV here instead of stdout")
    p_drop.set_defaults(func=cmd_dropout)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, yaml.YAMLError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
