"""Command-line entry points for identification, training and simulation.

Exit codes: 0 on success, 2 for config/usage errors, 3 for numerical
failures (divergence, no equilibrium, failed training solve).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import identify, machine, networks, scenarios
from .configio import (ConfigError, as_map, parse_float, parse_int,
                       read_pairs, resolve_path)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

DEFAULT_MINPHASE_GRID = (1.0, 1.1392, 1.5, 2.0)


def _atomic_write(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_dataset_csv(path, u_series, y_series) -> None:
    lines = ["k,u,y"]
    lines.extend(
        f"{k},{repr(float(u))},{repr(float(y))}" for k, (u, y) in enumerate(zip(u_series, y_series))
    )
    _atomic_write(path, "\n".join(lines) + "\n")


def _read_dataset_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "k,u,y":
            raise ConfigError(f"{path}: expected dataset header 'k,u,y', got {header!r}")
        u, y = [], []
        for line in fh:
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ConfigError(f"{path}: malformed dataset row {line.strip()!r}")
            u.append(float(parts[1]))
            y.append(float(parts[2]))
    return np.array(u), np.array(y)


def cmd_identify(args) -> int:
    values = as_map(read_pairs(args.config))
    known = {"machine", "v_target", "n_samples", "dt", "u_min", "u_max", "hold", "seed"}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown identify config key {key!r}")
    if "machine" not in values:
        raise ConfigError("identify config needs a 'machine' key")
    params = machine.load_machine_config(resolve_path(args.config, values["machine"]))
    plan = identify.ExcitationPlan(
        n_samples=parse_int("n_samples", values.get("n_samples", "10000")),
        dt=parse_float("dt", values.get("dt", "0.002")),
        u_min=parse_float("u_min", values.get("u_min", "-0.1")),
        u_max=parse_float("u_max", values.get("u_max", "0.1")),
        hold=parse_int("hold", values.get("hold", "10")),
        seed=args.seed if args.seed is not None else parse_int("seed", values.get("seed", "0")),
    )
    v_target = parse_float("v_target", values.get("v_target", "1.1392"))
    u_series, y_series = identify.excite_and_record(params, plan, v_target)
    if args.out is None:
        raise ConfigError("identify needs --out for the dataset file")
    _write_dataset_csv(args.out, u_series, y_series)
    print(f"wrote {len(u_series)} samples to {args.out}")
    return EXIT_OK


def _load_datasets(config_path, values):
    paths = values.get("dataset")
    if not paths:
        raise ConfigError("config needs at least one 'dataset' key")
    series = []
    for rel in paths:
        u, y = _read_dataset_csv(resolve_path(config_path, rel))
        series.append((u, y))
    return series


def _split_datasets(series, train_fraction):
    trains, holds = [], []
    for u, y in series:
        data = identify.build_regression_set(u, y)
        tr, ho = identify.split(data, train_fraction)
        trains.append(tr)
        holds.append(ho)

    def merge(parts):
        return networks.Dataset(
            np.vstack([p.z for p in parts]),
            np.concatenate([p.u for p in parts]),
            np.concatenate([p.y_next for p in parts]),
        )

    return merge(trains), merge(holds)


def cmd_train(args) -> int:
    values = as_map(read_pairs(args.config), repeatable=("dataset",))
    known = {"dataset", "hidden", "max_iter", "cost_tol", "seed", "train_fraction"}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown train config key {key!r}")
    series = _load_datasets(args.config, values)
    train_fraction = parse_float("train_fraction", values.get("train_fraction", "0.5"))
    train, _ = _split_datasets(series, train_fraction)
    hidden = parse_int("hidden", values.get("hidden", "5"))
    max_iter = parse_int("max_iter", values.get("max_iter", "150"))
    cost_tol = parse_float("cost_tol", values.get("cost_tol", "0.0"))
    seed = args.seed if args.seed is not None else parse_int("seed", values.get("seed", "0"))
    rng = np.random.default_rng(seed)
    f0 = networks.Mlp.random(hidden, rng=rng)
    g0 = networks.Mlp.random(hidden, rng=rng)
    f_net, g_net, state = networks.lm_train(f0, g0, train, max_iter=max_iter, cost_tol=cost_tol)
    if args.out is None:
        raise ConfigError("train needs --out for the weight file")
    networks.save_weights(args.out, f_net, g_net)
    hist_path = os.path.splitext(args.out)[0] + "_cost.csv"
    lines = ["iteration,cost"]
    lines.extend(f"{i},{repr(c)}" for i, c in enumerate(state.cost_history))
    _atomic_write(hist_path, "\n".join(lines) + "\n")
    print(f"trained on {len(train)} records for {state.iteration} iterations, "
          f"final cost {state.cost_history[-1]:.6e}")
    print(f"wrote weights to {args.out} and cost history to {hist_path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    values = as_map(read_pairs(args.config), repeatable=("dataset",))
    known = {"dataset", "weights", "train_fraction"}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown validate config key {key!r}")
    if "weights" not in values:
        raise ConfigError("validate config needs a 'weights' key")
    series = _load_datasets(args.config, values)
    train_fraction = parse_float("train_fraction", values.get("train_fraction", "0.5"))
    _, holdout = _split_datasets(series, train_fraction)
    f_net, g_net = networks.load_weights(resolve_path(args.config, values["weights"]))
    report = identify.cross_validate(f_net, g_net, holdout)
    print(report)
    print(f"deadzone d0   = {identify.select_deadzone(report)}")
    if args.out:
        lines = ["k,error"]
        lines.extend(f"{k},{repr(float(e))}" for k, e in enumerate(report.errors))
        _atomic_write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_minphase(args) -> int:
    grid = list(DEFAULT_MINPHASE_GRID)
    if args.config:
        values = as_map(read_pairs(args.config), repeatable=("v_target",))
        known = {"machine", "v_target"}
        for key in values:
            if key not in known:
                raise ConfigError(f"unknown minphase config key {key!r}")
        if "machine" not in values:
            raise ConfigError("minphase config needs a 'machine' key")
        params = machine.load_machine_config(resolve_path(args.config, values["machine"]))
        if "v_target" in values:
            grid = [parse_float("v_target", v) for v in values["v_target"]]
    else:
        params = machine.MachineParams()
    rows = []
    print(f"{'v_target':>9} {'c.b':>12} {'max Re(zero)':>13}  zeros")
    for v_target in grid:
        eq_state, u_eq = machine.find_equilibrium(params, v_target)
        model = machine.linearize(params, eq_state, u_eq)
        worst = max(z.real for z in model.zeros)
        zs = " ".join(f"{z.real:.4g}{z.imag:+.4g}j" for z in model.zeros)
        print(f"{v_target:9.4f} {model.cb:12.5g} {worst:13.5g}  {zs}")
        for z in model.zeros:
            rows.append((v_target, model.cb, z.real, z.imag))
    if args.out:
        lines = ["v_target,cb,zero_re,zero_im"]
        lines.extend(
            f"{repr(float(v))},{repr(float(cb))},{repr(float(zr))},{repr(float(zi))}"
            for v, cb, zr, zi in rows
        )
        _atomic_write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = scenarios.parse_scenario(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    trace = scenarios.run_scenario(cfg)
    if args.out is None:
        raise ConfigError("simulate needs --out for the trace file")
    trace.to_csv(args.out)
    print(f"wrote {len(trace)} samples to {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    a = scenarios.Trace.from_csv(args.trace_a)
    b = scenarios.Trace.from_csv(args.trace_b)
    t, diffs, stats = scenarios.compare_traces(a, b)
    print(f"{'column':>8} {'max |diff|':>13} {'rms diff':>13}")
    for name, (mx, rms) in stats.items():
        print(f"{name:>8} {mx:13.6g} {rms:13.6g}")
    if args.out:
        names = list(diffs)
        lines = ["t," + ",".join(f"d_{n}" for n in names)]
        for k in range(len(t)):
            lines.append(
                repr(float(t[k])) + "," + ",".join(repr(float(diffs[n][k])) for n in names)
            )
        _atomic_write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smibctrl",
        description="Neural adaptive excitation control testbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, needs_config=True):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=needs_config, help="config file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="output file")
        sp.set_defaults(func=func)
        return sp

    add("identify", cmd_identify, "record an excitation dataset from the plant")
    add("train", cmd_train, "fit the two-network model to recorded datasets")
    add("validate", cmd_validate, "cross-validate a weight file on held-out data")
    add("minphase", cmd_minphase, "tabulate transmission zeros over operating points",
        needs_config=False)
    add("simulate", cmd_simulate, "run a scripted closed-loop scenario")
    comp = add("compare", cmd_compare, "diff two trace files on their common grid",
               needs_config=False)
    comp.add_argument("trace_a", help="first trace CSV")
    comp.add_argument("trace_b", help="second trace CSV")
    return parser


def cli_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (machine.EquilibriumError, machine.DivergenceError,
            machine.SingularInductanceError, networks.TrainingError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
