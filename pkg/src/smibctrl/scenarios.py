"""Event-scripted closed-loop experiments and their trace format.

A scenario couples a machine config, a controller config and a timed
event list.  The plant starts at the equilibrium of the initial reference
voltage; each 2 ms instant applies pending events, evaluates the selected
controller and integrates four RK4 micro-steps.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from . import machine
from .configio import (ConfigError, as_map, parse_bool, parse_float, parse_int,
                       read_pairs, resolve_path)
from .control import (ControllerState, DeadzoneConfig, ExactPlantModel,
                      NeuralPlantModel, PolePlacement, PssConfig, control_step,
                      synthesize_poly)
from .identify import MICRO_STEPS
from .networks import load_weights, N_LAGS_Y

TRACE_COLUMNS = ("t", "v_ref", "v_t", "v_f", "delta", "omega", "e_star", "adapted")

EVENT_ACTIONS = ("set_vref", "scale_H", "set_Pm")


class ScenarioError(ConfigError):
    """Malformed scenario description."""


@dataclass(frozen=True)
class Event:
    time: float
    action: str
    value: float


@dataclass
class ControllerConfig:
    """Parsed controller config: kind plus the neural-loop knobs."""

    kind: str = "neural"               # neural | st1a | none
    p: int = 7
    poles: tuple = (0.7,) * 7
    nu: float = 3.0
    d0: float = 0.01
    g_min: float | None = None         # None means 0.1 |g_hat| at equilibrium
    adapt: bool = True
    weights_path: str | None = None


@dataclass
class ScenarioConfig:
    machine_path: str
    controller_path: str
    t_end: float
    dt_control: float = 0.002
    v_ref: float = 1.1392
    seed: int = 0
    events: list = field(default_factory=list)

    def __post_init__(self):
        if not self.dt_control > 0:
            raise ScenarioError("dt_control must be positive")
        times = [e.time for e in self.events]
        if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
            raise ScenarioError("event times must be non-decreasing")
        if any(e.time < 0 or e.time > self.t_end for e in self.events):
            raise ScenarioError("event times must lie within [0, t_end]")
        for e in self.events:
            if e.action not in EVENT_ACTIONS:
                raise ScenarioError(f"unknown event action {e.action!r}")


@dataclass
class Trace:
    """Uniform-grid record of one closed-loop run, one row per control instant."""

    t: np.ndarray
    v_ref: np.ndarray
    v_t: np.ndarray
    v_f: np.ndarray
    delta: np.ndarray
    omega: np.ndarray
    e_star: np.ndarray
    adapted: np.ndarray

    def __len__(self):
        return len(self.t)

    def column(self, name):
        return getattr(self, name)

    def at_time(self, t_query: float) -> int:
        """Index of the sample closest to t_query."""
        return int(np.argmin(np.abs(self.t - t_query)))

    def to_csv(self, path) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for k in range(len(self)):
                row = [repr(float(self.column(c)[k])) for c in TRACE_COLUMNS[:-1]]
                row.append(str(int(self.adapted[k])))
                fh.write(",".join(row) + "\n")
        os.replace(tmp, path)

    @classmethod
    def from_csv(cls, path) -> "Trace":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != ",".join(TRACE_COLUMNS):
                raise ConfigError(f"{path}: unexpected trace header {header!r}")
            rows = [line.split(",") for line in fh if line.strip()]
        if not rows:
            raise ConfigError(f"{path}: empty trace")
        data = np.array([[float(v) for v in row] for row in rows])
        cols = {name: data[:, j] for j, name in enumerate(TRACE_COLUMNS)}
        return cls(**cols)


def load_controller_config(path) -> ControllerConfig:
    pairs = read_pairs(path)
    values = as_map(pairs, repeatable=("pole",))
    cfg = ControllerConfig()
    for key, raw in values.items():
        if key == "controller":
            if raw not in ("neural", "st1a", "none"):
                raise ConfigError(f"controller must be neural|st1a|none, got {raw!r}")
            cfg.kind = raw
        elif key == "p":
            cfg.p = parse_int(key, raw)
            if cfg.p < 0:
                raise ConfigError("p must be non-negative")
        elif key == "pole":
            cfg.poles = tuple(parse_float(key, v) for v in raw)
        elif key == "nu":
            cfg.nu = parse_float(key, raw)
        elif key == "d0":
            cfg.d0 = parse_float(key, raw)
        elif key == "g_min":
            cfg.g_min = None if raw == "auto" else parse_float(key, raw)
        elif key == "adapt":
            cfg.adapt = parse_bool(key, raw)
        elif key == "weights":
            cfg.weights_path = resolve_path(path, raw)
        else:
            raise ConfigError(f"unknown controller config key {key!r}")
    if "p" in values and "pole" not in values:
        cfg.poles = (0.7,) * cfg.p
    elif "pole" in values and "p" not in values:
        cfg.p = len(cfg.poles)
    elif len(cfg.poles) == 1 and cfg.p > 1:
        cfg.poles = cfg.poles * cfg.p
    if len(cfg.poles) != cfg.p:
        raise ConfigError(f"{len(cfg.poles)} poles given for order p={cfg.p}")
    if cfg.kind == "neural" and cfg.weights_path is None:
        raise ConfigError("neural controller config needs a weights file")
    return cfg


def parse_scenario(path) -> ScenarioConfig:
    pairs = read_pairs(path)
    values = as_map(pairs, repeatable=("event",))
    known = {"machine", "controller", "t_end", "dt_control", "v_ref", "seed", "event"}
    for key in values:
        if key not in known:
            raise ScenarioError(f"unknown scenario key {key!r}")
    for key in ("machine", "controller", "t_end"):
        if key not in values:
            raise ScenarioError(f"scenario is missing the {key!r} key")
    events = []
    for raw in values.get("event", []):
        parts = raw.split()
        if len(parts) != 3:
            raise ScenarioError(f"event must be '<time> <action> <value>', got {raw!r}")
        events.append(Event(parse_float("event time", parts[0]), parts[1],
                            parse_float("event value", parts[2])))
    return ScenarioConfig(
        machine_path=resolve_path(path, values["machine"]),
        controller_path=resolve_path(path, values["controller"]),
        t_end=parse_float("t_end", values["t_end"]),
        dt_control=parse_float("dt_control", values.get("dt_control", "0.002")),
        v_ref=parse_float("v_ref", values.get("v_ref", "1.1392")),
        seed=parse_int("seed", values.get("seed", "0")),
        events=events,
    )


def _apply_event(params, event: Event):
    if event.action == "scale_H":
        return machine.scale_inertia(params, event.value), None
    if event.action == "set_Pm":
        return machine.set_mechanical_power(params, event.value), None
    return params, event.value  # set_vref


def run_scenario(cfg: ScenarioConfig) -> Trace:
    """Simulate one scripted closed-loop experiment."""
    params = machine.load_machine_config(cfg.machine_path)
    ctrl_cfg = load_controller_config(cfg.controller_path)
    eq_state, u_eq = machine.find_equilibrium(params, cfg.v_ref)
    y_eq = machine.terminal_voltage(eq_state, params)

    controller = None
    poles = pss = dz = None
    if ctrl_cfg.kind == "neural":
        f_net, g_net = load_weights(ctrl_cfg.weights_path)
        model = NeuralPlantModel(f_net, g_net)
        z_eq = np.concatenate((np.full(N_LAGS_Y, y_eq), np.zeros(6)))
        g_min = ctrl_cfg.g_min
        if g_min is None:
            g_min = max(0.1 * abs(model.g(z_eq)), 1e-9)
        poles = synthesize_poly(ctrl_cfg.poles)
        pss = PssConfig(nu=ctrl_cfg.nu)
        dz = DeadzoneConfig(d0=ctrl_cfg.d0)
        controller = ControllerState.at_equilibrium(
            model, y_eq, 0.0, p=ctrl_cfg.p, g_min=g_min,
            adaptation_enabled=ctrl_cfg.adapt,
        )

    n_steps = int(round(cfg.t_end / cfg.dt_control))
    micro_dt = cfg.dt_control / MICRO_STEPS
    pending = sorted(cfg.events, key=lambda e: e.time)
    v_ref = cfg.v_ref
    state = eq_state.copy()
    cols = {name: np.zeros(n_steps) for name in TRACE_COLUMNS}

    for k in range(n_steps):
        t = k * cfg.dt_control
        while pending and pending[0].time <= t + 1e-12:
            params, new_ref = _apply_event(params, pending.pop(0))
            if new_ref is not None:
                v_ref = new_ref
        v_t = machine.terminal_voltage(state, params)
        e_star = 0.0
        adapted = 0.0
        if ctrl_cfg.kind == "neural":
            slip = state.omega / params.omega_b
            u_pert, controller = control_step(controller, v_ref, v_t, slip, poles, pss, dz)
            e_star = controller.last_e_star
            adapted = float(controller.last_adapted)
        elif ctrl_cfg.kind == "st1a":
            u_pert = machine.st1a_control(v_t, v_ref)
        else:
            u_pert = 0.0
        u = u_eq + u_pert
        cols["t"][k] = t
        cols["v_ref"][k] = v_ref
        cols["v_t"][k] = v_t
        cols["v_f"][k] = u
        cols["delta"][k] = state.delta
        cols["omega"][k] = state.omega
        cols["e_star"][k] = e_star
        cols["adapted"][k] = adapted
        try:
            for _ in range(MICRO_STEPS):
                state = machine.rk4_step(state, u, micro_dt, params)
        except machine.DivergenceError as exc:
            raise machine.DivergenceError(f"scenario diverged at t = {t:.4f} s") from exc
    return Trace(**cols)


def run_oracle_loop(placement: PolePlacement, f_fun, g_fun, r_series,
                    y0: float = 0.0, g_min: float = 1e-9) -> Trace:
    """Close the loop around a synthetic plant whose f and g are known exactly.

    The controller uses the same f and g, so the output must satisfy the
    target difference equation y(k+1) = k1 r(k) - sum C_i y(k-i).
    """
    r_series = np.asarray(r_series, dtype=float)
    n = len(r_series)
    model = ExactPlantModel(f_fun, g_fun)
    ctrl = ControllerState.at_equilibrium(
        model, y0, 0.0, p=placement.p, g_min=g_min, adaptation_enabled=False
    )
    pss = PssConfig(nu=0.0)
    dz = DeadzoneConfig(d0=0.0)
    y_hist = np.full(N_LAGS_Y, float(y0))
    u_hist = np.zeros(6)
    y = float(y0)
    cols = {name: np.zeros(n) for name in TRACE_COLUMNS}
    for k in range(n):
        u, ctrl = control_step(ctrl, float(r_series[k]), y, 0.0, placement, pss, dz)
        y_hist = np.concatenate(([y], y_hist[:-1]))
        z = np.concatenate((y_hist, u_hist))
        y_next = float(f_fun(z)) + float(g_fun(z)) * u
        u_hist = np.concatenate(([u], u_hist[:-1]))
        cols["t"][k] = k
        cols["v_ref"][k] = r_series[k]
        cols["v_t"][k] = y
        cols["v_f"][k] = u
        y = y_next
    return Trace(**cols)


class UndefinedMetricError(RuntimeError):
    """Fewer than two oscillation peaks after t_from."""


def damping_metric(trace: Trace, t_from: float) -> float:
    """Log-decrement of the power-angle oscillation after t_from.

    Estimated from successive peaks of |delta - delta_final|; one unit of
    the metric corresponds to an envelope decay of e^-1 per full period.
    """
    mask = trace.t >= t_from
    d = trace.delta[mask]
    if len(d) < 3:
        raise UndefinedMetricError("trace too short after t_from")
    x = np.abs(d - d[-1])
    amp = float(np.max(x))
    if amp <= 0.0:
        raise UndefinedMetricError("power angle is constant after t_from")
    peaks, _ = find_peaks(x, height=1e-3 * amp, prominence=1e-4 * amp)
    if len(peaks) < 2:
        raise UndefinedMetricError(f"found {len(peaks)} oscillation peaks, need at least 2")
    amps = x[peaks]
    ratios = np.log(amps[:-1] / amps[1:])
    return 2.0 * float(np.mean(ratios))


def compare_traces(a: Trace, b: Trace):
    """Align two traces on their common time grid; returns (t, diffs dict, stats)."""
    ta = np.round(a.t, 9)
    tb = np.round(b.t, 9)
    common, ia, ib = np.intersect1d(ta, tb, return_indices=True)
    if len(common) == 0:
        raise ConfigError("traces share no common time samples")
    diffs = {}
    stats = {}
    for name in TRACE_COLUMNS[1:]:
        d = a.column(name)[ia] - b.column(name)[ib]
        diffs[name] = d
        stats[name] = (float(np.max(np.abs(d))), float(np.sqrt(np.mean(d * d))))
    return common, diffs, stats
