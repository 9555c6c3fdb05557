"""Seventh-order synchronous machine / infinite-bus plant.

Per-unit Park-frame model of a steam-turbine generator tied through a
transmission link to an infinite bus.  States are the power angle, its
derivative and the five winding flux linkages; the control input is the
field voltage and the regulated output is the terminal voltage.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import linalg

from .configio import ConfigError, as_map, parse_bool, parse_float, read_pairs

OMEGA_60HZ = 2.0 * math.pi * 60.0


class SingularInductanceError(ValueError):
    """Winding inductance matrix is numerically singular."""


class EquilibriumError(RuntimeError):
    """Equilibrium search did not converge."""


class DivergenceError(RuntimeError):
    """Integration produced a non-finite state."""


@dataclass(frozen=True)
class MachineParams:
    """Per-unit machine, network and operating constants.

    Defaults are the shipped reference configuration: a 60 Hz steam-turbine
    generator on a stiff bus, chosen so that operating points from 1.0 to
    2.1 pu terminal voltage exist on the stable branch, the open loop is
    lightly damped (rotor mode near 1.15 Hz), and the small-signal model is
    minimum phase over that range.
    """

    omega_b: float = OMEGA_60HZ      # base electrical speed, rad/s
    H: float = 9.5                   # inertia constant, s
    D: float = 0.02                  # damping, pu torque per rad/s
    r_s: float = 0.003               # stator resistance, pu
    r_f: float = 1.0e-3              # field resistance, pu
    r_kd: float = 0.02               # d-damper resistance, pu
    r_kq: float = 0.01               # q-damper resistance, pu
    L_d: float = 0.9                 # d-axis self inductance, pu
    L_q: float = 0.85                # q-axis self inductance, pu
    L_ad: float = 0.75               # d-axis mutual inductance, pu
    L_aq: float = 0.70               # q-axis mutual inductance, pu
    L_f: float = 0.93                # field self inductance, pu
    L_fkd: float = 0.75              # field / d-damper mutual, pu
    L_kd: float = 0.95               # d-damper self inductance, pu
    L_kq: float = 1.0                # q-damper self inductance, pu
    r11: float = 0.01                # transmission resistance component, pu
    x11: float = 0.15                # transmission reactance component, pu
    A: float = 1.0                   # bus interface constant
    B: float = 0.0                   # bus interface constant
    v_inf: float = 1.0               # infinite-bus voltage, pu
    P_m: float = 1.6512              # mechanical power input, pu
    speed_coupled_z: bool = False    # instantaneous speed in the speed-voltage terms

    def __post_init__(self):
        if not self.H > 0.0:
            raise ValueError(f"H must be positive, got {self.H}")
        if not self.omega_b > 0.0:
            raise ValueError(f"omega_b must be positive, got {self.omega_b}")
        _assembled(self)  # raises SingularInductanceError on a bad L


def inductance_matrix(params: MachineParams) -> np.ndarray:
    """Assemble the 5x5 winding inductance matrix L with L i = lambda."""
    p = params
    return np.array(
        [
            [-p.L_d, 0.0, p.L_ad, p.L_ad, 0.0],
            [0.0, -p.L_q, 0.0, 0.0, p.L_aq],
            [-p.L_ad, 0.0, p.L_f, p.L_fkd, 0.0],
            [-p.L_ad, 0.0, p.L_fkd, p.L_kd, 0.0],
            [0.0, -p.L_aq, 0.0, 0.0, p.L_kq],
        ]
    )


@lru_cache(maxsize=128)
def _assembled(params: MachineParams):
    """Cached per-params factorization of L plus the resistance sign pattern."""
    L = inductance_matrix(params)
    det = float(np.linalg.det(L))
    if not np.isfinite(det) or abs(det) <= 1e-12:
        raise SingularInductanceError(f"|det L| = {abs(det):.3e} <= 1e-12")
    lu = linalg.lu_factor(L)
    r_diag = np.array([params.r_s, params.r_s, -params.r_f, -params.r_kd, -params.r_kq])
    return L, lu, r_diag


@dataclass
class MachineState:
    """Plant state: power angle (rad), its derivative (rad/s) and the five
    flux linkages [d, q, field, kd, kq] (pu)."""

    delta: float
    omega: float
    lam: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.delta, self.omega], self.lam))

    @classmethod
    def from_vector(cls, x) -> "MachineState":
        x = np.asarray(x, dtype=float)
        return cls(float(x[0]), float(x[1]), x[2:7].copy())

    def copy(self) -> "MachineState":
        return MachineState(self.delta, self.omega, self.lam.copy())


@dataclass
class ElectricalInterface:
    """Algebraic quantities at one state: currents [Id, Iq, If, Ikd, Ikq],
    stator dq voltages, electrical power and terminal voltage (all pu)."""

    i: np.ndarray
    v_d: float
    v_q: float
    P_e: float
    v_t: float


def dq_currents(lam, params: MachineParams) -> np.ndarray:
    """Winding currents solving L i = lambda."""
    _, lu, _ = _assembled(params)
    return linalg.lu_solve(lu, np.asarray(lam, dtype=float))


def electrical_interface(state: MachineState, u: float, params: MachineParams) -> ElectricalInterface:
    """Terminal-side algebraic map; the field voltage u does not enter it.

    The transmission drop is the skew pairing (-x11 Iq in v_d, +x11 Id in
    v_q); a symmetric pairing would invert the sense of voltage regulation
    and destabilize any positive-gain exciter.
    """
    if not math.isfinite(state.delta):
        raise DivergenceError("power angle is not finite")
    i = dq_currents(state.lam, params)
    sin_d = math.sin(state.delta)
    cos_d = math.cos(state.delta)
    v_d = params.r11 * i[0] - params.x11 * i[1] + params.v_inf * (params.A * sin_d + params.B * cos_d)
    v_q = params.r11 * i[1] + params.x11 * i[0] - params.v_inf * (params.B * sin_d - params.A * cos_d)
    P_e = state.lam[0] * i[1] - state.lam[1] * i[0]
    v_t = math.hypot(v_d, v_q)
    return ElectricalInterface(i=i, v_d=float(v_d), v_q=float(v_q), P_e=float(P_e), v_t=float(v_t))


def terminal_voltage(state: MachineState, params: MachineParams) -> float:
    return electrical_interface(state, 0.0, params).v_t


def derivatives(state: MachineState, u: float, params: MachineParams) -> np.ndarray:
    """State rate [ddelta, domega, dlambda(5)] at the given field voltage."""
    _, _, r_diag = _assembled(params)
    ei = electrical_interface(state, u, params)
    lam = state.lam
    s = 1.0 + state.omega / params.omega_b if params.speed_coupled_z else 1.0
    dlam = r_diag * ei.i
    dlam[0] += s * lam[1] + ei.v_d
    dlam[1] += -s * lam[0] + ei.v_q
    dlam[2] += u
    dlam *= params.omega_b
    ddelta = state.omega
    domega = params.omega_b / (2.0 * params.H) * (params.P_m - ei.P_e - params.D * state.omega)
    return np.concatenate(([ddelta, domega], dlam))


def rk4_step(state: MachineState, u: float, dt: float, params: MachineParams) -> MachineState:
    """One classical Runge-Kutta step holding u constant."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    x0 = state.as_vector()
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = derivatives(state, u, params)
        k2 = derivatives(MachineState.from_vector(x0 + 0.5 * dt * k1), u, params)
        k3 = derivatives(MachineState.from_vector(x0 + 0.5 * dt * k2), u, params)
        k4 = derivatives(MachineState.from_vector(x0 + dt * k3), u, params)
        x1 = x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x1)):
        raise DivergenceError("rk4_step produced a non-finite state")
    return MachineState.from_vector(x1)


def _flux_for(params: MachineParams, delta: float, u: float) -> np.ndarray:
    """Steady flux linkages for fixed angle and field voltage.

    With delta and u frozen the flux dynamics are linear, so the steady
    point solves [(R + M) L^-1 + Z] lam = -(v_inf w(delta) + e3 u).
    """
    L, _, r_diag = _assembled(params)
    Linv = np.linalg.inv(L)
    RM = np.diag(r_diag)
    RM[0, 0:2] += [params.r11, -params.x11]
    RM[1, 0:2] += [params.x11, params.r11]
    K = RM @ Linv
    K[0, 1] += 1.0
    K[1, 0] -= 1.0
    sin_d, cos_d = math.sin(delta), math.cos(delta)
    w = np.array(
        [
            params.v_inf * (params.A * sin_d + params.B * cos_d),
            -params.v_inf * (params.B * sin_d - params.A * cos_d),
            u,
            0.0,
            0.0,
        ]
    )
    return np.linalg.solve(K, -w)


def _excitation_for(params: MachineParams, delta: float, v_target: float, branch: int = 1):
    """Field voltage putting the steady flux point at v_t = v_target.

    The steady fluxes are affine in u, so v_t(u)^2 is a convex quadratic.
    branch=1 selects the rightmost (overexcited) root, branch=0 the
    leftmost.  Returns None when v_target is unreachable at this angle.
    """
    lam0 = _flux_for(params, delta, 0.0)
    lam_u = _flux_for(params, delta, 1.0) - lam0

    def dq_voltages(lam):
        st = MachineState(delta, 0.0, lam)
        ei = electrical_interface(st, 0.0, params)
        return np.array([ei.v_d, ei.v_q])

    w0 = dq_voltages(lam0)
    wu = dq_voltages(lam0 + lam_u) - w0
    a = float(wu @ wu)
    b = 2.0 * float(w0 @ wu)
    c = float(w0 @ w0) - v_target**2
    disc = b * b - 4.0 * a * c
    if a <= 0.0 or disc < 0.0:
        return None
    sign = 1.0 if branch else -1.0
    return (-b + sign * math.sqrt(disc)) / (2.0 * a)


def _coarse_equilibrium(params: MachineParams, v_target: float):
    """Angle/excitation seed on a stable (rising power) branch.

    Scans the power angle on both excitation branches, and bisects the
    first rising crossing of the electrical power through P_m, preferring
    the overexcited branch.
    """

    def power_at(delta, branch):
        u = _excitation_for(params, delta, v_target, branch)
        if u is None:
            return None, None
        lam = _flux_for(params, delta, u)
        ei = electrical_interface(MachineState(delta, 0.0, lam), u, params)
        return ei.P_e, u

    grid = np.linspace(0.02, 2.60, 130)
    for branch in (1, 0):
        prev = None
        for delta in grid:
            pe, u = power_at(delta, branch)
            if pe is None:
                prev = None
                continue
            if prev is not None:
                d0, p0 = prev
                if (p0 - params.P_m) < 0.0 <= (pe - params.P_m):
                    lo, hi = d0, delta
                    for _ in range(80):
                        mid = 0.5 * (lo + hi)
                        pm, _ = power_at(mid, branch)
                        if pm is None or pm < params.P_m:
                            lo = mid
                        else:
                            hi = mid
                    delta_eq = 0.5 * (lo + hi)
                    return float(delta_eq), float(_excitation_for(params, delta_eq, v_target, branch))
            prev = (delta, pe)
    raise EquilibriumError(f"no stable-branch equilibrium found for v_t = {v_target}")


def find_equilibrium(params: MachineParams, v_target: float, initial_guess=None,
                     tol: float = 1e-10, max_iter: int = 100):
    """Newton-Raphson for the operating point at terminal voltage v_target.

    Solves the 8 equations {state rates = 0, v_t = v_target} for the 7
    states plus the field voltage.  Returns (MachineState, u_eq).
    """
    if initial_guess is None:
        delta0, u0 = _coarse_equilibrium(params, v_target)
        y = np.concatenate(([delta0, 0.0], _flux_for(params, delta0, u0), [u0]))
    else:
        state0, u0 = initial_guess
        y = np.concatenate((state0.as_vector(), [u0]))

    def full_residual(vec):
        st = MachineState.from_vector(vec[:7])
        d = derivatives(st, float(vec[7]), params)
        return np.concatenate((d, [terminal_voltage(st, params) - v_target]))

    r = full_residual(y)
    for _ in range(max_iter):
        if np.max(np.abs(r)) <= tol:
            break
        jac = np.empty((8, 8))
        for j in range(8):
            h = max(1e-7 * abs(y[j]), 1e-9)
            yp, ym = y.copy(), y.copy()
            yp[j] += h
            ym[j] -= h
            jac[:, j] = (full_residual(yp) - full_residual(ym)) / (2.0 * h)
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise EquilibriumError(f"singular Newton Jacobian: {exc}") from exc
        alpha, base = 1.0, np.linalg.norm(r)
        while alpha > 1e-8:
            yn = y + alpha * step
            rn = full_residual(yn)
            if np.all(np.isfinite(rn)) and np.linalg.norm(rn) < base:
                y, r = yn, rn
                break
            alpha *= 0.5
        else:
            raise EquilibriumError(f"line search stalled, residual {base:.3e}")
    else:
        raise EquilibriumError(
            f"no convergence in {max_iter} iterations, residual {np.max(np.abs(r)):.3e}"
        )
    y[1] = 0.0  # ddelta = omega = 0 holds exactly at any equilibrium
    state = MachineState.from_vector(y[:7])
    u_eq = float(y[7])
    res = np.max(np.abs(full_residual(y)))
    if res > tol:
        raise EquilibriumError(f"residual {res:.3e} above tolerance {tol}")
    return state, u_eq


@dataclass
class LinearModel:
    """Small-signal model at an equilibrium plus its transmission zeros."""

    a_mat: np.ndarray   # 7x7
    b_vec: np.ndarray   # 7x1
    c_vec: np.ndarray   # 1x7
    d_scal: float
    zeros: list

    @property
    def cb(self) -> float:
        """First Markov parameter c.b; nonzero for relative degree one."""
        return float((self.c_vec @ self.b_vec)[0, 0])


def linearize(params: MachineParams, eq_state: MachineState, eq_u: float) -> LinearModel:
    """Central finite-difference linearization and transmission zeros."""
    resid = np.max(np.abs(derivatives(eq_state, eq_u, params)))
    if resid > 1e-8:
        raise ValueError(f"point is not an equilibrium (residual {resid:.3e})")

    x0 = eq_state.as_vector()

    def f(x, u):
        return derivatives(MachineState.from_vector(x), u, params)

    def h(x):
        return terminal_voltage(MachineState.from_vector(x), params)

    a_mat = np.empty((7, 7))
    c_vec = np.empty((1, 7))
    for j in range(7):
        step = max(1e-6 * abs(x0[j]), 1e-8)
        xp, xm = x0.copy(), x0.copy()
        xp[j] += step
        xm[j] -= step
        a_mat[:, j] = (f(xp, eq_u) - f(xm, eq_u)) / (2.0 * step)
        c_vec[0, j] = (h(xp) - h(xm)) / (2.0 * step)
    step = max(1e-6 * abs(eq_u), 1e-8)
    b_vec = ((f(x0, eq_u + step) - f(x0, eq_u - step)) / (2.0 * step)).reshape(7, 1)
    d_scal = float((h(x0) - h(x0)) / 1.0)  # output map has no feedthrough

    pencil_a = np.block([[a_mat, b_vec], [c_vec, np.array([[d_scal]])]])
    pencil_b = np.zeros((8, 8))
    pencil_b[:7, :7] = np.eye(7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        eigvals = linalg.eig(pencil_a, pencil_b, right=False)
    zeros = sorted((complex(z) for z in eigvals if np.isfinite(z)), key=lambda z: z.real)
    if len(zeros) != 6:
        warnings.warn(
            f"transmission-zero pencil looks ill-conditioned: {len(zeros)} finite zeros",
            RuntimeWarning,
        )
    return LinearModel(a_mat=a_mat, b_vec=b_vec, c_vec=c_vec, d_scal=d_scal, zeros=zeros)


@dataclass(frozen=True)
class St1aConfig:
    """Static high-gain exciter baseline: u = gain_product * (v_ref - v_t).

    gain_product is the exciter gain K_e times the machine ratio r_f/x_ad;
    the components are stored for documentation.
    """

    gain_product: float = 200.0 * 3.9056e-4
    K_e: float = 200.0
    T_e: float = 0.0
    rf_over_xad: float = 3.9056e-4

    def __post_init__(self):
        if abs(self.gain_product - self.K_e * self.rf_over_xad) > 1e-6:
            raise ValueError("gain_product must equal K_e * (r_f/x_ad)")


def st1a_control(v_t: float, v_ref: float, cfg: St1aConfig = St1aConfig()) -> float:
    """Proportional exciter output (a perturbation on the equilibrium field voltage)."""
    return cfg.gain_product * (v_ref - v_t)


_FLOAT_FIELDS = {f.name for f in dataclasses.fields(MachineParams) if f.type == "float"}


def load_machine_config(path) -> MachineParams:
    """Read a machine config file; unknown keys are errors."""
    pairs = read_pairs(path)
    values = as_map(pairs)
    kwargs = {}
    for key, raw in values.items():
        if key in _FLOAT_FIELDS:
            kwargs[key] = parse_float(key, raw)
        elif key == "speed_coupled_z":
            kwargs[key] = parse_bool(key, raw)
        else:
            raise ConfigError(f"unknown machine config key {key!r}")
    try:
        return MachineParams(**kwargs)
    except (ValueError, SingularInductanceError) as exc:
        raise ConfigError(f"invalid machine config {path}: {exc}") from exc


def scale_inertia(params: MachineParams, factor: float) -> MachineParams:
    return replace(params, H=params.H * factor)


def set_mechanical_power(params: MachineParams, value: float) -> MachineParams:
    return replace(params, P_m=value)
