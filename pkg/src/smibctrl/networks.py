"""Two-network affine one-step-ahead plant model and its batch trainer.

The predictor is y_hat(k+1) = f(z) + g(z) u(k) where f and g are
single-hidden-layer tanh networks over the regressor
z = [y(k)..y(k-6), u(k-1)..u(k-6)].  Both networks are trained jointly by
damped Gauss-Newton (Levenberg-Marquardt) on the mean-square one-step
prediction error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_LAGS_Y = 7
N_LAGS_U = 6
REGRESSOR_LEN = N_LAGS_Y + N_LAGS_U


class TrainingError(RuntimeError):
    """Levenberg-Marquardt inner solve failed."""


@dataclass
class Mlp:
    """One-hidden-layer tanh network with a linear output neuron."""

    hidden_w: np.ndarray   # (p, n_in)
    hidden_b: np.ndarray   # (p,)
    out_w: np.ndarray      # (p,)
    out_b: float

    def __post_init__(self):
        self.hidden_w = np.asarray(self.hidden_w, dtype=float)
        self.hidden_b = np.asarray(self.hidden_b, dtype=float)
        self.out_w = np.asarray(self.out_w, dtype=float)
        self.out_b = float(self.out_b)
        p, n_in = self.hidden_w.shape
        if self.hidden_b.shape != (p,) or self.out_w.shape != (p,):
            raise ValueError("inconsistent network dimensions")

    @property
    def n_hidden(self) -> int:
        return self.hidden_w.shape[0]

    @property
    def n_in(self) -> int:
        return self.hidden_w.shape[1]

    @property
    def n_params(self) -> int:
        p, n = self.hidden_w.shape
        return p * n + 2 * p + 1

    def copy(self) -> "Mlp":
        return Mlp(self.hidden_w.copy(), self.hidden_b.copy(), self.out_w.copy(), self.out_b)

    @classmethod
    def random(cls, n_hidden: int, n_in: int = REGRESSOR_LEN, rng=None) -> "Mlp":
        """Weights and biases uniform in [-0.5, 0.5]."""
        rng = np.random.default_rng(rng)
        return cls(
            hidden_w=rng.uniform(-0.5, 0.5, size=(n_hidden, n_in)),
            hidden_b=rng.uniform(-0.5, 0.5, size=n_hidden),
            out_w=rng.uniform(-0.5, 0.5, size=n_hidden),
            out_b=rng.uniform(-0.5, 0.5),
        )


def mlp_forward(net: Mlp, z) -> float:
    z = np.asarray(z, dtype=float)
    if z.shape != (net.n_in,):
        raise ValueError(f"regressor length {z.shape} does not match network input {net.n_in}")
    return float(net.out_w @ np.tanh(net.hidden_w @ z + net.hidden_b) + net.out_b)


def narx_predict(f_net: Mlp, g_net: Mlp, z, u: float) -> float:
    return mlp_forward(f_net, z) + mlp_forward(g_net, z) * u


def make_regressor(y_hist, u_hist) -> np.ndarray:
    """Regressor from newest-first output and input histories."""
    y_hist = np.asarray(y_hist, dtype=float)
    u_hist = np.asarray(u_hist, dtype=float)
    if len(y_hist) < N_LAGS_Y or len(u_hist) < N_LAGS_U:
        raise ValueError("insufficient history for the regressor")
    return np.concatenate((y_hist[:N_LAGS_Y], u_hist[:N_LAGS_U]))


# --- flat parameter vector ------------------------------------------------
#
# Layout: [f.hidden_w (row-major), f.hidden_b, f.out_w, f.out_b,
#          g.hidden_w (row-major), g.hidden_b, g.out_w, g.out_b]

def theta_flatten(f_net: Mlp, g_net: Mlp) -> np.ndarray:
    parts = []
    for net in (f_net, g_net):
        parts.extend((net.hidden_w.ravel(), net.hidden_b, net.out_w, [net.out_b]))
    return np.concatenate(parts)


def theta_unflatten(theta, p_f: int, p_g: int, n_in: int = REGRESSOR_LEN):
    theta = np.asarray(theta, dtype=float)
    expected = (p_f + p_g) * (n_in + 2) + 2
    if theta.shape != (expected,):
        raise ValueError(f"theta length {theta.shape} does not match networks ({expected})")
    nets = []
    k = 0
    for p in (p_f, p_g):
        w = theta[k:k + p * n_in].reshape(p, n_in)
        k += p * n_in
        b = theta[k:k + p]
        k += p
        ow = theta[k:k + p]
        k += p
        ob = theta[k]
        k += 1
        nets.append(Mlp(w.copy(), b.copy(), ow.copy(), float(ob)))
    return nets[0], nets[1]


def _net_gradient(net: Mlp, z: np.ndarray) -> np.ndarray:
    """d(output)/d(params) in flat layout for one network."""
    t = np.tanh(net.hidden_w @ z + net.hidden_b)
    s = net.out_w * (1.0 - t * t)
    return np.concatenate((np.outer(s, z).ravel(), s, t, [1.0]))


def weight_jacobian(f_net: Mlp, g_net: Mlp, z, u: float) -> np.ndarray:
    """Gradient of the one-step prediction w.r.t. the joint parameter vector."""
    z = np.asarray(z, dtype=float)
    if z.shape != (f_net.n_in,) or z.shape != (g_net.n_in,):
        raise ValueError("regressor length does not match the networks")
    return np.concatenate((_net_gradient(f_net, z), u * _net_gradient(g_net, z)))


# --- dataset ----------------------------------------------------------------

@dataclass
class Dataset:
    """Training records: regressors (N, 13), inputs (N,) and targets (N,)."""

    z: np.ndarray
    u: np.ndarray
    y_next: np.ndarray

    def __post_init__(self):
        self.z = np.atleast_2d(np.asarray(self.z, dtype=float))
        self.u = np.asarray(self.u, dtype=float)
        self.y_next = np.asarray(self.y_next, dtype=float)
        n = self.z.shape[0]
        if self.u.shape != (n,) or self.y_next.shape != (n,):
            raise ValueError("dataset arrays have inconsistent lengths")
        if not (np.all(np.isfinite(self.z)) and np.all(np.isfinite(self.u))
                and np.all(np.isfinite(self.y_next))):
            raise ValueError("dataset contains non-finite values")

    def __len__(self) -> int:
        return self.z.shape[0]

    def record(self, k: int):
        return self.z[k], float(self.u[k]), float(self.y_next[k])


def _forward_batch(net: Mlp, Z: np.ndarray) -> np.ndarray:
    return np.tanh(Z @ net.hidden_w.T + net.hidden_b) @ net.out_w + net.out_b


def predict_batch(f_net: Mlp, g_net: Mlp, Z: np.ndarray, U: np.ndarray) -> np.ndarray:
    return _forward_batch(f_net, Z) + _forward_batch(g_net, Z) * U


def mse_cost(f_net: Mlp, g_net: Mlp, data: Dataset) -> float:
    """Half mean-square one-step prediction error."""
    if len(data) == 0:
        raise ValueError("dataset is empty")
    e = data.y_next - predict_batch(f_net, g_net, data.z, data.u)
    return float(0.5 * np.mean(e * e))


def _jacobian_batch(f_net: Mlp, g_net: Mlp, Z: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Rows of d(y_hat)/d(theta) for the whole batch."""

    def block(net, scale):
        T = np.tanh(Z @ net.hidden_w.T + net.hidden_b)      # (N, p)
        S = (1.0 - T * T) * net.out_w                        # (N, p)
        if scale is not None:
            T = T * scale[:, None]
            S = S * scale[:, None]
        JW = (S[:, :, None] * Z[:, None, :]).reshape(Z.shape[0], -1)
        ones = np.ones((Z.shape[0], 1)) if scale is None else scale[:, None]
        return np.hstack((JW, S, T, ones))

    return np.hstack((block(f_net, None), block(g_net, U)))


@dataclass
class LmState:
    """Optimizer bookkeeping for one training run."""

    mu: float
    cost_history: list = field(default_factory=list)
    iteration: int = 0
    s_k: np.ndarray | None = None
    rho_k: float = 1.0


def lm_train(f_net: Mlp, g_net: Mlp, data: Dataset, max_iter: int = 150,
             cost_tol: float = 0.0, mu0: float = 1e-2):
    """Joint batch training of both networks.

    Iterates theta <- theta + s with (J'J + mu I) s = -J'e over the whole
    batch, where e is the prediction error y_hat - y.  mu is divided by 10
    on an accepted step and multiplied by 10 while a trial step increases
    the cost.  Returns (f_net, g_net, LmState); the accepted-step cost
    sequence is non-increasing.
    """
    if len(data) == 0:
        raise ValueError("dataset is empty")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    f_net, g_net = f_net.copy(), g_net.copy()
    n = len(data)
    state = LmState(mu=mu0)
    cost = mse_cost(f_net, g_net, data)
    state.cost_history.append(cost)
    p_f, p_g = f_net.n_hidden, g_net.n_hidden
    theta = theta_flatten(f_net, g_net)
    identity = np.eye(theta.size)

    for it in range(max_iter):
        state.iteration = it + 1
        if cost <= cost_tol:
            break
        e = predict_batch(f_net, g_net, data.z, data.u) - data.y_next
        jac = _jacobian_batch(f_net, g_net, data.z, data.u)
        jtj = jac.T @ jac
        jte = jac.T @ e
        accepted = False
        for _ in range(60):
            try:
                step = np.linalg.solve(jtj + state.mu * identity, -jte)
            except np.linalg.LinAlgError as exc:
                cond = np.linalg.cond(jtj + state.mu * identity)
                raise TrainingError(
                    f"normal-equation solve failed at mu={state.mu:.3e}, cond~{cond:.3e}"
                ) from exc
            trial = theta + step
            f_try, g_try = theta_unflatten(trial, p_f, p_g, f_net.n_in)
            trial_cost = mse_cost(f_try, g_try, data)
            if np.isfinite(trial_cost) and trial_cost < cost:
                theta, cost = trial, trial_cost
                f_net, g_net = f_try, g_try
                state.mu = max(state.mu / 10.0, 1e-15)
                state.s_k = step
                accepted = True
                break
            state.mu *= 10.0
            if state.mu > 1e15:
                break
        state.cost_history.append(cost)
        if not accepted:
            break  # damping saturated: we are at a (numerical) minimum
    return f_net, g_net, state


# --- weight file ------------------------------------------------------------

WEIGHT_FORMAT = "narx-v1"


def save_weights(path, f_net: Mlp, g_net: Mlp) -> None:
    """Plain-text weight file: header then one value per line in flat order."""
    if f_net.n_hidden != g_net.n_hidden or f_net.n_in != g_net.n_in:
        raise ValueError("weight file format requires equally sized networks")
    theta = theta_flatten(f_net, g_net)
    lines = [f"{WEIGHT_FORMAT} p={f_net.n_hidden} in={f_net.n_in}"]
    lines.extend(repr(float(v)) for v in theta)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_weights(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != WEIGHT_FORMAT:
            raise ValueError(f"{path}: not a {WEIGHT_FORMAT} weight file")
        try:
            p = int(header[1].removeprefix("p="))
            n_in = int(header[2].removeprefix("in="))
        except ValueError as exc:
            raise ValueError(f"{path}: malformed weight file header") from exc
        values = [float(line) for line in fh if line.strip()]
    expected = 2 * (p * n_in + 2 * p + 1)
    if len(values) != expected:
        raise ValueError(f"{path}: expected {expected} values, found {len(values)}")
    return theta_unflatten(np.array(values), p, p, n_in)
