"""Latent gradient-process models and the filters that track them.

Two priors on the gradient stream are supported:

* martingale model: the true gradient is a scaled Brownian motion
  sigma W^f and observations are g = sigma (W^f + rho W^e) with
  rho^2 = (n - m) / m, the mini-batch variance inflation.  Its Bayes
  filter is the constant rescaling g -> g / (1 + rho^2) = (m/n) g.
* linear state-space model: each gradient coordinate is b' y_i with a
  latent OU-type state dy = -A y dt + L dW observed through white noise
  of scale sigma.  Its filters are the Kalman-Bucy equations in
  continuous time and the standard four-equation Kalman recursion in
  discrete time, whose gains converge to a steady-state gain K_inf.

All coordinates share the same latent dynamics, so one covariance P is
maintained and applied row-wise to the d x dtilde filter mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "MartingaleGradientModel",
    "StateSpaceGradientModel",
    "KalmanState",
    "MartingaleStream",
    "StateSpaceStream",
    "martingale_filter",
    "kalman_discrete_step",
    "kalman_bucy_step",
    "kalman_steady_gain",
    "initial_kalman_state",
    "FilterDivergenceError",
]


class FilterDivergenceError(RuntimeError):
    """Covariance or innovation variance left its admissible region."""


@dataclass(frozen=True)
class MartingaleGradientModel:
    """Brownian gradient prior matched to mini-batching with n training
    points and batches of size m."""

    sigma: float
    n: int
    m: int
    d: int = 1

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not (1 <= self.m <= self.n):
            raise ValueError("need 1 <= m <= n")

    @property
    def rho2(self) -> float:
        return (self.n - self.m) / self.m

    @property
    def filter_coefficient(self) -> float:
        # 1 / (1 + rho^2) = m / n exactly.
        return self.m / self.n


@dataclass(frozen=True)
class StateSpaceGradientModel:
    """Linear-diffusion gradient prior: dy = -A y dt + L dW, g = b'y + sigma xi."""

    a_mat: np.ndarray
    l_mat: np.ndarray
    b_vec: np.ndarray
    sigma: float
    d: int = 1

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_mat, dtype=float))
        l = np.atleast_2d(np.asarray(self.l_mat, dtype=float))
        b = np.atleast_1d(np.asarray(self.b_vec, dtype=float))
        object.__setattr__(self, "a_mat", a)
        object.__setattr__(self, "l_mat", l)
        object.__setattr__(self, "b_vec", b)
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        for name, mat in (("A", a), ("L", l)):
            if mat.shape != (self.dtilde, self.dtilde):
                raise ValueError(f"{name} must be dtilde x dtilde")
            if np.allclose(mat, 0):
                continue
            try:
                np.linalg.cholesky(0.5 * (mat + mat.T))
            except np.linalg.LinAlgError:
                raise ValueError(f"{name} must be positive definite") from None

    @property
    def dtilde(self) -> int:
        return len(self.b_vec)

    def stationary_covariance(self) -> np.ndarray:
        """Covariance solving A P + P A' = L L' (continuous Lyapunov),
        used as the default prior covariance of the latent state."""
        a = self.a_mat
        q = self.l_mat @ self.l_mat.T
        n = a.shape[0]
        # Vectorized Lyapunov solve: (I (x) A + A (x) I) vec(P) = vec(Q).
        k = np.kron(np.eye(n), a) + np.kron(a, np.eye(n))
        p = np.linalg.solve(k, q.reshape(-1)).reshape(n, n)
        return 0.5 * (p + p.T)


class MartingaleStream:
    """Seeded simulator of the martingale model's gradient stream.

    Both Brownian states advance by independent N(0, dt) increments
    scaled by sigma; the same seed reproduces the stream bit for bit.
    """

    def __init__(self, model: MartingaleGradientModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self.w_f = np.zeros(model.d)
        self.w_e = np.zeros(model.d)

    def step(self, dt: float):
        if dt <= 0:
            raise ValueError("dt must be positive")
        model = self.model
        sqdt = math.sqrt(dt)
        self.w_f = self.w_f + sqdt * self.rng.standard_normal(model.d)
        self.w_e = self.w_e + sqdt * self.rng.standard_normal(model.d)
        grad_true = model.sigma * self.w_f
        rho = math.sqrt(model.rho2)
        g = model.sigma * (self.w_f + rho * self.w_e)
        return grad_true, g


class StateSpaceStream:
    """Seeded simulator of the discretized state-space model.

    One mesh step of size dt = exp(-alpha) advances every latent row by
        y <- (I - dt A) y + dt L w,      g = b'y + sigma dt xi,
    with standard normal draws w, xi (the model noise carries the same
    exp(-alpha) factor as the mesh).
    """

    def __init__(self, model: StateSpaceGradientModel, rng: np.random.Generator,
                 y0: np.ndarray | None = None):
        self.model = model
        self.rng = rng
        if y0 is None:
            self.y = np.zeros((model.d, model.dtilde))
        else:
            self.y = np.array(y0, dtype=float).reshape(model.d, model.dtilde)

    def step(self, dt: float):
        if dt <= 0:
            raise ValueError("dt must be positive")
        model = self.model
        a_til = np.eye(model.dtilde) - dt * model.a_mat
        l_til = dt * model.l_mat
        w = self.rng.standard_normal((model.d, model.dtilde))
        xi = self.rng.standard_normal(model.d)
        self.y = self.y @ a_til.T + w @ l_til.T
        grad_true = self.y @ model.b_vec
        g = grad_true + model.sigma * dt * xi
        return grad_true, g


@dataclass(frozen=True)
class KalmanState:
    """Filter state shared across the d independent gradient coordinates."""

    y_hat: np.ndarray        # d x dtilde posterior mean
    p_post: np.ndarray       # dtilde x dtilde posterior covariance
    gain: np.ndarray         # dtilde gain vector
    s_innov: float           # scalar innovation variance
    p_pred: np.ndarray       # dtilde x dtilde predicted covariance


def initial_kalman_state(d: int, dtilde: int, p0: np.ndarray | None = None) -> KalmanState:
    p0 = np.eye(dtilde) if p0 is None else np.atleast_2d(np.asarray(p0, dtype=float))
    return KalmanState(
        y_hat=np.zeros((d, dtilde)),
        p_post=p0,
        gain=np.zeros(dtilde),
        s_innov=float("nan"),
        p_pred=p0,
    )


def martingale_filter(model: MartingaleGradientModel, g: np.ndarray) -> np.ndarray:
    """Best estimate of the true gradient under the martingale prior:
    g / (1 + rho^2), i.e. the mini-batch rescaling (m/n) g."""
    return model.filter_coefficient * np.asarray(g, dtype=float)


def _check_psd(p: np.ndarray, floor: float, what: str) -> None:
    eigs = np.linalg.eigvalsh(p)
    if eigs.min() < floor:
        raise FilterDivergenceError(
            f"{what} lost positive semi-definiteness (min eigenvalue {eigs.min():.3e})"
        )


def kalman_discrete_step(state: KalmanState, g_k: np.ndarray, a_tilde: np.ndarray,
                         l_tilde: np.ndarray, b_vec: np.ndarray,
                         sigma_disc: float) -> KalmanState:
    """One step of the discrete Kalman recursion, applied with the same
    covariance and gain to every coordinate row of the mean."""
    a_tilde = np.atleast_2d(np.asarray(a_tilde, dtype=float))
    l_tilde = np.atleast_2d(np.asarray(l_tilde, dtype=float))
    b_vec = np.atleast_1d(np.asarray(b_vec, dtype=float))
    g_k = np.atleast_1d(np.asarray(g_k, dtype=float))

    p_pred = a_tilde @ state.p_post @ a_tilde.T + l_tilde.T @ l_tilde
    p_pred = 0.5 * (p_pred + p_pred.T)
    s = sigma_disc ** 2 + float(b_vec @ p_pred @ b_vec)
    if s <= 0:
        raise FilterDivergenceError(f"innovation variance is not positive ({s:.3e})")
    gain = p_pred @ b_vec / s
    p_post = (np.eye(len(b_vec)) - np.outer(gain, b_vec)) @ p_pred
    p_post = 0.5 * (p_post + p_post.T)
    _check_psd(p_post, -1e-10, "posterior covariance")

    pred_mean = state.y_hat @ a_tilde.T                       # d x dtilde
    innovation = g_k - pred_mean @ b_vec                      # d
    y_hat = pred_mean + np.outer(innovation, gain)
    return KalmanState(y_hat=y_hat, p_post=p_post, gain=gain, s_innov=s,
                       p_pred=p_pred)


def kalman_bucy_step(state: KalmanState, g_t: np.ndarray, dt: float,
                     model: StateSpaceGradientModel) -> KalmanState:
    """Explicit Euler step of the Kalman-Bucy mean/Riccati system.

    dy_hat = -A y_hat dt + sigma^{-2} P b (g - b'y_hat) dt,
    dP     = (-A P - P'A - sigma^{-2} P b b' P' + L L') dt.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    a, l, b = model.a_mat, model.l_mat, model.b_vec
    sig2 = model.sigma ** 2
    if sig2 <= 0:
        raise ValueError("Kalman-Bucy filtering needs sigma > 0")
    p = state.p_post
    g_t = np.atleast_1d(np.asarray(g_t, dtype=float))

    innovation = g_t - state.y_hat @ b                        # d
    gain = p @ b / sig2                                       # dtilde
    y_hat = state.y_hat + dt * (-state.y_hat @ a.T + np.outer(innovation, gain))
    p_dot = -a @ p - p.T @ a - (p @ np.outer(b, b) @ p.T) / sig2 + l @ l.T
    p_new = p + dt * p_dot
    p_new = 0.5 * (p_new + p_new.T)
    eigs = np.linalg.eigvalsh(p_new)
    if eigs.min() < -1e-8:
        raise FilterDivergenceError(
            f"Riccati covariance lost PSD at this step size (min eig {eigs.min():.3e})"
        )
    return KalmanState(y_hat=y_hat, p_post=p_new, gain=gain,
                       s_innov=sig2, p_pred=p_new)


def kalman_steady_gain(a_tilde: np.ndarray, l_tilde: np.ndarray, b_vec: np.ndarray,
                       sigma_disc: float, tol: float = 1e-10,
                       max_iter: int = 100_000) -> np.ndarray:
    """Steady-state gain of the time-invariant discrete filter.

    Iterates the covariance recursion
        P_pred <- A_til [(I - K b') P_pred] A_til' + L_til' L_til,
        K       = P_pred b / (sigma^2 + b' P_pred b),
    to its fixed point and returns the limiting gain vector.
    """
    a_tilde = np.atleast_2d(np.asarray(a_tilde, dtype=float))
    l_tilde = np.atleast_2d(np.asarray(l_tilde, dtype=float))
    b_vec = np.atleast_1d(np.asarray(b_vec, dtype=float))
    dtilde = len(b_vec)
    q = l_tilde.T @ l_tilde

    p_pred = q + np.eye(dtilde)
    gain = np.zeros(dtilde)
    for _ in range(max_iter):
        s = sigma_disc ** 2 + float(b_vec @ p_pred @ b_vec)
        if s <= 0:
            raise FilterDivergenceError("innovation variance is not positive")
        new_gain = p_pred @ b_vec / s
        p_post = (np.eye(dtilde) - np.outer(new_gain, b_vec)) @ p_pred
        new_pred = a_tilde @ p_post @ a_tilde.T + q
        new_pred = 0.5 * (new_pred + new_pred.T)
        resid = max(np.max(np.abs(new_gain - gain)), np.max(np.abs(new_pred - p_pred)))
        p_pred, gain = new_pred, new_gain
        if resid <= tol:
            return gain
    raise FilterDivergenceError(
        f"steady-gain iteration did not converge (last residual {resid:.3e})"
    )
