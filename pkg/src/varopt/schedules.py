"""Hyperparameter schedules, discretization meshes and learning-rate paths.

A schedule is the triple of time functions (alpha, beta, gamma) plus a
terminal weight delta_T on a finite horizon [0, T].  alpha sets the log
step scale (the mesh advances by exp(-alpha) per step), beta weights the
potential term and gamma the overall energy.  A schedule "scales" when
gamma' = exp(alpha) and beta' <= exp(alpha); those are the hypotheses of
the convergence guarantees and are checked numerically here.

The deterministic learning-rate paths are

    scalar:  Phi(t) = exp(-gamma_t) (Phi0 + int_0^t w(u) du),
             Phi0   = exp(delta_T) - int_0^T w(u) du,
    vector:  Phi(t) = exp(-gamma_t) (b' expm(-A t) Phi0
                                     + int_0^t w(u) b' expm(-A (t-u)) du),
             Phi0   = exp(delta_T) expm(A T) - int_0^T w(u) expm(A u) du,

with weight w(u) = exp(alpha_u + beta_u + gamma_u).  Both satisfy the
terminal condition Phi(T) = exp(delta_T - gamma_T) (times b' in the
vector case).  Integrals are evaluated by adaptive Simpson quadrature;
matrix exponentials by scaling and squaring at desk-scale dimensions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Schedule",
    "Mesh",
    "ScalingReport",
    "constant_schedule",
    "linear_schedule",
    "polynomial_schedule",
    "check_scaling",
    "build_mesh",
    "phi_scalar",
    "phi_vector",
    "matrix_exp",
    "adaptive_simpson",
]

SCALING_TOL = 1e-6
_FD_STEP = 1e-5
QUAD_TOL = 1e-10
_QUAD_MAX_DEPTH = 20  # 2**20 subdivisions
_QUAD_REL = 1e-12  # relative floor; panels stop near rounding noise


@dataclass(frozen=True)
class Schedule:
    """Deterministic hyperparameter functions on [0, horizon_T]."""

    alpha: Callable[[float], float]
    beta: Callable[[float], float]
    gamma: Callable[[float], float]
    delta_T: float
    horizon_T: float
    # Closed-form derivatives when the family provides them; otherwise
    # central differences are used for the scaling check.
    beta_dot: Optional[Callable[[float], float]] = None
    gamma_dot: Optional[Callable[[float], float]] = None
    # Earliest admissible time (nonzero for the polynomial family).
    t_min: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        if not (self.horizon_T > 0):
            raise ValueError("horizon_T must be positive")

    def validate_finite(self, grid_points: int = 1000) -> None:
        ts = np.linspace(self.t_min, self.horizon_T, grid_points)
        for fn, label in ((self.alpha, "alpha"), (self.beta, "beta"), (self.gamma, "gamma")):
            vals = np.array([fn(t) for t in ts])
            if not np.all(np.isfinite(vals)):
                raise ValueError(f"schedule function {label} is not finite on the horizon")


@dataclass(frozen=True)
class Mesh:
    """Strictly increasing times t_0 < t_1 < ... with
    t_{k+1} - t_k = exp(-alpha(t_k))."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 1 or np.any(np.diff(t) <= 0):
            raise ValueError("mesh times must be strictly increasing")
        object.__setattr__(self, "times", t)

    def __len__(self):
        return len(self.times)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)


@dataclass(frozen=True)
class ScalingReport:
    max_gamma_residual: float
    max_beta_excess: float
    passed: bool


def constant_schedule(alpha0=0.0, beta0=0.0, gamma0=0.0, delta_T=0.0, horizon_T=1.0,
                      name="constant") -> Schedule:
    return Schedule(
        alpha=lambda t: alpha0,
        beta=lambda t: beta0,
        gamma=lambda t: gamma0,
        delta_T=delta_T,
        horizon_T=horizon_T,
        beta_dot=lambda t: 0.0,
        gamma_dot=lambda t: 0.0,
        name=name,
    )


def linear_schedule(alpha0=0.0, alpha1=0.0, beta0=0.0, beta1=0.0,
                    gamma0=0.0, gamma1=0.0, delta_T=0.0, horizon_T=1.0,
                    name="linear") -> Schedule:
    """Exponents linear in t: alpha_t = alpha0 + alpha1 t, etc.

    With alpha1 = 0, gamma1 = exp(alpha0) and beta1 <= exp(alpha0) this
    family satisfies the scaling conditions exactly.
    """
    return Schedule(
        alpha=lambda t: alpha0 + alpha1 * t,
        beta=lambda t: beta0 + beta1 * t,
        gamma=lambda t: gamma0 + gamma1 * t,
        delta_T=delta_T,
        horizon_T=horizon_T,
        beta_dot=lambda t: beta1,
        gamma_dot=lambda t: gamma1,
        name=name,
    )


def polynomial_schedule(p=2.0, c=1.0, delta_T=0.0, horizon_T=1.0, t_min=0.1,
                        name="polynomial") -> Schedule:
    """alpha_t = log p - log t, beta_t = p log t + log c, gamma_t = p log t.

    Defined for t >= t_min > 0.  Realizes the scaling conditions with a
    polynomial rate exp(-beta_t) = t^{-p} / c.
    """
    if not (0 < t_min < horizon_T):
        raise ValueError("need 0 < t_min < horizon_T")
    if p <= 0 or c <= 0:
        raise ValueError("p and c must be positive")
    return Schedule(
        alpha=lambda t: math.log(p) - math.log(t),
        beta=lambda t: p * math.log(t) + math.log(c),
        gamma=lambda t: p * math.log(t),
        delta_T=delta_T,
        horizon_T=horizon_T,
        beta_dot=lambda t: p / t,
        gamma_dot=lambda t: p / t,
        t_min=t_min,
        name=name,
    )


def _central_diff(fn, t, lo, hi):
    h = _FD_STEP
    a = max(t - h, lo)
    b = min(t + h, hi)
    return (fn(b) - fn(a)) / (b - a)


def check_scaling(schedule: Schedule, grid_points: int = 1000) -> ScalingReport:
    """Check gamma' = exp(alpha) and beta' <= exp(alpha) on a uniform grid."""
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    schedule.validate_finite(grid_points)
    lo, hi = schedule.t_min, schedule.horizon_T
    ts = np.linspace(lo, hi, grid_points)
    gdot = schedule.gamma_dot or (lambda t: _central_diff(schedule.gamma, t, lo, hi))
    bdot = schedule.beta_dot or (lambda t: _central_diff(schedule.beta, t, lo, hi))
    max_gamma = 0.0
    max_beta = 0.0
    for t in ts:
        ea = math.exp(schedule.alpha(t))
        max_gamma = max(max_gamma, abs(gdot(t) - ea))
        max_beta = max(max_beta, bdot(t) - ea)
    return ScalingReport(
        max_gamma_residual=max_gamma,
        max_beta_excess=max(max_beta, 0.0),
        passed=(max_gamma <= SCALING_TOL) and (max_beta <= SCALING_TOL),
    )


def build_mesh(schedule: Schedule, steps: int, t0: Optional[float] = None) -> Mesh:
    """Mesh recursion t_{k+1} = t_k + exp(-alpha(t_k)), K steps.

    t0 defaults to 0 (or to the schedule's t_min when that is positive).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    t = schedule.t_min if t0 is None else t0
    times = [t]
    for _ in range(steps):
        t = t + math.exp(-schedule.alpha(t))
        if not math.isfinite(t):
            raise ValueError("mesh recursion produced a non-finite time")
        times.append(t)
    return Mesh(times=np.array(times))


def adaptive_simpson(fn, a, b, tol=QUAD_TOL, max_depth=_QUAD_MAX_DEPTH):
    """Adaptive Simpson quadrature for scalar-, vector- or matrix-valued fn.

    Raises RuntimeError when the recursion depth budget is exhausted
    before reaching the requested absolute tolerance.
    """
    fa = np.asarray(fn(a), dtype=float)
    fb = np.asarray(fn(b), dtype=float)
    fm = np.asarray(fn(0.5 * (a + b)), dtype=float)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(fn, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_rec(fn, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = np.asarray(fn(0.5 * (a + m)), dtype=float)
    rm = np.asarray(fn(0.5 * (m + b)), dtype=float)
    left = (m - a) / 6.0 * (fa + 4.0 * lm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * rm + fb)
    err = np.max(np.abs(left + right - whole))
    # Absolute tolerance alone cannot be met for large-magnitude
    # integrands once the residual hits rounding noise, so keep a
    # relative floor proportional to the local panel values.
    scale = float(np.max(np.abs(left) + np.abs(right)))
    if err <= 15.0 * max(tol, _QUAD_REL * scale):
        return left + right + (left + right - whole) / 15.0
    if depth <= 0:
        raise RuntimeError(
            f"adaptive Simpson failed to reach tolerance (residual {err:.3e})"
        )
    return (
        _simpson_rec(fn, a, m, fa, lm, fm, left, tol / 2.0, depth - 1)
        + _simpson_rec(fn, m, b, fm, rm, fb, right, tol / 2.0, depth - 1)
    )


def _weight(schedule: Schedule, u: float) -> float:
    return math.exp(schedule.alpha(u) + schedule.beta(u) + schedule.gamma(u))


def phi_scalar(schedule: Schedule, t: float) -> float:
    """Scalar learning-rate path of the martingale gradient model."""
    t0, T = schedule.t_min, schedule.horizon_T
    if not (t0 <= t <= T + 1e-12):
        raise ValueError("t must lie in the schedule horizon")
    w = lambda u: _weight(schedule, u)
    phi0 = math.exp(schedule.delta_T) - float(adaptive_simpson(w, t0, T))
    acc = float(adaptive_simpson(w, t0, t)) if t > t0 else 0.0
    return math.exp(-schedule.gamma(t)) * (phi0 + acc)


def phi_scalar_path(schedule: Schedule, times: np.ndarray) -> np.ndarray:
    """phi_scalar evaluated on a sorted time grid, sharing one pass of
    quadrature between consecutive points."""
    times = np.asarray(times, dtype=float)
    t0, T = schedule.t_min, schedule.horizon_T
    w = lambda u: _weight(schedule, u)
    phi0 = math.exp(schedule.delta_T) - float(adaptive_simpson(w, t0, T))
    out = np.empty(len(times))
    acc = 0.0
    prev = t0
    for i, t in enumerate(times):
        if t > prev:
            acc += float(adaptive_simpson(w, prev, t))
            prev = t
        out[i] = math.exp(-schedule.gamma(t)) * (phi0 + acc)
    if np.any(out < 0):
        warnings.warn(
            "learning-rate path is negative on part of the mesh; descent "
            "steps become ascent steps there",
            RuntimeWarning,
        )
    return out


def matrix_exp(m: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a truncated
    Taylor series.  Intended for small dense matrices (dimension <= 16)."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise ValueError("matrix_exp needs a square matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix_exp needs finite entries")
    norm = np.linalg.norm(m, ord=np.inf)
    s = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0.5 else 0
    a = m / (2.0 ** s)
    result = np.eye(m.shape[0])
    term = np.eye(m.shape[0])
    for j in range(1, 60):
        term = term @ a / j
        result = result + term
        if np.max(np.abs(term)) < 1e-18:
            break
    for _ in range(s):
        result = result @ result
    return result


def phi_vector(schedule: Schedule, a_mat: np.ndarray, b_vec: np.ndarray,
               t: float) -> np.ndarray:
    """Vector learning-rate path of the linear state-space gradient model.

    a_mat must be positive definite; returns the dtilde-vector Phi(t).
    """
    a_mat = np.atleast_2d(np.asarray(a_mat, dtype=float))
    b_vec = np.atleast_1d(np.asarray(b_vec, dtype=float))
    eigs = np.linalg.eigvalsh(0.5 * (a_mat + a_mat.T))
    if eigs.min() <= 0:
        raise ValueError("A must be positive definite")
    t0, T = schedule.t_min, schedule.horizon_T
    if not (t0 <= t <= T + 1e-12):
        raise ValueError("t must lie in the schedule horizon")
    w = lambda u: _weight(schedule, u)
    phi0 = math.exp(schedule.delta_T) * matrix_exp(a_mat * T) - adaptive_simpson(
        lambda u: w(u) * matrix_exp(a_mat * u), t0, T, tol=1e-11
    )
    head = b_vec @ matrix_exp(-a_mat * t) @ phi0
    if t > t0:
        tail = adaptive_simpson(
            lambda u: w(u) * (b_vec @ matrix_exp(-a_mat * (t - u))), t0, t,
            tol=1e-11,
        )
    else:
        tail = np.zeros_like(b_vec)
    return math.exp(-schedule.gamma(t)) * (head + tail)


def phi_vector_path(schedule: Schedule, a_mat, b_vec, times) -> np.ndarray:
    """phi_vector on a sorted time grid, sharing one cumulative pass of
    quadrature: the time-t value equals
    exp(-gamma_t) b' expm(-A t) (Phi0 + int_{t0}^t w(u) expm(A u) du),
    so the matrix integral is accumulated segment by segment.
    Returns an array of shape (len(times), dtilde)."""
    times = np.asarray(times, dtype=float)
    a_mat = np.atleast_2d(np.asarray(a_mat, dtype=float))
    b_vec = np.atleast_1d(np.asarray(b_vec, dtype=float))
    eigs = np.linalg.eigvalsh(0.5 * (a_mat + a_mat.T))
    if eigs.min() <= 0:
        raise ValueError("A must be positive definite")
    t0, T = schedule.t_min, schedule.horizon_T
    if len(times) and not (t0 <= times[0] and times[-1] <= T + 1e-12):
        raise ValueError("times must lie in the schedule horizon")
    integrand = lambda u: _weight(schedule, u) * matrix_exp(a_mat * u)

    acc = np.zeros_like(a_mat)
    acc_at = []
    prev = t0
    for t in times:
        if t > prev:
            acc = acc + adaptive_simpson(integrand, prev, float(t), tol=1e-11)
            prev = float(t)
        acc_at.append(acc)
    if T > prev:
        acc = acc + adaptive_simpson(integrand, prev, T, tol=1e-11)
    phi0 = math.exp(schedule.delta_T) * matrix_exp(a_mat * T) - acc

    out = np.empty((len(times), len(b_vec)))
    for i, t in enumerate(times):
        out[i] = math.exp(-schedule.gamma(float(t))) * (
            b_vec @ matrix_exp(-a_mat * float(t)) @ (phi0 + acc_at[i]))
    if np.any(out < 0):
        warnings.warn(
            "vector learning-rate path has negative components on the mesh",
            RuntimeWarning,
        )
    return out
