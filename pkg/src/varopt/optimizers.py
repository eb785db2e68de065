"""Discrete update rules and the continuous flow they discretize.

All rules share the mirror-update skeleton

    X_{k+1} = grad_h*( grad_h(X_k) - <dual-space step> ),

and differ only in how the dual-space step is assembled from the noisy
gradient stream: a rescaled raw observation (mirror descent / SGD), a
Kalman-filtered latent state contracted with a vector learning rate
(Kalman gradient descent), or a steady-state filter recursion
(generalized / Polyak momentum).  No rule ever sees the true gradient;
optimizers consume only the observation stream g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import backend
from .bregman import MirrorMap, grad_dual
from .diagnostics import Trajectory
from .gradient_models import (
    MartingaleGradientModel,
    MartingaleStream,
    StateSpaceGradientModel,
    StateSpaceStream,
    initial_kalman_state,
    kalman_discrete_step,
    kalman_steady_gain,
)
from .schedules import Schedule, build_mesh, phi_scalar_path, phi_vector_path

__all__ = [
    "OptimizerSpec",
    "mirror_descent_step",
    "kalman_gd_step",
    "generalized_momentum_step",
    "fosp_flow_step",
    "nu_from_momentum",
    "momentum_from_nu",
    "run_optimizer",
    "OPTIMIZER_KINDS",
]

OPTIMIZER_KINDS = (
    "mirror_sgd",
    "kalman_gd",
    "generalized_momentum",
    "polyak_momentum",
    "fosp_continuous",
)


def mirror_descent_step(mirror: MirrorMap, x: np.ndarray, g: np.ndarray,
                        phi: float) -> np.ndarray:
    """X' = grad_h*(grad_h(X) - phi g).  With the identity quadratic map
    this is exactly X - phi g."""
    x = np.asarray(x, dtype=float)
    mirror.check_domain(x)
    x_new = grad_dual(mirror, mirror.grad_h(x) - phi * np.asarray(g, dtype=float))
    mirror.check_domain(x_new)
    return x_new


def kalman_gd_step(mirror: MirrorMap, x: np.ndarray, y_hat: np.ndarray,
                   phi_vec: np.ndarray) -> np.ndarray:
    """Mirror update driven by the filtered latent state: the dual-space
    step is sum_j phi_j y_hat[:, j]."""
    y_hat = np.atleast_2d(np.asarray(y_hat, dtype=float))
    effective = y_hat @ np.atleast_1d(np.asarray(phi_vec, dtype=float))
    return mirror_descent_step(mirror, x, effective, 1.0)


def generalized_momentum_step(mirror: MirrorMap, x: np.ndarray, y_hat: np.ndarray,
                              g: np.ndarray, a_tilde: np.ndarray,
                              k_inf: np.ndarray, phi_vec: np.ndarray,
                              b_vec: Optional[np.ndarray] = None):
    """Steady-state filter recursion followed by the mirror update.

    y_hat' = (A_til - k_inf b' A_til) y_hat + k_inf g applied to every
    coordinate row, then X' = kalman_gd_step(X, y_hat').  b_vec defaults
    to all-ones (the scalar reduction b = 1).
    """
    a_tilde = np.atleast_2d(np.asarray(a_tilde, dtype=float))
    k_inf = np.atleast_1d(np.asarray(k_inf, dtype=float))
    b_vec = np.ones(len(k_inf)) if b_vec is None else np.atleast_1d(np.asarray(b_vec, dtype=float))
    y_hat = np.atleast_2d(np.asarray(y_hat, dtype=float))
    g = np.atleast_1d(np.asarray(g, dtype=float))
    p1 = a_tilde - np.outer(k_inf, b_vec) @ a_tilde
    y_new = y_hat @ p1.T + np.outer(g, k_inf)
    return kalman_gd_step(mirror, x, y_new, phi_vec), y_new


def fosp_flow_step(mirror: MirrorMap, x: np.ndarray, effective_term: np.ndarray,
                   alpha_t: float, dt: float) -> np.ndarray:
    """One explicit Euler step of the continuous optimizer flow
    dX = exp(alpha) (grad_h*(grad_h(X) - effective_term) - X) dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    mirror.check_domain(x)
    target = grad_dual(mirror, mirror.grad_h(x) - np.asarray(effective_term, dtype=float))
    x_new = x + dt * math.exp(alpha_t) * (target - x)
    mirror.check_domain(x_new)
    return x_new


def nu_from_momentum(mirror: MirrorMap, x: np.ndarray, p: np.ndarray,
                     alpha_t: float, gamma_t: float) -> np.ndarray:
    """nu = exp(alpha) (grad_h*(grad_h(X) + exp(-gamma) p) - X), the
    velocity whose displaced point X + exp(-alpha) nu realizes p."""
    x = np.asarray(x, dtype=float)
    mirror.check_domain(x)
    target = grad_dual(mirror, mirror.grad_h(x) + math.exp(-gamma_t) * np.asarray(p, dtype=float))
    return math.exp(alpha_t) * (target - x)


def momentum_from_nu(mirror: MirrorMap, x: np.ndarray, nu: np.ndarray,
                     alpha_t: float, gamma_t: float) -> np.ndarray:
    """Inverse of nu_from_momentum:
    p = exp(gamma) (grad_h(X + exp(-alpha) nu) - grad_h(X))."""
    x = np.asarray(x, dtype=float)
    y = x + math.exp(-alpha_t) * np.asarray(nu, dtype=float)
    mirror.check_domain(y)
    return math.exp(gamma_t) * (mirror.grad_h(y) - mirror.grad_h(x))


@dataclass
class OptimizerSpec:
    """Which update rule to run, on which geometry, with which stream."""

    kind: str
    mirror: MirrorMap
    schedule: Schedule
    model: object = None                  # gradient model for synthetic mode
    mode: str = "synthetic"               # "synthetic" or "empirical"
    x0: Optional[np.ndarray] = None
    batch_m: Optional[int] = None         # mini-batch size (empirical mode)
    fosp_substeps: int = 4
    p0: Optional[np.ndarray] = None       # Kalman prior covariance

    def validate(self) -> None:
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.mode not in ("synthetic", "empirical"):
            raise ValueError(f"unknown stream mode {self.mode!r}")
        needs_state_space = self.kind in ("kalman_gd", "generalized_momentum",
                                          "polyak_momentum")
        if needs_state_space and not isinstance(self.model, StateSpaceGradientModel):
            raise ValueError(f"{self.kind} requires a StateSpaceGradientModel")
        if self.kind == "polyak_momentum" and self.model.dtilde != 1:
            raise ValueError("polyak_momentum is the dtilde = 1 special case")
        if self.mode == "synthetic" and self.kind in ("mirror_sgd", "fosp_continuous"):
            if not isinstance(self.model, (MartingaleGradientModel, StateSpaceGradientModel)):
                raise ValueError(f"synthetic {self.kind} requires a gradient model")
        if self.mode == "empirical" and self.batch_m is None:
            raise ValueError("empirical mode requires batch_m")
        if self.kind in ("generalized_momentum", "polyak_momentum"):
            s = self.schedule
            ts = np.linspace(s.t_min, s.horizon_T, 32)
            a0 = s.alpha(s.t_min)
            if any(abs(s.alpha(float(t)) - a0) > 1e-12 for t in ts):
                raise ValueError("momentum kinds need a constant-alpha schedule")

    def default_x0(self, d: int) -> np.ndarray:
        if self.x0 is not None:
            return np.asarray(self.x0, dtype=float)
        if self.mirror.name == "entropy":
            return np.ones(d)
        return np.zeros(d)


_BUILTIN_MAP_KIND = {"quadratic": 0, "entropy": 1}


def _map_kernel_info(mirror: MirrorMap, d: int):
    """(map_kind, m_diag) for the backend kernels, or None when the map
    has no fused kernel (full-matrix quadratic, custom maps)."""
    if mirror.name == "entropy":
        return 1, np.ones(d)
    if mirror.name == "quadratic":
        hess = np.atleast_2d(mirror.hess_h(np.zeros(d)))
        if np.allclose(hess, np.diag(np.diag(hess))):
            return 0, np.diag(hess).copy()
    return None


def _stream_dimension(spec: OptimizerSpec, problem) -> int:
    if spec.mode == "empirical":
        return problem.d
    return spec.model.d


def run_optimizer(spec: OptimizerSpec, problem, steps: int, seed: int,
                  rng_factory=None) -> Trajectory:
    """Run one seeded optimization and record its trajectory.

    problem may be None in synthetic mode (the latent gradient model is
    not tied to a loss landscape; loss gaps are then NaN).  rng_factory
    maps a stream name ("stream" or "batch") to a Generator; by default
    the harness RNG streams for this seed are used.
    """
    spec.validate()
    if rng_factory is None:
        from .harness.rng import component_rng
        rng_factory = lambda component: component_rng(seed, component)

    schedule = spec.schedule
    mesh = build_mesh(schedule, max(steps, 1))
    times = mesh.times[: steps + 1]
    if times[-1] > schedule.horizon_T + 1e-9:
        raise ValueError(
            f"mesh reaches t = {times[-1]:.6g}, past the schedule horizon "
            f"T = {schedule.horizon_T:.6g}; reduce steps or extend the horizon"
        )
    dts = np.diff(times)
    d = _stream_dimension(spec, problem)
    x0 = spec.default_x0(d)
    spec.mirror.check_domain(x0)

    if steps == 0:
        gap0 = _loss_gap(spec, problem, x0)
        return Trajectory(
            times=times, x_path=x0[None, :], nu_path=np.zeros((0, d)),
            loss_gap=np.array([gap0]), qv_path=np.zeros(1), seed=seed,
        )

    step_times = times[:-1]
    error = None
    if spec.kind in ("kalman_gd", "generalized_momentum", "polyak_momentum"):
        phi = phi_vector_path(schedule, spec.model.a_mat, spec.model.b_vec, step_times)
    else:
        phi = phi_scalar_path(schedule, step_times)

    try:
        x_path, g_stream, filter_norm = _run_paths(spec, problem, x0, step_times,
                                                   dts, phi, rng_factory)
    except Exception as exc:
        # Terminate with an error record; the initial state is all that
        # is reliably known at this point.
        gap0 = _loss_gap(spec, problem, x0)
        return Trajectory(
            times=times[:1], x_path=x0[None, :], nu_path=np.zeros((0, d)),
            loss_gap=np.array([gap0]), qv_path=np.zeros(1), seed=seed,
            error=f"{type(exc).__name__}: {exc}",
        )

    k = x_path.shape[0] - 1
    nu_path = np.diff(x_path, axis=0) / dts[:k, None]
    loss_gap = np.array([_loss_gap(spec, problem, x) for x in x_path])
    qv_path = _qv_path(_filter_coefficient(spec, problem), schedule, step_times,
                       g_stream, k)
    return Trajectory(
        times=times[: k + 1], x_path=x_path, nu_path=nu_path,
        loss_gap=loss_gap, qv_path=qv_path, g_path=g_stream,
        filter_mean_norm=filter_norm, phi_path=phi[:k], seed=seed,
    )


def _loss_gap(spec: OptimizerSpec, problem, x: np.ndarray) -> float:
    if spec.mode == "empirical" and problem is not None:
        return float(problem.loss(x) - problem.f_star)
    return float("nan")


def _filter_coefficient(spec: OptimizerSpec, problem) -> float:
    """Rescaling applied to raw observations before the mirror update."""
    if isinstance(spec.model, MartingaleGradientModel):
        return spec.model.filter_coefficient
    if spec.mode == "empirical":
        return spec.batch_m / problem.n
    return 1.0


def _synthetic_stream(spec: OptimizerSpec, dts: np.ndarray, rng) -> tuple:
    """Pre-simulate the latent stream: (g, grad_true), each (K, d)."""
    if isinstance(spec.model, MartingaleGradientModel):
        stream = MartingaleStream(spec.model, rng)
    else:
        stream = StateSpaceStream(spec.model, rng)
    g = np.empty((len(dts), spec.model.d))
    true = np.empty_like(g)
    for k, dt in enumerate(dts):
        true[k], g[k] = stream.step(float(dt))
    return g, true


def _run_paths(spec, problem, x0, step_times, dts, phi, rng_factory):
    """Dispatch to a fused kernel when the configuration allows it,
    else to the generic sequential loop.  Returns (x_path, g_stream,
    filter_mean_norm or None)."""
    mirror = spec.mirror
    d = len(x0)
    kernel_info = _map_kernel_info(mirror, d)
    filter_norm = None

    if spec.mode == "synthetic":
        g_stream, _ = _synthetic_stream(spec, dts, rng_factory("stream"))
        if spec.kind == "mirror_sgd":
            coeff = _filter_coefficient(spec, problem)
            dual_steps = phi[:, None] * coeff * g_stream
            if kernel_info is not None:
                x_path = backend.mirror_run(x0, dual_steps, *kernel_info)
            else:
                x_path = _mirror_loop(mirror, x0, dual_steps)
            return x_path, g_stream, None
        if spec.kind == "fosp_continuous":
            coeff = _filter_coefficient(spec, problem)
            return (_fosp_loop(spec, x0, step_times, dts, phi, g_stream, coeff),
                    g_stream, None)
        # Kalman family: filter path first, then the mirror recursion.
        y_path, filter_norm = _filter_path(spec, g_stream, dts)
        dual_steps = np.einsum("kij,kj->ki", y_path[1:], phi)
        if kernel_info is not None:
            x_path = backend.mirror_run(x0, dual_steps, *kernel_info)
        else:
            x_path = _mirror_loop(mirror, x0, dual_steps)
        return x_path, g_stream, filter_norm

    # Empirical mode: the stream depends on the iterate.
    rng = rng_factory("batch")
    if (spec.kind == "mirror_sgd" and kernel_info is not None
            and kernel_info[0] == 0 and getattr(problem, "kind", None) == "quadratic"):
        # Mini-batch gradient of the quadratic problem is X - mean(batch),
        # so the whole run collapses to an affine recursion.
        zbar = np.stack([problem.minibatch_mean(spec.batch_m, rng)
                         for _ in range(len(dts))])
        coeff = _filter_coefficient(spec, problem)
        x_path = backend.affine_sgd_run(x0, zbar, phi * coeff, kernel_info[1])
        g_stream = x_path[:-1] - zbar
        return x_path, g_stream, None
    return _empirical_loop(spec, problem, x0, step_times, dts, phi, rng)


def _mirror_loop(mirror, x0, dual_steps):
    x_path = np.empty((len(dual_steps) + 1, len(x0)))
    x_path[0] = x0
    for k, d_k in enumerate(dual_steps):
        x_path[k + 1] = mirror_descent_step(mirror, x_path[k], d_k, 1.0)
    return x_path


def _filter_path(spec, g_stream, dts):
    """Kalman or steady-state filter over a pre-simulated stream."""
    model = spec.model
    dt0 = float(dts[0])
    constant_dt = np.allclose(dts, dt0)
    a_til = np.eye(model.dtilde) - dt0 * model.a_mat
    l_til = dt0 * model.l_mat
    sigma_disc = model.sigma * dt0
    p0 = spec.p0 if spec.p0 is not None else model.stationary_covariance()

    if spec.kind in ("generalized_momentum", "polyak_momentum"):
        k_inf = kalman_steady_gain(a_til, l_til, model.b_vec, sigma_disc)
        p1 = a_til - np.outer(k_inf, model.b_vec) @ a_til
        y_path = backend.momentum_filter_run(g_stream, p1, k_inf)
    elif constant_dt:
        y_path, _, _, _ = backend.kalman_filter_run(
            g_stream, a_til, l_til, model.b_vec, sigma_disc, p0)
    else:
        # Varying mesh step: fall back to the per-step recursion with
        # time-dependent discretized matrices.
        state = initial_kalman_state(model.d, model.dtilde, p0)
        y_path = np.empty((len(g_stream) + 1, model.d, model.dtilde))
        y_path[0] = state.y_hat
        for k, g_k in enumerate(g_stream):
            dt = float(dts[k])
            state = kalman_discrete_step(
                state, g_k, np.eye(model.dtilde) - dt * model.a_mat,
                dt * model.l_mat, model.b_vec, model.sigma * dt)
            y_path[k + 1] = state.y_hat
    norms = np.linalg.norm(y_path.reshape(len(y_path), -1), axis=1)
    return y_path, norms


def _fosp_loop(spec, x0, step_times, dts, phi, g_stream, coeff):
    """Continuous flow integrated with fosp_substeps inner Euler steps
    per mesh interval; the observation is frozen within each interval."""
    mirror = spec.mirror
    sub = max(1, spec.fosp_substeps)
    x_path = np.empty((len(dts) + 1, len(x0)))
    x_path[0] = x0
    x = np.asarray(x0, dtype=float)
    for k, dt in enumerate(dts):
        t = float(step_times[k])
        effective = phi[k] * coeff * g_stream[k]
        inner = float(dt) / sub
        for _ in range(sub):
            x = fosp_flow_step(mirror, x, effective, spec.schedule.alpha(t), inner)
        x_path[k + 1] = x
    return x_path


def _empirical_loop(spec, problem, x0, step_times, dts, phi, rng):
    """Fully sequential loop for X-dependent streams (logistic problems,
    entropy-map SGD, Kalman variants on empirical gradients)."""
    mirror = spec.mirror
    model = spec.model
    coeff = _filter_coefficient(spec, problem)
    k_steps = len(dts)
    x_path = np.empty((k_steps + 1, len(x0)))
    g_stream = np.empty((k_steps, len(x0)))
    x_path[0] = x0
    filter_norm = None

    kalman_kind = spec.kind in ("kalman_gd", "generalized_momentum", "polyak_momentum")
    if kalman_kind:
        p0 = spec.p0 if spec.p0 is not None else model.stationary_covariance()
        state = initial_kalman_state(problem.d, model.dtilde, p0)
        filter_norm = np.empty(k_steps + 1)
        filter_norm[0] = 0.0
        if spec.kind in ("generalized_momentum", "polyak_momentum"):
            dt0 = float(dts[0])
            a_til0 = np.eye(model.dtilde) - dt0 * model.a_mat
            k_inf = kalman_steady_gain(a_til0, dt0 * model.l_mat, model.b_vec,
                                       model.sigma * dt0)

    x = np.asarray(x0, dtype=float)
    for k in range(k_steps):
        dt = float(dts[k])
        g = problem.minibatch_gradient(x, spec.batch_m, rng)
        g_stream[k] = g
        if spec.kind == "mirror_sgd":
            x = mirror_descent_step(mirror, x, coeff * g, float(phi[k]))
        elif spec.kind == "fosp_continuous":
            sub = max(1, spec.fosp_substeps)
            effective = float(phi[k]) * coeff * g
            for _ in range(sub):
                x = fosp_flow_step(mirror, x, effective,
                                   spec.schedule.alpha(float(step_times[k])), dt / sub)
        elif spec.kind == "kalman_gd":
            a_til = np.eye(model.dtilde) - dt * model.a_mat
            state = kalman_discrete_step(state, g, a_til, dt * model.l_mat,
                                         model.b_vec, model.sigma * dt)
            x = kalman_gd_step(mirror, x, state.y_hat, phi[k])
            filter_norm[k + 1] = float(np.linalg.norm(state.y_hat))
        else:  # momentum kinds
            a_til = np.eye(model.dtilde) - dt * model.a_mat
            x, y_new = generalized_momentum_step(
                mirror, x, state.y_hat, g, a_til, k_inf, phi[k], model.b_vec)
            state = replace(state, y_hat=y_new)
            filter_norm[k + 1] = float(np.linalg.norm(y_new))
        x_path[k + 1] = x
    return x_path, g_stream, filter_norm


def _qv_path(coeff, schedule, step_times, g_stream, k_steps):
    """Accumulated quadratic variation of the exp(-gamma)-scaled
    martingale proxy built from increments of the observed stream."""
    from .diagnostics import qv_accumulate

    qv = np.zeros(k_steps + 1)
    acc = 0.0
    for k in range(1, k_steps):
        t = float(step_times[k - 1])
        w = math.exp(schedule.alpha(t) + schedule.beta(t) + schedule.gamma(t))
        delta = -coeff * w * (g_stream[k] - g_stream[k - 1])
        scaled = math.exp(-schedule.gamma(t)) * delta
        acc = qv_accumulate(acc, scaled, scaled)
        qv[k] = acc
    if k_steps >= 1:
        qv[k_steps] = acc
    return qv
