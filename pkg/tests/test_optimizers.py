"""Update rules and the seeded run driver."""

import math

import numpy as np
import pytest

from varopt import (
    MartingaleGradientModel,
    OptimizerSpec,
    StateSpaceGradientModel,
    constant_schedule,
    entropy_map,
    fosp_flow_step,
    generalized_momentum_step,
    kalman_gd_step,
    linear_schedule,
    mirror_descent_step,
    momentum_from_nu,
    nu_from_momentum,
    quadratic_map,
    run_optimizer,
)
from varopt.harness import component_rng, generate_problem


def _scaling_linear(steps=20, beta0=-0.7, dt=1.0):
    """Linear schedule satisfying the scaling conditions with constant
    alpha and beta whose mesh covers the horizon in exactly `steps`
    steps of size dt.  delta_T is chosen so the learning-rate path is
    the constant exp(beta0)."""
    c = 1.0 / dt
    horizon_T = steps * dt
    return linear_schedule(alpha0=math.log(c), beta0=beta0, gamma1=c,
                           delta_T=beta0 + c * horizon_T, horizon_T=horizon_T)


class TestMirrorStep:
    def test_identity_map_is_plain_sgd(self):
        mirror = quadratic_map()
        rng = np.random.default_rng(0)
        for _ in range(1000):
            x = rng.standard_normal(4)
            g = rng.standard_normal(4)
            phi = rng.uniform(-1.0, 2.0)
            step = mirror_descent_step(mirror, x, g, phi)
            assert np.max(np.abs(step - (x - phi * g))) <= 1e-12

    def test_diagonal_map_preconditions(self):
        d = np.array([2.0, 4.0])
        mirror = quadratic_map(m_diag=d)
        x = np.array([1.0, 1.0])
        g = np.array([1.0, 1.0])
        np.testing.assert_allclose(mirror_descent_step(mirror, x, g, 1.0),
                                   x - g / d, atol=1e-14)

    def test_entropy_map_multiplicative(self):
        mirror = entropy_map()
        x = np.array([0.5, 2.0])
        g = np.array([0.1, -0.2])
        got = mirror_descent_step(mirror, x, g, 0.7)
        np.testing.assert_allclose(got, x * np.exp(-0.7 * g), atol=1e-12)


class TestKalmanStep:
    def test_contracts_filter_state_with_phi(self):
        mirror = quadratic_map()
        y_hat = np.array([[1.0, 2.0], [3.0, 4.0]])
        phi = np.array([0.5, -0.25])
        x = np.zeros(2)
        got = kalman_gd_step(mirror, x, y_hat, phi)
        np.testing.assert_allclose(got, -(y_hat @ phi), atol=1e-14)


class TestMomentumStep:
    def test_polyak_recovery(self):
        # dtilde = 1, b = 1: the update is the classical two-coefficient
        # momentum recursion y' = p1 y + p2 g, x' = x - phi y'.
        mirror = quadratic_map()
        rng = np.random.default_rng(8)
        a_til = np.array([[0.9]])
        k_inf = np.array([0.4])
        p1 = 0.9 * (1.0 - 0.4)
        p2 = 0.4
        x = rng.standard_normal(3)
        y = np.zeros((3, 1))
        x_ref = x.copy()
        y_ref = np.zeros(3)
        for _ in range(1000):
            g = rng.standard_normal(3)
            phi = np.array([rng.uniform(0.0, 0.5)])
            x, y = generalized_momentum_step(mirror, x, y, g, a_til, k_inf, phi)
            y_ref = p1 * y_ref + p2 * g
            x_ref = x_ref - phi[0] * y_ref
            assert np.max(np.abs(y[:, 0] - y_ref)) <= 1e-12
            assert np.max(np.abs(x - x_ref)) <= 1e-12

    def test_explicit_b_vector(self):
        mirror = quadratic_map()
        a_til = np.array([[0.5, 0.1], [0.0, 0.7]])
        k_inf = np.array([0.3, 0.2])
        b = np.array([1.0, -1.0])
        y = np.array([[1.0, 2.0]])
        g = np.array([0.5])
        phi = np.array([0.1, 0.1])
        _, y_new = generalized_momentum_step(mirror, np.zeros(1), y, g, a_til,
                                             k_inf, phi, b_vec=b)
        p1 = a_til - np.outer(k_inf, b) @ a_til
        np.testing.assert_allclose(y_new, y @ p1.T + np.outer(g, k_inf),
                                    atol=1e-14)


class TestFlowStep:
    def test_identity_map_euler(self):
        mirror = quadratic_map()
        x = np.array([1.0, -2.0])
        eff = np.array([0.5, 0.5])
        got = fosp_flow_step(mirror, x, eff, alpha_t=math.log(2.0), dt=0.1)
        np.testing.assert_allclose(got, x - 0.1 * 2.0 * eff, atol=1e-14)

    def test_entropy_flow_exact_solution(self):
        # With a frozen effective term e the entropy flow is
        # dX = X (exp(-e) - 1) dt, solved by X0 exp((exp(-e) - 1) t).
        mirror = entropy_map()
        x0 = np.array([1.0, 2.0])
        eff = np.array([0.2, -0.3])
        cur = x0
        n, dt = 20_000, 1e-4
        for _ in range(n):
            cur = fosp_flow_step(mirror, cur, eff, 0.0, dt)
        expected = x0 * np.exp((np.exp(-eff) - 1.0) * n * dt)
        np.testing.assert_allclose(cur, expected, rtol=1e-3)


class TestMomentumCoordinates:
    @pytest.mark.parametrize("mirror", [quadratic_map(), entropy_map()],
                             ids=["quadratic", "entropy"])
    def test_round_trip(self, mirror):
        rng = np.random.default_rng(3)
        for _ in range(200):
            x = rng.uniform(0.5, 3.0, 3) if mirror.name == "entropy" \
                else rng.standard_normal(3)
            p = rng.standard_normal(3) * 0.5
            alpha_t = rng.uniform(-1.0, 1.0)
            gamma_t = rng.uniform(-1.0, 1.0)
            nu = nu_from_momentum(mirror, x, p, alpha_t, gamma_t)
            back = momentum_from_nu(mirror, x, nu, alpha_t, gamma_t)
            assert np.max(np.abs(back - p)) <= 1e-8 * (1.0 + np.max(np.abs(p)))


class TestRunOptimizer:
    def _martingale_spec(self, **kw):
        model = MartingaleGradientModel(sigma=0.5, n=100, m=25, d=3)
        defaults = dict(kind="mirror_sgd", mirror=quadratic_map(),
                        schedule=_scaling_linear(), model=model,
                        mode="synthetic")
        defaults.update(kw)
        return OptimizerSpec(**defaults)

    def test_synthetic_run_deterministic(self):
        spec = self._martingale_spec()
        t1 = run_optimizer(spec, None, 20, seed=5)
        t2 = run_optimizer(spec, None, 20, seed=5)
        np.testing.assert_array_equal(t1.x_path, t2.x_path)
        np.testing.assert_array_equal(t1.qv_path, t2.qv_path)
        assert t1.error is None

    def test_different_seeds_differ(self):
        spec = self._martingale_spec()
        t1 = run_optimizer(spec, None, 20, seed=1)
        t2 = run_optimizer(spec, None, 20, seed=2)
        assert np.max(np.abs(t1.x_path - t2.x_path)) > 0

    def test_synthetic_loss_gap_is_nan(self):
        traj = run_optimizer(self._martingale_spec(), None, 10, seed=0)
        assert np.all(np.isnan(traj.loss_gap))

    def test_zero_steps(self):
        traj = run_optimizer(self._martingale_spec(), None, 0, seed=0)
        assert traj.steps == 0
        assert traj.x_path.shape == (1, 3)

    def test_kernel_matches_generic_loop(self):
        # The fused kernel (diagonal quadratic map) and the generic mirror
        # loop (full-matrix map with the same diagonal) must agree.
        diag = np.array([1.0, 2.0, 0.5])
        spec_fast = self._martingale_spec(mirror=quadratic_map(m_diag=diag))
        spec_slow = self._martingale_spec(mirror=quadratic_map(m_full=np.diag(diag)))
        t_fast = run_optimizer(spec_fast, None, 20, seed=9)
        t_slow = run_optimizer(spec_slow, None, 20, seed=9)
        np.testing.assert_allclose(t_fast.x_path, t_slow.x_path, atol=1e-12)

    def test_empirical_quadratic_matches_manual_recursion(self):
        problem = generate_problem("quadratic", d=2, n=40,
                                   rng=component_rng(0, "problem"))
        spec = OptimizerSpec(kind="mirror_sgd", mirror=quadratic_map(),
                             schedule=_scaling_linear(), mode="empirical",
                             batch_m=10)
        traj = run_optimizer(spec, problem, 20, seed=3)
        assert traj.error is None
        coeff = 10 / 40
        x = np.zeros(2)
        for k in range(20):
            x = x - float(traj.phi_path[k]) * coeff * traj.g_path[k]
            np.testing.assert_allclose(traj.x_path[k + 1], x, atol=1e-12)

    def test_kalman_gd_synthetic_runs(self):
        model = StateSpaceGradientModel(a_mat=np.array([[1.0]]),
                                        l_mat=np.array([[1.0]]),
                                        b_vec=np.array([1.0]), sigma=0.5, d=2)
        spec = OptimizerSpec(kind="kalman_gd", mirror=quadratic_map(),
                             schedule=_scaling_linear(beta0=-1.0), model=model,
                             mode="synthetic")
        traj = run_optimizer(spec, None, 20, seed=7)
        assert traj.error is None
        assert np.all(np.isfinite(traj.x_path))
        assert traj.filter_mean_norm is not None

    def test_failed_run_records_error(self):
        problem = generate_problem("quadratic", d=2, n=10,
                                   rng=component_rng(0, "problem"))
        spec = OptimizerSpec(kind="mirror_sgd", mirror=quadratic_map(),
                             schedule=_scaling_linear(), mode="empirical",
                             batch_m=50)   # bigger than the dataset
        traj = run_optimizer(spec, problem, 10, seed=0)
        assert traj.error is not None
        assert traj.steps == 0

    def test_validation_errors(self):
        model = StateSpaceGradientModel(a_mat=np.eye(2), l_mat=np.eye(2),
                                        b_vec=np.array([1.0, 1.0]), sigma=1.0)
        with pytest.raises(ValueError):
            OptimizerSpec(kind="nope", mirror=quadratic_map(),
                          schedule=_scaling_linear()).validate()
        with pytest.raises(ValueError):
            OptimizerSpec(kind="polyak_momentum", mirror=quadratic_map(),
                          schedule=_scaling_linear(), model=model,
                          mode="synthetic").validate()
        varying_alpha = linear_schedule(alpha0=0.0, alpha1=0.5, gamma1=1.0,
                                        horizon_T=2.0)
        with pytest.raises(ValueError):
            OptimizerSpec(kind="generalized_momentum", mirror=quadratic_map(),
                          schedule=varying_alpha, model=model,
                          mode="synthetic").validate()
        with pytest.raises(ValueError):
            OptimizerSpec(kind="mirror_sgd", mirror=quadratic_map(),
                          schedule=_scaling_linear(), mode="empirical",
                          batch_m=None).validate()
