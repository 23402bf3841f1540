import math

import numpy as np
import pytest

from conftest import make_scenario
from ofdr_rrt.model import LinearSystem, OutputModel, assemble_environment
from ofdr_rrt.steering import (
    SteeringModel,
    kalman_gain_sequence,
    lqr_backward,
    root_belief,
    steer,
)


def scalar_env():
    sys = LinearSystem([[1.0]], [[1.0]], [[1.0]])
    return assemble_environment(sys, [], 1, OutputModel([[1.0]], [[1.0]]))


def test_lqr_scalar_gains():
    g = lqr_backward([[1.0]], [[1.0]], 1, [0.0], scalar_env())
    assert g.K[0, 0, 0] == pytest.approx(-0.5, abs=1e-12)
    assert g.k[0, 0] == pytest.approx(0.0, abs=1e-12)
    g2 = lqr_backward([[1.0]], [[1.0]], 1, [2.0], scalar_env())
    assert g2.q[1, 0] == pytest.approx(-2.0, abs=1e-12)
    assert g2.k[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert g2.P[1, 0, 0] == 1.0


def test_lqr_zero_target_has_zero_affine_terms(reference):
    env = reference.environment
    g = lqr_backward(reference.planner.Q, reference.planner.R, 5, np.zeros(4), env)
    assert not np.any(g.k)
    assert not np.any(g.q)


def _mean_cost(env, Q, R, K, k, x0, x_s):
    """Deterministic part of the quadratic steering cost along the mean."""
    Cx = env.C_xr
    z = x0.copy()
    J = 0.0
    for t in range(K.shape[0]):
        e = Cx @ z - x_s
        u = K[t] @ z + k[t]
        J += e @ Q @ e + u @ R @ u
        z = env.A_z @ z + env.B_z @ u
    e = Cx @ z - x_s
    return J + e @ Q @ e


@pytest.mark.parametrize("which", ["scalar", "reference"])
def test_lqr_perturbations_never_help(which, reference):
    if which == "scalar":
        env, Q, R = scalar_env(), np.eye(1), np.eye(1)
        x0, x_s, T = np.array([0.7]), np.array([2.0]), 3
    else:
        env, Q, R = reference.environment, reference.planner.Q, reference.planner.R
        x0 = reference.environment_mean() + np.r_[0.1, -0.2, 0.3, 0.0, np.zeros(10)]
        x_s, T = np.array([0.6, 0.4, 0.0, 0.0]), 5
    g = lqr_backward(Q, R, T, x_s, env)
    base = _mean_cost(env, Q, R, g.K, g.k, x0, x_s)
    for arr_name in ("K", "k"):
        arr = getattr(g, arr_name)
        for idx in np.ndindex(arr.shape):
            if arr_name == "K" and idx[2] >= env.n:
                continue  # obstacle columns only see constant states
            for delta in (1e-3, -1e-3):
                K, k = np.array(g.K), np.array(g.k)
                (K if arr_name == "K" else k)[idx] += delta
                assert _mean_cost(env, Q, R, K, k, x0, x_s) >= base - 1e-12


def test_kf_scalar_step():
    L, S = kalman_gain_sequence(scalar_env(), [[1.0]], [[1.0]], [[1.0]], 1)
    assert L[0, 0, 0] == pytest.approx(2 / 3, abs=1e-15)
    assert S[0, 0, 0] == pytest.approx(2 / 3, abs=1e-15)


def test_kf_fixed_point():
    _, S = kalman_gain_sequence(scalar_env(), [[1.0]], [[1.0]], [[1.0]], 200)
    # independent oracle: iterate the scalar fixed-point map
    s = 1.0
    for _ in range(200):
        s = (s + 1) / (s + 2)
    assert S[-1, 0, 0] == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-9)
    assert S[-1, 0, 0] == pytest.approx(s, abs=1e-12)


def test_kf_perfect_measurement():
    sys = LinearSystem(np.eye(2), np.eye(2), np.eye(2))
    env = assemble_environment(sys, [], 2, OutputModel(np.eye(2), np.eye(2)))
    L, S = kalman_gain_sequence(env, np.eye(2), np.eye(2), np.zeros((2, 2)), 3)
    np.testing.assert_allclose(L[0], np.eye(2), atol=1e-9)
    np.testing.assert_allclose(S[0], 0.0, atol=1e-9)


def test_kf_covariance_is_bracketed():
    rng = np.random.default_rng(5)
    sys = LinearSystem(np.array([[1, 0.1], [0, 1]]), np.array([[0.0], [0.1]]), np.eye(2))
    env = assemble_environment(sys, [], 1, OutputModel([[1.0, 0.0]], [[1.0]]))
    S0 = np.diag([0.5, 0.2])
    Sw = np.diag([0.01, 0.02])
    _, open_loop = kalman_gain_sequence(env, S0, Sw, [[1e12]], 6)
    _, exact = kalman_gain_sequence(env, S0, Sw, [[0.0]], 6)
    P = S0
    for t in range(6):
        P = env.A_z @ P @ env.A_z.T + Sw
        np.testing.assert_allclose(open_loop[t], P, rtol=1e-6)
    assert np.all(np.abs(exact[:, 0, 0]) < 1e-9)
    for sv in rng.uniform(1e-4, 10, 5):
        _, mid = kalman_gain_sequence(env, S0, Sw, [[sv]], 6)
        for t in range(6):
            assert np.linalg.eigvalsh(open_loop[t] - mid[t])[0] >= -1e-9
            assert np.linalg.eigvalsh(mid[t] - exact[t])[0] >= -1e-9


def _noiseless():
    doc_overrides = {"noise": {"w_cov": np.zeros((2, 2)).tolist(), "v_cov": np.zeros((2, 2)).tolist()},
                     "initial_belief": {"mean": [0.5, 0.5, 0.0, 0.0], "cov": np.zeros((4, 4)).tolist()}}
    return make_scenario(**doc_overrides)


def test_noiseless_steer_has_zero_covariance():
    sc = _noiseless()
    mean, cov = root_belief(sc)
    x_s = np.array([1.5, 1.0, 0.0, 0.0])
    tr = steer(mean, cov, x_s, sc)
    assert np.all(tr.covs == 0)
    # direct simulation of the deterministic closed loop
    g = lqr_backward(sc.planner.Q, sc.planner.R, 5, x_s, sc.environment)
    z = sc.environment_mean()
    for t in range(5):
        z = sc.environment.A_z @ z + sc.environment.B_z @ (g.K[t] @ z + g.k[t])
        np.testing.assert_allclose(tr.means[t + 1, : z.size], z, atol=1e-12)
        np.testing.assert_allclose(tr.means[t + 1, z.size:], z, atol=1e-12)


def test_steer_to_own_position_stays_put():
    sc = _noiseless()
    mean, cov = root_belief(sc)
    tr = steer(mean, cov, np.array([0.5, 0.5, 0.0, 0.0]), sc)
    assert np.linalg.norm(tr.positions[-1] - tr.positions[0]) <= 1e-6
    tr2 = steer(mean, cov, [0.5, 0.5], sc)  # position-only target is lifted
    np.testing.assert_array_equal(tr.means, tr2.means)


def _random_psd(rng, k, scale):
    M = rng.normal(size=(k, k))
    return (scale * M @ M.T / k).tolist()


def test_covariances_symmetric_psd_random():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        A = np.eye(4) + np.diag([0.1, 0.1], 2) + rng.normal(scale=0.05, size=(4, 4))
        B = rng.normal(scale=0.1, size=(4, 2))
        G = rng.normal(scale=0.1, size=(4, 2))
        sc = make_scenario(
            system={"A": A.tolist(), "B": B.tolist(), "G": G.tolist()},
            initial_belief={"mean": [0.5, 0.5, 0, 0], "cov": _random_psd(rng, 4, 0.1)},
            noise={"w_cov": _random_psd(rng, 2, 0.1), "v_cov": _random_psd(rng, 2, 1e-3)},
        )
        mean, cov = root_belief(sc)
        tr = steer(mean, cov, rng.uniform(0, 4, 2), sc)
        for P in tr.covs:
            assert np.max(np.abs(P - P.T)) <= 1e-9
            assert np.linalg.eigvalsh(P)[0] >= -1e-9


def monte_carlo_joint(sc, x_s, n_samples, seed=0):
    """Independent closed-loop simulation: true state, noisy outputs, Kalman estimate."""
    rng = np.random.default_rng(seed)
    env = sc.environment
    T = sc.planner.steer_horizon
    lqr = lqr_backward(sc.planner.Q, sc.planner.R, T, x_s, env)
    Sw, Sv = sc.process_noise_cov(), sc.measurement_noise_cov()
    L, _ = kalman_gain_sequence(env, sc.environment_cov(), Sw, Sv, T)
    z_mean, z_cov = sc.environment_mean(), sc.environment_cov()

    def draw(cov, k):
        w, V = np.linalg.eigh(cov)
        return rng.standard_normal((k, cov.shape[0])) @ (V * np.sqrt(np.clip(w, 0, None))).T

    Z = z_mean + draw(z_cov, n_samples)
    E = np.tile(z_mean, (n_samples, 1))
    A, B, G, C, H = env.A_z, env.B_z, env.G_z, env.C, env.H
    for t in range(T):
        U = E @ lqr.K[t].T + lqr.k[t]
        Z = Z @ A.T + U @ B.T + draw(Sw, n_samples) @ G.T
        Y = Z @ C.T + draw(Sv, n_samples) @ H.T
        pred = E @ A.T + U @ B.T
        E = pred + (Y - pred @ C.T) @ L[t].T
    return np.hstack([Z, E])


def test_monte_carlo_marginals(reference):
    x_s = np.array([0.6, 0.4, 0.0, 0.0])
    mean, cov = root_belief(reference)
    tr = steer(mean, cov, x_s, reference)
    S = monte_carlo_joint(reference, x_s, 100_000, seed=1)
    emp = np.cov(S, rowvar=False)
    sel = tr.selector()
    robot = sel @ tr.covs[-1] @ sel.T
    np.testing.assert_allclose(robot, tr.robot_covs[-1])
    err = np.linalg.norm(np.cov(S[:, :4], rowvar=False) - robot) / np.linalg.norm(robot)
    assert err < 0.05
    np.testing.assert_allclose(S.mean(axis=0)[:4], tr.robot_means[-1], atol=0.01)
    assert np.linalg.norm(emp - tr.covs[-1]) / np.linalg.norm(tr.covs[-1]) < 0.05


def test_model_shares_gains_across_targets(reference):
    model = SteeringModel(reference)
    mean, cov = root_belief(reference)
    p = model.propagator(mean, cov)
    x_s = np.array([0.3, -0.05, 0.0, 0.0])
    tr = p.trajectory(x_s)
    np.testing.assert_allclose(tr.means, p.free + p.gamma @ x_s, atol=1e-12)
    gains = p.gains(x_s)
    assert gains.horizon == 5 and np.all(np.isfinite(gains.k))
