import math

import numpy as np
import pytest
from scipy.stats import norm

from conftest import box_obstacle, make_scenario
from ofdr_rrt import risk
from ofdr_rrt.model import PolytopeObstacle, RiskMode
from ofdr_rrt.risk import (
    RiskError,
    allocate_risk,
    dr_feasible,
    halfspace_satisfied,
    normal_quantile,
    obstacle_feasible,
    scale_factor,
)
from ofdr_rrt.steering import BeliefTrajectory

DET, GAU, DR = RiskMode.DETERMINISTIC, RiskMode.GAUSSIAN, RiskMode.DR
ALPHAS = np.linspace(0.001, 0.5, 102)[1:-1]


def test_scale_factor_examples():
    assert scale_factor(DR, 0.05) == pytest.approx(math.sqrt(19), abs=1e-12)
    assert scale_factor(DR, 0.05) == pytest.approx(4.35890, abs=1e-5)
    assert scale_factor(GAU, 0.05) == pytest.approx(1.64485, abs=1e-4)
    assert scale_factor(DR, 0.5) == 1.0
    assert scale_factor(GAU, 0.5) == pytest.approx(0.0, abs=1e-12)
    assert scale_factor(DET, 0.05) == 0.0
    assert scale_factor("det", 0.9) == 0.0


@pytest.mark.parametrize("alpha", [0.0, -0.1, 0.51, 1.0])
def test_scale_factor_rejects_alpha(alpha):
    for mode in (GAU, DR):
        with pytest.raises(RiskError):
            scale_factor(mode, alpha)


def test_kappa_ordering():
    for a in ALPHAS:
        assert scale_factor(DR, a) > scale_factor(GAU, a) > 0.0


def test_normal_quantile_against_scipy():
    for p in np.concatenate([np.logspace(-12, -1, 40), np.linspace(0.02, 0.98, 97),
                             1 - np.logspace(-12, -1, 40)]):
        assert normal_quantile(p) == pytest.approx(norm.ppf(p), abs=1e-8)
    with pytest.raises(RiskError):
        normal_quantile(1.0)


def _interval():
    """1D obstacle [-1, 0]; face 0 has normal +1 and offset 0."""
    return PolytopeObstacle([[1.0], [-1.0]], [0.0, 1.0], [0.0])


@pytest.mark.parametrize("mode,kappa", [(DR, 4.358898943540674), (GAU, 1.6448536269514722)])
def test_halfspace_1d_threshold(mode, kappa):
    obs = _interval()
    ok, margin = halfspace_satisfied([kappa + 1e-9], [[1.0]], obs, 0, mode, 0.05)
    assert ok and margin == pytest.approx(0.0, abs=1e-8)
    ok, _ = halfspace_satisfied([kappa - 1e-6], [[1.0]], obs, 0, mode, 0.05)
    assert not ok
    ok, margin = halfspace_satisfied([5.0], [[1.0]], obs, 0, mode, 0.05)
    assert margin == pytest.approx(5.0 - kappa, abs=1e-8)


def test_halfspace_uses_obstacle_covariance():
    obs = PolytopeObstacle([[1.0], [-1.0]], [0.0, 1.0], [0.0], translation_cov=[[0.75]])
    _, margin = halfspace_satisfied([3.0], [[0.25]], obs, 0, DR, 0.05)
    assert margin == pytest.approx(3.0 - math.sqrt(19), abs=1e-12)


def test_zero_covariance_collapses_to_deterministic():
    rng = np.random.default_rng(0)
    obs = PolytopeObstacle.box([0, 0], [1, 1])
    Z = np.zeros((2, 2))
    for x in rng.uniform(-1, 2, (200, 2)):
        for j in range(4):
            ref = halfspace_satisfied(x, Z, obs, j, DET, 0.05)
            for mode in (GAU, DR):
                assert halfspace_satisfied(x, Z, obs, j, mode, 0.05) == ref


def test_margin_monotone_in_alpha():
    obs = PolytopeObstacle.box([0, 0], [1, 1])
    D = np.array([[0.04, 0.01], [0.01, 0.02]])
    x = np.array([1.6, 0.3])
    for mode in (GAU, DR):
        margins = [halfspace_satisfied(x, D, obs, 0, mode, a)[1] for a in ALPHAS]
        assert np.all(np.diff(margins) >= 0)


def test_nesting_on_random_beliefs():
    rng = np.random.default_rng(7)
    obs = PolytopeObstacle.box([-0.5, -0.5], [0.5, 0.5], translation_cov=0.01 * np.eye(2))
    for _ in range(10_000):
        x = rng.uniform(-3, 3, 2)
        M = rng.normal(size=(2, 2))
        D = 0.1 * M @ M.T
        a = rng.uniform(0.001, 0.499)
        dr = obstacle_feasible(x, D, obs, DR, a)
        g = obstacle_feasible(x, D, obs, GAU, a)
        det = obstacle_feasible(x, D, obs, DET, a)
        assert (not dr or g) and (not g or det)


def test_obstacle_feasible_examples():
    obs = PolytopeObstacle.box([-1, -1], [1, 1])
    small = 1e-4 * np.eye(2)
    assert obstacle_feasible([5.0, 0.0], small, obs, DR, 0.05)
    for mode in (DET, GAU, DR):
        assert not obstacle_feasible([0.0, 0.0], small, obs, mode, 0.05)
        assert not obstacle_feasible([0.0, 0.0], np.zeros((2, 2)), obs, mode, 0.05)


@pytest.mark.parametrize("mode", [GAU, DR])
@pytest.mark.parametrize("sigma", [0.01, 0.1, 0.3])
def test_obstacle_feasible_at_kappa_sigma(mode, sigma):
    obs = PolytopeObstacle.box([-1, -1], [1, 1])
    kappa = scale_factor(mode, 0.05)
    D = sigma ** 2 * np.eye(2)
    dist = kappa * sigma
    assert obstacle_feasible([1 + dist + 1e-9, 0.0], D, obs, mode, 0.05)
    assert not obstacle_feasible([1 + dist - 1e-6, 0.0], D, obs, mode, 0.05)
    ok, margin = halfspace_satisfied([1 + dist, 0.0], D, obs, 0, mode, 0.05)
    assert margin == pytest.approx(0.0, abs=1e-12)


def test_allocate_risk_examples():
    assert allocate_risk(0.05, 5).alphas == pytest.approx((0.01,) * 5)
    assert allocate_risk(0.05, 1).alphas == (0.05,)
    a = allocate_risk(0.4, 8)
    assert a.alphas == pytest.approx((0.05,) * 8) and sum(a.alphas) <= 0.4 + 1e-15
    assert len(allocate_risk(0.05, 0)) == 0
    with pytest.raises(RiskError):
        allocate_risk(0.6, 2)


# -- dr_feasible over hand-built trajectories --------------------------------


def _trajectory(sc, positions, sigma=1e-3):
    """Joint trajectory with the given robot mean positions, static obstacles
    at their nominal translation and a small isotropic robot covariance."""
    n, d = 4, 2
    n0 = len(sc.obstacles)
    nz = n + d * n0
    P = np.asarray(positions, dtype=float)
    means = np.zeros((len(P), 2 * nz))
    means[:, :d] = P
    for i, o in enumerate(sc.obstacles):
        means[:, n + i * d: n + (i + 1) * d] = o.translation_mean
    means[:, nz:] = means[:, :nz]
    covs = np.zeros((len(P), 2 * nz, 2 * nz))
    covs[:, :d, :d] = sigma ** 2 * np.eye(d)
    return BeliefTrajectory(means, covs, n, d)


def test_dr_feasible_open_space():
    sc = make_scenario(obstacles=[box_obstacle([3, 0], [3.5, 0.5])])
    tr = _trajectory(sc, [[0.5, 0.5], [0.7, 0.7], [0.9, 0.9], [1.1, 1.1], [1.3, 1.3], [1.5, 1.5]])
    assert dr_feasible(tr, sc) is True
    assert dr_feasible(tr, sc) is True  # deterministic


def test_dr_feasible_short_circuits(monkeypatch):
    sc = make_scenario(obstacles=[box_obstacle([1.9, 1.9], [2.1, 2.1])])
    tr = _trajectory(sc, [[1.4, 1.4], [1.6, 1.6], [1.8, 1.8], [2.0, 2.0], [2.2, 2.2], [2.4, 2.4]])
    calls = []
    real = risk.obstacle_feasible

    def spy(x, *args, **kwargs):
        calls.append(tuple(np.round(x, 6)))
        return real(x, *args, **kwargs)

    monkeypatch.setattr(risk, "obstacle_feasible", spy)
    assert dr_feasible(tr, sc) is False
    assert calls[-1] == (2.0, 2.0)
    assert len(calls) == 3  # t = 1, 2, 3 only


def test_dr_feasible_segment_through_thin_box():
    sc = make_scenario(obstacles=[box_obstacle([1.95, 0.0], [2.05, 4.0])])
    obs = sc.obstacles[0]
    pts = [[1.0, 2.0], [1.25, 2.0], [1.5, 2.0], [2.5, 2.0], [2.75, 2.0], [3.0, 2.0]]
    tr = _trajectory(sc, pts)
    for p in pts:
        assert obstacle_feasible(p, 1e-6 * np.eye(2), obs, DR, sc.alpha)
    assert dr_feasible(tr, sc) is False


def test_dr_feasible_checks_bounds():
    sc = make_scenario()
    tr = _trajectory(sc, [[3.5, 3.5], [3.7, 3.7], [3.9, 3.9], [4.1, 4.1], [3.9, 3.9], [3.8, 3.8]])
    assert dr_feasible(tr, sc) is False


def test_dr_feasible_rejects_short_trajectory():
    sc = make_scenario()
    with pytest.raises(RiskError):
        dr_feasible(_trajectory(sc, [[1.0, 1.0]]), sc)
