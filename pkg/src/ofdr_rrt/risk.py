"""Probabilistic collision constraints in three regimes and the trajectory
feasibility check used by the planner.

Halfspace ``j`` of obstacle ``i`` is the face ``a . x <= b + a . c`` of the
obstacle translated by ``c``. The robot avoids the obstacle through that face
when the tightened constraint

    a . x_mean  >=  b + a . c_mean + kappa * || (D + Sigma_c)^{1/2} a ||

holds. ``kappa`` is zero for deterministic checks, the normal quantile of
``1 - alpha_i`` under a Gaussian assumption, and ``sqrt((1 - alpha_i) / alpha_i)``
for the worst case over all distributions with the given mean and covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelError, PolytopeObstacle, RiskMode, Scenario, psd_repair, segment_intersects_polytope

# Acklam's rational approximation of the inverse normal CDF
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


class RiskError(ValueError):
    pass


def normal_quantile(p: float) -> float:
    """Standard normal quantile; Acklam's approximation refined by one Halley step."""
    if not 0.0 < p < 1.0:
        raise RiskError(f"quantile level must lie in (0, 1), got {p}")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    # Halley refinement against the exact CDF
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def scale_factor(mode, alpha_i: float) -> float:
    """Tightening coefficient kappa for a single-halfspace risk ``alpha_i``."""
    mode = RiskMode.parse(mode)
    if mode is RiskMode.DETERMINISTIC:
        return 0.0
    if not 0.0 < alpha_i <= 0.5:
        raise RiskError(f"alpha out of (0, 0.5]: {alpha_i}")
    if mode is RiskMode.DR:
        return math.sqrt((1.0 - alpha_i) / alpha_i)
    return max(normal_quantile(1.0 - alpha_i), 0.0)


@dataclass(frozen=True)
class RiskAllocation:
    alpha_total: float
    alphas: tuple[float, ...]

    def __post_init__(self):
        if sum(self.alphas) > self.alpha_total * (1 + 1e-12):
            raise RiskError("allocated risk exceeds the budget")
        for a in self.alphas:
            if not 0.0 < a <= 0.5:
                raise RiskError(f"per-obstacle alpha out of (0, 0.5]: {a}")

    def __len__(self):
        return len(self.alphas)

    def __getitem__(self, i):
        return self.alphas[i]


def allocate_risk(alpha: float, n_0: int) -> RiskAllocation:
    if not 0.0 < alpha <= 0.5:
        raise RiskError(f"alpha out of (0, 0.5]: {alpha}")
    if n_0 <= 0:
        return RiskAllocation(alpha, ())
    return RiskAllocation(alpha, (alpha / n_0,) * n_0)


def psd_sqrt(S) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition."""
    try:
        S = psd_repair(S, what="constraint covariance")
    except ModelError as exc:
        raise RiskError(str(exc)) from None
    w, V = np.linalg.eigh(S)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


@dataclass(frozen=True)
class TightenedHalfspace:
    normal: np.ndarray
    offset: float  # b + a . c_mean
    c_mean: np.ndarray
    cov: np.ndarray  # D + Sigma_c
    kappa: float
    margin: float

    @property
    def satisfied(self) -> bool:
        return self.margin >= 0.0


def _obstacle_moments(obstacle: PolytopeObstacle, c_mean, c_cov):
    c = obstacle.translation_mean if c_mean is None else np.asarray(c_mean, dtype=float)
    Sc = obstacle.translation_cov if c_cov is None else np.asarray(c_cov, dtype=float)
    return c, Sc


def tighten(x_mean, D, obstacle: PolytopeObstacle, j: int, mode, alpha_i: float,
            c_mean=None, c_cov=None) -> TightenedHalfspace:
    """Evaluate the tightened constraint for face ``j``; positions only."""
    d = obstacle.dim
    x = np.asarray(x_mean, dtype=float).ravel()[:d]
    D = np.atleast_2d(np.asarray(D, dtype=float))[:d, :d]
    c, Sc = _obstacle_moments(obstacle, c_mean, c_cov)
    kappa = scale_factor(mode, alpha_i)
    a = obstacle.A[j]
    S = D + Sc
    offset = float(obstacle.b[j] + a @ c)
    spread = float(np.linalg.norm(psd_sqrt(S) @ a)) if kappa > 0.0 else 0.0
    margin = float(a @ x) - offset - kappa * spread
    return TightenedHalfspace(a, offset, c, S, kappa, margin)


def halfspace_satisfied(x_mean, D, obstacle: PolytopeObstacle, j: int, mode, alpha_i: float,
                        c_mean=None, c_cov=None) -> tuple[bool, float]:
    h = tighten(x_mean, D, obstacle, j, mode, alpha_i, c_mean, c_cov)
    return h.satisfied, h.margin


def obstacle_feasible(x_mean, D, obstacle: PolytopeObstacle, mode, alpha_i: float,
                      c_mean=None, c_cov=None) -> bool:
    """True iff some face keeps the robot outside the obstacle with risk alpha_i."""
    d = obstacle.dim
    x = np.asarray(x_mean, dtype=float).ravel()[:d]
    c, Sc = _obstacle_moments(obstacle, c_mean, c_cov)
    kappa = scale_factor(mode, alpha_i)
    offsets = obstacle.b + obstacle.A @ c
    lhs = obstacle.A @ x - offsets
    if kappa > 0.0:
        root = psd_sqrt(np.atleast_2d(np.asarray(D, dtype=float))[:d, :d] + Sc)
        lhs = lhs - kappa * np.linalg.norm(obstacle.A @ root, axis=1)
    return bool(np.any(lhs >= 0.0))


def dr_feasible(traj, scenario: Scenario, allocation: RiskAllocation | None = None) -> bool:
    """Check steps 1..T of a belief trajectory against every obstacle and the bounds.

    Each step needs the tightened constraint for every obstacle, the mean
    segment from the previous step clear of every mean-translated obstacle,
    and the mean position inside the environment bounds. Returns at the first
    failing step.
    """
    T = traj.horizon
    if T < 1 or traj.covs.shape[0] != T + 1:
        raise RiskError("trajectory must hold T+1 >= 2 beliefs")
    mode = scenario.risk_mode
    if allocation is None:
        allocation = allocate_risk(scenario.alpha, len(scenario.obstacles))
    pos = traj.positions
    pcov = traj.position_covs
    bounds = scenario.bounds
    for t in range(1, T + 1):
        for i, obs in enumerate(scenario.obstacles):
            c_t = traj.obstacle_means(i)[t]
            if not obstacle_feasible(pos[t], pcov[t], obs, mode, allocation[i],
                                     c_mean=c_t, c_cov=traj.obstacle_covs(i)[t]):
                return False
            if segment_intersects_polytope(pos[t - 1], pos[t], obs, at_translation=c_t):
                return False
        if not bounds.contains(pos[t]):
            return False
    return True
