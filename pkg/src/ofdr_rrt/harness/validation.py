"""Monte Carlo check of per-halfspace violation rates at a belief pose.

Positions are drawn relative to each obstacle's translation, with mean
``x - c_mean`` and covariance ``D + Sigma_c``, from one of three families:

* ``gaussian``: the normal distribution with those moments;
* ``student-t``: independent t(3) coordinates rescaled to unit variance, then
  colored by the covariance root;
* ``two-point``: for each halfspace, the distribution attaining the one-sided
  Chebyshev bound along that face. Along ``v = S^{1/2} a / ||S^{1/2} a||`` it
  puts mass ``beta = 1 / (1 + m^2)`` at ``-sqrt((1-beta)/beta)`` and the rest
  at ``sqrt(beta/(1-beta))``, where ``m`` is the face margin in units of the
  spread; orthogonal directions are Gaussian.

A halfspace is violated by a sample lying on the obstacle side of its face;
landing exactly on the face counts as a violation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..model import PolytopeObstacle, RiskMode, Scenario
from ..risk import allocate_risk, normal_quantile, psd_sqrt, scale_factor

FAMILIES = ("gaussian", "two-point", "student-t")
_ALIASES = {"normal": "gaussian", "two-point-worst-case": "two-point", "twopoint": "two-point",
            "worst-case": "two-point", "student-t3": "student-t", "t": "student-t", "t3": "student-t"}
VIOLATION_TOL = 1e-9
Z99 = normal_quantile(0.995)
T_DOF = 3


class ValidationError(ValueError):
    pass


def parse_family(name: str) -> str:
    key = _ALIASES.get(name.strip().lower(), name.strip().lower())
    if key not in FAMILIES:
        raise ValidationError(f"unknown noise family {name!r}; choose from {', '.join(FAMILIES)}")
    return key


@dataclass(frozen=True)
class Pose:
    mean: np.ndarray  # position mean
    cov: np.ndarray  # position covariance D
    label: str = ""


@dataclass(frozen=True)
class HalfspaceRate:
    obstacle: int
    face: int
    alpha_i: float
    margin: float  # tightened margin at the pose in the report's mode
    scaled_margin: float  # (a . m - b) / ||S^{1/2} a||
    violations: int
    rate: float
    half_width: float  # 99% normal-approximation half-width
    stderr: float  # standard error under the nominal rate alpha_i
    flagged: bool  # satisfied constraint whose rate exceeds alpha_i + 3 stderr


@dataclass(frozen=True)
class ValidationReport:
    family: str
    mode: RiskMode
    n_samples: int
    pose: Pose
    rates: tuple[HalfspaceRate, ...]

    @property
    def flagged(self) -> bool:
        return any(r.flagged for r in self.rates)

    def rate(self, obstacle: int, face: int) -> HalfspaceRate:
        for r in self.rates:
            if r.obstacle == obstacle and r.face == face:
                return r
        raise KeyError((obstacle, face))


def two_point_levels(beta: float) -> tuple[float, float]:
    """Low and high values of the zero-mean, unit-variance two-point law with P(low) = beta."""
    return -math.sqrt((1.0 - beta) / beta), math.sqrt(beta / (1.0 - beta))


def worst_case_beta(scaled_margin: float) -> float:
    return 1.0 / (1.0 + scaled_margin * scaled_margin) if scaled_margin > 0.0 else 0.5


def standard_samples(family: str, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    if family == "gaussian":
        return rng.standard_normal((n, d))
    if family == "student-t":
        return rng.standard_t(T_DOF, (n, d)) * math.sqrt((T_DOF - 2) / T_DOF)
    raise ValidationError(f"family {family!r} has no face-independent sampler")


def two_point_samples(rng: np.random.Generator, n: int, v: np.ndarray, beta: float) -> np.ndarray:
    lo, hi = two_point_levels(beta)
    xi = np.where(rng.random(n) < beta, lo, hi)
    g = rng.standard_normal((n, v.size))
    g -= np.outer(g @ v, v)
    return g + np.outer(xi, v)


def boundary_pose(obstacle: PolytopeObstacle, face: int, cov, mode, alpha_i: float,
                  label: str = "") -> Pose:
    """Pose whose tightened constraint for ``face`` holds with zero margin.

    The mean sits on the outward normal through the point of the face nearest
    the obstacle-frame origin."""
    a, b = obstacle.A[face], obstacle.b[face]
    S = np.asarray(cov, dtype=float) + obstacle.translation_cov
    spread = float(np.linalg.norm(psd_sqrt(S) @ a))
    kappa = scale_factor(mode, alpha_i)
    mean = obstacle.translation_mean + (b + kappa * spread) * a
    return Pose(mean, np.asarray(cov, dtype=float), label or f"boundary {RiskMode.parse(mode).value} face {face}")


def validate_pose(scenario: Scenario, pose: Pose, family: str, n_samples: int,
                  seed: int = 0, mode=None) -> ValidationReport:
    family = parse_family(family)
    if n_samples < 1:
        raise ValidationError("need at least one sample")
    mode = scenario.risk_mode if mode is None else RiskMode.parse(mode)
    rng = np.random.default_rng(seed)
    alloc = allocate_risk(scenario.alpha, len(scenario.obstacles))
    x = np.asarray(pose.mean, dtype=float)[: scenario.position_dim]
    D = np.asarray(pose.cov, dtype=float)
    rates = []
    for i, obs in enumerate(scenario.obstacles):
        alpha_i = alloc[i]
        kappa = scale_factor(mode, alpha_i)
        root = psd_sqrt(D + obs.translation_cov)
        m = x - obs.translation_mean
        shared = None if family == "two-point" else standard_samples(family, rng, n_samples, m.size)
        for j in range(obs.n_halfspaces):
            a, b = obs.A[j], obs.b[j]
            ra = root @ a
            spread = float(np.linalg.norm(ra))
            gap = float(a @ m - b)
            scaled = gap / spread if spread > 0 else math.copysign(math.inf, gap) if gap else 0.0
            if family == "two-point":
                if spread > 0:
                    z = two_point_samples(rng, n_samples, ra / spread, worst_case_beta(scaled))
                else:
                    z = np.zeros((n_samples, m.size))
            else:
                z = shared
            proj = gap + z @ ra
            count = int(np.count_nonzero(proj <= VIOLATION_TOL))
            p = count / n_samples
            margin = gap - kappa * spread
            stderr = math.sqrt(alpha_i * (1 - alpha_i) / n_samples)
            rates.append(HalfspaceRate(
                obstacle=i, face=j, alpha_i=alpha_i, margin=margin, scaled_margin=scaled,
                violations=count, rate=p, half_width=Z99 * math.sqrt(p * (1 - p) / n_samples),
                stderr=stderr,
                flagged=bool(mode is RiskMode.DR and margin >= -VIOLATION_TOL and p > alpha_i + 3 * stderr),
            ))
    return ValidationReport(family, mode, n_samples, pose, tuple(rates))
