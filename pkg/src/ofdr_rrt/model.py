"""Linear system models, stacked environment dynamics, polytopic geometry and
scenario ingestion.

The environment state stacks the robot state on top of one translation vector
per obstacle::

    Z = [x; c_1; ...; c_n0],   Z+ = A_z Z + B_z u + G_z w,   y = C Z + H v

Obstacle translations live in position coordinates, so the per-obstacle state
dimension ``l`` equals the position dimension of the workspace.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

SYM_TOL = 1e-9
PSD_TOL = 1e-9


class ModelError(ValueError):
    """Inconsistent dimensions or invalid numeric data in a model object."""


class ScenarioError(ValueError):
    """A scenario file failed validation; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class RiskMode(str, enum.Enum):
    DETERMINISTIC = "deterministic"
    GAUSSIAN = "gaussian"
    DR = "dr"

    @classmethod
    def parse(cls, value: "str | RiskMode") -> "RiskMode":
        if isinstance(value, RiskMode):
            return value
        key = str(value).strip().lower()
        aliases = {"det": "deterministic", "none": "deterministic", "cc": "gaussian",
                   "chance": "gaussian", "distributionally_robust": "dr"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown risk mode {value!r}") from None


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def psd_repair(M: np.ndarray, tol: float = PSD_TOL, what: str = "matrix") -> np.ndarray:
    """Symmetrize ``M`` and clamp eigenvalues in ``[-tol, 0)`` to zero.

    Raises ModelError if the matrix is asymmetric beyond ``SYM_TOL`` or has an
    eigenvalue below ``-tol``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ModelError(f"{what} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ModelError(f"{what} has non-finite entries")
    if M.size and np.max(np.abs(M - M.T)) > SYM_TOL:
        raise ModelError(f"{what} is not symmetric")
    S = 0.5 * (M + M.T)
    if S.size == 0:
        return S
    lam = np.linalg.eigvalsh(S)[0]
    if lam < -tol:
        raise ModelError(f"{what} is not positive semidefinite (min eigenvalue {lam:.3e})")
    if lam < 0.0:
        w, V = np.linalg.eigh(S)
        S = (V * np.clip(w, 0.0, None)) @ V.T
        S = 0.5 * (S + S.T)
    return S


# ---------------------------------------------------------------------------
# linear models


@dataclass(frozen=True)
class LinearSystem:
    """x+ = A x + B u + G w."""

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        A, B, G = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (self.A, self.B, self.G))
        if A.shape[0] != A.shape[1]:
            raise ModelError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        if B.shape[0] != n or G.shape[0] != n:
            raise ModelError(f"B and G need {n} rows, got {B.shape} and {G.shape}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "G", _frozen(G))

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]

    @property
    def disturbance_dim(self) -> int:
        return self.G.shape[1]


def build_double_integrator(dt: float, dim: int = 2) -> LinearSystem:
    """Planar double integrator: state (position, velocity), force input, G = B."""
    if dt < 0:
        raise ModelError(f"dt must be nonnegative, got {dt}")
    I = np.eye(dim)
    Z = np.zeros((dim, dim))
    A = np.block([[I, dt * I], [Z, I]])
    B = np.vstack([0.5 * dt * dt * I, dt * I])
    return LinearSystem(A, B, B.copy())


@dataclass(frozen=True)
class OutputModel:
    """Robot output rows y_r = C_r x + H_r v_r."""

    C_r: np.ndarray
    H_r: np.ndarray

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C_r, dtype=float))
        H = np.atleast_2d(np.asarray(self.H_r, dtype=float))
        if C.shape[0] != H.shape[0]:
            raise ModelError(f"C_r and H_r row counts differ: {C.shape} vs {H.shape}")
        object.__setattr__(self, "C_r", _frozen(C))
        object.__setattr__(self, "H_r", _frozen(H))

    @classmethod
    def position_sensor(cls, n: int, d: int) -> "OutputModel":
        return cls(np.eye(d, n), np.eye(d))


@dataclass(frozen=True)
class EnvironmentModel:
    A_z: np.ndarray
    B_z: np.ndarray
    G_z: np.ndarray
    C: np.ndarray
    H: np.ndarray
    C_xr: np.ndarray
    n: int
    m: int
    l: int
    n_0: int
    n_w: int

    @property
    def state_dim(self) -> int:
        return self.A_z.shape[0]

    @property
    def output_dim(self) -> int:
        return self.C.shape[0]

    @property
    def noise_dim(self) -> int:
        return self.H.shape[1]

    @property
    def position_dim(self) -> int:
        return self.l

    def obstacle_slice(self, i: int) -> slice:
        start = self.n + i * self.l
        return slice(start, start + self.l)

    def stack_state(self, robot_mean, obstacle_means: Sequence) -> np.ndarray:
        parts = [np.asarray(robot_mean, dtype=float).ravel()]
        parts += [np.asarray(c, dtype=float).ravel() for c in obstacle_means]
        z = np.concatenate(parts)
        if z.size != self.state_dim:
            raise ModelError(f"stacked state has {z.size} entries, expected {self.state_dim}")
        return z

    def stack_cov(self, robot_cov, obstacle_covs: Sequence) -> np.ndarray:
        blocks = [np.atleast_2d(robot_cov)] + [np.atleast_2d(c) for c in obstacle_covs]
        S = _block_diag(blocks)
        if S.shape != (self.state_dim, self.state_dim):
            raise ModelError(f"stacked covariance has shape {S.shape}, expected {self.state_dim}")
        return S

    def process_noise_cov(self, robot_w_cov, obstacle_w_covs: Sequence | None = None) -> np.ndarray:
        if obstacle_w_covs is None:
            obstacle_w_covs = [np.zeros((self.l, self.l))] * self.n_0
        S = _block_diag([np.atleast_2d(robot_w_cov)] + [np.atleast_2d(c) for c in obstacle_w_covs])
        if S.shape[0] != self.G_z.shape[1]:
            raise ModelError(f"process noise has dimension {S.shape[0]}, G_z expects {self.G_z.shape[1]}")
        return S

    def measurement_noise_cov(self, robot_v_cov) -> np.ndarray:
        S = _block_diag([np.atleast_2d(robot_v_cov), np.zeros((self.l * self.n_0, self.l * self.n_0))])
        if S.shape[0] != self.noise_dim:
            raise ModelError(f"measurement noise has dimension {S.shape[0]}, H expects {self.noise_dim}")
        return S


def _block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def assemble_environment(sys: LinearSystem, obstacles: Sequence, obstacle_state_dim: int,
                         output_model: OutputModel | None = None) -> EnvironmentModel:
    """Stack the robot and ``len(obstacles)`` static-shape obstacles.

    Obstacles are observed noiselessly (C_O = I, H_O = 0); the robot rows come
    from ``output_model`` (default: position sensor with H_r = I).
    """
    n, m, n_w = sys.state_dim, sys.input_dim, sys.disturbance_dim
    n_0 = len(obstacles)
    l = int(obstacle_state_dim)
    if n_0 < 0 or l < 0:
        raise ModelError("obstacle count and state dimension must be nonnegative")
    if l > n:
        raise ModelError(f"obstacle state dimension {l} exceeds robot state dimension {n}")
    if output_model is None:
        output_model = OutputModel.position_sensor(n, l)
    if output_model.C_r.shape[1] != n:
        raise ModelError(f"C_r has {output_model.C_r.shape[1]} columns, robot state has {n}")
    s = l * n_0
    p = output_model.C_r.shape[0]

    A_z = _block_diag([sys.A, np.eye(s)])
    B_z = np.vstack([sys.B, np.zeros((s, m))])
    G_z = _block_diag([sys.G, np.eye(s)])
    C = _block_diag([output_model.C_r, np.eye(s)])
    H = _block_diag([output_model.H_r, np.zeros((s, s))])
    C_xr = np.hstack([np.eye(n), np.zeros((n, s))])
    if C.shape != (p + s, n + s):
        raise ModelError(f"output matrix shape {C.shape} does not match stacked state {n + s}")
    return EnvironmentModel(
        A_z=_frozen(A_z), B_z=_frozen(B_z), G_z=_frozen(G_z), C=_frozen(C), H=_frozen(H),
        C_xr=_frozen(C_xr), n=n, m=m, l=l, n_0=n_0, n_w=n_w,
    )


# ---------------------------------------------------------------------------
# distributions and geometry


@dataclass(frozen=True)
class MomentAmbiguity:
    """All distributions with the given mean and covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).ravel()
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ModelError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "covariance", _frozen(psd_repair(cov, what="covariance")))

    @classmethod
    def zero_mean(cls, cov) -> "MomentAmbiguity":
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls(np.zeros(cov.shape[0]), cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).ravel()
        hi = np.asarray(self.hi, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ModelError("box bounds have different lengths")
        if np.any(hi < lo):
            raise ModelError("box max is below min")
        object.__setattr__(self, "lo", _frozen(lo))
        object.__setattr__(self, "hi", _frozen(hi))

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def contains_box(self, other: "Box") -> bool:
        return bool(np.all(other.lo >= self.lo) and np.all(other.hi <= self.hi))


@dataclass(frozen=True)
class PolytopeObstacle:
    """Obstacle ``{x : A (x - c) <= b}`` with uncertain translation ``c``.

    Rows of ``A`` are normalized to unit length at construction; ``b`` is
    rescaled accordingly so every containment decision is unchanged.
    """

    A: np.ndarray
    b: np.ndarray
    translation_mean: np.ndarray
    translation_cov: np.ndarray = None
    id: str = ""
    process_cov: np.ndarray = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).ravel()
        if A.shape[0] == 0:
            raise ModelError("obstacle needs at least one halfspace")
        if b.size != A.shape[0]:
            raise ModelError(f"{A.shape[0]} normals but {b.size} offsets")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms <= 0) or not np.all(np.isfinite(norms)):
            raise ModelError("halfspace normals must be finite and nonzero")
        A = A / norms[:, None]
        b = b / norms
        d = A.shape[1]
        c = np.atleast_1d(np.asarray(self.translation_mean, dtype=float)).ravel()
        if c.size != d:
            raise ModelError(f"translation has {c.size} entries, normals have {d}")
        cov = np.zeros((d, d)) if self.translation_cov is None else self.translation_cov
        pcov = np.zeros((d, d)) if self.process_cov is None else self.process_cov
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        pcov = np.atleast_2d(np.asarray(pcov, dtype=float))
        if cov.shape != (d, d) or pcov.shape != (d, d):
            raise ModelError(f"translation covariances must be {d}x{d}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "translation_mean", _frozen(c))
        object.__setattr__(self, "translation_cov", _frozen(psd_repair(cov, what="translation covariance")))
        object.__setattr__(self, "process_cov", _frozen(psd_repair(pcov, what="translation process covariance")))

    @classmethod
    def box(cls, lo, hi, id: str = "", translation_cov=None) -> "PolytopeObstacle":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        d = lo.size
        I = np.eye(d)
        half = 0.5 * (hi - lo)
        return cls(np.vstack([I, -I]), np.concatenate([half, half]), 0.5 * (lo + hi),
                   translation_cov, id=id)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_halfspaces(self) -> int:
        return self.A.shape[0]

    @property
    def halfspaces(self) -> list[tuple[np.ndarray, float]]:
        return [(self.A[j], float(self.b[j])) for j in range(self.n_halfspaces)]

    def offsets(self, translation=None) -> np.ndarray:
        """Offsets of the translated polytope ``{x : A x <= b + A c}``."""
        c = self.translation_mean if translation is None else np.asarray(translation, dtype=float)
        return self.b + self.A @ c

    def contains(self, p, translation=None) -> bool:
        return bool(np.all(self.A @ np.asarray(p, dtype=float) <= self.offsets(translation)))

    def is_bounded(self) -> bool:
        # bounded iff the normals positively span the plane (no angular gap >= pi)
        if self.dim != 2:
            return True
        ang = np.sort(np.arctan2(self.A[:, 1], self.A[:, 0]))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
        return bool(np.max(gaps) < np.pi - 1e-12)

    def vertices(self, translation=None) -> np.ndarray:
        """Polygon vertices (counter-clockwise) of the translated 2D polytope."""
        if self.dim != 2:
            raise ModelError("vertex enumeration is only implemented in 2D")
        off = self.offsets(translation)
        pts = []
        h = self.n_halfspaces
        for i in range(h):
            for j in range(i + 1, h):
                M = self.A[[i, j]]
                if abs(np.linalg.det(M)) < 1e-12:
                    continue
                p = np.linalg.solve(M, off[[i, j]])
                if np.all(self.A @ p <= off + 1e-9):
                    pts.append(p)
        if not pts:
            return np.zeros((0, 2))
        pts = np.unique(np.round(np.array(pts), 12), axis=0)
        center = pts.mean(axis=0)
        order = np.argsort(np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0]))
        return pts[order]


def clip_segment(p0, p1, A: np.ndarray, offsets: np.ndarray) -> tuple[float, float] | None:
    """Parameter interval of the segment ``p0 + s (p1 - p0)``, ``s in [0, 1]``,
    inside ``{x : A x <= offsets}``; None if empty."""
    p0 = np.asarray(p0, dtype=float)
    d = np.asarray(p1, dtype=float) - p0
    lo, hi = 0.0, 1.0
    for a, off in zip(A, offsets):
        num = off - float(a @ p0)
        den = float(a @ d)
        if den == 0.0:
            if num < 0.0:
                return None
            continue
        s = num / den
        if den > 0.0:
            hi = min(hi, s)
        else:
            lo = max(lo, s)
        if lo > hi:
            return None
    return lo, hi


def segment_intersects_polytope(p0, p1, obs: PolytopeObstacle, at_translation=None) -> bool:
    """True iff the closed segment p0-p1 meets the closed translated polytope."""
    return clip_segment(p0, p1, obs.A, obs.offsets(at_translation)) is not None


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class PlannerConfig:
    gamma: float = 20.0
    mu_max: float = 1.0
    iterations: int = 1200
    steer_horizon: int = 5
    Q: np.ndarray = None
    R: np.ndarray = None
    seed: int = 0
    goal_bias: float = 0.0
    velocity_weight: float = 0.1

    def __post_init__(self):
        if self.Q is not None:
            object.__setattr__(self, "Q", _frozen(np.atleast_2d(self.Q)))
        if self.R is not None:
            object.__setattr__(self, "R", _frozen(np.atleast_2d(self.R)))


@dataclass(frozen=True)
class Scenario:
    system: LinearSystem
    environment: EnvironmentModel
    bounds: Box
    obstacles: tuple[PolytopeObstacle, ...]
    goal: Box
    initial_belief: MomentAmbiguity
    noise_w: MomentAmbiguity
    noise_v: MomentAmbiguity
    risk_mode: RiskMode
    alpha: float
    planner: PlannerConfig
    gaps: tuple[tuple[str, Box], ...] = ()
    name: str = ""
    digest: str = ""

    @property
    def position_dim(self) -> int:
        return self.bounds.dim

    @property
    def steer_horizon(self) -> int:
        return self.planner.steer_horizon

    def with_mode(self, mode) -> "Scenario":
        import dataclasses
        return dataclasses.replace(self, risk_mode=RiskMode.parse(mode))

    def with_seed(self, seed: int) -> "Scenario":
        import dataclasses
        return dataclasses.replace(self, planner=dataclasses.replace(self.planner, seed=int(seed)))

    def with_iterations(self, iterations: int) -> "Scenario":
        import dataclasses
        return dataclasses.replace(self, planner=dataclasses.replace(self.planner, iterations=int(iterations)))

    # stacked environment moments
    def environment_mean(self) -> np.ndarray:
        return self.environment.stack_state(self.initial_belief.mean,
                                            [o.translation_mean for o in self.obstacles])

    def environment_cov(self) -> np.ndarray:
        return self.environment.stack_cov(self.initial_belief.covariance,
                                          [o.translation_cov for o in self.obstacles])

    def process_noise_cov(self) -> np.ndarray:
        return self.environment.process_noise_cov(self.noise_w.covariance,
                                                  [o.process_cov for o in self.obstacles])

    def measurement_noise_cov(self) -> np.ndarray:
        return self.environment.measurement_noise_cov(self.noise_v.covariance)


def validate_scenario(sc: Scenario) -> None:
    if not (0.0 < sc.alpha <= 0.5):
        raise ScenarioError("risk.alpha", f"alpha out of (0, 0.5]: {sc.alpha}")
    p = sc.planner
    if p.steer_horizon < 1:
        raise ScenarioError("planner.steer_horizon", "steer horizon must be >= 1")
    if not p.gamma > 0:
        raise ScenarioError("planner.gamma", "gamma must be positive")
    if not p.mu_max > 0:
        raise ScenarioError("planner.mu_max", "mu_max must be positive")
    if p.iterations < 0:
        raise ScenarioError("planner.iterations", "iterations must be nonnegative")
    if not 0.0 <= p.goal_bias <= 1.0:
        raise ScenarioError("planner.goal_bias", "goal bias must lie in [0, 1]")
    if sc.goal.dim != sc.bounds.dim:
        raise ScenarioError("goal", "goal and bounds dimensions differ")
    if not sc.bounds.contains_box(sc.goal):
        raise ScenarioError("goal", "goal region must lie inside the environment bounds")


# --- JSON ingestion -------------------------------------------------------


def _get(obj: dict, key: str, path: str, default: Any = ...):
    if not isinstance(obj, dict):
        raise ScenarioError(path, "expected an object")
    if key not in obj:
        if default is ...:
            raise ScenarioError(f"{path}.{key}" if path else key, "missing required field")
        return default
    return obj[key]


def _number(x, path: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ScenarioError(path, f"expected a finite number, got {x!r}")
    return float(x)


def _vector(x, path: str, size: int | None = None) -> np.ndarray:
    if not isinstance(x, list):
        raise ScenarioError(path, "expected an array of numbers")
    v = np.array([_number(e, f"{path}[{i}]") for i, e in enumerate(x)])
    if size is not None and v.size != size:
        raise ScenarioError(path, f"dimension error: expected length {size}, got {v.size}")
    return v


def _matrix(x, path: str, shape: tuple[int | None, int | None] | None = None) -> np.ndarray:
    if not isinstance(x, list) or not x or not all(isinstance(r, list) for r in x):
        raise ScenarioError(path, "expected a nonempty row-major array of arrays")
    width = len(x[0])
    rows = []
    for i, r in enumerate(x):
        if len(r) != width:
            raise ScenarioError(f"{path}[{i}]", "ragged matrix rows")
        rows.append(_vector(r, f"{path}[{i}]"))
    M = np.array(rows)
    if shape is not None:
        for k, want in enumerate(shape):
            if want is not None and M.shape[k] != want:
                raise ScenarioError(path, f"dimension error: expected shape {shape}, got {M.shape}")
    return M


def _covariance(x, path: str, dim: int) -> np.ndarray:
    M = _matrix(x, path, (dim, dim))
    try:
        return psd_repair(M, what="covariance")
    except ModelError as exc:
        raise ScenarioError(path, str(exc)) from None


def _box(x, path: str, dim: int | None = None) -> Box:
    lo = _vector(_get(x, "min", path), f"{path}.min", dim)
    hi = _vector(_get(x, "max", path), f"{path}.max", lo.size)
    try:
        return Box(lo, hi)
    except ModelError as exc:
        raise ScenarioError(path, str(exc)) from None


def _system(x, path: str) -> LinearSystem:
    if not isinstance(x, dict):
        raise ScenarioError(path, "expected an object")
    if "double_integrator" in x:
        di = x["double_integrator"]
        dt = _number(_get(di, "dt", f"{path}.double_integrator"), f"{path}.double_integrator.dt")
        dim = int(_number(di.get("dim", 2), f"{path}.double_integrator.dim"))
        if dt < 0:
            raise ScenarioError(f"{path}.double_integrator.dt", "dt must be nonnegative")
        sys = build_double_integrator(dt, dim)
        disturbance = di.get("disturbance", "input")
        if disturbance == "state":
            sys = LinearSystem(sys.A, sys.B, np.eye(sys.state_dim))
        elif disturbance != "input":
            raise ScenarioError(f"{path}.double_integrator.disturbance",
                                f"expected 'input' or 'state', got {disturbance!r}")
        return sys
    A = _matrix(_get(x, "A", path), f"{path}.A")
    n = A.shape[0]
    B = _matrix(_get(x, "B", path), f"{path}.B", (n, None))
    G = _matrix(x.get("G", B.tolist()), f"{path}.G", (n, None))
    try:
        return LinearSystem(A, B, G)
    except ModelError as exc:
        raise ScenarioError(path, str(exc)) from None


def _obstacle(x, path: str, d: int, index: int) -> PolytopeObstacle:
    hs = _get(x, "halfspaces", path)
    if not isinstance(hs, list) or not hs:
        raise ScenarioError(f"{path}.halfspaces", "expected a nonempty list")
    A = np.array([_vector(_get(h, "a", f"{path}.halfspaces[{j}]"), f"{path}.halfspaces[{j}].a", d)
                  for j, h in enumerate(hs)])
    b = np.array([_number(_get(h, "b", f"{path}.halfspaces[{j}]"), f"{path}.halfspaces[{j}].b")
                  for j, h in enumerate(hs)])
    c = _vector(x.get("c_mean", [0.0] * d), f"{path}.c_mean", d)
    c_cov = _covariance(x.get("c_cov", np.zeros((d, d)).tolist()), f"{path}.c_cov", d)
    w_cov = _covariance(x.get("w_cov", np.zeros((d, d)).tolist()), f"{path}.w_cov", d)
    ident = x.get("id", f"obs{index}")
    try:
        obs = PolytopeObstacle(A, b, c, c_cov, id=str(ident), process_cov=w_cov)
    except ModelError as exc:
        raise ScenarioError(path, str(exc)) from None
    if not obs.is_bounded():
        raise ScenarioError(path, "polytope is unbounded")
    return obs


def parse_scenario(doc: dict, name: str = "", digest: str = "") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("", "scenario must be a JSON object")
    system = _system(_get(doc, "system", ""), "system")
    n, m = system.state_dim, system.input_dim

    bounds = _box(_get(doc, "bounds", ""), "bounds")
    d = bounds.dim
    if d > n:
        raise ScenarioError("bounds", f"dimension error: {d} position coordinates for a {n}-state system")
    goal = _box(_get(doc, "goal", ""), "goal", d)

    obstacles_doc = doc.get("obstacles", [])
    if not isinstance(obstacles_doc, list):
        raise ScenarioError("obstacles", "expected a list")
    obstacles = tuple(_obstacle(o, f"obstacles[{i}]", d, i) for i, o in enumerate(obstacles_doc))

    ib = _get(doc, "initial_belief", "")
    x0 = _vector(_get(ib, "mean", "initial_belief"), "initial_belief.mean", n)
    P0 = _covariance(_get(ib, "cov", "initial_belief"), "initial_belief.cov", n)

    output_doc = doc.get("output")
    if output_doc is None:
        output = OutputModel.position_sensor(n, d)
    else:
        C_r = _matrix(_get(output_doc, "C_r", "output"), "output.C_r", (None, n))
        H_r = _matrix(output_doc.get("H_r", np.eye(C_r.shape[0]).tolist()), "output.H_r", (C_r.shape[0], None))
        output = OutputModel(C_r, H_r)

    noise = _get(doc, "noise", "")
    w_cov = _covariance(_get(noise, "w_cov", "noise"), "noise.w_cov", system.disturbance_dim)
    v_cov = _covariance(_get(noise, "v_cov", "noise"), "noise.v_cov", output.H_r.shape[1])

    risk = _get(doc, "risk", "")
    try:
        mode = RiskMode.parse(_get(risk, "mode", "risk"))
    except ValueError as exc:
        raise ScenarioError("risk.mode", str(exc)) from None
    alpha = _number(_get(risk, "alpha", "risk"), "risk.alpha")
    if not (0.0 < alpha <= 0.5):
        raise ScenarioError("risk.alpha", f"alpha out of (0, 0.5]: {alpha}")

    pl = _get(doc, "planner", "")
    Q = _matrix(_get(pl, "Q", "planner"), "planner.Q", (n, n))
    R = _matrix(_get(pl, "R", "planner"), "planner.R", (m, m))
    try:
        Q = psd_repair(Q, what="Q")
        R = psd_repair(R, what="R")
    except ModelError as exc:
        raise ScenarioError("planner", str(exc)) from None
    if np.linalg.eigvalsh(R)[0] <= 0:
        raise ScenarioError("planner.R", "R must be positive definite")

    def _int(key, default=...):
        v = _get(pl, key, "planner", default)
        v = _number(v, f"planner.{key}")
        if v != int(v):
            raise ScenarioError(f"planner.{key}", "expected an integer")
        return int(v)

    config = PlannerConfig(
        gamma=_number(_get(pl, "gamma", "planner"), "planner.gamma"),
        mu_max=_number(_get(pl, "mu_max", "planner"), "planner.mu_max"),
        iterations=_int("iterations"),
        steer_horizon=_int("steer_horizon", 5),
        Q=Q, R=R,
        seed=_int("seed", 0),
        goal_bias=_number(pl.get("goal_bias", 0.0), "planner.goal_bias"),
        velocity_weight=_number(pl.get("velocity_weight", 0.1), "planner.velocity_weight"),
    )

    gaps = []
    for i, g in enumerate(doc.get("gaps", [])):
        gaps.append((str(g.get("name", f"gap{i}")), _box(g, f"gaps[{i}]", d)))

    env = assemble_environment(system, obstacles, d, output)
    sc = Scenario(
        system=system, environment=env, bounds=bounds, obstacles=obstacles, goal=goal,
        initial_belief=MomentAmbiguity(x0, P0),
        noise_w=MomentAmbiguity.zero_mean(w_cov),
        noise_v=MomentAmbiguity.zero_mean(v_cov),
        risk_mode=mode, alpha=alpha, planner=config, gaps=tuple(gaps),
        name=name, digest=digest,
    )
    validate_scenario(sc)
    return sc


def load_scenario(path) -> Scenario:
    """Read and validate a scenario JSON file.

    Raises ScenarioError (with the offending field path) on any schema,
    dimension or PSD violation; a missing file is reported as a ScenarioError
    with an empty path.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ScenarioError("", f"cannot read scenario {path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ScenarioError("", f"invalid JSON: {exc}") from None
    return parse_scenario(doc, name=path.stem, digest=hashlib.sha256(raw).hexdigest()[:16])


def bundled_scenario_path(name: str) -> Path:
    p = Path(__file__).parent / "scenarios" / (name if name.endswith(".json") else name + ".json")
    return p
