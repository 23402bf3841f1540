"""LQG steering: finite-horizon LQR gains toward a target state, Kalman filter
gains, and exact propagation of the joint (true state, estimate) moments.

The joint state is ``[Z; Z_est]`` of dimension ``2 * nz``. With the policy
``u_t = K_t Z_est_t + k_t`` and filter gain ``L_{t+1}``::

    Abar_t = [[A,            B K_t               ],
              [L C A,        (I - L C) A + B K_t ]]
    Bbar   = [[B], [B]]
    Gbar_t = [[G,            0    ],
              [L C G,        L H  ]]

    mean_{t+1} = Abar_t mean_t + Bbar k_t
    Pi_{t+1}   = Abar_t Pi_t Abar_t' + Gbar_t blkdiag(Sw, Sv) Gbar_t'

Only first and second moments are propagated, so the result holds for any
noise distributions with the given covariances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EnvironmentModel, ModelError, Scenario, psd_repair

INNOVATION_COND_LIMIT = 1e12
INNOVATION_REG = 1e-12


class SteeringError(RuntimeError):
    pass


def _ro(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# LQR


@dataclass(frozen=True)
class LqrSolution:
    """Target-independent part of the backward recursion.

    The affine terms are linear in the target: ``k_t = F_t x_s`` and
    ``q_t = W_t x_s``.
    """

    K: np.ndarray  # (T, m, nz)
    F: np.ndarray  # (T, m, n)
    P: np.ndarray  # (T+1, nz, nz)
    W: np.ndarray  # (T+1, nz, n)

    @property
    def horizon(self) -> int:
        return self.K.shape[0]


@dataclass(frozen=True)
class LqrGains:
    K: np.ndarray  # (T, m, nz)
    k: np.ndarray  # (T, m)
    P: np.ndarray  # (T+1, nz, nz)
    q: np.ndarray  # (T+1, nz)


def solve_lqr(Q, R, T: int, env: EnvironmentModel) -> LqrSolution:
    """Backward recursion with the robot-state weight lifted to the stacked state.

    Error coordinates are e_t = C_xr Z_t - x_s, so the stacked weight is
    C_xr' Q C_xr and the terminal linear term is q_T = -C_xr' Q x_s.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if T < 1:
        raise SteeringError("horizon must be at least 1")
    A, B, Cx = env.A_z, env.B_z, env.C_xr
    nz, m, n = env.state_dim, env.m, env.n
    if Q.shape != (n, n) or R.shape != (m, m):
        raise SteeringError(f"weights must be {n}x{n} and {m}x{m}, got {Q.shape} and {R.shape}")
    Qz = Cx.T @ Q @ Cx
    QzX = Cx.T @ Q  # maps x_s to the stacked linear weight

    K = np.zeros((T, m, nz))
    F = np.zeros((T, m, n))
    P = np.zeros((T + 1, nz, nz))
    W = np.zeros((T + 1, nz, n))
    P[T] = Qz
    W[T] = -QzX
    I = np.eye(nz)
    for t in range(T - 1, -1, -1):
        Pn, Wn = P[t + 1], W[t + 1]
        beta = R + B.T @ Pn @ B
        try:
            beta_inv = np.linalg.inv(beta)
        except np.linalg.LinAlgError:
            raise SteeringError(f"singular control Hessian at t={t}") from None
        K[t] = -beta_inv @ B.T @ Pn @ A
        F[t] = -beta_inv @ B.T @ Wn
        Pt = Qz + A.T @ Pn @ (I - B @ beta_inv @ B.T @ Pn) @ A
        P[t] = 0.5 * (Pt + Pt.T)
        # (K' beta + A' P B) vanishes analytically; kept to mirror the recursion
        W[t] = (A + B @ K[t]).T @ Wn + (K[t].T @ beta + A.T @ Pn @ B) @ F[t] - QzX
    return LqrSolution(_ro(K), _ro(F), _ro(P), _ro(W))


def lqr_backward(Q, R, T: int, x_s, env: EnvironmentModel) -> LqrGains:
    sol = solve_lqr(Q, R, T, env)
    x_s = np.asarray(x_s, dtype=float).ravel()
    k = sol.F @ x_s
    q = sol.W @ x_s
    return LqrGains(sol.K, _ro(k), sol.P, _ro(q))


# ---------------------------------------------------------------------------
# Kalman filter


def _innovation_inverse(S: np.ndarray) -> np.ndarray:
    S = 0.5 * (S + S.T)
    if S.size:
        w = np.linalg.eigvalsh(S)
        if w[-1] <= 0 or w[0] <= w[-1] / INNOVATION_COND_LIMIT:
            S = S + INNOVATION_REG * np.eye(S.shape[0])
    try:
        Sinv = np.linalg.inv(S)
    except np.linalg.LinAlgError:
        raise SteeringError("innovation covariance is singular after regularization") from None
    if not np.all(np.isfinite(Sinv)):
        raise SteeringError("innovation covariance is singular after regularization")
    return Sinv


def kalman_gain_sequence(env: EnvironmentModel, Sigma_init, Sigma_w, Sigma_v, T: int):
    """Predict-update recursion; returns (L_1..L_T, Sigma_1..Sigma_T) as arrays.

    The gain is formed from the predicted covariance, which keeps the update
    ``(I - L C) Sigma^-`` symmetric PSD and optimal.
    """
    A, G, C, H = env.A_z, env.G_z, env.C, env.H
    Sigma = np.asarray(Sigma_init, dtype=float)
    Qw = G @ np.asarray(Sigma_w, dtype=float) @ G.T
    Rv = H @ np.asarray(Sigma_v, dtype=float) @ H.T
    nz = env.state_dim
    I = np.eye(nz)
    Ls = np.zeros((T, nz, C.shape[0]))
    Sigmas = np.zeros((T, nz, nz))
    for t in range(T):
        pred = A @ Sigma @ A.T + Qw
        pred = 0.5 * (pred + pred.T)
        L = pred @ C.T @ _innovation_inverse(C @ pred @ C.T + Rv)
        Sigma = (I - L @ C) @ pred
        Sigma = 0.5 * (Sigma + Sigma.T)
        Ls[t] = L
        Sigmas[t] = Sigma
    return _ro(Ls), _ro(Sigmas)


# ---------------------------------------------------------------------------
# joint propagation


@dataclass(frozen=True)
class SteeringGains:
    K: np.ndarray  # (T, m, nz), acting on the estimate
    k: np.ndarray  # (T, m)
    L: np.ndarray  # (T, nz, p): L[t] is the gain used at step t+1

    @property
    def horizon(self) -> int:
        return self.K.shape[0]


@dataclass(frozen=True)
class BeliefTrajectory:
    """T+1 joint means and covariances of ``[Z; Z_est]``."""

    means: np.ndarray  # (T+1, 2 nz)
    covs: np.ndarray  # (T+1, 2 nz, 2 nz)
    n: int  # robot state dimension
    d: int  # position dimension

    @property
    def horizon(self) -> int:
        return self.means.shape[0] - 1

    @property
    def nz(self) -> int:
        return self.means.shape[1] // 2

    @property
    def robot_means(self) -> np.ndarray:
        return self.means[:, : self.n]

    @property
    def robot_covs(self) -> np.ndarray:
        return self.covs[:, : self.n, : self.n]

    @property
    def positions(self) -> np.ndarray:
        return self.means[:, : self.d]

    @property
    def position_covs(self) -> np.ndarray:
        return self.covs[:, : self.d, : self.d]

    @property
    def estimate_means(self) -> np.ndarray:
        return self.means[:, self.nz: self.nz + self.n]

    def obstacle_means(self, i: int) -> np.ndarray:
        s = self.n + i * self.d
        return self.means[:, s: s + self.d]

    def obstacle_covs(self, i: int) -> np.ndarray:
        s = self.n + i * self.d
        return self.covs[:, s: s + self.d, s: s + self.d]

    @property
    def terminal_mean(self) -> np.ndarray:
        return self.means[-1]

    @property
    def terminal_cov(self) -> np.ndarray:
        return self.covs[-1]

    def selector(self, rows: slice | None = None) -> np.ndarray:
        """Selection matrix extracting the robot state (or a slice of it) from the joint state."""
        S = np.zeros((self.n, 2 * self.nz))
        S[:, : self.n] = np.eye(self.n)
        return S if rows is None else S[rows]


def root_belief(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Joint mean [Z0; Z0] and covariance blkdiag(Sigma_Z0, 0)."""
    z0 = scenario.environment_mean()
    P0 = scenario.environment_cov()
    nz = z0.size
    Pi0 = np.zeros((2 * nz, 2 * nz))
    Pi0[:nz, :nz] = P0
    return np.concatenate([z0, z0]), Pi0


def lift_target(x, n: int) -> np.ndarray:
    """Full robot-state target; a position-only point gets zero velocity."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == n:
        return x
    out = np.zeros(n)
    out[: x.size] = x
    return out


class SteeringModel:
    """Everything about the steering law that depends on neither the start
    belief nor the target: stacked model, LQR solution, noise covariances."""

    def __init__(self, scenario: Scenario):
        self.env = env = scenario.environment
        self.T = scenario.planner.steer_horizon
        self.d = scenario.position_dim
        self.lqr = solve_lqr(scenario.planner.Q, scenario.planner.R, self.T, env)
        self.Sigma_w = scenario.process_noise_cov()
        self.Sigma_v = scenario.measurement_noise_cov()
        self.Sigma_W = np.zeros((self.Sigma_w.shape[0] + self.Sigma_v.shape[0],) * 2)
        nw = self.Sigma_w.shape[0]
        self.Sigma_W[:nw, :nw] = self.Sigma_w
        self.Sigma_W[nw:, nw:] = self.Sigma_v
        self.Bbar = np.vstack([env.B_z, env.B_z])

    @property
    def nz(self) -> int:
        return self.env.state_dim

    def propagator(self, from_mean, from_cov) -> "Propagator":
        return Propagator(self, from_mean, from_cov)


class Propagator:
    """Closed loop from one start belief; target-independent pieces are cached.

    The joint mean is affine in the target, ``mean_t = free_t + gamma_t x_s``,
    which the planner uses to screen many targets at once.
    """

    def __init__(self, model: SteeringModel, from_mean, from_cov):
        env = model.env
        nz, T = env.state_dim, model.T
        mean0 = np.asarray(from_mean, dtype=float).ravel()
        if mean0.size != 2 * nz:
            raise SteeringError(f"start mean has {mean0.size} entries, expected {2 * nz}")
        try:
            psd_repair(from_cov, what="start covariance")
        except ModelError as exc:
            raise SteeringError(str(exc)) from None
        # validated above; kept verbatim so an edge starts exactly at its parent's belief
        Pi0 = np.asarray(from_cov, dtype=float)
        Pi0 = 0.5 * (Pi0 + Pi0.T)
        if Pi0.shape != (2 * nz, 2 * nz):
            raise SteeringError(f"start covariance has shape {Pi0.shape}")
        self.model = model
        self.start_mean = mean0
        self.start_cov = Pi0

        A, B, G, C, H = env.A_z, env.B_z, env.G_z, env.C, env.H
        E = np.hstack([np.eye(nz), -np.eye(nz)])
        err0 = psd_repair(E @ Pi0 @ E.T, what="estimation error covariance")
        L, _ = kalman_gain_sequence(env, err0, model.Sigma_w, model.Sigma_v, T)
        self.L = L

        K = model.lqr.K
        N = 2 * nz
        I = np.eye(nz)
        Abar = np.zeros((T, N, N))
        Gbar = np.zeros((T, N, model.Sigma_W.shape[0]))
        nw = G.shape[1]
        covs = np.zeros((T + 1, N, N))
        covs[0] = Pi0
        for t in range(T):
            Lt = L[t]
            BK = B @ K[t]
            LC = Lt @ C
            Abar[t, :nz, :nz] = A
            Abar[t, :nz, nz:] = BK
            Abar[t, nz:, :nz] = LC @ A
            Abar[t, nz:, nz:] = (I - LC) @ A + BK
            Gbar[t, :nz, :nw] = G
            Gbar[t, nz:, :nw] = LC @ G
            Gbar[t, nz:, nw:] = Lt @ H
            nxt = Abar[t] @ covs[t] @ Abar[t].T + Gbar[t] @ model.Sigma_W @ Gbar[t].T
            try:
                covs[t + 1] = psd_repair(0.5 * (nxt + nxt.T), what=f"joint covariance at t={t + 1}")
            except ModelError as exc:
                raise SteeringError(str(exc)) from None
        self.Abar = _ro(Abar)
        self.Gbar = _ro(Gbar)
        self.covs = _ro(covs)

        free = np.zeros((T + 1, N))
        gamma = np.zeros((T + 1, N, env.n))
        free[0] = mean0
        BbarF = np.einsum("ij,tjk->tik", model.Bbar, model.lqr.F)
        for t in range(T):
            free[t + 1] = Abar[t] @ free[t]
            gamma[t + 1] = Abar[t] @ gamma[t] + BbarF[t]
        self.free = _ro(free)
        self.gamma = _ro(gamma)

    def gains(self, x_s) -> SteeringGains:
        x_s = lift_target(x_s, self.model.env.n)
        return SteeringGains(self.model.lqr.K, self.model.lqr.F @ x_s, self.L)

    def trajectory(self, x_s) -> BeliefTrajectory:
        env = self.model.env
        x_s = lift_target(x_s, env.n)
        k = self.model.lqr.F @ x_s
        T = self.model.T
        means = np.zeros((T + 1, 2 * env.state_dim))
        means[0] = self.start_mean
        for t in range(T):
            means[t + 1] = self.Abar[t] @ means[t] + self.model.Bbar @ k[t]
        return BeliefTrajectory(_ro(means), self.covs, env.n, self.model.d)


def steer(from_mean, from_cov, x_s, scenario: Scenario, model: SteeringModel | None = None) -> BeliefTrajectory:
    """Steer the joint belief (from_mean, from_cov) toward robot state ``x_s``.

    A position-only ``x_s`` is lifted to a zero-velocity state.
    """
    model = model or SteeringModel(scenario)
    return model.propagator(from_mean, from_cov).trajectory(x_s)
