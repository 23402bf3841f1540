"""Belief-space RRT*: sampling, nearest and near queries, minimum-cost
connection and rewiring over a tree of steered belief trajectories.

Every edge is produced by the LQG steering law and accepted only if
``dr_feasible`` holds for it. Node cost is the accumulated mean path length,
``J[N] = J[parent] + dJ(edge)``.

Candidate edges are screened in batches with vectorized checks that are
slightly permissive (a 1e-9 slack on every comparison); the exact trajectory
is then rebuilt and passed through ``dr_feasible`` before anything is stored,
so the screen only prunes work and never decides feasibility on its own.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .model import Scenario
from .risk import allocate_risk, dr_feasible, scale_factor
from .steering import BeliefTrajectory, Propagator, SteeringModel, lift_target, root_belief

SCREEN_SLACK = 1e-9


class TreeInvariantError(AssertionError):
    pass


# ---------------------------------------------------------------------------
# tree


@dataclass
class BeliefNode:
    id: int
    parent: int | None
    trajectory: BeliefTrajectory | None  # edge from the parent; None at the root
    target: np.ndarray | None  # robot-state target the edge was steered toward
    mean: np.ndarray  # terminal joint mean [Z; Z_est]
    cov: np.ndarray  # terminal joint covariance
    cost: float
    x: np.ndarray  # terminal robot mean
    D: np.ndarray  # terminal position covariance
    children: list[int] = field(default_factory=list)


class Tree:
    def __init__(self):
        self.nodes: list[BeliefNode] = []
        self.goal_ids: list[int] = []
        self.root = 0

    def __len__(self):
        return len(self.nodes)

    def __getitem__(self, i: int) -> BeliefNode:
        return self.nodes[i]

    def __iter__(self):
        return iter(self.nodes)

    def path_to(self, i: int) -> list[int]:
        path = []
        seen = 0
        while i is not None:
            path.append(i)
            i = self.nodes[i].parent
            seen += 1
            if seen > len(self.nodes):
                raise TreeInvariantError("cycle in parent links")
        return path[::-1]

    def ancestors(self, i: int) -> set[int]:
        return set(self.path_to(i)[:-1])

    def subtree(self, i: int) -> list[int]:
        """Node ``i`` and its descendants in breadth-first, ascending-id order."""
        out = [i]
        k = 0
        while k < len(out):
            out.extend(self.nodes[out[k]].children)
            k += 1
        return out

    def recompute_cost(self, i: int) -> float:
        J = 0.0
        for j in self.path_to(i)[1:]:
            J = J + edge_cost(self.nodes[j].trajectory)
        return J

    def best_goal(self) -> int | None:
        if not self.goal_ids:
            return None
        return min(self.goal_ids, key=lambda i: (self.nodes[i].cost, i))

    def edges(self):
        return [(n.parent, n.id) for n in self.nodes if n.parent is not None]


def path_length(positions: np.ndarray) -> float:
    steps = np.diff(np.asarray(positions, dtype=float), axis=0)
    return float(np.sum(np.sqrt(np.sum(steps * steps, axis=-1))))


def edge_cost(traj: BeliefTrajectory, scenario: Scenario | None = None) -> float:
    """Mean position path length of an edge."""
    return path_length(traj.positions)


def nearest_node(tree: Tree, x_rand, velocity_weight: float = 0.1) -> int:
    """Node minimizing (x - x_s)' M (x - x_s), M = blkdiag(I_pos, eta I_vel)."""
    X = np.array([n.x for n in tree.nodes])
    return _nearest(X, x_rand, velocity_weight)


def _nearest(X: np.ndarray, x_rand, velocity_weight: float) -> int:
    x_rand = np.asarray(x_rand, dtype=float).ravel()
    d = x_rand.size
    diff = X.copy()
    diff[:, :d] -= x_rand
    w = np.full(X.shape[1], velocity_weight)
    w[:d] = 1.0
    return int(np.argmin((diff * diff) @ w))


def near_radius(node_count: int, d: int, gamma: float, mu_max: float) -> float:
    if node_count <= 1:
        return float(mu_max)
    return float(min(gamma * (math.log(node_count) / node_count) ** (1.0 / d), mu_max))


def near_nodes(tree: Tree, x_rand, r: float) -> list[int]:
    x_rand = np.asarray(x_rand, dtype=float).ravel()
    P = np.array([n.x[: x_rand.size] for n in tree.nodes])
    return _near(P, x_rand, r)


def _near(P: np.ndarray, x_rand: np.ndarray, r: float) -> list[int]:
    dist = np.sqrt(np.sum((P - x_rand) ** 2, axis=1))
    return [int(i) for i in np.flatnonzero(dist <= r)]


# ---------------------------------------------------------------------------
# planner


@dataclass(frozen=True)
class ExpansionOutcome:
    iteration: int
    added: bool
    node_id: int | None
    rewires: int
    sample: tuple[float, ...]


@dataclass(frozen=True)
class IterationStats:
    iteration: int
    added: bool
    node_id: int | None
    rewires: int
    nodes: int
    best_cost: float | None


@dataclass
class PlanResult:
    scenario: Scenario
    tree: Tree
    best_path: list[int] | None
    best_cost: float | None
    goal_iteration: int | None
    stats: list[IterationStats]

    @property
    def found(self) -> bool:
        return self.best_path is not None

    @property
    def added_iterations(self) -> list[int]:
        return [s.iteration for s in self.stats if s.added]

    @property
    def rewire_count(self) -> int:
        return sum(s.rewires for s in self.stats)


@dataclass
class _Staged:
    parent: int
    trajectory: BeliefTrajectory
    target: np.ndarray
    cost: float
    propagator: Propagator


class Planner:
    def __init__(self, scenario: Scenario):
        self.scenario = sc = scenario
        self.model = SteeringModel(sc)
        self.n = sc.environment.n
        self.d = sc.position_dim
        self.T = sc.planner.steer_horizon
        obstacles = sc.obstacles
        self.n0 = len(obstacles)
        self.allocation = allocate_risk(sc.alpha, self.n0)
        self.kappa = np.array([scale_factor(sc.risk_mode, a) for a in self.allocation.alphas])
        J = max([o.n_halfspaces for o in obstacles], default=1)
        self.A_pad = np.zeros((self.n0, J, self.d))
        self.b_pad = np.full((self.n0, J), np.inf)
        for i, o in enumerate(obstacles):
            self.A_pad[i, : o.n_halfspaces] = o.A
            self.b_pad[i, : o.n_halfspaces] = o.b
        self.rng = np.random.default_rng(sc.planner.seed)
        self.tree = Tree()
        self.iteration = 0
        self.stats: list[IterationStats] = []
        self.goal_iteration: int | None = None

        cap = sc.planner.iterations + 1
        self._X = np.zeros((cap, self.n))
        self._free = np.zeros((cap, self.T + 1, self.d))
        self._gamma = np.zeros((cap, self.T + 1, self.d, self.n))
        self._thr = np.zeros((cap, self.T, self.n0, J))
        self._off = np.zeros((cap, self.T, self.n0, J))
        self._cost = np.zeros(cap)
        self._props: list[Propagator] = []

        mean0, cov0 = root_belief(sc)
        self._append(None, None, None, mean0, cov0, 0.0, self.model.propagator(mean0, cov0))
        if self.tree[0].id in self.tree.goal_ids:
            self.goal_iteration = 0

    # -- storage ----------------------------------------------------------

    def _grow(self):
        for name in ("_X", "_free", "_gamma", "_thr", "_off", "_cost"):
            a = getattr(self, name)
            setattr(self, name, np.concatenate([a, np.zeros_like(a)], axis=0))

    def _in_goal(self, x) -> bool:
        return self.scenario.goal.contains(x[: self.d])

    def _cache(self, i: int, prop: Propagator):
        n, d, T = self.n, self.d, self.T
        self._free[i] = prop.free[:, :d]
        self._gamma[i] = prop.gamma[:, :d, :]
        covs = prop.covs[1:]
        if self.n0:
            c = np.stack([prop.free[1:, n + k * d: n + (k + 1) * d] for k in range(self.n0)], axis=1)
            S = np.stack([covs[:, :d, :d] + covs[:, n + k * d: n + (k + 1) * d, n + k * d: n + (k + 1) * d]
                          for k in range(self.n0)], axis=1)  # (T, n0, d, d)
            off = self.b_pad[None] + np.einsum("ijd,tid->tij", self.A_pad, c)
            quad = np.einsum("ijd,tide,ije->tij", self.A_pad, S, self.A_pad)
            spread = np.sqrt(np.clip(quad, 0.0, None))
            self._off[i] = off
            self._thr[i] = off + self.kappa[None, :, None] * spread
        if len(self._props) > i:
            self._props[i] = prop
        else:
            self._props.append(prop)

    def _append(self, parent, traj, target, mean, cov, cost, prop) -> int:
        i = len(self.tree)
        if i >= self._X.shape[0]:
            self._grow()
        n, d = self.n, self.d
        node = BeliefNode(i, parent, traj, target, mean, cov, cost,
                          x=np.array(mean[:n]), D=np.array(cov[:d, :d]))
        self.tree.nodes.append(node)
        if parent is not None:
            bisect.insort(self.tree[parent].children, i)
        self._X[i] = node.x
        self._cost[i] = cost
        self._cache(i, prop)
        if self._in_goal(node.x):
            bisect.insort(self.tree.goal_ids, i)
        return i

    # -- batched screening ------------------------------------------------

    def _screen(self, src, targets: np.ndarray):
        """Positions, edge costs and a permissive feasibility flag for edges
        from node(s) ``src`` toward ``targets`` (K, n); src is an int or a
        length-K index array."""
        if np.ndim(src) == 0:
            pos = self._free[src][None] + np.einsum("tdn,kn->ktd", self._gamma[src], targets)
        else:
            pos = self._free[src] + np.einsum("ktdn,kn->ktd", self._gamma[src], targets)
        steps = np.diff(pos, axis=1)
        dJ = np.sum(np.sqrt(np.sum(steps * steps, axis=-1)), axis=1)
        P0, P1 = pos[:, :-1], pos[:, 1:]
        lo, hi = self.scenario.bounds.lo, self.scenario.bounds.hi
        ok = np.all((P1 >= lo - SCREEN_SLACK) & (P1 <= hi + SCREEN_SLACK), axis=(1, 2))
        if self.n0:
            thr = self._thr[src]
            off = self._off[src]
            if np.ndim(src) == 0:
                thr, off = thr[None], off[None]
            A = self.A_pad
            a1 = np.einsum("ijd,ktd->ktij", A, P1)
            face = np.any(a1 - thr >= -SCREEN_SLACK, axis=3)
            a0 = np.einsum("ijd,ktd->ktij", A, P0)
            num = (off - SCREEN_SLACK) - a0
            den = a1 - a0
            with np.errstate(divide="ignore", invalid="ignore"):
                s = num / den
            up = np.minimum(1.0, np.min(np.where(den > 0, s, np.inf), axis=3))
            dn = np.maximum(0.0, np.max(np.where(den < 0, s, -np.inf), axis=3))
            blocked = np.any((den == 0) & (num < 0), axis=3)
            hit = (dn <= up) & ~blocked
            ok &= np.all(face & ~hit, axis=(1, 2))
        return pos, dJ, ok

    # -- exact edges ------------------------------------------------------

    def _exact(self, src: int, target: np.ndarray):
        traj = self._props[src].trajectory(target)
        if not dr_feasible(traj, self.scenario, self.allocation):
            return None
        return traj

    # -- one iteration ----------------------------------------------------

    def sample(self) -> np.ndarray:
        """One uniform draw per position coordinate; with goal bias, one extra
        draw first decides whether to sample the goal box instead."""
        sc = self.scenario
        box = sc.bounds
        if sc.planner.goal_bias > 0.0 and self.rng.random() < sc.planner.goal_bias:
            box = sc.goal
        u = self.rng.random(self.d)
        return box.lo + (box.hi - box.lo) * u

    def expand(self, x_rand=None) -> ExpansionOutcome:
        self.iteration += 1
        it = self.iteration
        if x_rand is None:
            x_rand = self.sample()
        x_rand = np.asarray(x_rand, dtype=float).ravel()
        x_s = lift_target(x_rand, self.n)
        N = len(self.tree)
        cfg = self.scenario.planner

        nearest = _nearest(self._X[:N], x_rand, cfg.velocity_weight)
        traj = self._exact(nearest, x_s)
        if traj is None:
            return self._record(ExpansionOutcome(it, False, None, 0, tuple(x_rand)))
        best_parent, best_traj = nearest, traj
        best_cost = self._cost[nearest] + edge_cost(traj)

        r = near_radius(N, self.d, cfg.gamma, cfg.mu_max)
        near = _near(self._X[:N, : self.d], x_rand, r)

        # cheapest feasible parent among the near set (nearest excluded)
        cand = np.array([i for i in near if i != nearest], dtype=int)
        if cand.size:
            _, dJ, ok = self._screen(cand, np.repeat(x_s[None], cand.size, axis=0))
            c = self._cost[cand] + dJ
            keep = ok & (c < best_cost)
            order = sorted(zip(c[keep].tolist(), cand[keep].tolist()))
            for _, i in order:
                t = self._exact(i, x_s)
                if t is None:
                    continue
                ci = self._cost[i] + edge_cost(t)
                if ci < best_cost:
                    best_parent, best_traj, best_cost = i, t, ci
                break

        mean, cov = best_traj.terminal_mean, best_traj.terminal_cov
        new = self._append(best_parent, best_traj, x_s, np.array(mean), np.array(cov), best_cost,
                           self.model.propagator(mean, cov))
        if self.goal_iteration is None and new in self.tree.goal_ids:
            self.goal_iteration = it
        rewires = self._rewire(new, near)
        return self._record(ExpansionOutcome(it, True, new, rewires, tuple(x_rand)))

    def _rewire(self, new: int, near: list[int]) -> int:
        anc = self.tree.ancestors(new)
        cand = [i for i in near if i != new and i not in anc]
        if not cand:
            return 0
        idx = np.array(cand, dtype=int)
        _, dJ, ok = self._screen(new, self._X[idx])
        passing = {i for i, good, c in zip(cand, ok, self._cost[new] + dJ)
                   if good and c < self._cost[i]}
        dirty: set[int] = set()
        count = 0
        for i in cand:
            if i in dirty:
                _, dJi, oki = self._screen(new, self._X[i][None])
                if not (oki[0] and self._cost[new] + dJi[0] < self._cost[i]):
                    continue
            elif i not in passing:
                continue
            changed = self._try_rewire(new, i)
            if changed:
                dirty.update(changed)
                count += 1
        return count

    def _try_rewire(self, new: int, i: int) -> list[int] | None:
        """Re-steer node ``i`` from ``new`` toward its terminal robot mean and
        re-propagate its subtree. Commits only if every edge stays feasible,
        no cost rises (and ``i``'s cost strictly drops), and no goal node
        leaves the goal region."""
        tree = self.tree
        target = np.array(self._X[i])
        traj = self._exact(new, target)
        if traj is None:
            return None
        cost = self._cost[new] + edge_cost(traj)
        if not cost < self._cost[i]:
            return None
        staged = {i: _Staged(new, traj, target, cost,
                             self.model.propagator(traj.terminal_mean, traj.terminal_cov))}
        goal = set(tree.goal_ids)
        if i in goal and not self._in_goal(traj.terminal_mean):
            return None
        order = tree.subtree(i)
        for j in order[1:]:
            node = tree[j]
            par = staged[node.parent]
            t = par.propagator.trajectory(node.target)
            if not dr_feasible(t, self.scenario, self.allocation):
                return None
            cj = par.cost + edge_cost(t)
            if cj > node.cost:
                return None
            if j in goal and not self._in_goal(t.terminal_mean):
                return None
            staged[j] = _Staged(node.parent, t, node.target, cj,
                                self.model.propagator(t.terminal_mean, t.terminal_cov))

        old_parent = tree[i].parent
        tree[old_parent].children.remove(i)
        bisect.insort(tree[new].children, i)
        n, d = self.n, self.d
        for j in order:
            s = staged[j]
            node = tree[j]
            node.parent = s.parent
            node.trajectory = s.trajectory
            node.target = s.target
            node.mean = np.array(s.trajectory.terminal_mean)
            node.cov = np.array(s.trajectory.terminal_cov)
            node.cost = s.cost
            node.x = np.array(node.mean[:n])
            node.D = np.array(node.cov[:d, :d])
            self._X[j] = node.x
            self._cost[j] = s.cost
            self._cache(j, s.propagator)
            if j not in goal and self._in_goal(node.x):
                bisect.insort(tree.goal_ids, j)
                if self.goal_iteration is None:
                    self.goal_iteration = self.iteration
        return order

    def _record(self, out: ExpansionOutcome) -> ExpansionOutcome:
        g = self.tree.best_goal()
        self.stats.append(IterationStats(out.iteration, out.added, out.node_id, out.rewires,
                                         len(self.tree), None if g is None else self.tree[g].cost))
        return out

    def result(self) -> PlanResult:
        g = self.tree.best_goal()
        return PlanResult(self.scenario, self.tree,
                          None if g is None else self.tree.path_to(g),
                          None if g is None else self.tree[g].cost,
                          self.goal_iteration, list(self.stats))


def plan(scenario: Scenario, callback=None) -> PlanResult:
    """Run the fixed iteration budget; ``callback(planner, outcome)`` sees every iteration."""
    planner = Planner(scenario)
    for _ in range(scenario.planner.iterations):
        out = planner.expand()
        if callback is not None:
            callback(planner, out)
    return planner.result()


# ---------------------------------------------------------------------------
# invariants


def check_tree(tree: Tree, scenario: Scenario, verify=None, tol: float = 1e-9) -> None:
    """Structural and cost invariants; ``verify`` names edges (child ids) to
    re-check with dr_feasible, or True for all of them."""
    nodes = tree.nodes
    if not nodes or nodes[0].parent is not None or nodes[0].cost != 0.0:
        raise TreeInvariantError("root must exist with no parent and zero cost")
    for node in nodes:
        if node.parent is not None:
            if node.id not in nodes[node.parent].children:
                raise TreeInvariantError(f"node {node.id} missing from its parent's children")
        for c in node.children:
            if nodes[c].parent != node.id:
                raise TreeInvariantError(f"child {c} of {node.id} points elsewhere")
    reached = tree.subtree(0)
    if len(reached) != len(nodes) or len(set(reached)) != len(nodes):
        raise TreeInvariantError("tree is not a single acyclic component")
    J = np.zeros(len(nodes))
    for j in reached[1:]:
        node = nodes[j]
        par = nodes[node.parent]
        J[j] = J[node.parent] + edge_cost(node.trajectory)
        if abs(J[j] - node.cost) > tol:
            raise TreeInvariantError(f"node {j}: stored cost {node.cost} != recomputed {J[j]}")
        if not (np.array_equal(node.trajectory.means[0], par.mean)
                and np.array_equal(node.trajectory.covs[0], par.cov)):
            raise TreeInvariantError(f"node {j}: edge does not start at the parent's terminal belief")
    if verify is True:
        verify = range(1, len(nodes))
    for j in verify or ():
        if j and not dr_feasible(nodes[j].trajectory, scenario):
            raise TreeInvariantError(f"edge into node {j} fails dr_feasible")

