"""Seeded runs, three-regime comparisons and their artifacts."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..model import Box, RiskMode, Scenario, clip_segment
from ..planner import PlanResult, plan
from . import dump, svg

MODES = (RiskMode.DETERMINISTIC, RiskMode.GAUSSIAN, RiskMode.DR)


@dataclass
class RunReport:
    digest: str
    mode: RiskMode
    seed: int
    iterations: int
    nodes_added: int
    rewires: int
    best_cost: float | None
    goal_iteration: int | None
    wall_time: float
    cost_curve: list  # best goal cost after each iteration, None before the first
    artifacts: dict = field(default_factory=dict)

    def summary(self) -> str:
        cost = "none" if self.best_cost is None else f"{self.best_cost:.4f}"
        return (f"mode={self.mode.value} seed={self.seed} iterations={self.iterations} "
                f"nodes_added={self.nodes_added} rewires={self.rewires} best_cost={cost} "
                f"time={self.wall_time:.2f}s")


def report_for(result: PlanResult, wall_time: float) -> RunReport:
    sc = result.scenario
    return RunReport(
        digest=sc.digest, mode=sc.risk_mode, seed=sc.planner.seed,
        iterations=len(result.stats), nodes_added=sum(s.added for s in result.stats),
        rewires=result.rewire_count, best_cost=result.best_cost,
        goal_iteration=result.goal_iteration, wall_time=wall_time,
        cost_curve=[s.best_cost for s in result.stats],
    )


def box_crossed(positions, box: Box) -> bool:
    """True iff the polyline through ``positions`` meets the closed box."""
    P = np.asarray(positions, dtype=float)
    d = box.dim
    A = np.vstack([np.eye(d), -np.eye(d)])
    off = np.concatenate([box.hi, -box.lo])
    if len(P) == 1:
        return box.contains(P[0, :d])
    return any(clip_segment(p, q, A, off) is not None for p, q in zip(P[:-1, :d], P[1:, :d]))


def gap_usage(result: PlanResult) -> dict[str, tuple[bool, bool]]:
    """Per named gap: (some tree edge crosses it, the best goal path crosses it)."""
    tree = result.tree
    out = {}
    for name, box in result.scenario.gaps:
        in_tree = any(box_crossed(n.trajectory.positions, box) for n in tree if n.trajectory is not None)
        in_path = bool(result.best_path) and any(
            box_crossed(tree[i].trajectory.positions, box) for i in result.best_path[1:])
        out[name] = (in_tree, in_path)
    return out


def _stem(sc: Scenario) -> str:
    return f"{sc.name or 'scenario'}_{sc.risk_mode.value}_s{sc.planner.seed}"


def run(scenario: Scenario, out_dir=None) -> tuple[RunReport, PlanResult]:
    t0 = time.perf_counter()
    result = plan(scenario)
    report = report_for(result, time.perf_counter() - t0)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = _stem(scenario)
        report.artifacts = {
            "tree": str(dump.write_tree(result, out / f"{stem}.json")),
            "stats": str(dump.write_stats(result, out / f"{stem}.csv")),
            "figure": str(svg.write_svg(result, out / f"{stem}.svg")),
        }
    return report, result


COMPARE_COLUMNS = ("mode", "seed", "nodes_added", "rewires", "best_cost", "goal_found")


def compare_csv(results: list[PlanResult]) -> str:
    gaps = [name for name, _ in results[0].scenario.gaps] if results else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(COMPARE_COLUMNS) + [f"{g}_{k}" for g in gaps for k in ("tree", "path")])
    for r in results:
        usage = gap_usage(r)
        row = [r.scenario.risk_mode.value, r.scenario.planner.seed,
               sum(s.added for s in r.stats), r.rewire_count,
               "" if r.best_cost is None else repr(r.best_cost), int(r.found)]
        for g in gaps:
            row += [int(usage[g][0]), int(usage[g][1])]
        w.writerow(row)
    return buf.getvalue()


def compare(scenario: Scenario, out_dir=None) -> tuple[list[RunReport], list[PlanResult]]:
    """All three regimes on the same seed, run one after another."""
    reports, results = [], []
    for mode in MODES:
        rep, res = run(scenario.with_mode(mode), out_dir)
        reports.append(rep)
        results.append(res)
    if out_dir is not None:
        out = Path(out_dir)
        stem = f"{scenario.name or 'scenario'}_compare_s{scenario.planner.seed}"
        (out / f"{stem}.csv").write_text(compare_csv(results))
        svg.write_svg(results, out / f"{stem}.svg")
    return reports, results
