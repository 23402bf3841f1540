"""Tree dumps (JSON) and per-iteration statistics (CSV).

The dump holds no timing information, so two runs of the same scenario and
seed produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from ..planner import PlanResult, path_length

DUMP_VERSION = 1


def _floats(a) -> list:
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def tree_to_dict(result: PlanResult) -> dict:
    sc = result.scenario
    n = sc.environment.n
    nodes = []
    for node in result.tree:
        entry = {
            "id": node.id,
            "parent": node.parent,
            "mean": _floats(node.x),
            "cov": _floats(node.cov[:n, :n]),
            "cost": float(node.cost),
            "target": None if node.target is None else _floats(node.target),
            "path": None if node.trajectory is None
            else [_floats(p) for p in node.trajectory.positions],
        }
        nodes.append(entry)
    return {
        "version": DUMP_VERSION,
        "scenario": sc.name,
        "digest": sc.digest,
        "mode": sc.risk_mode.value,
        "seed": sc.planner.seed,
        "iterations": sc.planner.iterations,
        "state_dim": n,
        "goal_ids": list(result.tree.goal_ids),
        "goal_iteration": result.goal_iteration,
        "best_path": result.best_path,
        "best_cost": result.best_cost,
        "nodes": nodes,
    }


def dumps_tree(result: PlanResult) -> str:
    return json.dumps(tree_to_dict(result), indent=1, sort_keys=True) + "\n"


def write_tree(result: PlanResult, path) -> Path:
    path = Path(path)
    path.write_text(dumps_tree(result))
    return path


def load_tree(path) -> dict:
    return json.loads(Path(path).read_text())


def recompute_costs(dump: dict) -> dict[int, float]:
    """Rebuild node costs from the stored edge paths, root first."""
    children: dict[int | None, list[int]] = {}
    paths = {}
    for e in dump["nodes"]:
        children.setdefault(e["parent"], []).append(e["id"])
        paths[e["id"]] = e["path"]
    costs: dict[int, float] = {}
    queue = [(i, 0.0) for i in children.get(None, [])]
    while queue:
        i, base = queue.pop()
        costs[i] = base if paths[i] is None else base + path_length(np.array(paths[i]))
        queue.extend((c, costs[i]) for c in children.get(i, []))
    return costs


STATS_COLUMNS = ("iteration", "added", "node_id", "rewires", "nodes", "best_cost")


def stats_csv(result: PlanResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_COLUMNS)
    for s in result.stats:
        w.writerow([s.iteration, int(s.added), "" if s.node_id is None else s.node_id,
                    s.rewires, s.nodes, "" if s.best_cost is None else repr(s.best_cost)])
    return buf.getvalue()


def write_stats(result: PlanResult, path) -> Path:
    path = Path(path)
    path.write_text(stats_csv(result))
    return path


def read_stats(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
