import copy

import numpy as np
import pytest

from ofdr_rrt.model import bundled_scenario_path, load_scenario, parse_scenario

ACCEPTANCE_LINES: list[str] = []


def box_obstacle(lo, hi, ident="box", c_cov=None):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    half = (hi - lo) / 2
    d = lo.size
    hs = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        hs.append({"a": e.tolist(), "b": float(half[k])})
        hs.append({"a": (-e).tolist(), "b": float(half[k])})
    return {"id": ident, "halfspaces": hs, "c_mean": ((lo + hi) / 2).tolist(),
            "c_cov": (np.zeros((d, d)) if c_cov is None else np.asarray(c_cov)).tolist()}


def scenario_doc(**overrides):
    """Open 2D double-integrator world with small uncertainty; overrides replace top-level keys."""
    doc = {
        "system": {"double_integrator": {"dt": 0.1}},
        "bounds": {"min": [0.0, 0.0], "max": [4.0, 4.0]},
        "goal": {"min": [3.5, 3.5], "max": [4.0, 4.0]},
        "obstacles": [],
        "initial_belief": {"mean": [0.5, 0.5, 0.0, 0.0], "cov": (1e-4 * np.eye(4)).tolist()},
        "noise": {"w_cov": [[2e-3, 1e-3], [1e-3, 2e-3]], "v_cov": (1e-3 * np.eye(2)).tolist()},
        "risk": {"mode": "dr", "alpha": 0.05},
        "planner": {"gamma": 20, "mu_max": 1.0, "iterations": 60, "steer_horizon": 5,
                    "Q": np.diag([40.0, 40.0, 2.0, 2.0]).tolist(), "R": (0.02 * np.eye(2)).tolist(),
                    "seed": 3},
    }
    for k, v in overrides.items():
        doc[k] = v
    return copy.deepcopy(doc)


def make_scenario(**overrides):
    return parse_scenario(scenario_doc(**overrides), name="test")


@pytest.fixture
def reference():
    return load_scenario(bundled_scenario_path("double_integrator"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
