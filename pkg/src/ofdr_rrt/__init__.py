"""Belief-space RRT* with Kalman-filter/LQR steering and moment-based
distributionally robust collision constraints."""

from .model import (
    Box,
    EnvironmentModel,
    LinearSystem,
    MomentAmbiguity,
    PolytopeObstacle,
    RiskMode,
    Scenario,
    ScenarioError,
    assemble_environment,
    build_double_integrator,
    bundled_scenario_path,
    load_scenario,
    segment_intersects_polytope,
)
from .planner import BeliefNode, Planner, PlanResult, Tree, edge_cost, plan
from .risk import allocate_risk, dr_feasible, halfspace_satisfied, obstacle_feasible, scale_factor
from .steering import BeliefTrajectory, SteeringModel, kalman_gain_sequence, lqr_backward, steer

__version__ = "0.1.0"

__all__ = [
    "BeliefNode", "BeliefTrajectory", "Box", "EnvironmentModel", "LinearSystem", "MomentAmbiguity",
    "PlanResult", "Planner", "PolytopeObstacle", "RiskMode", "Scenario", "ScenarioError",
    "SteeringModel", "Tree", "allocate_risk", "assemble_environment", "build_double_integrator",
    "bundled_scenario_path", "dr_feasible", "edge_cost", "halfspace_satisfied",
    "kalman_gain_sequence", "load_scenario", "lqr_backward", "obstacle_feasible", "plan",
    "scale_factor", "segment_intersects_polytope", "steer",
]
