"""Command line entry point.

    plan run <scenario> [--mode det|gaussian|dr] [--seed N] [--out DIR]
    plan compare <scenario> [--seed N] [--out DIR]
    plan validate <scenario> --pose <node-id|x,y|boundary:I:J> --family NAME --samples N

``<scenario>`` is a JSON file or the name of a bundled scenario. Output goes
to ``--out``, else ``$PLAN_OUT``, else ``./plan_output``.

Exit codes: 0 success, 1 usage error, 2 unreadable or invalid scenario,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from ..model import RiskMode, ScenarioError, bundled_scenario_path, load_scenario
from ..risk import allocate_risk
from ..steering import root_belief
from . import runner
from .validation import FAMILIES, ValidationError, boundary_pose, parse_family, validate_pose, Pose

EXIT_USAGE, EXIT_SCHEMA, EXIT_RUNTIME = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _mode(value: str) -> RiskMode:
    try:
        return RiskMode.parse(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="plan", description="Belief-space RRT* with DR collision constraints")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("scenario", help="scenario JSON path or bundled scenario name")
        sp.add_argument("--seed", type=int, default=None, help="override the planner seed")
        sp.add_argument("--iterations", type=int, default=None, help="override the iteration budget")

    r = sub.add_parser("run", help="plan once and write tree, statistics and figure")
    common(r)
    r.add_argument("--mode", type=_mode, default=None, help="det, gaussian or dr")
    r.add_argument("--out", default=None, help="output directory")

    c = sub.add_parser("compare", help="plan in all three regimes on one seed")
    common(c)
    c.add_argument("--out", default=None, help="output directory")

    v = sub.add_parser("validate", help="Monte Carlo violation rates at a pose")
    common(v)
    v.add_argument("--pose", required=True,
                   help="node id (plans first), 'x,y' or 'boundary:OBSTACLE:FACE'")
    v.add_argument("--family", required=True, help=f"one of {', '.join(FAMILIES)}")
    v.add_argument("--samples", type=int, default=100_000)
    v.add_argument("--mode", type=_mode, default=None, help="regime used for margins and boundary poses")
    v.add_argument("--sigma", type=float, default=None,
                   help="position std for 'x,y' and boundary poses (default: initial belief)")
    return p


def resolve_scenario(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    bundled = bundled_scenario_path(path.name)
    return bundled if bundled.exists() else path


def _load(args):
    sc = load_scenario(resolve_scenario(args.scenario))
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    if args.iterations is not None:
        if args.iterations < 0:
            raise UsageError("--iterations must be nonnegative")
        sc = sc.with_iterations(args.iterations)
    if getattr(args, "mode", None) is not None:
        sc = sc.with_mode(args.mode)
    return sc


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get("PLAN_OUT") or "plan_output")


def _pose(sc, args) -> Pose:
    text = args.pose.strip()
    d = sc.position_dim
    if args.sigma is not None:
        cov = args.sigma ** 2 * np.eye(d)
    else:
        cov = np.asarray(sc.initial_belief.covariance)[:d, :d]
    if text.startswith("boundary:"):
        try:
            _, i, j = text.split(":")
            i, j = int(i), int(j)
            obs = sc.obstacles[i]
            if not 0 <= j < obs.n_halfspaces:
                raise IndexError
        except (ValueError, IndexError):
            raise UsageError(f"bad boundary pose {text!r}") from None
        alpha_i = allocate_risk(sc.alpha, len(sc.obstacles))[i]
        return boundary_pose(obs, j, cov, sc.risk_mode, alpha_i)
    if "," in text:
        try:
            xy = np.array([float(t) for t in text.split(",")])
        except ValueError:
            raise UsageError(f"bad pose {text!r}") from None
        if xy.size != d:
            raise UsageError(f"pose needs {d} coordinates")
        return Pose(xy, cov, text)
    try:
        node_id = int(text)
    except ValueError:
        raise UsageError(f"bad pose {text!r}") from None
    if node_id == 0:
        mean, Pi = root_belief(sc)
        return Pose(mean[:d], Pi[:d, :d], "node 0")
    _, result = runner.run(sc)
    if not 0 <= node_id < len(result.tree):
        raise UsageError(f"node {node_id} not in the tree ({len(result.tree)} nodes)")
    node = result.tree[node_id]
    return Pose(node.x[:d], node.D, f"node {node_id}")


def cmd_run(args) -> int:
    sc = _load(args)
    report, _ = runner.run(sc, _out_dir(args))
    print(report.summary() + f" out={report.artifacts['tree']}")
    return 0


def cmd_compare(args) -> int:
    sc = _load(args)
    reports, _ = runner.compare(sc, _out_dir(args))
    for rep in reports:
        print(rep.summary())
    return 0


def cmd_validate(args) -> int:
    try:
        family = parse_family(args.family)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    sc = _load(args)
    pose = _pose(sc, args)
    rep = validate_pose(sc, pose, family, args.samples, seed=sc.planner.seed)
    print(f"pose {pose.label}: mean={np.round(pose.mean, 6).tolist()} family={family} "
          f"mode={rep.mode.value} samples={rep.n_samples}")
    print("obstacle face alpha_i margin rate half_width99 flagged")
    for r in rep.rates:
        print(f"{r.obstacle} {r.face} {r.alpha_i:.6g} {r.margin:.6g} {r.rate:.6g} "
              f"{r.half_width:.3g} {int(r.flagged)}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"run": cmd_run, "compare": cmd_compare, "validate": cmd_validate}[args.command]
    try:
        return handler(args)
    except UsageError as exc:
        print(f"plan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print(f"plan: scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except Exception as exc:  # noqa: BLE001 - map every other failure to the runtime code
        print(f"plan: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
