"""Command-line front end: solve, influence maps, certification, oracles.

Exit codes: 0 success, 2 input/schema error, 3 solver precondition violation,
4 certification failed.  All structured outputs are JSON, grids and traces
are CSV, and files are written atomically (temp file + rename).

The environment variable MEASURE_FW_THREADS caps the worker count used for
grid evaluation (0 or unset = auto); results are reduced in submission
order, so thread count never changes the output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import contains_many
from .measure import DiscreteMeasure
from .l1 import l1_solve_on_grid
from .response import InfluenceKernel, demand_of, simulate_objective
from .scenario import DiscretePoints, Problem, ScenarioError, load_scenario, make_city
from .solver import (
    SolverConfig,
    certify,
    dfw_solve,
    fcfw_solve,
    lattice_points,
    two_point_optimum,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PRECONDITION = 3
EXIT_NOT_CERTIFIED = 4


def worker_count() -> int:
    """Worker cap from MEASURE_FW_THREADS (0 or unset means auto)."""
    raw = os.environ.get("MEASURE_FW_THREADS", "0")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ScenarioError(f"MEASURE_FW_THREADS must be an integer, got {raw!r}") from exc
    if n < 0:
        raise ScenarioError("MEASURE_FW_THREADS must be nonnegative")
    if n == 0:
        return os.cpu_count() or 1
    return n


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class RunManifest:
    """Everything needed to reproduce a run, serialized next to its outputs."""

    command: str
    argv: list
    scenario: str
    scenario_sha256: str
    config: dict
    seed: int
    out: str
    version: str = __version__

    def to_json(self) -> dict:
        return asdict(self)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_problem(path: str) -> Problem:
    return load_scenario(path)


def _load_measure(path: str) -> DiscreteMeasure:
    p = Path(path)
    if not p.is_file():
        raise ScenarioError(f"measure file not found: {p}")
    try:
        return DiscreteMeasure.from_json(json.loads(p.read_text()))
    except (json.JSONDecodeError, ValueError) as exc:
        raise ScenarioError(f"malformed measure file: {exc}") from exc


def _config_from_args(args) -> SolverConfig:
    cfg = SolverConfig(seed=args.seed)
    if getattr(args, "iters", None) is not None:
        cfg.max_outer_iters = args.iters
    if getattr(args, "batch", None) is not None:
        cfg.mc_batch_size = args.batch
    if getattr(args, "tol", None) is not None:
        cfg.fw_tolerance = args.tol
    for name in ("restarts", "adam_steps", "correction_steps"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, "inner_restarts" if name == "restarts" else name, val)
    cfg.__post_init__()
    return cfg


def cmd_solve(args) -> int:
    problem = _load_problem(args.scenario)
    config = _config_from_args(args)
    rng = np.random.default_rng(config.seed)
    if args.algo == "fcfw":
        measure, trace = fcfw_solve(problem, config, rng)
    elif args.algo == "dfw":
        measure, trace = dfw_solve(problem, config, rng)
    else:
        measure, trace = l1_solve_on_grid(problem, config)
    out = Path(args.out)
    manifest = RunManifest(
        command="solve",
        argv=args.raw_argv,
        scenario=args.scenario,
        scenario_sha256=_sha256(Path(args.scenario)),
        config=asdict(config),
        seed=config.seed,
        out=str(out),
    )
    _write_atomic(out / "measure.json", json.dumps(measure.to_json(), indent=2) + "\n")
    _write_atomic(out / "trace.csv", trace.to_csv_text())
    _write_atomic(out / "manifest.json", json.dumps(manifest.to_json(), indent=2) + "\n")
    print(f"wrote {out}/measure.json ({measure.n_atoms} atoms), trace.csv "
          f"({len(trace)} rows), manifest.json")
    return EXIT_OK


def _check_budget_match(measure: DiscreteMeasure, problem: Problem) -> None:
    if abs(measure.budget - problem.budget) > 1e-9 * max(1.0, problem.budget):
        raise ValueError(
            f"measure budget {measure.budget} does not match scenario budget {problem.budget}"
        )


def _grid_h_values(kernel: InfluenceKernel, pts: np.ndarray) -> np.ndarray:
    workers = worker_count()
    if workers <= 1 or len(pts) < 2048:
        return kernel.influence(pts)
    chunks = np.array_split(pts, workers * 4)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(kernel.influence, chunks))
    return np.concatenate(parts)


def cmd_influence_map(args) -> int:
    problem = _load_problem(args.scenario)
    measure = _load_measure(args.measure)
    _check_budget_match(measure, problem)
    config = SolverConfig(seed=args.seed)
    demand = problem.eta
    if not isinstance(demand, DiscretePoints):
        from .response import SampleBatch

        demand = SampleBatch.draw(problem.eta, config.mc_batch_size, config.seed)
    dpts, dprobs = demand_of(demand)
    kernel = InfluenceKernel(measure.points, measure.weights, dpts, dprobs,
                             problem.curve, problem.norm, budget=problem.budget)
    pts = lattice_points(problem.domain, args.resolution, inside_only=False)
    inside = contains_many(problem.domain, pts)
    h = np.full(len(pts), np.nan)
    if inside.any():
        h[inside] = _grid_h_values(kernel, pts[inside])
    lines = ["x,y,h"]
    for (x, y), ok, val in zip(pts, inside, h):
        x, y = float(x), float(y)
        lines.append(f"{x!r},{y!r},{float(val)!r}" if ok else f"{x!r},{y!r},")
    _write_atomic(Path(args.out), "\n".join(lines) + "\n")
    print(f"wrote {args.out} ({int(inside.sum())} in-domain cells of {len(pts)})")
    return EXIT_OK


def cmd_certify(args) -> int:
    problem = _load_problem(args.scenario)
    measure = _load_measure(args.measure)
    _check_budget_match(measure, problem)
    config = SolverConfig(seed=args.seed)
    min_h, argmin = certify(measure, problem, args.grid, config)
    certified = min_h >= -args.tol
    verdict = f"OPTIMAL({args.tol:g})" if certified else "NOT-OPTIMAL"
    print(f"min_h={min_h!r} argmin=({float(argmin[0])!r}, {float(argmin[1])!r}) "
          f"verdict={verdict}")
    return EXIT_OK if certified else EXIT_NOT_CERTIFIED


def cmd_oracle(args) -> int:
    if args.oracle_cmd == "two-point":
        lam1, lam2 = args.lambda1, args.lambda2
        if lam1 < 0 or lam2 < 0 or abs(lam1 + lam2 - 1.0) > 1e-9:
            raise ScenarioError("lambda1, lambda2 must be nonnegative and sum to 1")
        mu = two_point_optimum(args.y1, args.y2, lam1, lam2, args.budget)
        print(json.dumps(mu.to_json(), indent=2))
        return EXIT_OK
    problem = _load_problem(args.scenario)
    measure = _load_measure(args.measure)
    _check_budget_match(measure, problem)
    rng = np.random.default_rng(args.seed)
    est, se = simulate_objective(measure, problem.eta, problem.curve, problem.norm,
                                 args.reps, rng)
    print(json.dumps({"estimate": est, "stderr": se, "reps": args.reps}))
    return EXIT_OK


def cmd_make_city(args) -> int:
    doc = make_city(args.units, args.seed, budget=args.budget, norm=args.norm)
    _write_atomic(Path(args.out), json.dumps(doc, indent=2) + "\n")
    print(f"wrote {args.out} ({args.units} area units)")
    return EXIT_OK


def _point_arg(text: str) -> list:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}")
    return [float(parts[0]), float(parts[1])]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="measurefw",
        description="Frank-Wolfe solver for volunteer-measure allocation.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("solve", help="run a solver on a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--algo", choices=["fcfw", "dfw", "l1grid"], default="fcfw")
    p.add_argument("--iters", type=int, default=None, help="outer iterations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--batch", type=int, default=None, help="sample size for continuous eta")
    p.add_argument("--tol", type=float, default=None, help="stop when |h*| drops below")
    p.add_argument("--restarts", type=int, default=None, help="Adam restarts per iteration")
    p.add_argument("--adam-steps", dest="adam_steps", type=int, default=None)
    p.add_argument("--correction-steps", dest="correction_steps", type=int, default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("influence-map", help="evaluate the influence function on a grid")
    p.add_argument("--scenario", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--resolution", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_influence_map)

    p = sub.add_parser("certify", help="check the optimality certificate h >= -tol")
    p.add_argument("--scenario", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--grid", type=int, required=True)
    p.add_argument("--tol", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("oracle", help="analytic and simulation oracles")
    osub = p.add_subparsers(dest="oracle_cmd", required=True)
    q = osub.add_parser("two-point", help="analytic optimum for two demand points")
    q.add_argument("--y1", type=_point_arg, required=True, metavar="X,Y")
    q.add_argument("--y2", type=_point_arg, required=True, metavar="X,Y")
    q.add_argument("--lambda1", type=float, required=True)
    q.add_argument("--lambda2", type=float, required=True)
    q.add_argument("--budget", type=float, required=True)
    q.set_defaults(func=cmd_oracle)
    q = osub.add_parser("simulate", help="Monte-Carlo objective estimate")
    q.add_argument("--scenario", required=True)
    q.add_argument("--measure", required=True)
    q.add_argument("--reps", type=int, required=True)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_oracle)

    p = sub.add_parser("make-city", help="emit a synthetic city scenario")
    p.add_argument("--units", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=float, default=1.0)
    p.add_argument("--norm", choices=["l2", "l1"], default="l2")
    p.set_defaults(func=cmd_make_city)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.raw_argv = argv
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
