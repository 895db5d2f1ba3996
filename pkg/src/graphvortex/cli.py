"""Command-line entry points.

Inputs are two JSON files. The graph file holds
``{"vertices": [{"id", "mu"}], "edges": [{"u", "v", "w"}]}`` and the problem
file holds ``{"cartan": {"preset": "A2"} or {"K": [[...]], "P": [...]},
"vortices": {"points": [[...], ...]}}`` with one list of vertex ids per
component.

Exit codes: 0 success, 1 input error, 2 lambda at or below the threshold,
3 no convergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import abelian
from .cartan import CartanSystem, lambda0, make_vortex, preset, validate
from .constraint import admissibility_margins, moments
from .errors import (
    CartanError,
    LambdaBelowThreshold,
    NoConvergence,
    NotAdmissible,
    NumericRange,
    VortexError,
)
from .graph import WeightedGraph
from .minimizer import SEED_STRATEGIES, ProblemInstance, minimize, seed

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_THRESHOLD = 2
EXIT_NOCONV = 3

SWEEP_COLUMNS = ["lambda", "converged", "J", "residual_inf", "min_t", "max_u_orig", "iterations"]

logger = logging.getLogger(__name__)


class InputError(Exception):
    """Bad command-line input; maps to exit code 1."""


# -- loading ------------------------------------------------------------------


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from exc


def load_graph(path) -> WeightedGraph:
    return WeightedGraph.from_dict(_read_json(path))


def load_system(data: dict) -> CartanSystem:
    cfg = data.get("cartan")
    if not isinstance(cfg, dict):
        raise InputError('problem needs a "cartan" object with "preset" or "K"')
    if "preset" in cfg:
        return preset(str(cfg["preset"]))
    if "K" not in cfg:
        raise InputError('"cartan" needs "preset" or "K"')
    return validate(cfg["K"], cfg.get("P"), name=str(cfg.get("name", "")))


def _points(data: dict):
    vort = data.get("vortices", {})
    pts = vort.get("points") if isinstance(vort, dict) else None
    if not isinstance(pts, list) or not all(isinstance(c, list) for c in pts):
        raise InputError('problem needs "vortices": {"points": [[...], ...]}')
    return pts


def load_problem(g: WeightedGraph, data: dict):
    """``(CartanSystem, VortexData)`` from a parsed problem file."""
    sys_ = load_system(data)
    return sys_, make_vortex(sys_, points=_points(data), graph=g)


def _instance(graph_data, problem_data, lam) -> ProblemInstance:
    g = WeightedGraph.from_dict(graph_data)
    sys_, vort = load_problem(g, problem_data)
    return ProblemInstance.build(g, sys_, vort, lam)


# -- output -------------------------------------------------------------------


def _emit(obj, out):
    # json writes floats with repr, the shortest string that round-trips exactly
    text = json.dumps(obj, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# -- commands -----------------------------------------------------------------


def cmd_solve(args) -> int:
    p = _instance(_read_json(args.graph), _read_json(args.problem), _lambda(args.lam))
    try:
        report = minimize(p, seed_strategy=args.seed_strategy, tol=args.tol, max_iter=args.max_iter)
    except LambdaBelowThreshold as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_THRESHOLD
    except NoConvergence as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        partial = getattr(exc, "report", None)
        if partial is not None:
            _emit(partial.to_dict(p.graph), args.out)
        return EXIT_NOCONV
    except (NotAdmissible, NumericRange) as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    _emit(report.to_dict(p.graph), args.out)
    return EXIT_OK


def _sweep_row(job):
    graph_data, problem_data, lam, tol, max_iter, strategy = job
    row = dict.fromkeys(SWEEP_COLUMNS)
    row["lambda"], row["converged"] = lam, False
    p = _instance(graph_data, problem_data, lam)
    try:
        rep = minimize(p, seed_strategy=strategy, tol=tol, max_iter=max_iter)
    except (NoConvergence, NotAdmissible, NumericRange, LambdaBelowThreshold) as exc:
        rep = getattr(exc, "report", None)
        if rep is None:
            return row
    row.update(
        converged=rep.converged,
        J=rep.J_value,
        residual_inf=rep.residual_inf,
        min_t=float(rep.t.min()) if rep.t.size else None,
        max_u_orig=float(rep.u_orig.max()) if rep.u_orig.size else None,
        iterations=rep.iterations,
    )
    return row


def _threads() -> int:
    raw = os.environ.get("VORTEX_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError as exc:
            raise InputError(f"VORTEX_THREADS must be an integer, got {raw!r}") from exc
        if n < 1:
            raise InputError("VORTEX_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


def lambda_grid(lo, hi, steps, log=False) -> np.ndarray:
    if steps < 1:
        raise InputError("--steps must be at least 1")
    if not (lo > 0 and hi > 0):
        raise InputError("lambda bounds must be positive")
    if hi < lo:
        raise InputError("--lambda-max must not be below --lambda-min")
    if steps == 1:
        return np.array([float(lo)])
    return np.geomspace(lo, hi, steps) if log else np.linspace(lo, hi, steps)


def cmd_sweep(args) -> int:
    if args.lambda_min is None or args.lambda_max is None:
        raise InputError("sweep needs --lambda-min and --lambda-max")
    graph_data, problem_data = _read_json(args.graph), _read_json(args.problem)
    # validate inputs once up front so bad files fail with exit 1
    _instance(graph_data, problem_data, 1.0)
    grid = lambda_grid(args.lambda_min, args.lambda_max, args.steps, args.log)
    jobs = [(graph_data, problem_data, float(lam), args.tol, args.max_iter, args.seed_strategy) for lam in grid]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(job) for job in jobs]

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in SWEEP_COLUMNS])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK if any(r["converged"] for r in rows) else EXIT_NOCONV


def cmd_abelian(args) -> int:
    g = load_graph(args.graph)
    pts = _points(_read_json(args.problem))
    if len(pts) != 1:
        raise InputError(f"scalar problem needs exactly one point list, got {len(pts)}")
    pts = pts[0]
    if args.find_critical:
        if not pts:
            raise InputError("--find-critical needs at least one vortex point")
        lo, hi = abelian.critical_lambda(g, pts, tol=args.tol, max_iter=args.max_iter)
        _emit(
            {"lo": lo, "hi": hi, "lower_bound_16piM_over_V": abelian.lower_bound(g, len(pts))},
            args.out,
        )
        return EXIT_OK
    prob = abelian.abelian_problem(g, pts, _lambda(args.lam))
    try:
        sol = abelian.monotone_solve(prob, tol=args.tol, max_iter=args.max_iter)
    except NoConvergence as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    _emit(sol.to_dict(g), args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    data = _read_json(args.problem)
    out = {}
    try:
        sys_ = load_system(data)
    except CartanError as exc:
        out.update(status="FAIL", error=type(exc).__name__, condition=exc.condition, message=str(exc))
        _emit(out, args.out)
        return EXIT_INPUT
    out.update(status="PASS", **sys_.to_dict())
    if args.graph:
        g = load_graph(args.graph)
        vort = make_vortex(sys_, points=_points(data), graph=g)
        out["lambda0"] = lambda0(sys_, vort, g.volume)
        if args.lam is not None:
            p = ProblemInstance.build(g, sys_, vort, _lambda(args.lam))
            w = seed(p, args.seed_strategy)
            margins = admissibility_margins(sys_, vort, moments(g, p.u0, w), p.lam)
            out["lambda"] = p.lam
            out["seed_strategy"] = args.seed_strategy
            out["seed_margins"] = margins.tolist()
            out["seed_admissible"] = bool(np.all(margins >= 0))
    _emit(out, args.out)
    return EXIT_OK


def cmd_lambda0(args) -> int:
    g = load_graph(args.graph)
    data = _read_json(args.problem)
    sys_ = load_system(data)
    vort = make_vortex(sys_, points=_points(data), graph=g)
    _emit({"lambda0": lambda0(sys_, vort, g.volume), "volume": g.volume, "N": vort.N.tolist()}, args.out)
    return EXIT_OK


def _lambda(lam):
    if lam is None:
        raise InputError("--lambda is required")
    if not lam > 0:
        raise InputError(f"--lambda must be positive, got {lam}")
    return lam


# -- parser -------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors (argparse would use 2, our threshold code)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="graphvortex", description="Vortex equations on finite weighted graphs."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, graph_required=True):
        sp.add_argument("--graph", required=graph_required, help="graph JSON file")
        sp.add_argument("--problem", required=True, help="problem JSON file")
        sp.add_argument("--lambda", dest="lam", type=float, help="coupling constant")
        sp.add_argument("--tol", type=float, default=1e-9)
        sp.add_argument("--max-iter", type=int, default=20000)
        sp.add_argument("--seed-strategy", choices=SEED_STRATEGIES, default="neg-u0")
        sp.add_argument("--out", help="output file (default: stdout)")

    sp = sub.add_parser("solve", help="solve the system at one coupling")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("sweep", help="solve over a range of couplings, CSV output")
    common(sp)
    sp.add_argument("--lambda-min", type=float)
    sp.add_argument("--lambda-max", type=float)
    sp.add_argument("--steps", type=int, default=10)
    sp.add_argument("--log", action="store_true", help="log-spaced grid")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("abelian", help="scalar equation: maximal solution or critical coupling")
    common(sp)
    sp.add_argument("--find-critical", action="store_true")
    sp.set_defaults(func=cmd_abelian, tol=1e-10)

    sp = sub.add_parser("validate", help="check a Cartan matrix and report derived data")
    common(sp, graph_required=False)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("lambda0", help="necessary coupling threshold")
    common(sp)
    sp.set_defaults(func=cmd_lambda0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except NoConvergence as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except (InputError, VortexError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
