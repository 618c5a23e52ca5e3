"""``localflow`` command line: generate, solve, perturb, verify, sweep.

Exit codes: 0 success, 1 a checked tolerance failed, 2 invalid input,
3 numerical failure inside a solver.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from localflow import analysis, instance, spectral
from localflow.graph import GraphError, ball
from localflow.sensitivity import (
    ConvergenceError,
    FlowProblem,
    InfeasibleFlowError,
    sensitivity_operator,
    solve_exact,
)
from localflow.solver import BoundaryConsistencyError, PGDConfig, SupportError, pgd_solve

log = logging.getLogger("localflow")

EXIT_OK, EXIT_TOLERANCE, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3
DEFAULT_SEED = 0
DEFAULT_TOL = 1e-8

_INPUT_ERRORS = (instance.InstanceError, GraphError, InfeasibleFlowError, SupportError,
                 BoundaryConsistencyError, FileNotFoundError, KeyError, ValueError)
_NUMERICAL_ERRORS = (ConvergenceError, np.linalg.LinAlgError, FloatingPointError)


def resolve_seed(arg):
    if arg is not None:
        return arg
    env = os.environ.get("LOCALFLOW_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise ValueError(f"LOCALFLOW_SEED must be an integer, got {env!r}") from None


def _emit(text: str, output):
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _int_list(s):
    return [int(v) for v in s.split(",") if v.strip()]


def _float(x):
    """JSON-friendly float; non-finite values become null."""
    return float(x) if x is not None and np.isfinite(x) else None


def _parse_perturbation(p: FlowProblem, arg: str) -> np.ndarray:
    """``'{"v": value, ...}'`` or ``@file.json`` -> vector over V."""
    text = Path(arg[1:]).read_text() if arg.startswith("@") else arg
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"perturbation is not valid JSON: {exc}") from None
    if not isinstance(d, dict) or not d:
        raise ValueError("perturbation must be a nonempty object mapping vertex ids to values")
    labels = {str(v): i for i, v in enumerate(p.graph.vertex_labels)}
    pert = np.zeros(p.graph.n_vertices)
    for k, v in d.items():
        if str(k) not in labels:
            raise ValueError(f"perturbation at unknown vertex {k!r}")
        pert[labels[str(k)]] = float(v)
    return pert


# -- commands ---------------------------------------------------------------

def cmd_generate(args) -> int:
    seed = resolve_seed(args.seed)
    g = instance.make_graph(args.family, args.size, args.k, seed)
    costs = instance.make_costs(args.cost, g.n_edges, args.alpha, args.beta)
    p = FlowProblem(g, costs, instance.unit_demand(g))
    _emit(instance.dumps(instance.problem_to_dict(p)), args.output)
    return EXIT_OK


def cmd_solve(args) -> int:
    p = instance.load_problem(args.graph)
    sol = solve_exact(p, args.tol)
    s = sensitivity_operator(p, sol)
    x_pgd, it, _ = pgd_solve(p, PGDConfig(max_iters=args.iters))
    report = spectral.spectral_report(s, p.costs.condition_number)
    out = {
        "x": sol.x.tolist(),
        "dual": sol.dual.tolist(),
        "iterations": sol.iterations,
        "kkt": {"feasibility": sol.residual, "stationarity": sol.stationarity},
        "objective": p.objective(sol.x),
        "pgd": {"iterations": it, "distance_to_exact": float(np.linalg.norm(x_pgd - sol.x))},
        "spectral": report.to_dict(),
    }
    _emit(instance.dumps(out), args.output)
    return EXIT_OK


def perturb_report(p: FlowProblem, pert, anchor, radius, iters, epsilon=None, omega=3.0):
    params = analysis.LocalBoundParams.from_problem(p)
    support = np.flatnonzero(pert)
    z = int(p.graph.distances_from([anchor])[support].max())
    tuning = None
    if radius is None or iters is None:
        if epsilon is None:
            raise ValueError("give --radius and --iters, or --epsilon to tune them")
        tuning = analysis.tune(epsilon, float(np.linalg.norm(pert)), params, z)
        radius = tuning.radius if radius is None else radius
        iters = tuning.iterations if iters is None else iters
    sub = ball(p.graph, anchor, radius)
    sol = solve_exact(p)
    rep = analysis.measure_decomposition(p, sol, pert, sub, iters, params)
    out = rep.to_dict()
    out.update({
        "anchor": p.graph.vertex_labels[anchor],
        "radius": int(radius),
        "ball_vertices": len(sub.vertices),
        "complexity_estimate": analysis.complexity_estimate(len(sub.vertices), iters, omega),
    })
    if tuning is not None:
        out["tuning"] = tuning.to_dict()
    if epsilon is not None:
        out["epsilon"] = float(epsilon)
        out["within_epsilon"] = bool(rep.error_measured <= epsilon)
    return out


def cmd_perturb(args) -> int:
    p = instance.load_problem(args.graph)
    pert = _parse_perturbation(p, args.perturbation)
    support = np.flatnonzero(pert)
    anchor = (p.graph.index_of(_coerce_label(p, args.anchor)) if args.anchor is not None
              else int(support[0]))
    out = perturb_report(p, pert, anchor, args.radius, args.iters, args.epsilon, args.omega)
    _emit(instance.dumps(out), args.output)
    if args.epsilon is not None and not out["within_epsilon"]:
        return EXIT_TOLERANCE
    return EXIT_OK


def _coerce_label(p, label):
    for v in p.graph.vertex_labels:
        if str(v) == str(label):
            return v
    raise ValueError(f"unknown vertex {label!r}")


def verify_problem(p: FlowProblem, tol=DEFAULT_TOL, n_walks=20_000, seed=DEFAULT_SEED) -> dict:
    """Every walk/Laplacian identity on one instance; ``{"checks": {...}, "passed": bool}``."""
    sol = solve_exact(p)
    s = sensitivity_operator(p, sol)
    w = spectral.walk_data(s)
    g = p.graph
    n = g.n_vertices
    checks = {}

    def record(name, residual, limit=tol):
        checks[name] = {"residual": _float(residual), "tolerance": limit,
                        "passed": bool(residual <= limit)}

    def skip(name, why):
        checks[name] = {"skipped": why, "passed": True}

    record("kkt_feasibility", sol.residual)
    record("kkt_stationarity", sol.stationarity)
    record("row_stochastic", float(np.abs(w.P.sum(axis=1) - 1).max()))
    record("stationary_distribution", float(np.abs(w.pi @ w.P - w.pi).max()))
    L, Lp = s.laplacian, s.laplacian_pinv
    record("pseudoinverse", float(np.abs(L @ Lp @ L - L).max()))

    # restricted Laplacian / killed walk, cemetery at the last vertex
    z_bar = n - 1
    if n > 1:
        k = spectral.killed_walk(s, z_bar)
        record("restricted_inverse", float(np.abs(k.green @ k.restricted_laplacian
                                                  - np.eye(n - 1)).max()))
        record("killed_green_series", float(np.abs(spectral.killed_green_series(k)
                                                    - k.green).max()))
        record("restricted_vs_pseudoinverse",
               float(np.abs(spectral.pinv_via_restricted(s, z_bar) - k.green).max()))
        hp = max(abs(spectral.hitting_probability(k, v, wv)
                     - spectral.hitting_probability_linear(k.P, wv, z_bar)[v])
                 for v in range(n - 1) for wv in range(n - 1))
        record("hitting_probability", hp)
        est = spectral.simulate_killed_walk(k, 0, 0, n_walks, seed)
        exact = spectral.expected_visits(k, 0)
        sigma = est.visits_stderr
        record("monte_carlo_visits_sigmas",
               abs(est.mean_visits - exact) / sigma if sigma > 0 else 0.0, 3.0)

    series = ("green_difference_series", "green_difference_swapped", "sum_over_z")
    if not w.contractive:
        for name in series:
            skip(name, f"lambda={w.lam:.6g}")
    else:
        worst = worst_swap = 0.0
        verts = range(n) if n <= 6 else np.linspace(0, n - 1, 6).astype(int)
        for u in verts:
            for v in verts:
                for wv in verts:
                    for z in verts:
                        lhs = spectral.green_difference(w, u, v, wv, z, "pinv")
                        worst = max(worst, abs(lhs - spectral.green_difference(
                            w, u, v, wv, z, "series")))
                        worst_swap = max(worst_swap, abs(lhs - spectral.green_difference(
                            w, wv, z, u, v, "series")))
        record("green_difference_series", worst)
        record("green_difference_swapped", worst_swap)
        f = np.random.default_rng(seed).standard_normal(n)
        f -= f.mean()
        record("sum_over_z", max(abs(spectral.green_potential(w, 0, v, f, "pinv")
                                     - spectral.green_potential(w, 0, v, f, "series"))
                                 for v in range(n)))
    return {"lambda": w.lam, "checks": checks,
            "passed": all(c["passed"] for c in checks.values())}


def cmd_verify(args) -> int:
    p = instance.load_problem(args.graph)
    rep = verify_problem(p, args.tol, seed=resolve_seed(args.seed))
    _emit(instance.dumps(rep), args.output)
    return EXIT_OK if rep["passed"] else EXIT_TOLERANCE


SWEEP_COLUMNS = ["n", "r", "t", "epsilon", "bias_meas", "bias_bound", "var_meas",
                 "var_bound", "error", "rho"]


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def sweep_rows(sizes, radii, iters, k=3, seed=DEFAULT_SEED, epsilon=None, cost="quadratic"):
    """Localized re-solves on seeded random k-regular graphs; one row per (n, r, t)."""
    rows = []
    for n in sizes:
        g = instance.make_graph("random-regular", n, k, seed)
        p = FlowProblem(g, instance.make_costs(cost, g.n_edges), instance.unit_demand(g))
        anchor = 0
        nb = int(g.neighbors(anchor)[0])
        pert = np.zeros(n)
        pert[anchor], pert[nb] = np.sqrt(0.5), -np.sqrt(0.5)
        sol = solve_exact(p)
        params = analysis.LocalBoundParams.from_problem(p)
        for r in radii:
            sub = ball(g, anchor, r)
            for t in iters:
                rep = analysis.measure_decomposition(p, sol, pert, sub, t, params)
                rows.append({"n": n, "r": r, "t": t, "epsilon": epsilon,
                             "bias_meas": rep.bias_measured, "bias_bound": rep.bias_bound,
                             "var_meas": rep.variance_measured,
                             "var_bound": rep.variance_bound, "error": rep.error_measured,
                             "rho": rep.rho})
    return rows


def cmd_sweep(args) -> int:
    rows = sweep_rows(_int_list(args.sizes), _int_list(args.radius), _int_list(args.iters),
                      args.k, resolve_seed(args.seed), args.epsilon, args.cost)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(SWEEP_COLUMNS)
    for row in rows:
        wr.writerow([_cell(row[c]) for c in SWEEP_COLUMNS])
    _emit(buf.getvalue(), args.output)
    if args.epsilon is not None and any(r["error"] > args.epsilon for r in rows):
        return EXIT_TOLERANCE
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="localflow",
                                 description="Sensitivity and localized re-solves of "
                                             "min-cost network flows.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, graph=True):
        if graph:
            p.add_argument("graph", help="graph JSON file")
        p.add_argument("--seed", type=int, default=None,
                       help="random seed (default: $LOCALFLOW_SEED, else 0)")
        p.add_argument("--output", "-o", default=None, help="output file (default stdout)")

    g = sub.add_parser("generate", help="write a graph JSON file")
    common(g, graph=False)
    g.add_argument("family", choices=instance.FAMILIES)
    g.add_argument("size", type=int, help="vertices (grid: side length)")
    g.add_argument("--k", type=int, default=3, help="degree for random-regular")
    g.add_argument("--cost", choices=("quadratic", "logcosh"), default="quadratic")
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--beta", type=float, default=2.0, help="log-cosh curvature upper bound")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="exact solve, PGD check and spectral report")
    common(s)
    s.add_argument("--tol", type=float, default=1e-12)
    s.add_argument("--iters", type=int, default=200, help="PGD iterations")
    s.set_defaults(func=cmd_solve)

    p = sub.add_parser("perturb", help="localized re-solve after perturbing b")
    common(p)
    p.add_argument("--perturbation", required=True,
                   help='JSON object {"vertex": delta, ...} or @file.json')
    p.add_argument("--anchor", default=None, help="ball center (default: first support vertex)")
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None,
                   help="target accuracy; tunes radius/iters when they are omitted")
    p.add_argument("--omega", type=float, default=3.0, help="matrix-multiplication exponent")
    p.set_defaults(func=cmd_perturb)

    v = sub.add_parser("verify", help="check the walk/Laplacian identities on one graph")
    common(v)
    v.add_argument("--tol", type=float, default=DEFAULT_TOL)
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("sweep", help="CSV of measured vs bounded errors over (n, r, t)")
    common(w, graph=False)
    w.add_argument("--sizes", default="50,100,200")
    w.add_argument("--radius", default="1,2,3,4,5")
    w.add_argument("--iters", default="0,1,5,20")
    w.add_argument("--k", type=int, default=3)
    w.add_argument("--cost", choices=("quadratic", "logcosh"), default="quadratic")
    w.add_argument("--epsilon", type=float, default=None)
    w.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _NUMERICAL_ERRORS as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except _INPUT_ERRORS as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
