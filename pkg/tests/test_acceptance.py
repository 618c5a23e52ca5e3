"""Acceptance criteria, one test (and one printed verdict line) each."""
import subprocess
import sys
import time

import numpy as np
import pytest

from localflow.analysis import LocalBoundParams, measure_decomposition, tune
from localflow.corpus import build_corpus
from localflow.costs import QuadraticCost
from localflow.graph import (
    adjacency_spectrum,
    ball,
    cycle_graph,
    induced_subgraph,
    path_graph,
    random_connected_subgraph,
    random_regular_graph,
)
from localflow.sensitivity import FlowProblem, finite_perturbation, sensitivity_at, solve_exact
from localflow.solver import PGDConfig, pgd_solve
from localflow.spectral import (
    conservative_decay_bound,
    conservative_lambda,
    decay_bound,
    expected_visits,
    green_difference,
    hitting_probability,
    induced_edges,
    interlacing_bound,
    interlacing_interval,
    killed_green_series,
    killed_walk,
    localized_norm,
    pinv_via_restricted,
    simulate_killed_walk,
    subgraph_walk_eigenvalues,
    walk_data,
)

# tolerances and sizes pinned by the acceptance criteria
FD_STEP = 1e-4
FD_REL_QUADRATIC = 1e-6
FD_REL_LOGCOSH = 1e-4
FD_TIME_LIMIT = 60.0
FTC_REL = 1e-6
GREEN_PATHS_TOL = 1e-8
RESTRICTED_TOL = 1e-10
MC_WALKS = 100_000
MC_SEED = 20240601
MC_SIGMAS = 3.0
DECAY_PATH_LENGTH = 30
DECAY_RATE_SLACK = 0.05
THM3_RADII = (1, 2, 3, 4, 5)
THM3_ITERS = (0, 1, 5, 20)
CONTRACTION_STARTS = 20
CONTRACTION_STEPS = 200
SCALE_EPSILON = 1e-3
SCALE_SIZES = (50, 100, 200)
SCALE_SEEDS = (0, 1, 2, 3, 4)
SCALE_TIME_LIMIT = 300.0
# family-wide ceiling on mu for random 3-regular graphs (each sample is checked against it)
SCALE_MU_BAR = 2.95
INTERLACING_SAMPLES = 20
ROUNDOFF = 1e-10


@pytest.fixture(scope="module")
def corpus_ops():
    return [(inst, sensitivity_at(inst.problem)) for inst in build_corpus()]


def _balanced(rng, n):
    d = rng.normal(size=n)
    return d - d.mean()


def test_criterion_1_sensitivity_finite_differences(acceptance_log):
    start = time.perf_counter()
    corpus = build_corpus()
    rng = np.random.default_rng(1)
    worst = {"quadratic": 0.0, "logcosh": 0.0}
    for inst in corpus:
        p = inst.problem
        d = _balanced(rng, p.graph.n_vertices)
        fd = (solve_exact(p.with_flow(p.b + FD_STEP * d)).x
              - solve_exact(p.with_flow(p.b - FD_STEP * d)).x) / (2 * FD_STEP)
        dx = sensitivity_at(p).apply(d)
        rel = np.linalg.norm(fd - dx) / np.linalg.norm(dx)
        kind = "logcosh" if inst.kind == "logcosh" else "quadratic"
        worst[kind] = max(worst[kind], rel)
    elapsed = time.perf_counter() - start
    n_graphs = len({inst.name.rsplit("-", 1)[0] for inst in corpus})
    ok = (n_graphs >= 12 and worst["quadratic"] <= FD_REL_QUADRATIC
          and worst["logcosh"] <= FD_REL_LOGCOSH and elapsed < FD_TIME_LIMIT)
    acceptance_log(1, ok, f"{n_graphs} graphs/{len(corpus)} instances, max rel err quadratic "
                          f"{worst['quadratic']:.2e} (<= {FD_REL_QUADRATIC:g}), log-cosh "
                          f"{worst['logcosh']:.2e} (<= {FD_REL_LOGCOSH:g}), {elapsed:.1f}s")
    assert ok


def test_criterion_2_finite_perturbation_identity(acceptance_log):
    rng = np.random.default_rng(2)
    worst = 0.0
    count = 0
    for inst in build_corpus(kinds=("logcosh",)):
        p = inst.problem
        pert = _balanced(rng, p.graph.n_vertices)
        integral = finite_perturbation(p, pert)
        diff = solve_exact(p.with_flow(p.b + pert)).x - solve_exact(p).x
        worst = max(worst, np.linalg.norm(integral - diff) / np.linalg.norm(pert))
        count += 1
    ok = worst <= FTC_REL
    acceptance_log(2, ok, f"{count} log-cosh instances, max |integral - difference|/|p| = "
                          f"{worst:.2e} (<= {FTC_REL:g})")
    assert ok


def test_criterion_3_walk_identities(corpus_ops, acceptance_log):
    worst_green = worst_restricted = 0.0
    for inst, s in corpus_ops:
        w = walk_data(s)
        n = len(w.pi)
        if w.contractive:
            verts = sorted({0, 1, n // 3, n // 2, n - 1})
            for u in verts:
                for v in verts:
                    for x in verts:
                        for z in verts:
                            ref = green_difference(w, u, v, x, z)
                            worst_green = max(
                                worst_green,
                                abs(ref - green_difference(w, u, v, x, z, "series")),
                                abs(ref - green_difference(w, x, z, u, v, "series")))
        for z_bar in (0, n - 1):
            k = killed_walk(s, z_bar)
            oracle = np.linalg.inv(s.laplacian[np.ix_(k.keep, k.keep)])
            worst_restricted = max(worst_restricted,
                                   np.abs(killed_green_series(k) - oracle).max(),
                                   np.abs(pinv_via_restricted(s, z_bar) - oracle).max())

    # Monte Carlo against the closed forms
    mc = []
    tri = next(s for inst, s in corpus_ops if inst.name == "triangle-uniform")
    for inst, s in corpus_ops:
        if inst.name not in ("triangle-uniform", "cycle5-logcosh", "rr3_12-quadratic"):
            continue
        n = len(s.degrees)
        k = killed_walk(s, n - 1)
        est = simulate_killed_walk(k, 0, 1, MC_WALKS, MC_SEED)
        mc.append(abs(est.hit_probability - hitting_probability(k, 0, 1)) / est.hit_stderr)
        est = simulate_killed_walk(k, 1, 1, MC_WALKS, MC_SEED + 1)
        mc.append(abs(est.mean_visits - expected_visits(k, 1)) / est.visits_stderr)

    # triangle hand values (unit weights regardless of the linear terms)
    k = killed_walk(tri, 2)
    hand = (abs(green_difference(walk_data(tri), 0, 1, 0, 1, "series") - 2 / 3) <= GREEN_PATHS_TOL
            and abs(hitting_probability(k, 0, 1) - 0.5) <= RESTRICTED_TOL
            and abs(expected_visits(k, 1) - 4 / 3) <= RESTRICTED_TOL)
    ok = (worst_green <= GREEN_PATHS_TOL and worst_restricted <= RESTRICTED_TOL
          and max(mc) <= MC_SIGMAS and hand)
    acceptance_log(3, ok, f"Green paths {worst_green:.1e} (<= {GREEN_PATHS_TOL:g}), restricted "
                          f"{worst_restricted:.1e} (<= {RESTRICTED_TOL:g}), Monte Carlo max "
                          f"{max(mc):.2f} sigma (<= {MC_SIGMAS:g}), triangle 2/3, 1/2, 4/3 "
                          f"{'ok' if hand else 'off'}")
    assert ok


def _empirical_rate(norms):
    """exp(slope) of a least-squares fit of log norm against distance; 0 if it dies out."""
    d = np.flatnonzero(np.asarray(norms) > 1e-14)
    if len(d) < 2:
        return 0.0
    slope = np.polyfit(d, np.log(np.asarray(norms)[d]), 1)[0]
    return float(np.exp(slope))


def test_criterion_4_decay_of_correlation(corpus_ops, acceptance_log):
    rng = np.random.default_rng(4)
    pairs = violations = conservative_pairs = 0
    for inst, s in corpus_ops:
        w = walk_data(s)
        if not w.contractive:
            continue
        g = s.graph
        p = inst.problem
        w_minus, w_plus = 1 / p.costs.beta.max(), 1 / p.costs.alpha.min()
        conservative = conservative_lambda(g, w_minus, w_plus) < 1
        for z0 in range(min(g.n_vertices, 8)):
            Z = sorted({z0, int(rng.choice(g.neighbors(z0)))})
            pert = np.zeros(g.n_vertices)
            pert[Z] = _balanced(rng, len(Z))
            dx = s.apply(pert)
            dist = g.distances_from(Z)
            for d in range(dist.max() + 1):
                U = np.flatnonzero(dist >= d)
                if len(induced_edges(g, U)) == 0:
                    continue
                measured = localized_norm(g, dx, U)
                pairs += 1
                violations += measured > decay_bound(s, U, Z, np.linalg.norm(pert[Z]))
                if conservative:
                    conservative_pairs += 1
                    violations += measured > conservative_decay_bound(
                        s, U, Z, np.linalg.norm(pert[Z]), w_minus, w_plus)

    # long path, unit dipole at one end
    n = DECAY_PATH_LENGTH + 1
    g = path_graph(n)
    s = sensitivity_at(FlowProblem(g, [QuadraticCost()] * g.n_edges, np.zeros(n)))
    pert = np.zeros(n)
    pert[0], pert[1] = 1.0, -1.0
    dx = s.apply(pert)
    dist = g.distances_from([0, 1])
    norms = [localized_norm(g, dx, np.flatnonzero(dist >= d)) for d in range(dist.max())]
    lam = walk_data(s).lam
    rate = _empirical_rate(norms)
    ok = violations == 0 and rate <= lam + DECAY_RATE_SLACK
    acceptance_log(4, ok, f"{violations} bound violations over {pairs} (U, Z) pairs at b and "
                          f"{conservative_pairs} conservative; path-{DECAY_PATH_LENGTH} empirical "
                          f"rate {rate:.3f} <= lambda + {DECAY_RATE_SLACK} = "
                          f"{lam + DECAY_RATE_SLACK:.3f}")
    assert ok


def _dipole(g, anchor):
    pert = np.zeros(g.n_vertices)
    pert[anchor] = np.sqrt(0.5)
    pert[int(g.neighbors(anchor)[0])] = -np.sqrt(0.5)
    return pert


def test_criterion_5_error_bounds(corpus_ops, acceptance_log):
    rng = np.random.default_rng(5)
    checked = violations = 0
    for n, seed in ((30, 0), (50, 1), (100, 2)):
        g = random_regular_graph(n, 3, seed=seed)
        p = FlowProblem(g, [QuadraticCost(1.0, float(c)) for c in rng.uniform(-1, 1, g.n_edges)],
                        _balanced(rng, n))
        params = LocalBoundParams.from_problem(p)
        assert params.Q == 1.0 and params.rho < 1
        sol = solve_exact(p)
        pert = _dipole(g, 0)
        for r in THM3_RADII:
            sub = ball(g, 0, r)
            for t in THM3_ITERS:
                rep = measure_decomposition(p, sol, pert, sub, t, params)
                checked += 1
                violations += rep.bias_measured > rep.bias_bound + ROUNDOFF
                violations += rep.variance_measured > rep.variance_bound + ROUNDOFF
                violations += (rep.error_measured
                               > rep.bias_measured + rep.variance_measured + ROUNDOFF)

    # contraction of global projected gradient descent, every corpus problem
    worst = 0.0
    for inst, _ in corpus_ops:
        p = inst.problem
        Q = p.costs.condition_number
        x_star = solve_exact(p).x
        for _ in range(CONTRACTION_STARTS):
            x0 = rng.normal(scale=2.0, size=p.graph.n_edges)
            _, _, trace = pgd_solve(p, PGDConfig(max_iters=CONTRACTION_STEPS), x0, record=True)
            e0 = np.linalg.norm(x0 - x_star)
            for t, x in enumerate(trace):
                ratio = (np.linalg.norm(x - x_star) - ROUNDOFF) / (np.exp(-t / (2 * Q)) * e0)
                worst = max(worst, ratio)
    ok = violations == 0 and worst <= 1.0
    acceptance_log(5, ok, f"{violations} violations over {checked} (graph, r, t) runs; worst "
                          f"PGD error / e^(-t/2Q) bound = {worst:.3f} over "
                          f"{len(corpus_ops) * CONTRACTION_STARTS} starts")
    assert ok


def test_criterion_6_dimension_free(acceptance_log):
    start = time.perf_counter()
    tunings = set()
    worst_err = 0.0
    mus = []
    for n in SCALE_SIZES:
        for seed in SCALE_SEEDS:
            g = random_regular_graph(n, 3, seed=seed)
            _, mu = adjacency_spectrum(g)
            mus.append(mu)
            params = LocalBoundParams(Q=1.0, k_minus=3, k_plus=3, mu=SCALE_MU_BAR)
            p = FlowProblem(g, [QuadraticCost()] * g.n_edges, np.zeros(n))
            pert = _dipole(g, 0)
            res = tune(SCALE_EPSILON, float(np.linalg.norm(pert)), params, z=1)
            tunings.add((res.radius, res.iterations))
            sol = solve_exact(p)
            rep = measure_decomposition(p, sol, pert, ball(g, 0, res.radius), res.iterations,
                                        params)
            worst_err = max(worst_err, rep.error_measured)
    elapsed = time.perf_counter() - start
    ok = (max(mus) <= SCALE_MU_BAR and len(tunings) == 1 and worst_err <= SCALE_EPSILON
          and elapsed < SCALE_TIME_LIMIT)
    acceptance_log(6, ok, f"(r, t) = {sorted(tunings)} for n in {SCALE_SIZES} x "
                          f"{len(SCALE_SEEDS)} seeds (mu <= {max(mus):.3f} <= {SCALE_MU_BAR}), "
                          f"max error {worst_err:.1e} <= {SCALE_EPSILON:g}, {elapsed:.1f}s")
    assert ok


@pytest.mark.xfail(strict=True, reason="the interval uses the minimum degree of the whole graph, "
                                       "which a proper subgraph can undercut")
def test_criterion_7_interlacing(corpus_ops, acceptance_log):
    rng = np.random.default_rng(7)
    sampled = interval_fail = bound_fail = 0
    example = None
    seen = set()
    for inst, s in corpus_ops:
        g = s.graph
        name = inst.name.rsplit("-", 1)[0]
        if name in seen:     # one weighting per graph keeps 20 samples per graph
            continue
        seen.add(name)
        p = inst.problem
        eigs, mu = adjacency_spectrum(g)
        k_minus, k_plus = int(g.degrees.min()), int(g.degrees.max())
        w_minus, w_plus = 1 / p.costs.beta.max(), 1 / p.costs.alpha.min()
        bound = interlacing_bound(k_minus, k_plus, w_minus, w_plus, mu)
        subs = [g.whole()] + [
            random_connected_subgraph(g, rng, size=int(rng.integers(2, g.n_vertices + 1)),
                                      induced=bool(i % 2))
            for i in range(INTERLACING_SAMPLES - 1)]
        for sub in subs:
            sampled += 1
            lam = subgraph_walk_eigenvalues(g, sub, s.sigma)
            lo, hi = interlacing_interval(eigs, len(sub.vertices), k_minus, k_plus,
                                          w_minus, w_plus)
            inside = np.all(lo - ROUNDOFF <= lam) and np.all(lam <= hi + ROUNDOFF)
            lam_prime = max(abs(lam[1]), abs(lam[-1]))
            interval_fail += not inside
            if lam_prime > bound + ROUNDOFF:
                bound_fail += 1
                example = example or (name, len(sub.vertices), lam_prime, bound)
    ok = interval_fail == 0 and bound_fail == 0
    detail = (f"{interval_fail}/{sampled} sampled subgraphs outside the two-sided interval, "
              f"{bound_fail} above the lambda' bound")
    if example:
        detail += (f" (e.g. {example[0]}, m={example[1]}: lambda'={example[2]:.3f} > "
                   f"{example[3]:.3f})")
    acceptance_log(7, ok, detail)
    # smallest counterexample: an edge of the triangle with unit weights
    tri = cycle_graph(3)
    edge = subgraph_walk_eigenvalues(tri, induced_subgraph(tri, [0, 1]), np.ones(3))
    assert abs(edge[-1]) > interlacing_bound(2, 2, 1.0, 1.0, 1.0)
    assert ok


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "localflow.cli", *map(str, args)],
                          capture_output=True, text=True)


def test_criterion_8_cli_reproducibility(fixtures_dir, acceptance_log):
    fixtures = sorted(f for f in fixtures_dir.glob("*.json")
                      if f.stem not in ("unbalanced", "disconnected"))
    codes = {f.stem: _cli("verify", f).returncode for f in fixtures}
    sweep = ("sweep", "--sizes", "30,60", "--radius", "1,2,3", "--iters", "0,5", "--seed", 11)
    a, b = _cli(*sweep), _cli(*sweep)
    identical = a.returncode == b.returncode == 0 and a.stdout == b.stdout and a.stdout
    ok = all(c == 0 for c in codes.values()) and bool(identical)
    failed = [k for k, c in codes.items() if c != 0]
    acceptance_log(8, ok, f"verify exit 0 on {len(codes) - len(failed)}/{len(codes)} fixtures"
                          f"{' (failed: ' + ', '.join(failed) + ')' if failed else ''}; sweep "
                          f"output {'byte-identical' if identical else 'differs'} across runs")
    assert ok
