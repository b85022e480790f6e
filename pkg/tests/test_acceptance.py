"""Desk-scale acceptance checks; each test prints one PASS/FAIL line."""
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from alloc_lab import ParameterVector, TransformSpec, WeightMatrix, allocate_all, loads
from alloc_lab.canonical import callebaut_slack, canonical_sweep, milne_slack, solve_canonical
from alloc_lab.learn import (
    ItemDistribution,
    NetGrid,
    expected_objective,
    expected_optimum,
    learn_parameters,
    preprocess,
    sample_instances,
)
from alloc_lab.objectives import ObjectiveSpec, evaluate, pipeline_loads, reduce_general
from alloc_lab.online import dominating, eta_of, perturb_parameters, robust_minmax
from alloc_lab.oracle import (
    MaxMinLowerBound,
    MinMaxLowerBound,
    build_aux_graph,
    grid_error_bound,
    grid_opt,
    lp_opt,
    play,
    sinkhorn_scale,
)


@pytest.fixture
def report(capsys):
    def emit(label, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        assert ok, detail
    return emit


def uniform(rng, m, n):
    return WeightMatrix.from_array(rng.uniform(1, 10, (m, n)))


# 1 and 2 share their runs
_RUNS = {}


def _canonical_runs():
    if _RUNS:
        return _RUNS
    rng = np.random.default_rng(101)
    tfs = [TransformSpec.identity(), TransformSpec.exponent(1.0), TransformSpec.exponent(-1.0)]
    start = time.perf_counter()
    runs, gaps, ratios = [], [], []
    for t in range(100):
        P = uniform(rng, int(rng.integers(2, 9)), int(rng.integers(4, 65)))
        tf = tfs[t % 3]
        a = solve_canonical(P, tf, tol=1e-8)
        b = solve_canonical(P, tf, tol=1e-8, init=ParameterVector(rng.normal(0, 2, P.m)))
        runs += [a, b]
        ratios += [a.final_ratio, b.final_ratio]
        gaps.append(abs(a.load - b.load) / a.load)
    _RUNS.update(runs=runs, gaps=gaps, ratios=ratios, seconds=time.perf_counter() - start)
    return _RUNS


def test_criterion_01_canonical_convergence(report):
    r = _canonical_runs()
    ok = max(r["ratios"]) <= 1 + 1e-8 and max(r["gaps"]) <= 1e-6 and r["seconds"] < 10
    report("1 canonical convergence", ok,
           f"max ratio-1 {max(r['ratios']) - 1:.2e}, max init gap {max(r['gaps']):.2e}, {r['seconds']:.2f}s")


def test_criterion_02_iteration_bounds(report):
    r = _canonical_runs()
    iters = sum(len(run.diagnostics) for run in r["runs"])
    bad = sum(len(run.diagnostics.bound_violations(1e-9)) for run in r["runs"])
    report("2 per-iteration load bounds", bad == 0, f"{bad} violations over {iters} iterations")


def test_criterion_03_alpha_monotone_and_limits(report):
    rng = np.random.default_rng(303)
    alphas = [-40, -20, -10, -5, -1, 0, 1, 5, 10, 20, 40]
    worst_drop, worst_lo, worst_hi = 0.0, 0.0, math.inf
    for _ in range(20):
        P = uniform(rng, 3, 5)
        vals = np.array([v for _, v in canonical_sweep(P, alphas, tol=1e-10)])
        worst_drop = max(worst_drop, float(np.max((vals[:-1] - vals[1:]) / vals[1:])))
        worst_lo = max(worst_lo, vals[0] / lp_opt(P, "minmax").value)
        worst_hi = min(worst_hi, vals[-1] / lp_opt(P, "maxmin").value)
    fixed = dict(canonical_sweep(WeightMatrix.from_rows([[1, 2], [2, 1]]), [-40, -1, 0, 1, 40], tol=1e-10))
    fixed_ok = (all(abs(fixed[a] - v) <= 1e-8 for a, v in ((-1, 4 / 3), (0, 1.5), (1, 5 / 3)))
                and abs(fixed[-40] - 1) <= 0.01 and abs(fixed[40] - 2) <= 0.02)
    ok = worst_drop <= 2e-8 and worst_lo <= 1.01 and worst_hi >= 0.99 and fixed_ok
    report("3 alpha monotonicity and limits", ok,
           f"max drop {worst_drop:.1e}, l(-40)/MKS <= {worst_lo:.5f}, l(40)/SNT >= {worst_hi:.5f}, "
           f"2x2 endpoints {fixed[-40]:.6f} {fixed[40]:.6f}")


def test_criterion_04_oracle_integrity(report):
    rng = np.random.default_rng(404)
    grid_gap, spread, cycles = 0.0, 0.0, 0
    for t in range(50):
        m = 2 + t % 2
        P = uniform(rng, m, int(rng.integers(1, 4)))
        q = 32 if m == 2 else 16
        for d in ("minmax", "maxmin"):
            opt = lp_opt(P, d)
            g = grid_opt(P, d, q=q)
            grid_gap = max(grid_gap, abs(opt.value - g.value) / grid_error_bound(P, q))
            ell = loads(P, opt.assignment)
            spread = max(spread, float((ell.max() - ell.min()) / opt.value))
            try:
                build_aux_graph(P, opt.assignment, d)
            except Exception:
                cycles += 1
    ok = grid_gap <= 1.0 and spread <= 1e-7 and cycles == 0
    report("4 oracle integrity", ok,
           f"grid gap / bound {grid_gap:.3f}, load spread {spread:.1e}, {cycles} negative cycles")


def test_criterion_05_noise_resilience(report):
    rng = np.random.default_rng(505)
    sandwich = 0.0
    for eta in (1.5, 2.0, 4.0):
        for s in range(10):
            P = uniform(rng, 4, 20)
            tf = TransformSpec.exponent(float(rng.uniform(-3, 3)))
            star = solve_canonical(P, tf, tol=1e-12, max_iter=100_000).params
            w = perturb_parameters(star, eta, seed=s)
            e = eta_of(w, star).eta
            _, ref = allocate_all(P, tf, star)
            _, got = allocate_all(P, tf, w)
            sandwich = max(sandwich, float(np.max(ref / e - got) / ref.max()), float(np.max(got - e * ref) / ref.max()))
    phase_excess, span_excess = -math.inf, -math.inf
    tf = TransformSpec.exponent(-40.0)
    for s in range(20):
        P = uniform(rng, 4, 50)
        star = solve_canonical(P, tf, tol=1e-10, method="newton")
        T = star.load * (1 + 1e-9)
        for eta in (2.0, 4.0, 8.0, 16.0):
            w = dominating(perturb_parameters(star.params, eta, seed=s), star.params)
            bound = math.ceil(math.log2(eta)) + 1
            run = robust_minmax(P, w, T, tf)
            phase_excess = max(phase_excess, int(run.phase_counts.max()) - bound)
            span_excess = max(span_excess, run.makespan - (2 * T * bound + P.values.max()))
    ok = sandwich <= 1e-9 and phase_excess <= 0 and span_excess <= 0
    report("5 noise resilience", ok,
           f"sandwich excess {sandwich:.1e}, phases over bound {phase_excess}, makespan slack {-span_excess:.2f}")


def test_criterion_06_lower_bounds(report):
    mm = MinMaxLowerBound(4)
    uni = play(mm)
    _, planted = allocate_all(uni.weights, None, mm.planted())
    mx = MaxMinLowerBound(8, 8.0)
    uni2 = play(mx)
    _, planted2 = allocate_all(uni2.weights, None, mx.planted())
    ok = (planted.max() <= 2 and uni.loads.max() >= 2
          and planted2.min() >= 8.0 / 4 and uni2.loads.min() <= 1)
    report("6 lower-bound constructions", ok,
           f"minmax k=4 planted {planted.max():.4f} uniform {uni.loads.max():.4f}; "
           f"maxmin m=8 tau=8 planted {planted2.min():.4f} uniform {uni2.loads.min():.4f}")


def test_criterion_07_inequalities_and_scaling(report):
    rng = np.random.default_rng(707)
    milne, calle = math.inf, math.inf
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        a, b = rng.uniform(1e-3, 1e3, n), rng.uniform(1e-3, 1e3, n)
        milne = min(milne, milne_slack(a, b))
        calle = min(calle, callebaut_slack(a, b, float(rng.uniform(0, 1))))
    sk_err = 0.0
    for _ in range(50):
        Z = (rng.random((4, 4)) < 0.5).astype(float)
        Z[np.arange(4), rng.permutation(4)] = 1.0
        Y = Z * rng.uniform(0.1, 5, (4, 4))
        r, c = Y.sum(axis=1), Y.sum(axis=0)
        S = sinkhorn_scale(Z, r, c, tol=1e-9, max_iter=10**6).scaled
        sk_err = max(sk_err, float(np.abs(S.sum(axis=1) - r).max()), float(np.abs(S.sum(axis=0) - c).max()))
    ok = milne >= -1e-12 and calle >= -1e-12 and sk_err <= 1e-6
    report("7 inequalities and scaling", ok,
           f"min Milne slack {milne:.2e}, min Callebaut slack {calle:.2e}, Sinkhorn marginal error {sk_err:.1e}")


def test_criterion_08_well_behaved_reduction(report):
    rng = np.random.default_rng(808)
    worst, ident = 0.0, 0.0
    for _ in range(10):
        P = uniform(rng, 3, 4)
        for obj, alpha in ((ObjectiveSpec.nash(), 40.0), (ObjectiveSpec.lp(2), -40.0)):
            brute = grid_opt(P, obj, q=10)
            s = loads(P, brute.assignment)
            red = reduce_general(P, s, alpha)
            tf = TransformSpec.exponent(alpha)
            w = solve_canonical(red.q, tf, tol=1e-10, method="newton").params
            got = evaluate(obj, pipeline_loads(P, s, alpha, w))
            worst = max(worst, abs(got - brute.value) / brute.value)
            X_p, _ = allocate_all(P, tf, red.lift(w))
            X_q, _ = allocate_all(red.q, tf, w)
            ident = max(ident, float(np.abs(X_p - X_q).max()))
    report("8 well-behaved reduction", worst <= 0.02 and ident <= 1e-12,
           f"worst relative gap to brute force {worst:.2e}, identity error {ident:.1e}")


def learning_distribution():
    rng = np.random.default_rng(909)
    items = []
    for _ in range(6):
        a, b = rng.uniform(1, 10, 2), rng.uniform(1, 10, 2)
        items.append([(0.5, a.tolist()), (0.5, b.tolist())])
    return ItemDistribution(items)


def test_criterion_09_learnability(report):
    D = learning_distribution()
    eps, H = 0.25, 50
    start = time.perf_counter()
    out = {}
    for obj in ("maxmin", "minmax"):
        grid = NetGrid.build(2, eps, obj)
        samples = sample_instances(D, H, seed=9)
        pre = [preprocess(S, eps, obj) for S in samples]
        res = learn_parameters([p.weights for p in pre], grid, obj, reserve=pre[0].reserve)
        exp = expected_objective(D, res.params, grid.alpha, obj, eps=eps)
        out[obj] = (exp, expected_optimum(D, obj), grid.size)
    secs = time.perf_counter() - start
    (x_exp, x_T, size), (n_exp, n_T, _) = out["maxmin"], out["minmax"]
    ok = x_exp >= (1 - 4 * eps) * x_T and n_exp <= (1 + 4 * eps) * n_T and secs < 60
    report("9 learnability", ok,
           f"grid {size}, MaxMin {x_exp:.3f} vs T {x_T:.3f}, MinMax {n_exp:.3f} vs T {n_T:.3f}, {secs:.1f}s")


def test_criterion_10_cli_determinism(report, tmp_path):
    dist = tmp_path / "dist.json"
    dist.write_text(json.dumps(learning_distribution().to_json()))
    commands = {
        "gen": ["gen", "--kind", "uniform", "--m", "3", "--n", "6", "--seed", "4"],
        "canonical": ["canonical", "--instance", "three_by_three", "--alpha", "-2"],
        "sweep": ["sweep", "--instance", "three_by_three", "--alphas", "-10:10:5"],
        "simulate": ["simulate", "--instance", "three_by_three", "--alpha", "2"],
        "robust": ["robust", "--instance", "three_by_three", "--alpha", "-5", "--eta", "8", "--seed", "3"],
        "oracle": ["oracle", "--instance", "three_by_three", "--objective", "nash"],
        "learn": ["learn", "--dist", str(dist), "--eps", "0.5", "--H", "20", "--K", "5", "--seed", "2"],
        "verify": ["verify", "--instance", "three_by_three"],
    }
    differ = []
    for name, argv in commands.items():
        outs = []
        for rep in range(2):
            path = tmp_path / f"{name}{rep}.out"
            proc = subprocess.run([sys.executable, "-m", "alloc_lab.cli", *argv, "--out", str(path)],
                                  capture_output=True)
            outs.append((proc.returncode, proc.stdout, path.read_bytes() if path.exists() else b""))
        if outs[0] != outs[1] or outs[0][0] != 0:
            differ.append(name)
    report("10 CLI determinism", not differ,
           f"{len(commands) - len(differ)}/{len(commands)} subcommands byte-identical" + (f", differ: {differ}" if differ else ""))
