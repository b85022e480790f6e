"""Command-line experiment runner.

Every subcommand prints a JSON summary on stdout and can write CSV or JSON
artifacts with ``--out``.  Errors go to stderr as a one-line JSON object;
the exit code is 2 for bad input, 1 for solver failures, 0 otherwise.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import canonical, learn, online, oracle
from .core import ParameterVector, TransformSpec, allocate_all, loads
from .errors import (
    AllInadmissible,
    AllocLabError,
    BadEpsilon,
    BadScaling,
    BadSize,
    ConfigError,
    LengthMismatch,
    NonPositiveT,
    ShapeMismatch,
    TransformError,
)
from .io import (
    BUILTIN_INSTANCES,
    dump_json,
    fmt,
    load_instance,
    load_json,
    load_params,
    save_instance,
    save_params,
    write_csv,
)
from .objectives import ObjectiveSpec

__all__ = ["ExperimentConfig", "build_parser", "run", "main"]

_INPUT_ERRORS = (ConfigError, BadEpsilon, BadSize, BadScaling, ShapeMismatch, LengthMismatch,
                 NonPositiveT, TransformError, AllInadmissible)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _alphas(text: str) -> list:
    """``lo:hi:step`` inclusive of ``hi`` (up to rounding), or a comma list."""
    if ":" in text:
        try:
            lo, hi, step = (float(t) for t in text.split(":"))
        except ValueError as exc:
            raise ConfigError(f"bad range {text!r}; expected lo:hi:step") from exc
        if step <= 0 or hi < lo:
            raise ConfigError("range needs step > 0 and hi >= lo")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return [lo + k * step for k in range(count)]
    try:
        return [float(t) for t in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad exponent list {text!r}") from exc


@dataclass
class ExperimentConfig:
    command: str
    instance: str | None = None
    objective: str = "minmax"
    alpha: float | None = None
    alphas: list = field(default_factory=list)
    eps: float | None = None
    tol: float = 1e-9
    seed: int = 0
    out: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.instance is not None and self.instance not in BUILTIN_INSTANCES and not Path(self.instance).exists():
            raise ConfigError(f"instance not found: {self.instance}")
        for key in ("params", "dist"):
            path = self.extra.get(key)
            if path is not None and not Path(path).exists():
                raise ConfigError(f"{key} file not found: {path}")
        if self.eps is not None and not 0 < self.eps < 1:
            raise BadEpsilon(f"eps must lie in (0, 1), got {self.eps}")
        if not 0 < self.tol <= 0.1:
            raise ConfigError(f"tol must lie in (0, 0.1], got {self.tol}")
        if self.alpha is not None and not math.isfinite(self.alpha):
            raise ConfigError("alpha must be finite")
        ObjectiveSpec.parse(self.objective)
        return self

    @classmethod
    def from_namespace(cls, ns) -> "ExperimentConfig":
        d = dict(vars(ns))
        known = {k: d.pop(k) for k in ("command", "instance", "objective", "alpha", "eps", "tol", "seed", "out") if k in d}
        alphas = d.pop("alphas", None)
        cfg = cls(**{k: v for k, v in known.items() if v is not None},
                  alphas=_alphas(alphas) if alphas else [], extra=d)
        if "alpha" in known:
            cfg.alpha = known["alpha"]
        return cfg.validate()


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="alloc-lab", description="Proportional allocation experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, instance=True):
        if instance:
            sp.add_argument("--instance", required=True, help="instance JSON path or built-in name")
        sp.add_argument("--tol", type=float, default=1e-9)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="output path (CSV or JSON by subcommand)")

    g = sub.add_parser("gen", help="generate an instance")
    common(g, instance=False)
    g.add_argument("--kind", required=True, choices=["uniform", "restricted", "minmax_lower", "maxmin_lower"])
    g.add_argument("--m", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--tau", type=float)
    g.add_argument("--density", type=float, default=0.5)

    c = sub.add_parser("canonical", help="canonical parameters and load")
    common(c)
    c.add_argument("--alpha", type=float, default=1.0)
    c.add_argument("--max-iter", type=int)
    c.add_argument("--method", choices=["multiplicative", "newton"], default="multiplicative")

    s = sub.add_parser("sweep", help="canonical load over a range of exponents")
    common(s)
    s.add_argument("--alphas", required=True, help="lo:hi:step or comma list")
    s.add_argument("--max-iter", type=int, default=100_000)

    sim = sub.add_parser("simulate", help="stream items with fixed parameters")
    common(sim)
    sim.add_argument("--alpha", type=float, default=1.0)
    sim.add_argument("--params", help="parameter JSON (default all ones)")

    r = sub.add_parser("robust", help="phase-based MinMax with a noisy prediction")
    common(r)
    r.add_argument("--alpha", type=float, default=1.0, help="exponent of the allocation transform")
    r.add_argument("--params", help="predicted parameter JSON")
    r.add_argument("--eta", type=float, default=1.0, help="noise level when the prediction is derived from canonical parameters")
    r.add_argument("--T", type=float, help="threshold (default: canonical makespan at --alpha)")

    o = sub.add_parser("oracle", help="offline optimum")
    common(o)
    o.add_argument("--direction", choices=["minmax", "maxmin"])
    o.add_argument("--objective", default=None, help="minmax, maxmin, nash or lp:<p>")
    o.add_argument("--method", choices=["lp", "exact", "grid"], default="lp")
    o.add_argument("--q", type=int, default=32)

    le = sub.add_parser("learn", help="learn a grid parameter vector from samples")
    common(le, instance=False)
    le.add_argument("--dist", required=True, help="distribution JSON")
    le.add_argument("--objective", default="maxmin")
    le.add_argument("--eps", type=float, default=0.25)
    le.add_argument("--H", type=int, default=50)
    le.add_argument("--K", type=int)
    le.add_argument("--alpha", type=float)
    le.add_argument("--no-preprocess", action="store_true")
    le.add_argument("--params-out", help="write the learned vector here")

    v = sub.add_parser("verify", help="run the invariant checks on one instance")
    common(v)
    v.add_argument("--alpha", type=float, default=1.0)
    return p


# --- subcommands -------------------------------------------------------------


def _gen(cfg: ExperimentConfig):
    x = cfg.extra
    kind = x["kind"]
    made = oracle.gen_instance(kind, m=x.get("m"), n=x.get("n"), k=x.get("k"), tau=x.get("tau"),
                               seed=cfg.seed, density=x.get("density", 0.5))
    extra = {"kind": kind, "seed": cfg.seed}
    if isinstance(made, (oracle.MinMaxLowerBound, oracle.MaxMinLowerBound)):
        # realise the adversary against uniform parameters
        res = oracle.play(made)
        P = res.weights
        extra["planted_logw"] = [float(fmt(v)) for v in made.planted().logw]
        extra["uniform_loads"] = [float(fmt(v)) for v in res.loads]
    else:
        P = made
    if cfg.out:
        save_instance(P, cfg.out, **extra)
    dump_json({"m": P.m, "n": P.n, **extra})


def _canonical(cfg: ExperimentConfig):
    P = load_instance(cfg.instance)
    res = canonical.solve_canonical(P, TransformSpec.exponent(cfg.alpha), cfg.tol, cfg.extra.get("max_iter"), record=False,
                                     method=cfg.extra["method"])
    if cfg.out:
        save_params(res.params, cfg.out, alpha=cfg.alpha, load=float(fmt(res.load)))
    dump_json({"alpha": cfg.alpha, "load": float(fmt(res.load)), "iterations": res.iterations,
               "ratio": float(fmt(res.final_ratio)), "logw": [float(fmt(v)) for v in res.params.logw]})


def _sweep(cfg: ExperimentConfig):
    P = load_instance(cfg.instance)
    rows = canonical.canonical_sweep(P, cfg.alphas, cfg.tol, cfg.extra.get("max_iter", 100_000))
    write_csv(["alpha", "load"], rows, cfg.out)


def _simulate(cfg: ExperimentConfig):
    P = load_instance(cfg.instance)
    params = load_params(cfg.extra["params"]) if cfg.extra.get("params") else None
    X, ell, _ = online.simulate_stream(P, cfg.alpha, params)
    if cfg.out:
        write_csv(["item"] + [f"x{i}" for i in range(P.m)],
                  [[j] + X[:, j].tolist() for j in range(P.n)], cfg.out)
    dump_json({"alpha": cfg.alpha, "loads": [float(fmt(v)) for v in ell], "makespan": float(fmt(ell.max())),
               "min_load": float(fmt(ell.min()))})


def _robust(cfg: ExperimentConfig):
    P = load_instance(cfg.instance)
    x = cfg.extra
    tf = TransformSpec.exponent(cfg.alpha)
    target = None
    if x.get("params"):
        predicted = load_params(x["params"])
        if len(predicted) != P.m:
            raise LengthMismatch(f"prediction has {len(predicted)} entries, instance has {P.m} agents")
    else:
        target = canonical.solve_canonical(P, tf, cfg.tol, 100_000, record=False)
        predicted = online.dominating(online.perturb_parameters(target.params, x.get("eta", 1.0), cfg.seed),
                                      target.params)
    T = x.get("T")
    if T is None:
        # the makespan of the parameters being approximated, not the fractional optimum
        target = target or canonical.solve_canonical(P, tf, cfg.tol, 100_000, record=False)
        T = target.load * (1 + 1e-9)
    run_ = online.robust_minmax(P, predicted, T, tf)
    if cfg.out:
        write_csv(["agent", "phase", "items", "load", "closed"],
                  [[r.agent, r.phase, r.items, r.load, int(r.closed)] for r in run_.phase_log], cfg.out)
    dump_json({"T": float(fmt(T)), "makespan": float(fmt(run_.makespan)),
               "loads": [float(fmt(v)) for v in run_.loads],
               "phases": [int(v) for v in run_.phase_counts]})


def _oracle(cfg: ExperimentConfig):
    P = load_instance(cfg.instance)
    x = cfg.extra
    name = x.get("direction") or cfg.objective
    obj = ObjectiveSpec.parse(name)
    if x["method"] == "grid":
        res = oracle.grid_opt(P, obj, q=x["q"])
    elif obj.kind in ("minmax", "maxmin"):
        res = oracle.lp_opt(P, obj.kind, exact=x["method"] == "exact")
    else:
        res = oracle.optimize_objective(P, obj)
    if cfg.out:
        dump_json(res.to_dict(), cfg.out)
    dump_json({"objective": obj.name, "method": res.method, "value": float(fmt(res.value))})


def _learn(cfg: ExperimentConfig):
    x = cfg.extra
    D = learn.ItemDistribution.from_json(load_json(x["dist"]))
    obj = ObjectiveSpec.parse(cfg.objective)
    eps = x.get("eps", 0.25)
    if not 0 < eps < 1:
        raise BadEpsilon(f"eps must lie in (0, 1), got {eps}")
    if x["H"] < 1:
        raise ConfigError("H must be >= 1")
    direction = "maxmin" if obj.maximize else "minmax"
    grid = learn.NetGrid.build(D.m, eps, direction, K=x.get("K"), alpha=x.get("alpha"))
    samples = learn.sample_instances(D, x["H"], cfg.seed)
    pre_eps = None if x.get("no_preprocess") or obj.kind not in ("minmax", "maxmin") else eps
    if obj.kind in ("minmax", "maxmin"):
        if pre_eps is not None:
            pre = [learn.preprocess(S, eps, direction) for S in samples]
            res = learn.learn_parameters([p.weights for p in pre], grid, direction, reserve=pre[0].reserve)
        else:
            res = learn.learn_parameters(samples, grid, direction)
    else:
        res = learn.learn_general(samples, obj, grid)
    expected = learn.expected_objective(D, res.params, grid.alpha, obj, eps=pre_eps)
    T = learn.expected_optimum(D, obj)
    if cfg.out:
        write_csv(["index", "objective"], ([k, v] for k, v in enumerate(res.scores)), cfg.out)
    if x.get("params_out"):
        save_params(res.params, x["params_out"], alpha=grid.alpha, index=res.index)
    dump_json({"objective": obj.name, "K": grid.K, "alpha": float(fmt(grid.alpha)), "grid_size": grid.size,
               "index": res.index, "empirical": float(fmt(res.value)), "expected": float(fmt(expected)),
               "T": float(fmt(T)), "logw": [float(fmt(v)) for v in res.params.logw]})


def _verify(cfg: ExperimentConfig):
    P = load_instance(cfg.instance)
    checks = []

    def check(name, fn):
        try:
            ok, detail = fn()
        except AllocLabError as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        checks.append((name, bool(ok), detail))

    tf = TransformSpec.exponent(cfg.alpha)

    def fractions():
        X, _ = allocate_all(P, tf)
        err = float(np.max(np.abs(X.sum(axis=0) - 1.0)))
        return err <= 1e-12, f"max column-sum error {err:.2e}"

    res = {}

    def converge():
        r = canonical.solve_canonical(P, tf, cfg.tol, 100_000)
        res["c"] = r
        return r.final_ratio <= 1 + cfg.tol, f"ratio {r.final_ratio:.12g} after {r.iterations} iterations"

    def bounds():
        bad = res["c"].diagnostics.bound_violations()
        return not bad, f"{len(bad)} violations"

    def monotone():
        return res["c"].diagnostics.extremes_monotone(), "l_max non-increasing, l_min non-decreasing"

    def second_start():
        init = ParameterVector(np.random.default_rng(cfg.seed).normal(0, 1, P.m))
        r2 = canonical.solve_canonical(P, tf, cfg.tol, 100_000, init=init, record=False)
        gap = abs(r2.load - res["c"].load) / res["c"].load
        return gap <= 1e-6, f"relative gap {gap:.2e}"

    def sweep():
        rows = canonical.canonical_sweep(P, [-10, -5, -1, 0, 1, 5, 10], 1e-10)
        vals = [v for _, v in rows]
        ok = all(b >= a * (1 - 2e-8) for a, b in zip(vals, vals[1:]))
        return ok, " ".join(fmt(v) for v in vals)

    def lp(direction):
        def inner():
            o = oracle.lp_opt(P, direction)
            ell = loads(P, o.assignment)
            spread = float((ell.max() - ell.min()) / o.value)
            oracle.build_aux_graph(P, o.assignment, direction)
            return spread <= 1e-7 or not P.all_admissible, f"value {fmt(o.value)}, load spread {spread:.2e}, no negative cycle"
        return inner

    check("fractions sum to one", fractions)
    check("canonical convergence", converge)
    if "c" in res:
        check("one-step load bounds", bounds)
        check("monotone extremes", monotone)
        check("second initialisation agrees", second_start)
    check("alpha monotonicity", sweep)
    check("minmax optimum structure", lp("minmax"))
    check("maxmin optimum structure", lp("maxmin"))

    width = max(len(c[0]) for c in checks)
    for name, ok, detail in checks:
        sys.stdout.write(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}\n")
    if cfg.out:
        write_csv(["check", "ok", "detail"], [[n, int(ok), d] for n, ok, d in checks], cfg.out)
    return 0 if all(c[1] for c in checks) else 1


_COMMANDS = {
    "gen": _gen,
    "canonical": _canonical,
    "sweep": _sweep,
    "simulate": _simulate,
    "robust": _robust,
    "oracle": _oracle,
    "learn": _learn,
    "verify": _verify,
}


def _fail(code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit": code}) + "\n")
    return code


def run(argv=None) -> int:
    """Parse ``argv`` and dispatch; returns the exit code instead of exiting."""
    argv = list(sys.argv[1:] if argv is None else argv)
    # values such as "-40:40:5" look like flags to argparse; attach them to their option
    for k in range(len(argv) - 1, 0, -1):
        if argv[k - 1] in ("--alphas", "--alpha") and argv[k].startswith("-"):
            argv[k - 1 : k + 1] = [f"{argv[k - 1]}={argv[k]}"]
    try:
        ns = build_parser().parse_args(argv)
        cfg = ExperimentConfig.from_namespace(ns)
        return _COMMANDS[cfg.command](cfg) or 0
    except _INPUT_ERRORS as exc:
        return _fail(2, exc)
    except AllocLabError as exc:
        return _fail(1, exc)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
