"""Canonical parameters by multiplicative load balancing.

Starting from ``w = 1``, every round divides each agent's parameter by its
current load.  The loads converge to a common value (the canonical load) and
the parameters to a unique equivalence class.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ParameterVector, TransformSpec, allocate_all, as_weights, is_maximize
from .errors import BadEpsilon, ConfigError, MaxIterExceeded, NonFiniteLoad

logger = logging.getLogger(__name__)

__all__ = [
    "IterationRecord",
    "IterationDiagnostics",
    "CanonicalResult",
    "iteration_step",
    "solve_canonical",
    "canonical_sweep",
    "choose_alpha",
    "load_step_bounds",
    "cross_alpha_gap",
    "milne_slack",
    "callebaut_slack",
]


@dataclass
class IterationRecord:
    iteration: int
    loads: np.ndarray
    l_min: float
    l_max: float
    min_fraction: float
    # bounds that the *next* iteration's loads must respect
    lower_next: np.ndarray
    upper_next: np.ndarray

    @property
    def ratio(self) -> float:
        return self.l_max / self.l_min


@dataclass
class IterationDiagnostics:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def rows(self):
        """Tabular view: ``(iteration, l_min, l_max, ratio, min_fraction)``."""
        for r in self.records:
            yield (r.iteration, r.l_min, r.l_max, r.ratio, r.min_fraction)

    def extremes_monotone(self, rel_slack: float = 1e-12) -> bool:
        """``l_max`` never rises and ``l_min`` never falls between records."""
        for a, b in zip(self.records, self.records[1:]):
            if b.l_max > a.l_max * (1 + rel_slack) or b.l_min < a.l_min * (1 - rel_slack):
                return False
        return True

    def bound_violations(self, rel_slack: float = 1e-9) -> list:
        """Iterations where next-round loads escape the one-step load bounds."""
        bad = []
        for a, b in zip(self.records, self.records[1:]):
            lo = a.lower_next * (1 - rel_slack)
            hi = a.upper_next * (1 + rel_slack)
            for i in np.flatnonzero((b.loads < lo) | (b.loads > hi)):
                bad.append((a.iteration, int(i), float(b.loads[i]), float(a.lower_next[i]), float(a.upper_next[i])))
        return bad

    def strict_progress_failures(self, min_gap: float = 1e-6) -> list:
        """Iterations with ``l_max >= (1 + min_gap) l_min`` after which ``l_min`` did not rise.

        Gaps below ``min_gap`` are skipped: there the increase is at the
        level of rounding error.
        """
        bad = []
        for a, b in zip(self.records, self.records[1:]):
            if a.l_max >= (1 + min_gap) * a.l_min and not b.l_min > a.l_min:
                bad.append(a.iteration)
        return bad

    def min_fraction_floor(self) -> float:
        return min((r.min_fraction for r in self.records), default=float("nan"))


@dataclass
class CanonicalResult:
    params: ParameterVector
    load: float
    iterations: int
    final_ratio: float
    loads: np.ndarray
    diagnostics: IterationDiagnostics = field(repr=False, default_factory=IterationDiagnostics)


def load_step_bounds(P, ell: np.ndarray):
    """Lower/upper bounds on every agent's load after one update from loads ``ell``."""
    P = as_weights(P)
    ptilde = P.row_sums()
    lmin, lmax = ell.min(), ell.max()
    lower = lmin / (1.0 - (ell - lmin) / ptilde)
    upper = lmax / (1.0 + (lmax - ell) / ptilde)
    return lower, upper


def iteration_step(P, transform: TransformSpec | None = None, params: ParameterVector | None = None):
    """One multiplicative update.

    Returns ``(new_params, loads)`` where ``loads`` are the loads *before* the
    update and the new parameters are normalised with agent 0's load as the
    common scale factor.
    """
    P = as_weights(P)
    if params is None:
        params = ParameterVector.ones(P.m)
    _, ell = allocate_all(P, transform, params)
    if not np.all(np.isfinite(ell)) or np.any(ell <= 0):
        raise NonFiniteLoad(f"loads must be finite and positive, got {ell}")
    logell = np.log(ell)
    return ParameterVector(params.logw - logell + logell[0]), ell


def _default_budget(m: int, ratio: float) -> int:
    return int(math.ceil(200 * m * (1 + math.log(ratio))))


def solve_canonical(
    P,
    transform: TransformSpec | None = None,
    tol: float = 1e-9,
    max_iter: int | None = None,
    init: ParameterVector | None = None,
    record: bool = True,
    method: str = "multiplicative",
) -> CanonicalResult:
    """Iterate the multiplicative update until ``l_max / l_min <= 1 + tol``.

    ``max_iter`` defaults to ``200 m (1 + log r0)`` with ``r0`` the initial
    load ratio.  Raises MaxIterExceeded (carrying the diagnostics) when the
    budget runs out.

    ``method="newton"`` replaces the update by damped Newton steps on the log
    loads (falling back to the multiplicative step when no damped step
    helps).  It reaches the same fixed point and is much faster at large
    ``|alpha|``, where the plain update crawls.  The recorded one-step bounds
    only describe multiplicative steps, so Newton runs leave them open.
    """
    if not 0 < tol <= 0.1:
        raise ConfigError(f"tol must lie in (0, 0.1], got {tol}")
    if max_iter is not None and max_iter < 1:
        raise ConfigError("max_iter must be >= 1")
    if method not in ("multiplicative", "newton"):
        raise ConfigError(f"unknown method {method!r}")
    P = as_weights(P)
    transform = transform or TransformSpec.identity()
    params = init if init is not None else ParameterVector.ones(P.m)
    diag = IterationDiagnostics()
    budget = max_iter
    r = 0
    while True:
        X, ell = allocate_all(P, transform, params)
        if not np.all(np.isfinite(ell)) or np.any(ell <= 0):
            raise NonFiniteLoad(f"loads must be finite and positive, got {ell}")
        lmin, lmax = float(ell.min()), float(ell.max())
        if budget is None:
            budget = _default_budget(P.m, lmax / lmin)
        if record:
            if method == "newton":
                lower, upper = np.zeros(P.m), np.full(P.m, np.inf)
            else:
                lower, upper = load_step_bounds(P, ell)
            diag.records.append(IterationRecord(
                r, ell, lmin, lmax, float(X[P.admissible].min()), lower, upper))
        if lmax <= (1 + tol) * lmin:
            break
        if r >= budget:
            raise MaxIterExceeded(
                f"ratio {lmax / lmin:.3e} after {r} iterations (tol {tol})", diag)
        logell = np.log(ell)
        step = ParameterVector(params.logw - logell + logell[0])
        params = _newton_step(P, transform, params, X, ell, step) if method == "newton" else step
        r += 1
    logger.debug("canonical load %.12g after %d iterations", 0.5 * (lmin + lmax), r)
    return CanonicalResult(
        params=params.normalized(),
        load=0.5 * (lmin + lmax),
        iterations=r,
        final_ratio=lmax / lmin,
        loads=ell,
        diagnostics=diag,
    )


def _newton_step(P, transform, params, X, ell, fallback):
    """Damped Newton step on ``log l_i - log l_0 = 0``; ``fallback`` if no damping helps."""
    pw = np.where(P.admissible, P.values, 0.0)
    A = pw * X
    # d l_i / d logw_k = sum_j p_ij x_ij (delta_ik - x_kj)
    J = np.diag(A.sum(axis=1)) - A @ X.T
    Jg = J / ell[:, None]
    g = np.log(ell)
    M = (Jg[1:] - Jg[0])[:, 1:]
    rhs = -(g[1:] - g[0])
    try:
        d = np.linalg.lstsq(M, rhs, rcond=None)[0]
    except np.linalg.LinAlgError:
        return fallback
    spread = g.max() - g.min()
    t = 1.0
    for _ in range(40):
        cand = params.logw.copy()
        cand[1:] += t * d
        try:
            _, new = allocate_all(P, transform, ParameterVector(cand))
        except (ValueError, ConfigError):
            new = None
        if new is not None and np.all(new > 0) and np.all(np.isfinite(new)):
            lg = np.log(new)
            if lg.max() - lg.min() < spread:
                return ParameterVector(cand)
        t *= 0.5
    return fallback


def _workers(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("ALLOC_LAB_THREADS")
    return max(1, int(env)) if env else 1


def canonical_sweep(
    P,
    alphas: Sequence[float],
    tol: float = 1e-9,
    max_iter: int = 100_000,
    warm_start: bool = False,
    workers: int | None = None,
) -> list:
    """Canonical load of the exponentiated allocation for each exponent.

    Returns ``[(alpha, load), ...]`` in input order.  Runs are independent
    unless ``warm_start`` is set, in which case they go sequentially and each
    starts from the previous run's parameters.
    """
    P = as_weights(P)
    alphas = [float(a) for a in alphas]
    if not all(math.isfinite(a) for a in alphas):
        raise ConfigError("exponents must be finite")

    if warm_start:
        out, init = [], None
        for a in alphas:
            res = solve_canonical(P, TransformSpec.exponent(a), tol, max_iter, init=init, record=False)
            init = res.params
            out.append((a, res.load))
        return out

    def one(a):
        return a, solve_canonical(P, TransformSpec.exponent(a), tol, max_iter, record=False).load

    n_workers = _workers(workers)
    if n_workers == 1 or len(alphas) < 2:
        return [one(a) for a in alphas]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(one, alphas))


def choose_alpha(m: int, eps: float, direction: str = "maximize") -> float:
    """Exponent large enough for a (1 -/+ eps) guarantee with ``m`` agents.

    Magnitude is ``(2m/eps) * ln(m/eps) / -ln(1-eps)``; positive for
    maximization, negative for minimization.  With one agent any exponent
    works, and the formula value is returned anyway.
    """
    if not 0 < eps < 1:
        raise BadEpsilon(f"eps must lie in (0, 1), got {eps}")
    if m < 1:
        raise ConfigError("m must be >= 1")
    mag = (2 * m / eps) * math.log(m / eps) / (-math.log1p(-eps))
    return mag if is_maximize(direction) else -mag


def cross_alpha_gap(P, alpha: float, params_a: ParameterVector, alpha_b: float, params_b: ParameterVector) -> float:
    """``max_i (l_i(alpha, w_a) - l_i(alpha_b, w_b))``; nonnegative whenever ``alpha > alpha_b``."""
    _, la = allocate_all(P, TransformSpec.exponent(alpha), params_a)
    _, lb = allocate_all(P, TransformSpec.exponent(alpha_b), params_b)
    return float(np.max(la - lb))


def milne_slack(a, b) -> float:
    """RHS minus LHS of ``sum a b/(a+b) <= (sum a)(sum b)/sum(a+b)`` for positive vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(a.sum() * b.sum() / (a + b).sum() - np.sum(a * b / (a + b)))


def callebaut_slack(y, z, theta: float) -> float:
    """LHS minus RHS of ``(sum z^2)(sum y^2) >= (sum z^(1+t) y^(1-t))(sum z^(1-t) y^(1+t))``.

    Returned relative to the left side so it is scale free.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    lhs = np.sum(z**2) * np.sum(y**2)
    rhs = np.sum(z ** (1 + theta) * y ** (1 - theta)) * np.sum(z ** (1 - theta) * y ** (1 + theta))
    return float((lhs - rhs) / lhs)
