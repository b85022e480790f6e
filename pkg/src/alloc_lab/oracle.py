"""Offline ground truth and the structure of optimal fractional assignments.

* ``lp_opt`` / ``grid_opt``: MinMax and MaxMin optima by LP and by brute force.
* ``optimize_objective``: optimal loads for Nash welfare or l_p via a convex solver.
* ``build_aux_graph`` -> ``to_restricted_related`` -> ``sinkhorn_scale``: the
  chain that turns an optimal assignment into parameters whose exponentiated
  allocation approaches it (``optimal_ep_parameters``).
* Instance generators, including two adaptive adversaries.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ParameterVector, TransformSpec, WeightMatrix, allocate_all, as_weights, is_maximize, loads
from .errors import (
    BadSize,
    BudgetExceeded,
    ConfigError,
    Infeasible,
    MaxIterExceeded,
    NegativeCycle,
    NoSupport,
)
from .objectives import ObjectiveSpec, evaluate
from .simplex import simplex_solve

logger = logging.getLogger(__name__)

__all__ = [
    "OptResult",
    "lp_opt",
    "grid_opt",
    "grid_error_bound",
    "optimize_objective",
    "AuxGraph",
    "bellman_ford",
    "build_aux_graph",
    "RestrictedRelated",
    "to_restricted_related",
    "SinkhornResult",
    "sinkhorn_step",
    "sinkhorn_scale",
    "optimal_ep_parameters",
    "gen_instance",
    "MinMaxLowerBound",
    "MaxMinLowerBound",
    "PlayResult",
    "play",
]


@dataclass
class OptResult:
    value: float
    assignment: np.ndarray
    method: str
    direction: str

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "method": self.method,
            "value": float(self.value),
            "assignment": [[float(v) for v in row] for row in self.assignment],
        }


def _direction_name(direction) -> str:
    return "maxmin" if is_maximize(direction) else "minmax"


def lp_opt(P, direction="minmax", exact: bool = False) -> OptResult:
    """Optimal fractional MinMax (makespan) or MaxMin (Santa Claus) value.

    Solved with the dense simplex over the admissible ``x_ij`` plus the
    objective variable; the returned assignment is an optimal vertex.
    """
    P = as_weights(P)
    maximize = is_maximize(direction)
    m, n = P.shape
    pairs = [(i, j) for i in range(m) for j in range(n) if P.admissible[i, j]]
    nv = len(pairs) + 1
    t = nv - 1
    A_ub = np.zeros((m, nv))
    A_eq = np.zeros((n, nv))
    for v, (i, j) in enumerate(pairs):
        A_ub[i, v] = -P.values[i, j] if maximize else P.values[i, j]
        A_eq[j, v] = 1.0
    A_ub[:, t] = 1.0 if maximize else -1.0
    c = np.zeros(nv)
    c[t] = -1.0 if maximize else 1.0
    sol = simplex_solve(c, A_ub, np.zeros(m), A_eq, np.ones(n), exact=exact)
    X = np.zeros((m, n))
    for v, (i, j) in enumerate(pairs):
        X[i, j] = float(sol.x[v])
    return OptResult(float(sol.x[t]), X, "lp-exact" if exact else "lp", _direction_name(direction))


def _compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``total``."""
    out = []
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev, row = -1, []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(total + parts - 1 - prev - 1)
        out.append(row)
    return np.array(out, dtype=float).reshape(-1, parts)


def grid_opt(P, direction="minmax", q: int = 64, max_points: float = 1e8) -> OptResult:
    """Brute force over assignments whose entries are multiples of ``1/q``.

    ``direction`` may also be an ObjectiveSpec.  Only for tiny instances
    (m <= 3, n <= 4, q <= 64, and at most ``max_points`` grid points).
    """
    P = as_weights(P)
    m, n = P.shape
    if m > 3 or n > 4 or q > 64 or q < 1:
        raise BudgetExceeded(f"grid oracle limited to m<=3, n<=4, q<=64 (got {m}x{n}, q={q})")
    obj = direction if isinstance(direction, ObjectiveSpec) else (
        ObjectiveSpec.maxmin() if is_maximize(direction) else ObjectiveSpec.minmax())
    comps = _compositions(q, m) / q
    choices, contrib = [], []
    for j in range(n):
        ok = np.all((comps == 0) | P.admissible[:, j], axis=1)
        cj = comps[ok]
        choices.append(cj)
        contrib.append(cj * np.where(P.admissible[:, j], P.values[:, j], 0.0))
    total = math.prod(len(c) for c in choices)
    if total > max_points:
        raise BudgetExceeded(f"{total} grid points exceed budget {max_points:g}")

    # inner block: every combination of items 1..n-1, looped over item 0
    if n > 1:
        rest = np.zeros((1, m))
        for cj in contrib[1:]:
            rest = (rest[:, None, :] + cj[None, :, :]).reshape(-1, m)
    else:
        rest = np.zeros((1, m))
    sign = -1.0 if obj.maximize else 1.0
    best_val, best_idx = math.inf, None
    for k0, c0 in enumerate(contrib[0]):
        L = rest + c0
        vals = sign * _evaluate_rows(obj, L)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_idx = float(vals[k]), (k0, k)
    k0, k = best_idx
    sizes = [len(c) for c in choices[1:]]
    tail = np.unravel_index(k, sizes) if sizes else ()
    X = np.zeros((m, n))
    X[:, 0] = choices[0][k0]
    for j, kj in enumerate(tail, start=1):
        X[:, j] = choices[j][kj]
    return OptResult(sign * best_val, X, "grid", obj.name or _direction_name(obj.direction))


def grid_error_bound(P, q: int) -> float:
    """How far the best ``1/q``-grid assignment can be from the true optimum, in load units.

    Any column can be rounded to the grid moving each entry by less than
    ``1/q`` (largest remainders), so no load moves by more than its row
    sum over ``q``; MinMax, MaxMin, Nash and l_inf-type objectives inherit
    this bound.
    """
    P = as_weights(P)
    return float(P.row_sums().max()) / q


def _evaluate_rows(obj: ObjectiveSpec, L: np.ndarray) -> np.ndarray:
    if obj.kind == "minmax":
        return L.max(axis=1)
    if obj.kind == "maxmin":
        return L.min(axis=1)
    if obj.kind == "nash":
        with np.errstate(divide="ignore"):
            return np.exp(np.mean(np.log(L), axis=1))
    if obj.kind == "lp":
        return np.sum(L**obj.p, axis=1) ** (1.0 / obj.p)
    return np.array([evaluate(obj, row) for row in L])


def optimize_objective(P, obj: ObjectiveSpec) -> OptResult:
    """Optimal assignment for a convex objective (MinMax, MaxMin, Nash, l_p).

    Uses cvxpy; MinMax/MaxMin are routed to :func:`lp_opt`.
    """
    import cvxpy as cp

    P = as_weights(P)
    if obj.kind in ("minmax", "maxmin"):
        return lp_opt(P, obj.kind)
    m, n = P.shape
    W = np.where(P.admissible, P.values, 0.0)
    X = cp.Variable((m, n), nonneg=True)
    ell = cp.sum(cp.multiply(W, X), axis=1)
    cons = [cp.sum(X, axis=0) == 1]
    if np.any(~P.admissible):
        cons.append(X[~P.admissible] == 0)
    # scale so the solver sees O(1) numbers
    scale = float(W.max())
    if obj.kind == "nash":
        prob = cp.Problem(cp.Maximize(cp.sum(cp.log(ell / scale))), cons)
    elif obj.kind == "lp":
        prob = cp.Problem(cp.Minimize(cp.norm(ell / scale, obj.p)), cons)
    else:
        raise ConfigError(f"no convex formulation for objective {obj.kind!r}")
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise Infeasible(f"convex solver status {prob.status}")
    Xv = np.clip(np.asarray(X.value), 0.0, None)
    Xv = np.where(P.admissible, Xv, 0.0)
    Xv /= Xv.sum(axis=0, keepdims=True)
    return OptResult(evaluate(obj, loads(P, Xv)), Xv, "convex", obj.name)


# ----------------------------------------------------------------------------
# auxiliary graph


@dataclass
class AuxGraph:
    """Agents 1..m plus a source; ``costs[i, k]`` is the log-ratio edge cost (``inf`` = no edge)."""

    costs: np.ndarray
    potentials: np.ndarray
    direction: str

    @property
    def m(self) -> int:
        return self.costs.shape[0]

    @property
    def u(self) -> np.ndarray:
        """Ratio vector: exponentiated shortest-path potentials (all <= 1)."""
        return np.exp(self.potentials)

    def aspect_ratio(self) -> float:
        u = self.u
        return float(u.max() / u.min())


def bellman_ford(costs: np.ndarray, tol: float = 1e-9):
    """Shortest paths from a virtual source joined to every vertex at cost 0.

    ``costs`` is a dense matrix with ``inf`` for missing edges.  Returns the
    distances, or raises NegativeCycle listing the cycle's vertices.
    """
    costs = np.asarray(costs, dtype=float)
    m = costs.shape[0]
    dist = np.zeros(m)
    pred = np.full(m, -1)
    edges = [(i, k, costs[i, k]) for i in range(m) for k in range(m) if np.isfinite(costs[i, k])]
    for _ in range(m):
        changed = False
        for i, k, c in edges:
            if dist[i] + c < dist[k] - tol:
                dist[k] = dist[i] + c
                pred[k] = i
                changed = True
        if not changed:
            return dist
    for i, k, c in edges:
        if dist[i] + c < dist[k] - tol:
            # walk back m steps to land on the cycle
            v = k
            pred[k] = i
            for _ in range(m):
                v = pred[v]
            cycle, w = [v], pred[v]
            while w != v:
                cycle.append(int(w))
                w = pred[w]
            raise NegativeCycle("auxiliary graph has a negative cycle", cycle=cycle[::-1])
    return dist


def build_aux_graph(P, X, direction="minmax", support_tol: float = 1e-12, tol: float = 1e-9) -> AuxGraph:
    """Edge ``i -> k`` costs ``ln min_j p_kj/p_ij`` over items agent ``i`` holds.

    For MaxMin the ratio is ``ln max_j p_kj/p_ij`` and the edge is stored
    reversed and negated (``costs[k, i]``), which is what makes the optimal
    support sit on ``argmax_i p_ij/u_i``.  Potentials are shortest-path
    distances from a source joined to every agent at cost zero.  Raises
    NegativeCycle if ``X`` was not optimal.
    """
    P = as_weights(P)
    X = np.asarray(X, dtype=float)
    maximize = is_maximize(direction)
    m = P.m
    support = (X > support_tol) & P.admissible
    costs = np.full((m, m), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(m):
            held = np.flatnonzero(support[i])
            if held.size == 0:
                raise NoSupport(f"agent {i} holds no item")
            for k in range(m):
                ok = held[P.admissible[k, held]]
                if ok.size == 0:
                    continue
                ratios = P.values[k, ok] / P.values[i, ok]
                costs[i, k] = math.log(ratios.max() if maximize else ratios.min())
    if maximize:
        # feasibility of u needs u_k >= u_i * max-ratio: shortest paths run
        # over the reversed edges with negated cost
        costs = -costs.T
    return AuxGraph(costs, bellman_ford(costs, tol=tol), _direction_name(direction))


# ----------------------------------------------------------------------------
# restricted related form


@dataclass
class RestrictedRelated:
    """Item sizes ``p_hat``, agent speeds ``v_hat`` and an admissibility pattern."""

    p_hat: np.ndarray
    v_hat: np.ndarray
    E: np.ndarray

    def weights(self) -> WeightMatrix:
        eff = self.p_hat[None, :] / self.v_hat[:, None]
        return WeightMatrix(np.where(self.E, eff, np.inf), self.E)

    def loads(self, X) -> np.ndarray:
        return loads(self.weights(), X)


def to_restricted_related(P, u, direction="minmax", rel_tol: float = 1e-12) -> RestrictedRelated:
    """Keep, per item, only the agents extremising ``p_ij / u_i`` (min for MinMax, max for MaxMin)."""
    P = as_weights(P)
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ConfigError("ratio vector must be strictly positive")
    maximize = is_maximize(direction)
    r = P.values / u[:, None]
    if maximize:
        p_hat = np.where(P.admissible, r, -np.inf).max(axis=0)
    else:
        p_hat = np.where(P.admissible, r, np.inf).min(axis=0)
    E = P.admissible & (np.abs(r - p_hat[None, :]) <= rel_tol * p_hat[None, :])
    return RestrictedRelated(p_hat, 1.0 / u, E)


# ----------------------------------------------------------------------------
# Sinkhorn


@dataclass
class SinkhornResult:
    row_scale: np.ndarray
    col_scale: np.ndarray
    iterations: int
    Z: np.ndarray = field(repr=False)

    @property
    def scaled(self) -> np.ndarray:
        return self.row_scale[:, None] * self.Z * self.col_scale[None, :]


def sinkhorn_step(Z, r, c, b):
    """One row-then-column normalisation; returns the new ``(a, b)``."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        zb = Z @ b
        a = np.where(r > 0, r / zb, 0.0)
        za = Z.T @ a
        b = np.where(c > 0, c / za, 0.0)
    return a, b


def sinkhorn_scale(Z, r, c, tol: float = 1e-9, max_iter: int = 100_000) -> SinkhornResult:
    """Diagonal scalings ``A, B`` so that ``A Z B`` has row sums ``r`` and column sums ``c``.

    Requires ``sum(r) == sum(c)`` (relative 1e-9) and a feasible pattern;
    raises MaxIterExceeded otherwise (or when convergence is too slow).
    """
    Z = np.asarray(Z, dtype=float)
    r = np.asarray(r, dtype=float)
    c = np.asarray(c, dtype=float)
    if Z.shape != (r.size, c.size):
        raise ConfigError("pattern shape does not match marginals")
    if np.any(Z < 0) or np.any(r < 0) or np.any(c < 0):
        raise ConfigError("pattern and marginals must be nonnegative")
    if abs(r.sum() - c.sum()) > 1e-9 * max(r.sum(), c.sum()):
        raise ConfigError(f"marginal totals differ: {r.sum()} vs {c.sum()}")
    if np.any((Z.sum(axis=1) == 0) & (r > 0)) or np.any((Z.sum(axis=0) == 0) & (c > 0)):
        raise Infeasible("a positive marginal has an empty row/column in the pattern")
    b = np.ones(c.size)
    for it in range(1, max_iter + 1):
        a, b = sinkhorn_step(Z, r, c, b)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            # scalings run off to 0/inf only when the pattern cannot carry the marginals
            raise MaxIterExceeded(f"sinkhorn scalings diverged at iteration {it}")
        err = np.max(np.abs(a * (Z @ b) - r))
        if err <= tol:
            return SinkhornResult(a, b, it, Z)
    raise MaxIterExceeded(f"sinkhorn row error {err:.3e} after {max_iter} iterations")


def optimal_ep_parameters(P, direction="minmax", alpha: float | None = None, opt: OptResult | None = None, tol: float = 1e-10, max_iter: int = 1_000_000):
    """Parameters whose exponentiated allocation tends to an optimal one as ``|alpha|`` grows.

    Builds the ratio vector ``u`` from an optimal assignment, scales the
    restricted-related pattern with Sinkhorn to get ``w``, and returns
    ``log w - alpha log u`` together with the intermediate objects.
    """
    P = as_weights(P)
    opt = opt or lp_opt(P, direction)
    g = build_aux_graph(P, opt.assignment, direction)
    rr = to_restricted_related(P, g.u, direction)
    rows = opt.value * rr.v_hat
    cols = rr.p_hat
    # rows and cols agree up to LP round-off; rescale rows to match exactly
    rows = rows * (cols.sum() / rows.sum())
    sk = sinkhorn_scale(rr.E.astype(float), rows, cols, tol=tol * max(1.0, cols.max()), max_iter=max_iter)
    base = np.log(sk.row_scale)
    a = 0.0 if alpha is None else float(alpha)
    params = ParameterVector(base - a * np.log(g.u))
    return params, {"opt": opt, "graph": g, "restricted": rr, "sinkhorn": sk}


# ----------------------------------------------------------------------------
# generators


def gen_instance(kind: str, *, m: int | None = None, n: int | None = None, k: int | None = None,
                 tau: float | None = None, seed: int = 0, low: float = 1.0, high: float = 10.0,
                 density: float = 0.5):
    """Instance factory.

    ``uniform``: weights U[low, high].  ``restricted``: one U[low, high] size
    per item, admissible for a random subset of agents.  ``minmax_lower`` /
    ``maxmin_lower``: adaptive adversaries (returned as generator objects).
    """
    if kind == "uniform":
        if not m or not n or m < 1 or n < 1:
            raise BadSize("uniform needs m >= 1 and n >= 1")
        rng = np.random.default_rng(seed)
        return WeightMatrix.from_array(rng.uniform(low, high, (m, n)))
    if kind == "restricted":
        if not m or not n or m < 1 or n < 1:
            raise BadSize("restricted needs m >= 1 and n >= 1")
        rng = np.random.default_rng(seed)
        sizes = rng.uniform(low, high, n)
        mask = rng.random((m, n)) < density
        forced = rng.integers(0, m, n)
        mask[forced, np.arange(n)] = True
        return WeightMatrix(np.where(mask, sizes[None, :], np.inf), mask)
    if kind == "minmax_lower":
        if k is None or k < 1:
            raise BadSize("minmax_lower needs k >= 1")
        return MinMaxLowerBound(int(k))
    if kind == "maxmin_lower":
        if m is None or tau is None:
            raise BadSize("maxmin_lower needs m and tau")
        return MaxMinLowerBound(int(m), float(tau))
    raise ConfigError(f"unknown instance kind {kind!r}")


class MinMaxLowerBound:
    """Pair-elimination adversary on ``m = 2**k`` agents.

    Each batch pairs up the surviving agents, one unit item per pair; the
    agent of each pair holding more load survives.  After ``k`` batches
    (``m - 1`` items) some agent carries load at least ``k/2`` under any
    online rule, while parameters ``2**-a_i`` (``a_i`` = items agent ``i``
    can take) keep the makespan below 2.
    """

    def __init__(self, k: int):
        if k < 1:
            raise BadSize("k must be >= 1")
        self.k = k
        self.m = 2**k
        self.alive = list(range(self.m))
        self.counts = np.zeros(self.m, dtype=int)
        self.batches: list[WeightMatrix] = []

    def _batch(self) -> WeightMatrix:
        pairs = [(self.alive[t], self.alive[t + 1]) for t in range(0, len(self.alive), 2)]
        cols = np.full((self.m, len(pairs)), np.inf)
        for j, (a, b) in enumerate(pairs):
            cols[a, j] = cols[b, j] = 1.0
            self.counts[[a, b]] += 1
        self._pairs = pairs
        batch = WeightMatrix.from_array(cols)
        self.batches.append(batch)
        return batch

    def first_batch(self) -> WeightMatrix:
        return self._batch()

    def next_batch(self, current_loads) -> WeightMatrix | None:
        ell = np.asarray(current_loads, dtype=float)
        self.alive = [a if ell[a] >= ell[b] else b for a, b in self._pairs]
        if len(self.alive) < 2:
            return None
        return self._batch()

    def realized(self) -> WeightMatrix:
        out = self.batches[0]
        for b in self.batches[1:]:
            out = out.hstack(b)
        return out

    def planted(self) -> ParameterVector:
        return ParameterVector(-np.log(2.0) * self.counts)


class MaxMinLowerBound:
    """Two-batch adversary: ``m`` shared unit items, then ``(m-1) m`` items nobody-but-``k`` wants.

    ``k`` is the least-loaded agent after the first batch, so with uniform
    parameters it ends with load at most 1; boosting ``k``'s parameter to
    ``tau`` gives it ``m tau / (tau + m - 1)``.
    """

    def __init__(self, m: int, tau: float):
        if m < 2:
            raise BadSize("maxmin_lower needs m >= 2")
        if not 1 <= tau <= m:
            raise BadSize("maxmin_lower needs 1 <= tau <= m")
        self.m = m
        self.tau = tau
        self.spared = None
        self.batches: list[WeightMatrix] = []

    def first_batch(self) -> WeightMatrix:
        b = WeightMatrix.from_array(np.ones((self.m, self.m)))
        self.batches.append(b)
        return b

    def next_batch(self, current_loads) -> WeightMatrix | None:
        if self.spared is not None:
            return None
        ell = np.asarray(current_loads, dtype=float)
        self.spared = int(np.argmin(ell))
        cols = np.ones((self.m, (self.m - 1) * self.m))
        cols[self.spared] = np.inf
        b = WeightMatrix.from_array(cols)
        self.batches.append(b)
        return b

    def realized(self) -> WeightMatrix:
        out = self.batches[0]
        for b in self.batches[1:]:
            out = out.hstack(b)
        return out

    def planted(self) -> ParameterVector:
        if self.spared is None:
            raise ConfigError("play the first batch before asking for planted parameters")
        logw = np.zeros(self.m)
        logw[self.spared] = math.log(self.tau)
        return ParameterVector(logw)


@dataclass
class PlayResult:
    weights: WeightMatrix
    assignment: np.ndarray
    loads: np.ndarray


def play(generator, params: ParameterVector | None = None, transform: TransformSpec | None = None) -> PlayResult:
    """Run fixed-parameter proportional allocation against an adaptive generator."""
    batch = generator.first_batch()
    blocks = []
    total = np.zeros(generator.m)
    while batch is not None:
        X, ell = allocate_all(batch, transform, params)
        blocks.append(X)
        total = total + ell
        batch = generator.next_batch(total)
    W = generator.realized()
    X = np.hstack(blocks)
    return PlayResult(W, X, loads(W, X))

