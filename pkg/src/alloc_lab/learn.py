"""Learning parameter vectors from sampled instances.

Items are drawn independently from finite distributions.  Candidate
parameter vectors come from a geometric grid ``w_i = delta_i / u_i**alpha``;
the learner keeps the grid vector with the best empirical objective on the
concatenated samples.  Everything is computed exactly over finite supports,
so expected values need no Monte Carlo.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .canonical import _workers, choose_alpha
from .core import ParameterVector, WeightMatrix, as_weights, is_maximize, loads
from .errors import BadEpsilon, BudgetExceeded, ConfigError, LengthMismatch
from .objectives import ObjectiveSpec, evaluate, reduce_general
from .oracle import lp_opt, optimize_objective

logger = logging.getLogger(__name__)

__all__ = [
    "GRID_BUDGET",
    "Preprocessed",
    "preprocess",
    "NetGrid",
    "net_enumerate",
    "ItemDistribution",
    "sample_instances",
    "combine",
    "grid_loads",
    "LearnResult",
    "learn_parameters",
    "preprocessed_loads",
    "expected_objective",
    "expected_optimum",
    "SmallItemsReport",
    "small_items_check",
    "learn_general",
]

GRID_BUDGET = 10**7
_SUPPORT_BUDGET = 10**6


def _check_eps(eps: float):
    if not 0 < eps < 1:
        raise BadEpsilon(f"eps must lie in (0, 1), got {eps}")


@dataclass
class Preprocessed:
    """Rounded weights plus the fraction of every item split uniformly before allocation."""

    weights: WeightMatrix
    reserve: float
    direction: str
    eps: float


def preprocess(P, eps: float, direction="maxmin") -> Preprocessed:
    """Round weights to a geometric grid and drop badly dominated entries.

    MaxMin: round down to powers of ``1/(1-eps)``; an entry more than
    ``m**3/eps**2`` times smaller than the best entry of its column becomes a
    tiny positive weight; ``eps`` of each item is reserved for a uniform split.
    MinMax: round up to powers of ``1+eps``; an entry more than ``m/eps``
    times the column minimum becomes inadmissible.
    """
    _check_eps(eps)
    P = as_weights(P)
    m = P.m
    vals = np.where(P.admissible, P.values, np.nan)
    if is_maximize(direction):
        base = 1.0 / (1.0 - eps)
        # the small nudge keeps exact powers from slipping down a level
        r = np.floor(np.log(vals) / math.log(base) + 1e-9)
        rounded = base**r
        best = np.nanmax(rounded, axis=0)
        small = P.admissible & (best[None, :] / np.where(P.admissible, rounded, 1.0) > m**3 / eps**2)
        adm = P.admissible & ~small
        # inadmissible for maximisation means utility ~0: use the delta convention
        out = WeightMatrix(np.where(adm, rounded, np.inf), adm)
        out = out.with_delta() if not out.all_admissible else out
        return Preprocessed(out, eps, "maxmin", eps)
    base = 1.0 + eps
    r = np.ceil(np.log(vals) / math.log(base) - 1e-9)
    rounded = base**r
    low = np.nanmin(rounded, axis=0)
    adm = P.admissible & (np.where(P.admissible, rounded, np.inf) <= (m / eps) * low[None, :])
    return Preprocessed(WeightMatrix(np.where(adm, rounded, np.inf), adm), 0.0, "minmax", eps)


@dataclass
class NetGrid:
    """Grid ``log w_i = r_i ln b - alpha s_i ln b`` for ``r, s`` in ``1..K``.

    Index order is lexicographic in ``(r_1..r_m, s_1..s_m)`` with the last
    digit fastest.
    """

    m: int
    eps: float
    direction: str
    K: int
    alpha: float

    @classmethod
    def build(cls, m: int, eps: float, direction="maxmin", K: int | None = None, alpha: float | None = None,
              budget: int = GRID_BUDGET) -> "NetGrid":
        _check_eps(eps)
        if m < 1:
            raise ConfigError("m must be >= 1")
        if alpha is None:
            alpha = choose_alpha(m, eps, "maximize" if is_maximize(direction) else "minimize")
        if K is None:
            K = max(1, math.ceil((m / eps) * math.log(m / eps)))
            cap = int(math.floor(budget ** (1.0 / (2 * m)) + 1e-9))
            if K > cap:
                logger.warning("grid depth %d capped at %d by the enumeration budget", K, cap)
                K = cap
        if K < 1:
            raise ConfigError("K must be >= 1")
        return cls(m, float(eps), "maxmin" if is_maximize(direction) else "minmax", int(K), float(alpha))

    @property
    def log_base(self) -> float:
        return -math.log1p(-self.eps) if self.direction == "maxmin" else math.log1p(self.eps)

    @property
    def size(self) -> int:
        return self.K ** (2 * self.m)

    @property
    def shape(self) -> tuple:
        return (self.K,) * (2 * self.m)

    def logw_block(self, start: int, stop: int) -> np.ndarray:
        """Rows ``start..stop-1`` of the grid as a ``(stop-start, m)`` array of log-parameters."""
        idx = np.arange(start, min(stop, self.size))
        digits = np.stack(np.unravel_index(idx, self.shape), axis=1) + 1
        r, s = digits[:, : self.m], digits[:, self.m :]
        return (r - self.alpha * s) * self.log_base

    def digits(self, index: int) -> np.ndarray:
        return np.array(np.unravel_index(index, self.shape)) + 1

    def vector(self, index: int) -> ParameterVector:
        if not 0 <= index < self.size:
            raise IndexError(index)
        return ParameterVector(self.logw_block(index, index + 1)[0])


def net_enumerate(grid: NetGrid, budget: int = GRID_BUDGET):
    """Iterator over every grid vector, in index order."""
    if grid.size > budget:
        raise BudgetExceeded(f"grid has {grid.size} vectors, budget {budget}")

    def gen():
        step = 4096
        for start in range(0, grid.size, step):
            for row in grid.logw_block(start, start + step):
                yield ParameterVector(row)

    return gen()


@dataclass
class ItemDistribution:
    """Independent items; item ``j`` is a finite list of ``(probability, column)`` pairs."""

    items: list

    def __post_init__(self):
        if not self.items:
            raise ConfigError("distribution needs at least one item")
        norm = []
        m = None
        for j, entries in enumerate(self.items):
            if not entries:
                raise ConfigError(f"item {j} has empty support")
            probs = np.array([float(p) for p, _ in entries])
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
                raise ConfigError(f"item {j} probabilities must be nonnegative and sum to 1")
            cols = []
            for _, c in entries:
                # reuse the matrix validation on a single column
                col = WeightMatrix.from_rows([[v] for v in c])
                if m is None:
                    m = col.m
                elif col.m != m:
                    raise LengthMismatch(f"item {j} has a column of length {col.m}, expected {m}")
                cols.append(col)
            norm.append((probs, cols))
        self._norm = norm
        self._m = m

    @property
    def m(self) -> int:
        return self._m

    @property
    def n(self) -> int:
        return len(self.items)

    @property
    def support_size(self) -> int:
        return math.prod(len(cols) for _, cols in self._norm)

    def choices(self, j: int):
        return self._norm[j]

    def instance(self, picks) -> WeightMatrix:
        cols = [self._norm[j][1][k] for j, k in enumerate(picks)]
        out = cols[0]
        for c in cols[1:]:
            out = out.hstack(c)
        return out

    def support(self):
        """Every instance in the support with its probability."""
        if self.support_size > _SUPPORT_BUDGET:
            raise BudgetExceeded(f"support of size {self.support_size} too large to enumerate")
        ranges = [range(len(cols)) for _, cols in self._norm]
        for picks in itertools.product(*ranges):
            prob = math.prod(float(self._norm[j][0][k]) for j, k in enumerate(picks))
            if prob > 0:
                yield prob, self.instance(picks)

    def to_json(self) -> dict:
        return {"m": self.m, "items": [
            [{"p": float(p), "column": [float(v) if np.isfinite(v) else "inf" for v in col.values[:, 0]]}
             for p, col in zip(probs, cols)]
            for probs, cols in self._norm]}

    @classmethod
    def from_json(cls, data: dict) -> "ItemDistribution":
        try:
            return cls([[(e["p"], e["column"]) for e in item] for item in data["items"]])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed distribution: {exc}") from exc


def sample_instances(D: ItemDistribution, H: int, seed: int = 0) -> list:
    """``H`` independent instances; column ``j`` of each is an independent draw from item ``j``."""
    if H < 1:
        raise ConfigError("H must be >= 1")
    rng = np.random.default_rng(seed)
    picks = np.stack([rng.choice(len(cols), size=H, p=probs) for probs, cols in (D.choices(j) for j in range(D.n))], axis=1)
    return [D.instance(row) for row in picks]


def combine(samples) -> WeightMatrix:
    """Side-by-side concatenation of instances sharing the same agents."""
    samples = list(samples)
    if not samples:
        raise ConfigError("no samples")
    out = samples[0]
    for s in samples[1:]:
        out = out.hstack(s)
    return out


def grid_loads(P: WeightMatrix, logw: np.ndarray, alpha: float, reserve: float = 0.0) -> np.ndarray:
    """Loads for a block of parameter vectors at once: ``(G, m)`` from ``logw`` of shape ``(G, m)``.

    With ``reserve > 0`` that fraction of every item is split uniformly and
    the rest exponentially.
    """
    adm = P.admissible
    pw = np.where(adm, P.values, 0.0)
    logp = np.where(adm, np.log(np.where(adm, P.values, 1.0)), 0.0)
    S = alpha * logp[None, :, :] + logw[:, :, None]
    S = np.where(adm[None], S, -np.inf)
    S -= S.max(axis=1, keepdims=True)
    E = np.exp(S)
    E /= E.sum(axis=1, keepdims=True)
    L = np.einsum("gij,ij->gi", E, pw)
    if reserve:
        L = (1.0 - reserve) * L + (reserve / P.m) * pw.sum(axis=1)[None, :]
    return L


@dataclass
class LearnResult:
    params: ParameterVector
    index: int
    value: float
    scores: np.ndarray = field(repr=False)
    certified: bool = True


def _score(L: np.ndarray, maximize: bool) -> np.ndarray:
    return L.min(axis=1) if maximize else L.max(axis=1)


def learn_parameters(samples, grid: NetGrid, direction=None, alpha: float | None = None, reserve: float = 0.0,
                     method: str = "exhaustive", workers: int | None = None, chunk: int = 4096,
                     budget: int = GRID_BUDGET) -> LearnResult:
    """Grid vector maximising the smallest average load (MaxMin) or minimising the largest (MinMax).

    Averages are over the samples.  Exhaustive search scores every vector
    (the ``scores`` array is indexed like the grid) and breaks ties towards
    the smaller index; chunked parallel runs give the same answer as
    sequential ones.  ``method="coordinate"`` is a heuristic for grids too
    large to enumerate and its result is marked uncertified.
    """
    direction = grid.direction if direction is None else direction
    maximize = is_maximize(direction)
    alpha = grid.alpha if alpha is None else float(alpha)
    samples = list(samples)
    H = len(samples)
    Pc = combine(samples)
    if Pc.m != grid.m:
        raise LengthMismatch(f"samples have {Pc.m} agents, grid has {grid.m}")
    sign = 1.0 if maximize else -1.0

    if method == "coordinate":
        return _coordinate(Pc, H, grid, alpha, reserve, maximize)
    if method != "exhaustive":
        raise ConfigError(f"unknown method {method!r}")
    if grid.size > budget:
        raise BudgetExceeded(f"grid has {grid.size} vectors, budget {budget}")

    def block(start):
        L = grid_loads(Pc, grid.logw_block(start, start + chunk), alpha, reserve) / H
        return _score(L, maximize)

    starts = range(0, grid.size, chunk)
    n_workers = _workers(workers)
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(block, starts))
    else:
        parts = [block(s) for s in starts]
    scores = np.concatenate(parts)
    best = int(np.argmax(sign * scores))
    return LearnResult(grid.vector(best), best, float(scores[best]), scores)


def _coordinate(Pc, H, grid, alpha, reserve, maximize, max_rounds: int = 50) -> LearnResult:
    sign = 1.0 if maximize else -1.0
    K, m = grid.K, grid.m
    digits = np.full(2 * m, (K - 1) // 2)

    def value(d):
        idx = int(np.ravel_multi_index(tuple(d), grid.shape))
        return _score(grid_loads(Pc, grid.logw_block(idx, idx + 1), alpha, reserve) / H, maximize)[0]

    current = value(digits)
    for _ in range(max_rounds):
        moved = False
        for t in range(2 * m):
            cand = np.repeat(digits[None], K, axis=0)
            cand[:, t] = np.arange(K)
            idx = np.ravel_multi_index(tuple(cand.T), grid.shape)
            logw = np.concatenate([grid.logw_block(i, i + 1) for i in idx])
            vals = _score(grid_loads(Pc, logw, alpha, reserve) / H, maximize)
            k = int(np.argmax(sign * vals))
            if sign * vals[k] > sign * current:
                digits[t], current, moved = k, vals[k], True
        if not moved:
            break
    idx = int(np.ravel_multi_index(tuple(digits), grid.shape))
    return LearnResult(grid.vector(idx), idx, float(current), np.array([current]), certified=False)


def preprocessed_loads(P, params: ParameterVector, alpha: float, eps: float | None = None, direction="maxmin") -> np.ndarray:
    """Loads on ``P`` when the split of each item is computed on its preprocessed version.

    Preprocessing acts column by column, so this is an online rule.
    With ``eps=None`` the raw weights are used.
    """
    P = as_weights(P)
    if eps is None:
        Q, reserve = P, 0.0
    else:
        pre = preprocess(P, eps, direction)
        Q, reserve = pre.weights, pre.reserve
    X = grid_fractions(Q, params.logw, alpha)
    if reserve:
        X = (1.0 - reserve) * X + reserve / P.m
    return loads(P, X)


def grid_fractions(P: WeightMatrix, logw: np.ndarray, alpha: float) -> np.ndarray:
    adm = P.admissible
    logp = np.where(adm, np.log(np.where(adm, P.values, 1.0)), 0.0)
    S = np.where(adm, alpha * logp + np.asarray(logw)[:, None], -np.inf)
    S -= S.max(axis=0, keepdims=True)
    E = np.exp(S)
    return E / E.sum(axis=0, keepdims=True)


def expected_objective(D: ItemDistribution, params: ParameterVector, alpha: float, obj="maxmin",
                       eps: float | None = None) -> float:
    """Exact expectation over the support of the objective reached by fixed parameters."""
    obj = obj if isinstance(obj, ObjectiveSpec) else ObjectiveSpec.parse(obj)
    direction = "maxmin" if obj.maximize else "minmax"
    return float(sum(prob * evaluate(obj, preprocessed_loads(P, params, alpha, eps, direction))
                     for prob, P in D.support()))


def expected_optimum(D: ItemDistribution, obj="maxmin") -> float:
    """Exact expected optimum over the support."""
    obj = obj if isinstance(obj, ObjectiveSpec) else ObjectiveSpec.parse(obj)
    if obj.kind in ("minmax", "maxmin"):
        return float(sum(prob * lp_opt(P, obj.kind).value for prob, P in D.support()))
    return float(sum(prob * optimize_objective(P, obj).value for prob, P in D.support()))


@dataclass
class SmallItemsReport:
    zeta: float
    ok: bool
    T: float
    max_weight: float


def small_items_check(D: ItemDistribution, eps: float, direction="maxmin") -> SmallItemsReport:
    """Whether every weight in the support is at most ``T / zeta`` with ``zeta = ln(m) max(1, 1/eps**2)``.

    ``ln(m)`` is floored at ``ln 2`` so a single agent still gets a positive bound.
    """
    _check_eps(eps)
    zeta = math.log(max(D.m, 2)) * max(1.0, 1.0 / eps**2)
    T = expected_optimum(D, "maxmin" if is_maximize(direction) else "minmax")
    top = max(float(np.max(col.values[col.admissible])) for j in range(D.n) for col in D.choices(j)[1])
    return SmallItemsReport(zeta, top <= T / zeta, T, top)


def learn_general(samples, obj: ObjectiveSpec, grid: NetGrid, alpha: float | None = None, **kw) -> LearnResult:
    """Learning for a monotone homogeneous objective by rescaling each agent's weights.

    Scalings are the optimal loads of ``obj`` on the averaged samples; the
    rescaled samples are learned as MaxMin (maximisation objectives) or
    MinMax, and the winner is mapped back to the original weights.
    """
    samples = list(samples)
    alpha = grid.alpha if alpha is None else float(alpha)
    avg = combine(samples).scaled(1.0 / len(samples))
    scaling = loads(avg, optimize_objective(avg, obj).assignment)
    red = reduce_general(samples[0], scaling, alpha)
    scaled = [S.scaled_rows(scaling) for S in samples]
    res = learn_parameters(scaled, grid, "maxmin" if obj.maximize else "minmax", alpha, **kw)
    return LearnResult(red.lift(res.params), res.index, res.value, res.scores, res.certified)
