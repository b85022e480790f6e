"""Domain types and the proportional-allocation kernel.

Weights live in an ``m x n`` matrix (agents by items).  An entry can be
tagged inadmissible, meaning the agent may never receive that item.  All
parameter arithmetic is done on natural logs so that ``p ** alpha`` never
has to be formed explicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import AllInadmissible, ConfigError, NonFiniteLoad, ShapeMismatch, TransformError

__all__ = [
    "INADMISSIBLE",
    "WeightMatrix",
    "ParameterVector",
    "TransformSpec",
    "as_weights",
    "is_maximize",
    "gp_fractions",
    "ep_fractions",
    "loads",
    "allocate_all",
]


class _Inadmissible:
    """Singleton tag for an agent/item pair that cannot be used."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INADMISSIBLE"

    def __reduce__(self):
        return (_Inadmissible, ())


INADMISSIBLE = _Inadmissible()


def _is_inadmissible_token(v) -> bool:
    if v is INADMISSIBLE:
        return True
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "+inf", "infinity", "inadmissible"):
            return True
        raise ConfigError(f"unrecognised weight token {v!r}")
    return False


_MAX_WORDS = ("max", "maximize", "maxmin", "santa", "snt")
_MIN_WORDS = ("min", "minimize", "minmax", "makespan", "mks")


def is_maximize(direction: str) -> bool:
    """Map a direction name to True (maximization) or False (minimization)."""
    d = str(direction).strip().lower()
    if d in _MAX_WORDS:
        return True
    if d in _MIN_WORDS:
        return False
    raise ConfigError(f"unknown direction {direction!r}")


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Strictly positive ``m x n`` weights with an explicit admissibility mask.

    ``values`` holds ``inf`` where ``admissible`` is False; computations never
    read those entries.
    """

    values: np.ndarray
    admissible: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.array(self.admissible, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise ShapeMismatch("weights and admissibility mask must be equal-shape 2-D arrays")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ShapeMismatch("weight matrix needs at least one agent and one item")
        adm = values[mask]
        if not np.all(np.isfinite(adm)) or np.any(adm <= 0):
            raise ConfigError("admissible weights must be finite and strictly positive")
        empty = np.flatnonzero(~mask.any(axis=0))
        if empty.size:
            raise AllInadmissible(column=int(empty[0]))
        values[~mask] = np.inf
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "admissible", mask)

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence]) -> "WeightMatrix":
        """Build from nested rows; ``inf``, ``"inf"`` and INADMISSIBLE mark unusable pairs."""
        rows = [list(r) for r in rows]
        if not rows or len({len(r) for r in rows}) != 1:
            raise ShapeMismatch("rows must be non-empty and of equal length")
        m, n = len(rows), len(rows[0])
        values = np.empty((m, n))
        mask = np.ones((m, n), dtype=bool)
        for i, row in enumerate(rows):
            for j, v in enumerate(row):
                if _is_inadmissible_token(v):
                    mask[i, j] = False
                    values[i, j] = np.inf
                    continue
                v = float(v)
                if math.isinf(v) and v > 0:
                    mask[i, j] = False
                values[i, j] = v
        return cls(values, mask)

    @classmethod
    def from_array(cls, array) -> "WeightMatrix":
        values = np.array(array, dtype=float)
        return cls(values, ~np.isposinf(values))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def all_admissible(self) -> bool:
        return bool(self.admissible.all())

    def row_sums(self) -> np.ndarray:
        """Per-agent total admissible weight (the monopolist value)."""
        return np.where(self.admissible, self.values, 0.0).sum(axis=1)

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]

    def columns(self, idx) -> "WeightMatrix":
        return WeightMatrix(self.values[:, idx], self.admissible[:, idx])

    def scaled_rows(self, s) -> "WeightMatrix":
        s = np.asarray(s, dtype=float)
        return WeightMatrix(self.values / s[:, None], self.admissible)

    def scaled(self, c: float) -> "WeightMatrix":
        return WeightMatrix(self.values * c, self.admissible)

    def hstack(self, other: "WeightMatrix") -> "WeightMatrix":
        if other.m != self.m:
            raise ShapeMismatch("cannot concatenate instances with different agent counts")
        return WeightMatrix(
            np.hstack([self.values, other.values]),
            np.hstack([self.admissible, other.admissible]),
        )

    def with_delta(self, delta: float | None = None) -> "WeightMatrix":
        """Replace inadmissible entries by a tiny positive weight (maximization convention)."""
        if delta is None:
            delta = 1e-12 * float(self.values[self.admissible].min())
        return WeightMatrix(np.where(self.admissible, self.values, delta), np.ones(self.shape, bool))

    def to_rows(self) -> list:
        return [
            [float(v) if a else "inf" for v, a in zip(vr, ar)]
            for vr, ar in zip(self.values, self.admissible)
        ]

    def __eq__(self, other):
        if not isinstance(other, WeightMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.admissible, other.admissible)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"WeightMatrix(m={self.m}, n={self.n}, rows={self.to_rows()!r})"


def as_weights(P) -> WeightMatrix:
    """Accept a WeightMatrix or anything array-like (``inf`` = inadmissible)."""
    if isinstance(P, WeightMatrix):
        return P
    arr = np.asarray(P, dtype=object if _has_strings(P) else float)
    if arr.dtype == object:
        return WeightMatrix.from_rows(arr.tolist())
    if arr.ndim == 1:
        arr = arr[:, None]
    return WeightMatrix.from_array(arr)


def _has_strings(P) -> bool:
    if isinstance(P, np.ndarray):
        return P.dtype == object
    try:
        return any(isinstance(v, str) or v is INADMISSIBLE for row in P for v in row)
    except TypeError:
        return False


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """Per-agent learned parameters, stored as natural logs.

    Two vectors whose logs differ by a common constant are equivalent: they
    produce identical allocations.
    """

    logw: np.ndarray

    def __post_init__(self):
        logw = np.array(self.logw, dtype=float).reshape(-1)
        if logw.size < 1 or not np.all(np.isfinite(logw)):
            raise ConfigError("parameter logs must be finite and non-empty")
        logw.setflags(write=False)
        object.__setattr__(self, "logw", logw)

    @classmethod
    def ones(cls, m: int) -> "ParameterVector":
        return cls(np.zeros(m))

    @classmethod
    def from_weights(cls, w) -> "ParameterVector":
        w = np.asarray(w, dtype=float)
        if np.any(w <= 0):
            raise ConfigError("parameters must be strictly positive")
        return cls(np.log(w))

    @property
    def w(self) -> np.ndarray:
        return np.exp(self.logw)

    def __len__(self):
        return self.logw.size

    def normalized(self) -> "ParameterVector":
        """Representative of the equivalence class with ``logw[0] == 0``."""
        return ParameterVector(self.logw - self.logw[0])

    def shifted(self, c: float) -> "ParameterVector":
        return ParameterVector(self.logw + c)

    def equivalent(self, other: "ParameterVector", atol: float = 1e-9) -> bool:
        d = self.logw - np.asarray(other.logw)
        return bool(np.ptp(d) <= atol)

    def __eq__(self, other):
        if not isinstance(other, ParameterVector):
            return NotImplemented
        return np.array_equal(self.logw, other.logw)

    def __repr__(self):
        return f"ParameterVector(logw={self.logw.tolist()!r})"


def _as_logw(params, m: int) -> np.ndarray:
    if params is None:
        return np.zeros(m)
    if not isinstance(params, ParameterVector):
        raise TypeError("params must be a ParameterVector (or None for all-ones)")
    if len(params) != m:
        raise ShapeMismatch(f"expected {m} parameters, got {len(params)}")
    return params.logw


@dataclass(frozen=True)
class TransformSpec:
    """Transformation applied to weights before proportional sharing.

    ``identity``: f(p) = p.  ``exponent``: f(p) = p**alpha.  ``table``: f looked
    up from an explicit weight -> value map (values must be positive).
    """

    kind: str = "identity"
    alpha: float = 1.0
    table: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in ("identity", "exponent", "table"):
            raise ConfigError(f"unknown transform kind {self.kind!r}")
        if self.kind == "exponent" and not math.isfinite(self.alpha):
            raise ConfigError("exponent must be finite")
        if self.kind == "table":
            if any(not (v > 0 and math.isfinite(v)) for _, v in self.table):
                raise ConfigError("table values must be finite and strictly positive")

    @classmethod
    def identity(cls) -> "TransformSpec":
        return cls("identity")

    @classmethod
    def exponent(cls, alpha: float) -> "TransformSpec":
        return cls("exponent", alpha=float(alpha))

    @classmethod
    def from_table(cls, mapping: Mapping[float, float]) -> "TransformSpec":
        return cls("table", table=tuple(sorted((float(k), float(v)) for k, v in mapping.items())))

    def log_f(self, p: np.ndarray) -> np.ndarray:
        """Elementwise ``log f(p)`` for finite positive ``p``."""
        p = np.asarray(p, dtype=float)
        if self.kind == "identity":
            return np.log(p)
        if self.kind == "exponent":
            if self.alpha == 0.0:
                return np.zeros_like(p)
            return self.alpha * np.log(p)
        keys = np.array([k for k, _ in self.table])
        vals = np.log(np.array([v for _, v in self.table]))
        if keys.size == 0:
            raise TransformError("empty transform table")
        pos = np.clip(np.searchsorted(keys, p), 0, keys.size - 1)
        hit = keys[pos] == p
        if not np.all(hit):
            missing = p[~hit].ravel()[0]
            raise TransformError(f"weight {missing!r} missing from transform table")
        return vals[pos]


def _log_scores(P: WeightMatrix, transform: TransformSpec, logw: np.ndarray) -> np.ndarray:
    safe = np.where(P.admissible, P.values, 1.0)
    try:
        lf = transform.log_f(safe)
    except TransformError as exc:
        bad = _first_bad_column(P, transform)
        raise TransformError(f"{exc} (column {bad})") from exc
    return np.where(P.admissible, lf + logw[:, None], -np.inf)


def _first_bad_column(P, transform):
    for j in range(P.n):
        try:
            transform.log_f(P.values[P.admissible[:, j], j])
        except TransformError:
            return j
    return None


def _softmax_columns(z: np.ndarray) -> np.ndarray:
    x = np.exp(z - logsumexp(z, axis=0, keepdims=True))
    # renormalise so columns sum to one to the last ulp
    return x / x.sum(axis=0, keepdims=True)


def gp_fractions(column, transform: TransformSpec | None = None, params: ParameterVector | None = None) -> np.ndarray:
    """Split one item among agents in proportion to ``f(p_i) * w_i``.

    ``column`` is a length-m weight vector; ``inf`` (or INADMISSIBLE) marks an
    agent that cannot receive the item.
    """
    transform = transform or TransformSpec.identity()
    vals = np.array([
        np.inf if _is_inadmissible_token(v) else float(v)
        for v in np.asarray(column, dtype=object).ravel()
    ])
    mask = ~np.isposinf(vals)
    if not mask.any():
        raise AllInadmissible()
    P = WeightMatrix(vals[:, None], mask[:, None])
    return _softmax_columns(_log_scores(P, transform, _as_logw(params, P.m)))[:, 0]


def ep_fractions(column, alpha: float, params: ParameterVector | None = None) -> np.ndarray:
    """Exponentiated proportional split: ``p_i**alpha * w_i`` normalised."""
    return gp_fractions(column, TransformSpec.exponent(alpha), params)


def loads(P, X) -> np.ndarray:
    """Per-agent load ``sum_j x_ij p_ij``; inadmissible pairs contribute nothing."""
    P = as_weights(P)
    X = np.asarray(X, dtype=float)
    if X.shape != P.shape:
        raise ShapeMismatch(f"assignment shape {X.shape} != weight shape {P.shape}")
    return np.where(P.admissible, X * np.where(P.admissible, P.values, 0.0), 0.0).sum(axis=1)


def allocate_all(P, transform: TransformSpec | None = None, params: ParameterVector | None = None):
    """Apply the proportional split to every column; returns ``(X, loads)``."""
    P = as_weights(P)
    transform = transform or TransformSpec.identity()
    X = _softmax_columns(_log_scores(P, transform, _as_logw(params, P.m)))
    ell = loads(P, X)
    if not np.all(np.isfinite(ell)):
        raise NonFiniteLoad("non-finite load produced")
    return X, ell
