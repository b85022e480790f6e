"""Objectives over load vectors and the per-agent rescaling trick.

Built-in objectives (MinMax, MaxMin, Nash welfare as a geometric mean, and
l_p norms) are all monotone and degree-1 homogeneous.  For such an objective,
dividing each agent's row of weights by its optimal load turns the problem
into a MaxMin/MinMax problem whose optimum is 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import ParameterVector, TransformSpec, WeightMatrix, allocate_all, as_weights, is_maximize
from .errors import BadScaling, ConfigError, NonPositiveLoad

__all__ = [
    "ObjectiveSpec",
    "evaluate",
    "WellBehavedReport",
    "check_well_behaved",
    "ScaledInstance",
    "reduce_general",
    "additivity_gap",
    "pipeline_loads",
]


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str
    direction: str
    p: float | None = None
    func: Callable | None = field(default=None, compare=False)
    name: str = ""

    @classmethod
    def minmax(cls):
        return cls("minmax", "minimize", name="minmax")

    @classmethod
    def maxmin(cls):
        return cls("maxmin", "maximize", name="maxmin")

    @classmethod
    def nash(cls):
        return cls("nash", "maximize", name="nash")

    @classmethod
    def lp(cls, p: float):
        if not p >= 1:
            raise ConfigError(f"l_p norm needs p >= 1, got {p}")
        return cls("lp", "minimize", p=float(p), name=f"lp:{p:g}")

    @classmethod
    def custom(cls, func: Callable, direction: str, name: str = "custom"):
        is_maximize(direction)
        return cls("custom", direction, func=func, name=name)

    @classmethod
    def parse(cls, text: str) -> "ObjectiveSpec":
        """Parse ``minmax``, ``maxmin``, ``nash`` or ``lp:<p>``."""
        t = text.strip().lower()
        if t == "minmax":
            return cls.minmax()
        if t == "maxmin":
            return cls.maxmin()
        if t == "nash":
            return cls.nash()
        if t.startswith("lp:"):
            try:
                return cls.lp(float(t[3:]))
            except ValueError as exc:
                raise ConfigError(f"bad norm exponent in {text!r}") from exc
        raise ConfigError(f"unknown objective {text!r}")

    @property
    def maximize(self) -> bool:
        return is_maximize(self.direction)


def evaluate(obj: ObjectiveSpec, ell) -> float:
    ell = np.asarray(ell, dtype=float)
    if obj.kind == "minmax":
        return float(ell.max())
    if obj.kind == "maxmin":
        return float(ell.min())
    if obj.kind == "nash":
        if np.any(ell <= 0):
            raise NonPositiveLoad("Nash welfare needs strictly positive loads")
        return float(np.exp(np.mean(np.log(ell))))
    if obj.kind == "lp":
        scale = float(ell.max())
        if scale == 0:
            return 0.0
        return float(scale * np.sum((ell / scale) ** obj.p) ** (1.0 / obj.p))
    return float(obj.func(ell))


@dataclass
class WellBehavedReport:
    monotone_ok: bool
    homogeneous_ok: bool
    counterexamples: list

    @property
    def ok(self) -> bool:
        return self.monotone_ok and self.homogeneous_ok


def check_well_behaved(obj: ObjectiveSpec, probe_count: int = 1000, seed: int = 0, m: int | None = None, rel_tol: float = 1e-9) -> WellBehavedReport:
    """Probe monotonicity and degree-1 homogeneity on random load vectors.

    Report only; violations beyond ``rel_tol`` (relative) are collected as
    ``(property, inputs...)`` tuples.
    """
    if probe_count < 1:
        raise ConfigError("probe_count must be >= 1")
    rng = np.random.default_rng(seed)
    mono, homo = True, True
    bad = []
    for _ in range(probe_count):
        k = m or int(rng.integers(2, 7))
        base = rng.uniform(0.1, 10.0, k)
        # bump a random subset of coordinates so partial increases get probed
        bump = rng.uniform(0.0, 5.0, k) * (rng.random(k) < 0.5)
        hi = base + bump
        f_lo, f_hi = evaluate(obj, base), evaluate(obj, hi)
        if f_hi < f_lo - rel_tol * max(abs(f_lo), abs(f_hi), 1e-300):
            mono = False
            bad.append(("monotone", hi.tolist(), base.tolist(), f_hi, f_lo))
        c = float(rng.uniform(0.1, 10.0))
        f_c = evaluate(obj, c * base)
        if abs(f_c - c * f_lo) > rel_tol * max(abs(f_c), abs(c * f_lo), 1e-300):
            homo = False
            bad.append(("homogeneous", base.tolist(), c, f_c, c * f_lo))
    return WellBehavedReport(mono, homo, bad)


@dataclass
class ScaledInstance:
    """Rows of ``P`` divided by per-agent scalings ``s``."""

    q: WeightMatrix
    scaling: np.ndarray
    alpha: float

    def lift(self, params: ParameterVector) -> ParameterVector:
        """Map parameters for the scaled instance to parameters for the original one."""
        return ParameterVector(params.logw - self.alpha * np.log(self.scaling))

    def lower(self, params: ParameterVector) -> ParameterVector:
        return ParameterVector(params.logw + self.alpha * np.log(self.scaling))


def reduce_general(P, s, alpha: float) -> ScaledInstance:
    """Scaled instance ``q_ij = p_ij / s_i`` plus the parameter map back to ``P``.

    For exponent ``alpha``, ``allocate(P, w')`` equals ``allocate(q, w~)``
    whenever ``log w'_i = log w~_i - alpha log s_i``.
    """
    P = as_weights(P)
    s = np.asarray(s, dtype=float).reshape(-1)
    if s.size != P.m:
        raise BadScaling(f"need {P.m} scalings, got {s.size}")
    if np.any(~np.isfinite(s)) or np.any(s <= 0):
        raise BadScaling("scalings must be finite and strictly positive")
    return ScaledInstance(P.scaled_rows(s), s, float(alpha))


def additivity_gap(obj: ObjectiveSpec, load_vectors) -> float:
    """``f(sum_r l_r) - sum_r f(l_r)``: >= 0 means superadditive on these inputs, <= 0 subadditive."""
    L = np.asarray(load_vectors, dtype=float)
    return evaluate(obj, L.sum(axis=0)) - sum(evaluate(obj, row) for row in L)


def pipeline_loads(P, s, alpha: float, params_on_q: ParameterVector):
    """Loads on ``P`` of the exponentiated allocation driven through the rescaled instance."""
    red = reduce_general(P, s, alpha)
    return allocate_all(P, TransformSpec.exponent(alpha), red.lift(params_on_q))[1]

