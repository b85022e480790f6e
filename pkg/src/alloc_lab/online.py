"""Streaming allocation with fixed or self-correcting predicted parameters."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ParameterVector, TransformSpec, WeightMatrix, gp_fractions
from .errors import ConfigError, LengthMismatch, NonPositiveT

__all__ = [
    "EtaReport",
    "eta_of",
    "perturb_parameters",
    "dominating",
    "simulate_stream",
    "PhaseRecord",
    "StreamState",
    "RobustRun",
    "robust_minmax",
]


@dataclass(frozen=True)
class EtaReport:
    eta: float

    @property
    def log_eta(self) -> float:
        return math.log(self.eta)


def eta_of(w: ParameterVector, w_star: ParameterVector) -> EtaReport:
    """Largest pairwise ratio distortion ``(w_k/w_i)(w*_i/w*_k)`` between two parameter vectors."""
    if len(w) != len(w_star):
        raise LengthMismatch(f"lengths differ: {len(w)} vs {len(w_star)}")
    d = w.logw - w_star.logw
    return EtaReport(float(math.exp(d.max() - d.min())))


def perturb_parameters(w: ParameterVector, eta_target: float, seed: int = 0) -> ParameterVector:
    """Add i.i.d. uniform log-offsets of half-width ``ln(eta_target)/2``."""
    if not eta_target >= 1:
        raise ConfigError(f"eta_target must be >= 1, got {eta_target}")
    half = 0.5 * math.log(eta_target)
    if half == 0:
        return ParameterVector(w.logw.copy())
    rng = np.random.default_rng(seed)
    return ParameterVector(w.logw + rng.uniform(-half, half, len(w)))


def dominating(w_hat: ParameterVector, w_star: ParameterVector) -> ParameterVector:
    """Rescale ``w_hat`` by a constant so that it is coordinatewise >= ``w_star`` with equality somewhere."""
    if len(w_hat) != len(w_star):
        raise LengthMismatch(f"lengths differ: {len(w_hat)} vs {len(w_star)}")
    return w_hat.shifted(float(np.max(w_star.logw - w_hat.logw)))


def _columns(items) -> list:
    if isinstance(items, WeightMatrix):
        return [items.values[:, j] for j in range(items.n)]
    return [np.asarray(c, dtype=object).ravel() for c in items]


def simulate_stream(items, alpha: float, params: ParameterVector | None = None):
    """Allocate items one at a time with fixed parameters.

    Returns ``(X, loads, trace)``; ``trace[j]`` holds item ``j``'s fractions.
    The result does not depend on arrival order beyond the column order of ``X``.
    """
    transform = TransformSpec.exponent(alpha)
    cols = _columns(items)
    if not cols:
        raise ConfigError("empty stream")
    m = len(cols[0])
    X = np.zeros((m, len(cols)))
    ell = np.zeros(m)
    trace = []
    for j, col in enumerate(cols):
        if len(col) != m:
            raise LengthMismatch(f"item {j} has {len(col)} entries, expected {m}")
        x = gp_fractions(col, transform, params)
        X[:, j] = x
        ell += _weights_of(col) * x
        trace.append({"item": j, "fractions": x.tolist()})
    return X, ell, trace


def _weights_of(col) -> np.ndarray:
    """Finite weights with inadmissible entries mapped to zero."""
    out = np.zeros(len(col))
    for i, v in enumerate(col):
        try:
            f = float(v)
        except (TypeError, ValueError):
            continue
        if np.isfinite(f):
            out[i] = f
    return out


@dataclass
class PhaseRecord:
    agent: int
    phase: int
    items: int
    load: float
    closed: bool


@dataclass
class StreamState:
    """Working state of the phase-based algorithm for one stream."""

    logw: np.ndarray
    T: float
    total: np.ndarray = None
    phase_load: np.ndarray = None
    phase: np.ndarray = None
    phase_items: np.ndarray = None
    min_logw: np.ndarray = None
    log: list = field(default_factory=list)

    def __post_init__(self):
        if not self.T > 0:
            raise NonPositiveT(f"threshold must be positive, got {self.T}")
        self.logw = np.array(self.logw, dtype=float)
        if not np.all(np.isfinite(self.logw)):
            raise ConfigError("predicted parameters must be finite")
        m = self.logw.size
        self.total = np.zeros(m)
        self.phase_load = np.zeros(m)
        self.phase = np.ones(m, dtype=int)
        self.phase_items = np.zeros(m, dtype=int)
        self.min_logw = self.logw.copy()

    @property
    def m(self) -> int:
        return self.logw.size

    def feed(self, column, transform: TransformSpec):
        """Allocate one item; returns ``(fractions, halved_agents)``."""
        x = gp_fractions(column, transform, ParameterVector(self.logw))
        add = _weights_of(column) * x
        self.total += add
        self.phase_load += add
        self.phase_items += 1
        halved = np.flatnonzero(self.phase_load > 2 * self.T)
        for i in halved:
            self.log.append(PhaseRecord(int(i), int(self.phase[i]), int(self.phase_items[i]), float(self.phase_load[i]), True))
            self.phase_load[i] = 0.0
            self.phase_items[i] = 0
            self.phase[i] += 1
            self.logw[i] -= math.log(2.0)
        np.minimum(self.min_logw, self.logw, out=self.min_logw)
        return x, [int(i) for i in halved]

    def phase_log(self) -> list:
        """Closed phases followed by each agent's still-open phase, sorted by (agent, phase)."""
        open_ = [PhaseRecord(i, int(self.phase[i]), int(self.phase_items[i]), float(self.phase_load[i]), False)
                 for i in range(self.m)]
        return sorted(self.log + open_, key=lambda r: (r.agent, r.phase))


@dataclass
class RobustRun:
    assignment: np.ndarray
    loads: np.ndarray
    phase_log: list
    trace: list
    state: StreamState = field(repr=False)

    @property
    def phase_counts(self) -> np.ndarray:
        return self.state.phase.copy()

    @property
    def makespan(self) -> float:
        return float(self.loads.max())


def robust_minmax(items, predicted: ParameterVector, T: float, transform: TransformSpec | None = None) -> RobustRun:
    """Proportional allocation that halves an agent's parameter whenever its phase load exceeds ``2T``.

    ``T`` should be an upper bound on the makespan achieved by the (unknown)
    parameters the prediction approximates.  An item may push a phase past
    ``2T`` by at most its own weight; the overshoot is kept in the phase log.
    """
    transform = transform or TransformSpec.identity()
    state = StreamState(predicted.logw, float(T))
    cols = _columns(items)
    X = np.zeros((state.m, len(cols)))
    trace = []
    for j, col in enumerate(cols):
        if len(col) != state.m:
            raise LengthMismatch(f"item {j} has {len(col)} entries, expected {state.m}")
        x, halved = state.feed(col, transform)
        X[:, j] = x
        trace.append({"item": j, "fractions": x.tolist(), "halved": halved})
    return RobustRun(X, state.total.copy(), state.phase_log(), trace, state)
