"""Dense two-phase tableau simplex with Bland's pivoting rule.

Small problems only: the tableau is a full ``(rows+1) x (cols+1)`` array.
With ``exact=True`` every entry is a :class:`fractions.Fraction`, which
removes any doubt about degenerate ties at the price of speed.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import Infeasible, MaxIterExceeded, Unbounded

__all__ = ["LPSolution", "simplex_solve"]

_FLOAT_EPS = 1e-11


@dataclass
class LPSolution:
    x: np.ndarray
    value: float
    basis: list
    pivots: int


def _pivot(T, r, k, exact):
    T[r] = T[r] / T[r, k]
    col = T[:, k].copy()
    col[r] = 0
    T -= np.outer(col, T[r])
    if not exact:
        T[np.abs(T) < 1e-14] = 0.0


def _run(T, basis, allowed, eps, exact, max_pivots, count):
    """Minimise the objective row of ``T`` in place; returns the pivot count."""
    while True:
        obj = T[-1, :-1]
        entering = next((j for j in allowed if obj[j] < -eps), None)
        if entering is None:
            return count
        column = T[:-1, entering]
        rhs = T[:-1, -1]
        rows = [i for i in range(column.shape[0]) if column[i] > eps]
        leave = None
        if rows:
            ratios = {i: rhs[i] / column[i] for i in rows}
            best = min(ratios.values())
            # Bland: among (near-)tied rows, leave by smallest basic index
            leave = min((i for i in rows if ratios[i] <= best + eps), key=lambda i: basis[i])
        if leave is None:
            raise Unbounded("objective is unbounded below")
        _pivot(T, leave, entering, exact)
        basis[leave] = entering
        count += 1
        if count > max_pivots:
            raise MaxIterExceeded(f"simplex exceeded {max_pivots} pivots")


def simplex_solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, exact=False, max_pivots=200_000) -> LPSolution:
    """Minimise ``c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x == b_eq``, ``x >= 0``."""
    c = np.asarray(c, dtype=float)
    nv = c.size
    A_ub = np.zeros((0, nv)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, nv)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    A_eq = np.zeros((0, nv)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, nv)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    n_ub, n_eq = A_ub.shape[0], A_eq.shape[0]
    rows = n_ub + n_eq

    # columns: originals | slacks (one per ub row) | artificials (as needed)
    need_art = [b_ub[i] < 0 for i in range(n_ub)] + [True] * n_eq
    n_art = sum(need_art)
    ncols = nv + n_ub + n_art
    dtype = object if exact else float
    T = np.zeros((rows + 1, ncols + 1), dtype=dtype)
    if exact:
        T[:] = Fraction(0)
    conv = (lambda v: Fraction(v)) if exact else float

    basis = []
    art = nv + n_ub
    for i in range(rows):
        if i < n_ub:
            a, b, sign = A_ub[i], b_ub[i], (-1 if b_ub[i] < 0 else 1)
            T[i, nv + i] = conv(sign)
        else:
            a, b = A_eq[i - n_ub], b_eq[i - n_ub]
            sign = -1 if b < 0 else 1
        for j in np.flatnonzero(a):
            T[i, j] = conv(sign * a[j])
        T[i, -1] = conv(sign * b)
        if need_art[i]:
            T[i, art] = conv(1)
            basis.append(art)
            art += 1
        else:
            basis.append(nv + i)

    eps = 0 if exact else _FLOAT_EPS
    pivots = 0
    art_cols = set(range(nv + n_ub, ncols))
    if n_art:
        for i, b in enumerate(basis):
            if b in art_cols:
                T[-1] -= T[i]
        for j in art_cols:
            T[-1, j] = conv(0)
        pivots = _run(T, basis, list(range(ncols)), eps, exact, max_pivots, pivots)
        if -T[-1, -1] > (0 if exact else 1e-9 * max(1.0, float(np.abs(b_eq).sum() + np.abs(b_ub).sum()))):
            raise Infeasible("no feasible point")
        # drive artificials out of the basis, dropping redundant rows
        keep = []
        for i, b in enumerate(basis):
            if b in art_cols:
                cand = next((j for j in range(nv + n_ub) if abs(T[i, j]) > eps), None)
                if cand is None:
                    continue
                _pivot(T, i, cand, exact)
                basis[i] = cand
                pivots += 1
            keep.append(i)
        T = np.vstack([T[keep], T[-1:]])
        basis = [basis[i] for i in keep]
        T = np.delete(T, sorted(art_cols), axis=1)

    ncols = nv + n_ub
    T[-1] = conv(0)
    for j in range(nv):
        T[-1, j] = conv(c[j])
    for i, b in enumerate(basis):
        cb = T[-1, b]
        if cb != 0:
            T[-1] -= cb * T[i]
    pivots = _run(T, basis, list(range(ncols)), eps, exact, max_pivots, pivots)

    x = np.zeros(nv, dtype=dtype)
    if exact:
        x[:] = Fraction(0)
    for i, b in enumerate(basis):
        if b < nv:
            x[b] = T[i, -1]
    value = -T[-1, -1]
    return LPSolution(x=x, value=value, basis=basis, pivots=pivots)
