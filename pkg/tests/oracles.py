"""Reference computations that share no code with the package.

Used to derive expected values; each helper is deliberately naive.
"""
from fractions import Fraction
from itertools import product

import numpy as np
from scipy.optimize import brentq, linprog


def exact_proportional(column, weights, alpha):
    """Exact shares ``p_i**alpha * w_i / sum`` for integer ``alpha`` and rational inputs."""
    scores = [Fraction(p) ** alpha * Fraction(w) for p, w in zip(column, weights)]
    total = sum(scores)
    return [s / total for s in scores]


def two_agent_canonical(P, alpha=1.0):
    """Canonical load for two agents by bisection on ``log(w_2 / w_1)``.

    Agent 1's load minus agent 2's load is strictly decreasing in the ratio,
    so the root is unique.
    """
    P = np.asarray(P, dtype=float)

    def diff(t):
        s = np.vstack([P[0] ** alpha, P[1] ** alpha * np.exp(t)])
        x = s / s.sum(axis=0)
        ell = (x * P).sum(axis=1)
        return ell[0] - ell[1], ell

    t = brentq(lambda t: diff(t)[0], -200, 200, xtol=1e-15, rtol=1e-15)
    return float(diff(t)[1].mean())


def scipy_lp(P, direction):
    """MinMax / MaxMin optimum via scipy's HiGHS backend. ``inf`` marks unusable pairs."""
    P = np.asarray(P, dtype=float)
    m, n = P.shape
    nv = m * n + 1
    c = np.zeros(nv)
    c[-1] = 1.0 if direction == "minmax" else -1.0
    A_ub = np.zeros((m, nv))
    for i in range(m):
        for j in range(n):
            if np.isfinite(P[i, j]):
                A_ub[i, i * n + j] = P[i, j] if direction == "minmax" else -P[i, j]
        A_ub[i, -1] = -1.0 if direction == "minmax" else 1.0
    A_eq = np.zeros((n, nv))
    for j in range(n):
        for i in range(m):
            A_eq[j, i * n + j] = 1.0
    bounds = [(0, 0) if not np.isfinite(P[i, j]) else (0, None) for i in range(m) for j in range(n)] + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(m), A_eq=A_eq, b_eq=np.ones(n), bounds=bounds, method="highs")
    assert res.status == 0, res.message
    return abs(res.fun)


def enumerate_support(items):
    """All instances of a product distribution given as ``[[(p, column), ...], ...]``."""
    for picks in product(*[range(len(it)) for it in items]):
        prob = 1.0
        cols = []
        for j, k in enumerate(picks):
            p, col = items[j][k]
            prob *= p
            cols.append(col)
        yield prob, np.array(cols, dtype=float).T
