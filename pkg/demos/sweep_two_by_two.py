"""Canonical load of a 2x2 instance as the exponent moves from MinMax to MaxMin."""
import numpy as np

from alloc_lab import TransformSpec, WeightMatrix, allocate_all, solve_canonical
from alloc_lab.canonical import canonical_sweep
from alloc_lab.oracle import lp_opt

P = WeightMatrix.from_rows([[1, 2], [2, 1]])

res = solve_canonical(P, TransformSpec.exponent(1.0))
X, ell = allocate_all(P, TransformSpec.exponent(1.0), res.params)
print("proportional split:\n", np.round(X, 4))
print("loads:", ell, "after", res.iterations, "iterations")

for alpha, load in canonical_sweep(P, [-40, -5, -1, 0, 1, 5, 40]):
    print(f"alpha={alpha:6.1f}  canonical load={load:.6f}")

print("MinMax optimum", lp_opt(P, "minmax").value, " MaxMin optimum", lp_opt(P, "maxmin").value)
