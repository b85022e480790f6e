"""How far a noisy parameter prediction pushes the makespan, with and without halving phases."""
import math

import numpy as np

from alloc_lab import TransformSpec, WeightMatrix, solve_canonical
from alloc_lab.online import dominating, eta_of, perturb_parameters, robust_minmax, simulate_stream

rng = np.random.default_rng(0)
P = WeightMatrix.from_array(rng.uniform(1, 10, (4, 200)))
alpha = -1.0
tf = TransformSpec.exponent(alpha)
star = solve_canonical(P, tf, tol=1e-10, method="newton")
T = star.load * (1 + 1e-9)
print(f"canonical makespan {star.load:.3f}")

for eta in (1.0, 4.0, 16.0, 256.0, 4096.0, 65536.0):
    w = dominating(perturb_parameters(star.params, eta, seed=1), star.params)
    _, fixed, _ = simulate_stream(P, alpha, w)
    run = robust_minmax(P, w, T, tf)
    real = eta_of(w, star.params).eta
    bound = math.ceil(math.log2(real)) + 1 if real > 1 else 1
    print(f"eta={real:8.2f}  fixed makespan {fixed.max():8.3f}  robust {run.makespan:8.3f}"
          f"  phases {run.phase_counts.tolist()} (bound {bound})")
