"""Learn a grid parameter vector from sampled instances and score it on the true distribution."""
import numpy as np

from alloc_lab.learn import (
    ItemDistribution,
    NetGrid,
    expected_objective,
    expected_optimum,
    learn_parameters,
    preprocess,
    sample_instances,
)

rng = np.random.default_rng(3)
D = ItemDistribution([[(0.5, rng.uniform(1, 10, 2).tolist()), (0.5, rng.uniform(1, 10, 2).tolist())]
                      for _ in range(8)])
eps = 0.25

for obj in ("maxmin", "minmax"):
    grid = NetGrid.build(D.m, eps, obj)
    samples = sample_instances(D, 50, seed=0)
    pre = [preprocess(S, eps, obj) for S in samples]
    res = learn_parameters([p.weights for p in pre], grid, reserve=pre[0].reserve)
    got = expected_objective(D, res.params, grid.alpha, obj, eps=eps)
    print(f"{obj}: {grid.size} grid vectors, sample score {res.value:.3f}, "
          f"expected {got:.3f}, expected optimum {expected_optimum(D, obj):.3f}")
