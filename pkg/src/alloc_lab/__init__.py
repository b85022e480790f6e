"""Proportional allocation with learned per-agent parameters.

Quick start::

    from alloc_lab import WeightMatrix, TransformSpec, solve_canonical
    P = WeightMatrix.from_rows([[1, 2], [2, 1]])
    solve_canonical(P, TransformSpec.exponent(1.0)).load   # 5/3
"""
from .canonical import (
    CanonicalResult,
    IterationDiagnostics,
    callebaut_slack,
    canonical_sweep,
    choose_alpha,
    cross_alpha_gap,
    iteration_step,
    load_step_bounds,
    milne_slack,
    solve_canonical,
)
from .core import (
    INADMISSIBLE,
    ParameterVector,
    TransformSpec,
    WeightMatrix,
    allocate_all,
    ep_fractions,
    gp_fractions,
    loads,
)
from .errors import *  # noqa: F401,F403
from .learn import (
    ItemDistribution,
    NetGrid,
    expected_objective,
    expected_optimum,
    learn_general,
    learn_parameters,
    net_enumerate,
    preprocess,
    sample_instances,
    small_items_check,
)
from .objectives import ObjectiveSpec, check_well_behaved, evaluate, reduce_general
from .online import eta_of, perturb_parameters, robust_minmax, simulate_stream
from .oracle import (
    build_aux_graph,
    gen_instance,
    grid_opt,
    lp_opt,
    optimal_ep_parameters,
    optimize_objective,
    play,
    sinkhorn_scale,
    to_restricted_related,
)

__version__ = "0.1.0"
