import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from alloc_lab import (
    INADMISSIBLE,
    ParameterVector,
    TransformSpec,
    WeightMatrix,
    allocate_all,
    ep_fractions,
    gp_fractions,
    loads,
)
from alloc_lab.errors import AllInadmissible, ConfigError, ShapeMismatch, TransformError

from oracles import exact_proportional

P22 = WeightMatrix.from_rows([[1, 2], [2, 1]])

weights = st.integers(2, 5).flatmap(
    lambda m: st.integers(1, 6).flatmap(
        lambda n: arrays(np.float64, (m, n), elements=st.floats(1.0, 10.0))))
logws = lambda m: arrays(np.float64, m, elements=st.floats(-5.0, 5.0))


# --- types -------------------------------------------------------------------


def test_inadmissible_tokens_accepted():
    P = WeightMatrix.from_rows([[1, INADMISSIBLE, "inf"], [2, 3, float("inf")], [1, 1, 4]])
    assert P.admissible.tolist() == [[True, False, False], [True, True, False], [True, True, True]]
    assert np.isinf(P.values[0, 1])


def test_column_without_admissible_agent_rejected():
    with pytest.raises(AllInadmissible) as exc:
        WeightMatrix.from_rows([[1, "inf"], [2, "inf"]])
    assert exc.value.column == 1


@pytest.mark.parametrize("rows", [[[0.0, 1.0]], [[-1.0, 1.0]], [[float("nan"), 1.0]]])
def test_nonpositive_weights_rejected(rows):
    with pytest.raises(ConfigError):
        WeightMatrix.from_rows(rows)


def test_ragged_rows_rejected():
    with pytest.raises(ShapeMismatch):
        WeightMatrix.from_rows([[1, 2], [1]])


def test_weight_matrix_is_immutable():
    with pytest.raises(ValueError):
        P22.values[0, 0] = 5.0


def test_delta_substitution_for_maximisation():
    P = WeightMatrix.from_rows([[1, "inf"], [4, 2]])
    Q = P.with_delta()
    assert Q.all_admissible
    assert Q.values[0, 1] == pytest.approx(1e-12)


def test_parameter_vector_requires_finite_entries():
    with pytest.raises(ConfigError):
        ParameterVector(np.array([0.0, np.inf]))


def test_parameter_equivalence_is_up_to_a_constant():
    a = ParameterVector(np.array([0.0, 1.0, -2.0]))
    assert a.equivalent(a.shifted(3.7))
    assert not a.equivalent(ParameterVector(np.array([0.0, 1.0, -1.0])))
    assert a.shifted(5.0).normalized().logw[0] == 0.0


def test_exponent_zero_is_constant_transform():
    np.testing.assert_array_equal(TransformSpec.exponent(0).log_f(np.array([1.0, 7.0])), [0.0, 0.0])


def test_table_transform_rejects_nonpositive_values_and_misses():
    with pytest.raises(ConfigError):
        TransformSpec.from_table({1.0: 0.0})
    t = TransformSpec.from_table({1.0: 2.0, 2.0: 3.0})
    with pytest.raises(TransformError):
        allocate_all(WeightMatrix.from_rows([[1.0, 5.0], [2.0, 1.0]]), t)


# --- fractions -----------------------------------------------------------------


def test_single_agent_takes_everything():
    np.testing.assert_array_equal(gp_fractions([7.5], None, ParameterVector(np.array([3.0]))), [1.0])


def test_symmetric_split():
    np.testing.assert_allclose(gp_fractions([1, 1]), [0.5, 0.5], rtol=0, atol=1e-15)


def test_identity_is_proportional():
    np.testing.assert_allclose(gp_fractions([1, 2]), [1 / 3, 2 / 3], rtol=1e-15)


def test_exponent_zero_ignores_weights():
    np.testing.assert_allclose(ep_fractions([1, 2], 0.0), [0.5, 0.5], rtol=1e-15)


def test_exponent_one_matches_identity():
    np.testing.assert_allclose(ep_fractions([1, 2], 1.0), [1 / 3, 2 / 3], rtol=1e-15)


def test_large_exponent_matches_exact_rational():
    x = ep_fractions([1, 2], 100.0)
    exact = exact_proportional([1, 2], [1, 1], 100)
    assert exact[0] == Fraction(1, 1 + 2**100)
    assert x[0] < 1e-25
    assert x[0] == pytest.approx(float(exact[0]), rel=1e-12)
    assert x[1] == 1.0


def test_parameters_enter_multiplicatively():
    x = gp_fractions([3, 5, 2], None, ParameterVector(np.log([1.0, 2.0, 4.0])))
    exact = exact_proportional([3, 5, 2], [1, 2, 4], 1)
    np.testing.assert_allclose(x, [float(v) for v in exact], rtol=1e-14)


def test_inadmissible_agent_gets_nothing():
    x = gp_fractions([1.0, INADMISSIBLE, 3.0])
    assert x[1] == 0.0
    np.testing.assert_allclose(x, [0.25, 0.0, 0.75], rtol=1e-15)


def test_sole_admissible_agent_gets_whole_item():
    np.testing.assert_array_equal(gp_fractions(["inf", 4.0, "inf"], TransformSpec.exponent(-3)), [0.0, 1.0, 0.0])


def test_all_inadmissible_column_raises():
    with pytest.raises(AllInadmissible):
        gp_fractions([INADMISSIBLE, "inf"])


@pytest.mark.parametrize("alpha", [-500.0, 500.0])
def test_extreme_exponents_stay_finite(alpha):
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = ep_fractions(rng.uniform(1, 10, 5), alpha)
        assert np.all(np.isfinite(x))
        assert abs(x.sum() - 1.0) <= 1e-12


# --- loads and allocate_all ------------------------------------------------------


def test_loads_examples():
    np.testing.assert_array_equal(loads(P22, np.eye(2)), [1.0, 1.0])
    np.testing.assert_array_equal(loads(P22, np.full((2, 2), 0.5)), [1.5, 1.5])
    np.testing.assert_array_equal(loads([[3.0]], [[1.0]]), [3.0])


def test_loads_ignore_inadmissible_pairs():
    P = WeightMatrix.from_rows([[1, "inf"], [2, 3]])
    np.testing.assert_array_equal(loads(P, [[1.0, 0.0], [0.0, 1.0]]), [1.0, 3.0])


def test_loads_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        loads(P22, np.ones((2, 3)))


def test_allocate_two_by_two():
    X, ell = allocate_all(P22)
    np.testing.assert_allclose(X, [[1 / 3, 2 / 3], [2 / 3, 1 / 3]], rtol=1e-15)
    np.testing.assert_allclose(ell, [5 / 3, 5 / 3], rtol=1e-15)
    X0, ell0 = allocate_all(P22, TransformSpec.exponent(0))
    np.testing.assert_allclose(X0, 0.5, rtol=1e-15)
    np.testing.assert_allclose(ell0, [1.5, 1.5], rtol=1e-15)


def test_allocate_reports_bad_column():
    t = TransformSpec.from_table({1.0: 1.0, 2.0: 2.0})
    with pytest.raises(TransformError, match="column 1"):
        allocate_all(WeightMatrix.from_rows([[1.0, 9.0], [2.0, 1.0]]), t)


# --- properties ------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(P=weights, data=st.data(), alpha=st.floats(-20, 20))
def test_columns_sum_to_one(P, data, alpha):
    logw = data.draw(logws(P.shape[0]))
    X, ell = allocate_all(WeightMatrix.from_array(P), TransformSpec.exponent(alpha), ParameterVector(logw))
    assert np.max(np.abs(X.sum(axis=0) - 1.0)) <= 1e-12
    np.testing.assert_allclose(ell, (X * P).sum(axis=1), rtol=1e-10, atol=0)


@settings(max_examples=60, deadline=None)
@given(P=weights, data=st.data(), c=st.floats(-30, 30), alpha=st.floats(-5, 5))
def test_scale_invariance(P, data, c, alpha):
    logw = data.draw(logws(P.shape[0]))
    W = WeightMatrix.from_array(P)
    tf = TransformSpec.exponent(alpha)
    X1, _ = allocate_all(W, tf, ParameterVector(logw))
    X2, _ = allocate_all(W, tf, ParameterVector(logw + c))
    np.testing.assert_allclose(X1, X2, rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(P=weights, data=st.data())
def test_strict_monotonicity(P, data):
    m = P.shape[0]
    logw = data.draw(logws(m))
    k = data.draw(st.integers(0, m - 1))
    down = data.draw(st.floats(0.05, 3.0))
    ups = data.draw(arrays(np.float64, m, elements=st.floats(0.0, 3.0)))
    new = logw + ups
    new[k] = logw[k] - down
    W = WeightMatrix.from_array(P)
    X1, _ = allocate_all(W, None, ParameterVector(logw))
    X2, _ = allocate_all(W, None, ParameterVector(new))
    assert np.all(X2[k] < X1[k])


@settings(max_examples=60, deadline=None)
@given(P=weights, data=st.data())
def test_ratio_identity(P, data):
    m = P.shape[0]
    a = data.draw(logws(m))
    b = data.draw(logws(m))
    W = WeightMatrix.from_array(P)
    Y, _ = allocate_all(W, None, ParameterVector(a))
    Z, _ = allocate_all(W, None, ParameterVector(b))
    tau = np.exp(b - a)[:, None]
    np.testing.assert_allclose(Z, tau * Y / (tau * Y).sum(axis=0), rtol=0, atol=1e-10)


def test_values_are_shareable_across_threads():
    from concurrent.futures import ThreadPoolExecutor

    rng = np.random.default_rng(1)
    P = WeightMatrix.from_array(rng.uniform(1, 10, (4, 30)))
    params = [ParameterVector(rng.normal(size=4)) for _ in range(16)]
    with ThreadPoolExecutor(4) as pool:
        par = list(pool.map(lambda w: allocate_all(P, TransformSpec.exponent(2.0), w)[1], params))
    seq = [allocate_all(P, TransformSpec.exponent(2.0), w)[1] for w in params]
    for a, b in zip(par, seq):
        np.testing.assert_array_equal(a, b)
    assert not math.isnan(sum(v.sum() for v in seq))
