import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markedgof.l2core import (EmptySampleError, MarkedSample, QuadratureMeasure, StepFunctionProcess,
                              WeightFunction, apply_weight, build_marked_process, evaluate_marked_sum,
                              l2_inner, l2_norm, lyapunov_diagnostic, sup_distance,
                              variance_process_diagnostic)

from oracles import double_sum_norm2, indicator_sum

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
tenths = st.integers(-1000, 1000).map(lambda i: i / 10)


def test_single_step():
    z = build_marked_process(MarkedSample([2.0], [3.0]))
    assert z(1.999) == 0.0
    assert z(2.0) == 3.0
    assert z(50.0) == 3.0


def test_tied_anchors_cancel():
    z = build_marked_process(MarkedSample([1.0, 1.0], [1.0, -1.0]))
    assert z.jump_points.tolist() == [1.0]
    np.testing.assert_array_equal(z(np.array([0.0, 1.0, 2.0])), 0.0)


def test_indicator_arithmetic():
    a, b, c = 0.7, -1.3, 2.9
    z = build_marked_process(MarkedSample([0.0, 1.0, -1.0], [a, b, c]))
    assert z(0.5) == pytest.approx(a + c)
    assert z(1.5) == pytest.approx(a + b + c)
    assert z(-2.0) == 0.0


def test_empty_sample():
    with pytest.raises(EmptySampleError, match="empty sample"):
        build_marked_process(MarkedSample([], []))


def test_sample_validation():
    with pytest.raises(ValueError):
        MarkedSample([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        MarkedSample([np.nan], [1.0])


def test_step_function_requires_increasing_jumps():
    with pytest.raises(ValueError):
        StepFunctionProcess([1.0, 1.0], [0.0, 1.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=30), st.randoms())
def test_permutation_invariance(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    z1 = build_marked_process(MarkedSample(*zip(*pairs)))
    z2 = build_marked_process(MarkedSample(*zip(*shuffled)))
    np.testing.assert_array_equal(z1.jump_points, z2.jump_points)
    np.testing.assert_allclose(z1.cumulative_values, z2.cumulative_values, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=20),
       st.lists(st.tuples(finite, finite), min_size=1, max_size=20),
       st.lists(finite, min_size=1, max_size=20))
def test_linearity_under_concatenation(p, q, xs):
    zp = build_marked_process(MarkedSample(*zip(*p)))
    zq = build_marked_process(MarkedSample(*zip(*q)))
    zpq = build_marked_process(MarkedSample(*zip(*(p + q))))
    xs = np.array(xs)
    np.testing.assert_allclose(zpq(xs), zp(xs) + zq(xs), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=25), st.lists(finite, min_size=1, max_size=10))
def test_step_function_matches_indicator_sum(pairs, xs):
    anchors, marks = zip(*pairs)
    z = build_marked_process(MarkedSample(anchors, marks))
    for x in xs:
        assert z(x) == pytest.approx(indicator_sum(anchors, marks, x), abs=1e-9)
    np.testing.assert_allclose(evaluate_marked_sum(anchors, marks, xs), z(np.array(xs)), atol=1e-9)


def test_evaluate_marked_sum_rows():
    anchors = np.array([[0.0, 1.0], [2.0, -1.0]])
    marks = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = evaluate_marked_sum(anchors, marks, [0.5, 1.5])
    np.testing.assert_array_equal(out, [[1.0, 3.0], [4.0, 4.0]])


def test_apply_weight():
    z = build_marked_process(MarkedSample([0.0, 1.0], [3.0, -1.0]))
    grid = np.array([-1.0, 0.0, 0.5, 1.0])
    np.testing.assert_array_equal(apply_weight(z, WeightFunction(lambda x: np.ones_like(x)), grid), z(grid))
    assert apply_weight(z, WeightFunction(lambda x: 2.0 + 0 * x), [0.0])[0] == 6.0
    zero = build_marked_process(MarkedSample([0.0], [0.0]))
    np.testing.assert_array_equal(apply_weight(zero, WeightFunction(np.exp), grid), 0.0)
    with pytest.raises(ValueError, match="invalid weight"):
        apply_weight(z, WeightFunction(lambda x: x), grid)
    with pytest.raises(ValueError):
        apply_weight(z, WeightFunction(np.exp), grid[::-1])


def test_l2_inner_constants_and_disjoint():
    nu = QuadratureMeasure([0.0, 1.0, 2.0], [0.5, 1.5, 0.5])
    one = np.ones(3)
    assert l2_inner(one, one, nu) == pytest.approx(2.5)
    f = np.array([1.0, 0.0, 1.0])
    g = np.array([0.0, 1.0, 0.0])
    assert l2_inner(f, g, nu) == 0.0
    with pytest.raises(ValueError):
        l2_inner(np.ones(2), np.ones(2), nu)


def test_measure_validation():
    with pytest.raises(ValueError):
        QuadratureMeasure([0.0], [-1.0])
    with pytest.raises(ValueError):
        QuadratureMeasure([0.0], [1.0], kind="other")
    nu = QuadratureMeasure.from_density(lambda x: np.ones_like(x), 0.0, 2.0, 40)
    assert nu.total_mass == pytest.approx(2.0)
    assert nu.normalized().total_mass == pytest.approx(1.0)


def test_three_point_norm_against_double_sum():
    anchors, marks = [0.3, -0.2, 0.9], [1.0, -2.0, 0.5]
    nu = QuadratureMeasure([0.0, 0.5], [0.7, 1.3])
    z = build_marked_process(MarkedSample(anchors, marks))
    got = l2_norm(nu.tabulate(z), nu) ** 2
    # Z(0) = -2, Z(0.5) = -1  ->  0.7 * 4 + 1.3 * 1
    assert got == pytest.approx(4.1, rel=1e-12)
    assert got == pytest.approx(double_sum_norm2(anchors, marks, nu.atoms, nu.weights), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(tenths, min_size=1, max_size=8), st.lists(tenths, min_size=1, max_size=8),
       st.lists(st.integers(0, 100).map(lambda i: i / 10), min_size=1, max_size=8))
def test_inner_product_symmetric_bilinear(f, g, w):
    k = min(len(f), len(g), len(w))
    f, g, w = np.array(f[:k]), np.array(g[:k]), np.array(w[:k])
    nu = QuadratureMeasure(np.arange(k, dtype=float), w)
    assert l2_inner(f, g, nu) == pytest.approx(l2_inner(g, f, nu), rel=1e-12, abs=1e-9)
    assert l2_inner(2 * f + g, g, nu) == pytest.approx(2 * l2_inner(f, g, nu) + l2_inner(g, g, nu),
                                                        rel=1e-9, abs=1e-6)
    vanishes = np.all((f == 0) | (w == 0))
    assert (l2_norm(f, nu) == 0) == vanishes


def test_lyapunov_diagnostic():
    for n in (10, 100, 10_000):
        s = MarkedSample(np.zeros(n), np.full(n, n**-0.5))
        assert lyapunov_diagnostic(s, 1.0) == pytest.approx(n**-0.5)
    assert lyapunov_diagnostic(MarkedSample([0, 1, 2], [0, 0, 0]), 1.0) == 0.0
    signs = np.where(np.arange(10_000) % 3 == 0, -1.0, 1.0) / 100.0
    assert lyapunov_diagnostic(MarkedSample(np.arange(10_000.0), signs), 1.0) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        lyapunov_diagnostic(MarkedSample([0], [1]), 0.0)


def test_variance_process_diagnostic():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    v = variance_process_diagnostic(x, np.full(200, 1 / 200))
    grid = np.linspace(-3, 3, 50)
    ecdf = np.array([(x <= g).mean() for g in grid])
    np.testing.assert_allclose(v(grid), ecdf, atol=1e-12)
    single = variance_process_diagnostic([0.0], [0.3])
    assert single(-1e-9) == 0.0 and single(0.0) == 0.3
    with pytest.raises(ValueError, match="negative"):
        variance_process_diagnostic([0.0, 1.0], [0.1, -0.1])


def test_sup_distance_sees_both_sides_of_a_jump():
    step = StepFunctionProcess([0.0], [1.0])
    assert sup_distance(step, lambda x: np.clip(np.asarray(x) + 0.5, 0, 1)) == pytest.approx(0.5)


def test_csv_roundtrip(tmp_path):
    z = build_marked_process(MarkedSample([0.1, -2.0, 3.3], [1 / 3, np.pi, -1e-17]))
    path = tmp_path / "z.csv"
    z.to_csv(path)
    assert path.read_text().splitlines()[0] == "x,value"
    back = StepFunctionProcess.from_csv(path)
    np.testing.assert_array_equal(back.jump_points, z.jump_points)
    np.testing.assert_array_equal(back.cumulative_values, z.cumulative_values)
