import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_norm, brute_span
from rsgrowth._validation import DomainError, ShapeError
from rsgrowth.grid import GridFunction, GridSpec, WeightFunction
from rsgrowth.norms import (
    DiscreteSignedMeasure,
    centering_constants,
    omega_norm,
    omega_span,
    span_values,
    weighted_variation,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def remark_function(nodes):
    x = nodes[:, 0]
    out = np.zeros_like(x)
    far = np.abs(x) >= 1
    out[far] = np.abs(x[far] - 1.0 / x[far])
    return out


def grid_values(n_min=2, n_max=60):
    return st.integers(n_min, n_max).flatmap(
        lambda n: st.tuples(arrays(float, n, elements=finite),
                            arrays(float, n, elements=st.floats(0, 50))))


# ---------------------------------------------------------------- examples


def test_norm_examples(grid1d, abs_weight):
    zero = GridFunction.constant(grid1d)
    assert omega_norm(zero, abs_weight) == 0.0
    assert omega_norm(GridFunction.constant(grid1d, 3.0), WeightFunction.zero()) == 3.0
    f = GridFunction.from_callable(grid1d, lambda x: np.abs(x[:, 0]))
    assert omega_norm(f, abs_weight) == pytest.approx(5.0 / 6.0, abs=1e-15)
    assert omega_norm(f, abs_weight) == brute_norm(f.values, abs_weight.on(grid1d).values)


def test_span_examples(grid1d, abs_weight):
    assert omega_span(GridFunction.constant(grid1d, 7.0), abs_weight) == 0.0
    vals = np.full(grid1d.size, 2.0)
    vals[3], vals[10] = 3.0, 1.0
    f = GridFunction(grid1d, vals)
    assert omega_span(f, WeightFunction.zero()) == 1.0


def test_remark_example_small_grid():
    spec = GridSpec([-1000.0], [1000.0], [20001])
    f = GridFunction.from_callable(spec, remark_function)
    omega = WeightFunction.affine_norm(0.0, 1.0)
    span = omega_span(f, omega)
    assert 0.99 <= span <= 1.0
    res = centering_constants(f, omega, span=1.0)
    assert res.c1 == pytest.approx(-1.0, abs=1e-12)
    assert res.c2 == pytest.approx(1.0, abs=1e-6)


def test_centering_examples(grid1d):
    res = centering_constants(GridFunction.constant(grid1d, 2.5), WeightFunction.zero())
    assert res.span == 0.0
    assert res.c1 == res.c2 == res.c0 == -2.5
    spec = GridSpec([-1.0], [1.0], [201])
    res = centering_constants(GridFunction.from_callable(spec, lambda x: x[:, 0]), WeightFunction.zero())
    assert res.span == pytest.approx(1.0, abs=1e-15)
    assert res.c0 == pytest.approx(0.0, abs=1e-12)


def test_variation_examples():
    a, b = np.array([[0.5]]), np.array([[1.5]])
    omega = WeightFunction(lambda x: 2.0 * x[:, 0], name="2x")
    q = DiscreteSignedMeasure(np.vstack([a, b]), [0.3, 0.7])
    assert weighted_variation(q - q, omega, 1.0) == 0.0
    delta = DiscreteSignedMeasure(a, [1.0]) - DiscreteSignedMeasure(b, [1.0])
    assert weighted_variation(delta, omega, 0.0) == 2.0
    # omega(a) = 1, omega(b) = 3
    assert weighted_variation(delta, omega, 0.5) == pytest.approx(4.0, abs=1e-15)


def test_mismatched_grids_raise(grid1d):
    other = GridSpec([-5.0], [5.0], [11])
    f = GridFunction.constant(grid1d, 1.0)
    with pytest.raises(ShapeError):
        omega_span(f, WeightFunction.zero().on(other))
    with pytest.raises(ShapeError):
        omega_norm(f, GridFunction.constant(other))


def test_variation_outside_weight_domain():
    omega = WeightFunction.affine_norm(1.0, 1.0, bounds=([-1.0], [1.0]))
    m = DiscreteSignedMeasure([[2.0]], [1.0])
    with pytest.raises(DomainError):
        weighted_variation(m, omega, 1.0)
    with pytest.raises(DomainError):
        weighted_variation(m, WeightFunction.zero(), -1.0)


def test_bad_beta(grid1d, abs_weight):
    with pytest.raises(DomainError):
        omega_span(GridFunction.constant(grid1d), abs_weight, 0.0)


def test_two_dimensional_grid(grid2d, rng, abs_weight):
    f = GridFunction(grid2d, rng.normal(size=grid2d.size))
    bw = abs_weight.on(grid2d).values
    assert omega_span(f, abs_weight) == brute_span(f.values, bw)


# -------------------------------------------------------------- properties


@settings(max_examples=200, deadline=None)
@given(grid_values(), st.floats(0.01, 10))
def test_span_matches_brute_force(data, beta):
    values, w = data
    assert span_values(values, beta * w) == brute_span(values, beta * w)


@settings(max_examples=100, deadline=None)
@given(grid_values(), finite, st.floats(0.01, 100))
def test_span_shift_and_scale(data, c, a):
    values, w = data
    s = span_values(values, w)
    assert span_values(values + c, w) == pytest.approx(s, rel=1e-9, abs=1e-9)
    assert span_values(a * values, w) == pytest.approx(a * s, rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(grid_values(), st.floats(0.01, 0.99))
def test_beta_below_one_increases_span(data, beta):
    values, w = data
    assert span_values(values, w) <= span_values(values, beta * w) + 1e-12


@settings(max_examples=100, deadline=None)
@given(grid_values(), arrays(float, 20, elements=finite))
def test_centering_is_optimal_shift(data, shifts):
    values, w = data
    spec = GridSpec([0.0], [1.0], [values.size])
    f = GridFunction(spec, values)
    om = GridFunction(spec, w)
    res = centering_constants(f, om)
    scale = max(1.0, np.abs(values).max())
    for c in (res.c1, res.c2, res.c0):
        assert omega_norm(f + c, om) == pytest.approx(res.span, abs=1e-9 * scale)
    for c in shifts:
        assert omega_norm(f + c, om) >= res.span - 1e-12 * scale


@settings(max_examples=100, deadline=None)
@given(grid_values(), st.floats(1e-3, 10))
def test_shift_outside_interval_is_worse(data, gap):
    values, w = data
    spec = GridSpec([0.0], [1.0], [values.size])
    f, om = GridFunction(spec, values), GridFunction(spec, w)
    res = centering_constants(f, om)
    assert omega_norm(f + (res.c1 - gap), om) > res.span
    assert omega_norm(f + (res.c2 + gap), om) > res.span


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 40).flatmap(lambda n: st.tuples(*[arrays(float, n, elements=finite)] * 3,
                                                      arrays(float, n, elements=st.floats(0, 50)))))
def test_span_triangle(data):
    f, g, h, w = data
    tol = 1e-9 * max(1.0, np.abs(f).max(), np.abs(g).max(), np.abs(h).max())
    assert span_values(f - h, w) <= span_values(f - g, w) + span_values(g - h, w) + tol


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**32 - 1), st.floats(0, 5))
def test_variation_triangle(n, seed, beta):
    r = np.random.default_rng(seed)
    omega = WeightFunction.affine_norm(0.5, 1.0)
    pts = r.integers(-3, 4, size=(3 * n, 1)).astype(float)
    p, q, s = (DiscreteSignedMeasure(pts[i * n:(i + 1) * n], r.normal(size=n)) for i in range(3))
    lhs = weighted_variation(p - s, omega, beta)
    rhs = weighted_variation(p - q, omega, beta) + weighted_variation(q - s, omega, beta)
    assert lhs <= rhs + 1e-12 * max(1.0, rhs)


def test_span_bounded_by_norm(rng, grid1d, abs_weight):
    for _ in range(50):
        f = GridFunction(grid1d, rng.normal(size=grid1d.size) * 10)
        assert omega_span(f, abs_weight) <= omega_norm(f, abs_weight) + 1e-15


def test_merge_combines_coincident_atoms():
    m = DiscreteSignedMeasure([[1.0], [0.0], [1.0]], [0.25, 0.5, 0.25]).merged()
    assert m.points.ravel().tolist() == [0.0, 1.0]
    assert m.masses.tolist() == [0.5, 0.5]
