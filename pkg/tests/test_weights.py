import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmtlab.weights import TailSpec, WeightSpec, make_spec, num, split_potential, weight_eval


def test_weight_plain_gaussian_at_origin():
    assert weight_eval(make_spec(1), 0) == 1


def test_weight_single_singularity_direct_formula():
    spec = make_spec(1, [0.0], [0.5])
    assert abs(weight_eval(spec, 0.5) - mpmath.exp(-0.5) * 0.5) < mpmath.mpf(10) ** -30


def test_weight_vanishes_at_positive_exponent_singularity():
    assert weight_eval(make_spec(3, [0.2], [0.7]), 0.2) == 0


def test_weight_rejects_negative_exponent_singularity():
    with pytest.raises(ZeroDivisionError):
        weight_eval(make_spec(3, [0.2], [-0.3]), 0.2)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n=0),
        dict(n=2, singularities=((0.1, -0.5),)),
        dict(n=2, singularities=((1.0, 0.3),)),
        dict(n=2, singularities=((-0.2, 0.3), (0.4, 0.3))),
        dict(n=2, epsilon=0.0),
        dict(n=2, poly=(0, 0, 0, 1)),
    ],
)
def test_invalid_specs_raise(kwargs):
    with pytest.raises(ValueError):
        WeightSpec(**kwargs)


def test_tail_absent_means_zero_tail():
    _, tail = split_potential(make_spec(4, poly=(0, 0.3, 0.5)))
    assert tail(1.7) == 0 and tail(0.2) == 0


def test_tail_zero_inside_band():
    _, tail = split_potential(make_spec(4, poly=(0, 0, 1), epsilon=0.05, tail=True))
    assert tail(1.02) == 0


def test_tail_outside_band_matches_mollifier():
    spec = make_spec(4, poly=(0, 0, 1), epsilon=0.05, tail=True)
    _, tail = split_potential(spec)
    for x in (1.08, 1.2):
        expected = -(mpmath.mpf(x) ** 2) * (1 - TailSpec(0.05).mollifier(x))
        assert abs(tail(x) - expected) < mpmath.mpf(10) ** -30
    assert abs(tail(1.2) + mpmath.mpf(1.2) ** 2) < mpmath.mpf(10) ** -30


def test_mollifier_is_smooth_step_between_radii():
    ts = TailSpec(0.1)
    assert ts.mollifier(1.1) == 1 and ts.mollifier(1.2) == 0
    vals = [ts.mollifier(1.1 + 0.01 * k) for k in range(11)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("poly,d", [((), 1), ((2.0,), 1), ((0, 1), 1), ((0, 0, 1), 1), ((0, 0, 0, 1), 2), ((1, 0, 0, 0, 1), 3)])
def test_block_dimension(poly, d):
    assert make_spec(4, poly=poly, tail=True).block_dim == d


def test_integer_exponent_matches_polynomial():
    spec = make_spec(2, [0.3], [1.0])
    for x in (0.3, 0.31, -0.5):
        direct = mpmath.exp(-4 * num(x) ** 2) * (num(x) - num(0.3)) ** 2
        assert abs(weight_eval(spec, x) - direct) < mpmath.mpf(10) ** -30


def test_json_round_trip():
    spec = make_spec(6, [0.4, -0.1], [0.3, 0.2], poly=(0.1, 0.2, 0.5), epsilon=0.2, tail=True)
    assert WeightSpec.from_json(spec.to_json()) == spec
    assert spec.config_hash() == WeightSpec.from_json(spec.to_json()).config_hash()


finite = st.floats(-0.9, 0.9, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(
    x=st.floats(-1.5, 1.5),
    lam=finite,
    alpha=st.floats(-0.45, 2.0),
    c1=st.floats(-1, 1),
    c3=st.floats(-1, 1),
)
def test_mirror_symmetry(x, lam, alpha, c1, c3):
    spec = make_spec(3, [lam], [alpha], poly=(0, c1, 0.2, c3), tail=True)
    if x == lam or -x == -lam:
        return
    a = weight_eval(spec, x)
    b = weight_eval(spec.mirrored(), -x)
    assert abs(a - b) <= mpmath.mpf(10) ** -25 * (1 + abs(a))


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-3, 3), c=st.lists(st.floats(-2, 2), min_size=1, max_size=5), eps=st.floats(0.01, 0.5))
def test_tail_split_adds_up(x, c, eps):
    spec = make_spec(2, poly=tuple(c), epsilon=eps, tail=True)
    w0, tail = split_potential(spec)
    assert abs(w0(x) + tail(x) - spec.potential(x)) < mpmath.mpf(10) ** -25 * (1 + abs(w0(x)))
    if abs(x) < 1 + eps:
        assert tail(x) == 0


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-2, 2), n=st.integers(1, 20))
def test_weight_positive(x, n):
    spec = make_spec(n, [0.5, -0.5], [0.25, 0.1], poly=(0.1, 0.3))
    if x in (0.5, -0.5):
        return
    v = weight_eval(spec, x)
    assert v > 0
    assert math.isclose(float(mpmath.log(v)), -2 * n * x * x + 2 * (0.1 + 0.3 * x) + 0.5 * math.log(abs(x - 0.5)) + 0.2 * math.log(abs(x + 0.5)), rel_tol=1e-9, abs_tol=1e-9)
