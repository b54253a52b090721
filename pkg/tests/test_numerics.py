import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmtlab.mpx import Precision, working
from rmtlab.numerics import (
    WeightFunction,
    build_plan,
    gauss_jacobi,
    integrate_weighted,
    iterated_double_sign,
    local_sign_term,
    pv_double_sign,
    pv_hilbert,
    sign_transform,
)
from rmtlab.weights import make_spec

BITS = 128
TINY = mpmath.mpf(2) ** -100


def _quad(f, pts):
    with mpmath.workprec(BITS + 20):
        return mpmath.quad(f, pts)


def test_precision_floor():
    with pytest.raises(ValueError):
        Precision(32)


def test_gaussian_mass():
    val = integrate_weighted(lambda x: 1, make_spec(1), BITS)
    assert abs(val - mpmath.sqrt(mpmath.pi / 2)) < TINY


def test_odd_integrand_on_even_spec_vanishes():
    spec = make_spec(3, [0.4, -0.4], [0.3, 0.3], poly=(0, 0, 0.2))
    assert abs(integrate_weighted(lambda x: x**3 - x, spec, BITS)) < TINY


def test_absolute_value_singularity():
    val = integrate_weighted(lambda x: 1, make_spec(1, [0.0], [0.5]), BITS)
    assert abs(val - mpmath.mpf(1) / 2) < TINY


D = mpmath.mpf


@pytest.mark.parametrize("lam,alpha", [("0.2", "0.3"), ("-0.5", "-0.35"), ("0.7", "1.6")])
def test_integrate_matches_independent_quadrature(lam, alpha):
    spec = make_spec(4, [float(lam)], [float(alpha)], poly=(0.1, -0.3, 0.4))
    f = lambda x: 1 + x + 3 * x**4
    got = integrate_weighted(f, spec, BITS)
    with mpmath.workprec(300):
        core = lambda x: f(x) * mpmath.exp(-8 * x * x + 2 * (D("0.1") - D("0.3") * x + D("0.4") * x * x))
        e = 2 * D(alpha)
        ref = sum(mpmath.quad(lambda r: core(D(lam) + s * r) * r**e, [0, 0.5, 1, 1.5, 2, 3, 4]) for s in (1, -1))
    assert abs(got - ref) < D(10) ** -25 * abs(ref)


def test_hilbert_even_weight_at_origin():
    assert abs(pv_hilbert(lambda x: 1, make_spec(2, [0.3, -0.3], [0.2, 0.2]), 0, BITS)) < TINY


def test_hilbert_of_x_at_origin():
    val = pv_hilbert(lambda x: x, make_spec(1), 0, BITS)
    assert abs(val - mpmath.sqrt(mpmath.pi / 2)) < TINY


def test_hilbert_at_singularity_matches_fold():
    # p.v. int g(x) |x - t|^0.7 / (x - t) dx folded onto r > 0, then r = u^(1/0.7)
    spec = make_spec(3, [0.25], [0.35], poly=(0, 0.2))
    t, e = D("0.25"), D("0.7")
    g = lambda x: (1 - 2 * x) * mpmath.exp(-6 * x * x + D("0.4") * x)
    ref = _quad(lambda u: (g(t + u ** (1 / e)) - g(t - u ** (1 / e))) / e, [0, 0.25, 0.5, 1, 2, 3])
    got = pv_hilbert(lambda x: 1 - 2 * x, spec, 0.25, BITS)
    assert abs(got - ref) < D(10) ** -30


def test_hilbert_at_regular_point_matches_fold():
    spec = make_spec(3, [0.25], [0.35])
    t = D("-0.4")
    F = lambda x: (1 + x * x) * mpmath.exp(-6 * x * x) * abs(x - D("0.25")) ** D("0.7")
    ref = _quad(lambda r: (F(t + r) - F(t - r)) / r, [0, D("0.65"), 1, 2, 3, mpmath.inf])
    got = pv_hilbert(lambda x: 1 + x * x, spec, t, BITS)
    assert abs(got - ref) < D(10) ** -25


def _plan(spec):
    return build_plan(WeightFunction.sqrt_weight(spec), BITS, 8)


@pytest.mark.parametrize("x", ["-0.7", "0", "0.2", "0.55"])
def test_sign_transform_matches_direct_integrals(x):
    spec = make_spec(2, [0.2], [0.3])
    x = D(x)
    g = lambda y: 1 + y
    got = sign_transform(g, _plan(spec), x)
    h = lambda y: g(y) * mpmath.exp(-2 * y * y) * abs(y - D("0.2")) ** D("0.3")
    cuts = sorted({D(-1), D("0.2"), D(1), x})
    left = _quad(h, [-mpmath.inf] + [c for c in cuts if c <= x])
    right = _quad(h, [c for c in cuts if c >= x] + [mpmath.inf])
    assert abs(got - (left - right) / 2) < D(10) ** -25


@settings(max_examples=10, deadline=None)
@given(c1=st.floats(-2, 2), c2=st.floats(-2, 2), x=st.floats(-1.2, 1.2))
def test_sign_transform_linear(c1, c2, x):
    plan = _plan(make_spec(2, [0.2], [0.3]))
    f1 = lambda y: y * y
    f2 = lambda y: 1 - y
    both = sign_transform(lambda y: c1 * f1(y) + c2 * f2(y), plan, x)
    sep = c1 * sign_transform(f1, plan, x) + c2 * sign_transform(f2, plan, x)
    assert abs(both - sep) < mpmath.mpf(10) ** -25


def test_sign_transform_limits():
    spec = make_spec(2)
    plan = _plan(spec)
    mass = integrate_weighted(lambda y: 1, spec.with_n(1), BITS)  # sqrt weight of N=2 is w(N=1)
    assert abs(sign_transform(lambda y: 1, plan, 9) - mass / 2) < TINY
    assert abs(sign_transform(lambda y: 1, plan, -9) + mass / 2) < TINY
    assert abs(sign_transform(lambda y: 1, plan, 0)) < TINY


@pytest.mark.parametrize("alpha,x", [("0.6", "0.33"), ("0", "0.28"), ("-0.4", "0.22"), ("0.6", "0.1")])
def test_local_sign_term_matches_quadrature(alpha, x):
    alpha, x = D(alpha), D(x)
    lam, delta = D("0.3"), D("0.1")
    r = abs(x - lam)
    # fold u -> -u: sign(x-lam-u) - sign(x-lam+u) is -2 for u > r on either side
    ref = -2 * _quad(lambda u: u ** (alpha - 1), [r, delta]) if r < delta else 0
    assert abs(local_sign_term(alpha, lam, delta, x) - ref) < D(10) ** -30


def test_gauss_jacobi_mass():
    a, b = mpmath.mpf(0.3), mpmath.mpf(-0.45)
    nodes, weights = gauss_jacobi(20, a, b, BITS)
    with working(BITS):
        total = sum(mpmath.mpf(w) for w in weights)
        ref = 2 ** (a + b + 1) * mpmath.beta(a + 1, b + 1)
        assert abs(total - ref) < TINY
        moment = sum(mpmath.mpf(w) * mpmath.mpf(t) ** 7 for t, w in zip(nodes, weights))
        ref7 = _quad(lambda t: (1 - t) ** a * (1 + t) ** b * t**7, [-1, 0, 1])
        assert abs(moment - ref7) < mpmath.mpf(10) ** -25


def test_double_sign_closed_forms():
    # int int sign(x-y)/y = -4 and int int sign(x-y)/x = 4 over the unit square
    for h, ref in ((lambda x, y: x, -4), (lambda x, y: y, 4)):
        assert abs(pv_double_sign(h, 0, 0, dps=15) - ref) < 1e-10
        assert abs(iterated_double_sign(h, 0, 0, "xy", dps=15) - ref) < 1e-10
        assert abs(iterated_double_sign(h, 0, 0, "yx", dps=15) - ref) < 1e-10


def test_double_sign_exponent_guard():
    with pytest.raises(ValueError):
        pv_double_sign(lambda x, y: x, -0.6, -0.6)
