import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmtlab.asymptotics import (
    ChartError,
    ParametrixFrame,
    Szego,
    airy_matching_residual,
    airy_pair,
    bessel_j,
    bessel_matching_residual,
    chebyshev_coeffs,
    ell_constant,
    kappa_sq_literal,
    kappa_sq_prediction,
    observed,
    predict,
    predict_v,
    s_map,
    szego,
    v_relative_error,
)
from rmtlab.delta import aux_functions
from rmtlab.orthopoly import build_basis
from rmtlab.weights import make_spec, num

D = mpmath.mpf
pi = mpmath.pi
SPEC = make_spec(24, [0.2], [0.3], poly=(0, 0.1))


def rel(pred, obs):
    return mpmath.sqrt(sum(abs(p - o) ** 2 for p, o in zip(pred, obs)) / sum(abs(o) ** 2 for o in obs))


def test_airy_at_origin():
    ai, aip = airy_pair(0)
    assert abs(ai - 3 ** (-D(2) / 3) / mpmath.gamma(D(2) / 3)) < D(10) ** -40
    assert abs(aip + 3 ** (-D(1) / 3) / mpmath.gamma(D(1) / 3)) < D(10) ** -40


@settings(max_examples=20, deadline=None)
@given(x=st.floats(0.01, 40))
def test_bessel_half_order(x):
    x = D(x)
    assert abs(bessel_j(D(1) / 2, x) - mpmath.sqrt(2 / (pi * x)) * mpmath.sin(x)) < D(10) ** -35


def test_s_map_values():
    assert abs(s_map(0) - pi / 2) < D(10) ** -40
    assert s_map(1) == 0
    assert abs(s_map(-1) - pi) < D(10) ** -40
    assert abs(s_map(2) - (2 * mpmath.sqrt(3) - mpmath.acosh(2))) < D(10) ** -40


def test_ell_constant():
    assert abs(ell_constant() + 1 + 2 * mpmath.log(2)) < D(10) ** -40


@settings(max_examples=25, deadline=None)
@given(c=st.lists(st.floats(-3, 3), min_size=1, max_size=6), x=st.floats(-1, 1))
def test_chebyshev_coefficients(c, x):
    cc = chebyshev_coeffs(c)
    x = D(x)
    lhs = sum(ck * mpmath.cos(k * mpmath.acos(x)) for k, ck in enumerate(cc))
    rhs = sum(num(v) * x**j for j, v in enumerate(c))
    assert abs(lhs - rhs) < D(10) ** -30 * (1 + sum(abs(num(v)) for v in c))


def test_szego_constant_without_potential():
    _, dinf = szego(make_spec(4, [0.2, -0.5], [0.3, 0.45]))
    assert abs(dinf - D(2) ** -D("0.75")) < D(10) ** -40


@pytest.mark.parametrize("x", ["0.3", "-0.85"])
def test_szego_principal_value(x):
    spec = make_spec(4, [0.2], [0.3], poly=(0, 0.5, 0.3))
    sz = Szego(spec)
    x = D(x)
    W = spec.poly_value
    ref = mpmath.quad(lambda t: (W(mpmath.cos(t)) - W(x)) / (x - mpmath.cos(t)), [0, mpmath.acos(x), pi])
    assert abs(sz.pv_integral(x) - ref) < D(10) ** -30


@pytest.fixture(scope="module")
def basis24():
    return build_basis(SPEC, 26, 128)


@pytest.mark.parametrize("region,x", [("bulk", "0.5"), ("bulk", "-0.3"), ("edge+1", "1.0"), ("edge-1", "-0.97"), ("sing1", "0.22")])
def test_prediction_close_at_moderate_size(basis24, region, x):
    pred = predict(SPEC, 24, 0, region, D(x))
    assert rel(pred, observed(basis24, 24, 0, D(x))) < 5 / D(24)


def test_predictions_are_real_up_to_phase(basis24):
    p = predict(SPEC, 24, 0, "bulk", D("0.1"))
    assert abs(p[0].imag) < D(10) ** -30 and abs(p[1].real) < D(10) ** -30


def test_chart_errors():
    with pytest.raises(ChartError):
        predict(SPEC, 24, 0, "bulk", 1.0)
    with pytest.raises(ChartError):
        predict(SPEC, 24, 0, "sing1", -0.6)


def test_region_classification():
    fr = ParametrixFrame(SPEC, 24, 0)
    assert fr.region_of(D("0.5")) == "bulk"
    assert fr.region_of(D("0.99")) == "edge+1"
    assert fr.region_of(D("0.21")) == "sing1"


def test_kappa_prediction_forms(basis24):
    kap = basis24.kappa
    for k in (0, 1, 2):
        pred = kappa_sq_prediction(SPEC, 24, k)
        assert abs(kap[24 - k] ** 2 / pred - 1) < 5 / D(24)
    assert abs(kap[23] ** 2 / kappa_sq_literal(SPEC, 24, 1) - 1) < 5 / D(24)
    assert abs(kappa_sq_literal(SPEC, 24, 1) - kappa_sq_prediction(SPEC, 24, 1)) < D(10) ** -30 * kap[23] ** 2


@pytest.mark.parametrize("x", ["0.25", "0.15", "0.2"])
def test_bessel_matching_exact(x):
    assert bessel_matching_residual(SPEC, 24, 1, D(x), 0) < D(10) ** -20


@pytest.mark.parametrize("side,x", [(1, "0.95"), (1, "0.92"), (-1, "-0.94")])
def test_airy_matching_exact(side, x):
    assert airy_matching_residual(SPEC, 24, side, D(x), 0) < D(10) ** -20


def test_v_prediction_error_small():
    spec = make_spec(16, [0.2], [0.3])
    V = aux_functions(spec, 16, 192).V[0]
    pred = predict_v(spec, 16, 1)
    assert abs(mpmath.det(pred["V"]) - 1) < D(10) ** -20
    assert v_relative_error(pred, V) < 5 / D(16)
