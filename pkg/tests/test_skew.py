import csv
import io

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmtlab.skew import (
    moment_matrices,
    moment_ratio,
    normalization_identity,
    pfaffian,
    phi_moment,
    report_rows,
    rows_to_csv,
    z_const,
)
from rmtlab.weights import make_spec

D = mpmath.mpf
pi = mpmath.pi


def test_z_small_cases():
    assert abs(z_const(1, 1, 128) - mpmath.sqrt(pi)) < D(10) ** -35
    assert abs(z_const(1, 2, 128) - mpmath.sqrt(pi / 2)) < D(10) ** -35
    assert abs(z_const(1, 4, 128) - mpmath.sqrt(pi) / 2) < D(10) ** -35
    # rotate to u = (x - y)/sqrt 2, v = (x + y)/sqrt 2; the 1/2 is the ordering factor
    assert abs(z_const(2, 1, 128) - mpmath.sqrt(2) / 2 * mpmath.sqrt(pi / 2) / 2) < D(10) ** -35
    assert abs(z_const(2, 2, 128) - pi / 32) < D(10) ** -35
    assert abs(z_const(2, 1, 128) * z_const(1, 4, 128) - 4 * z_const(2, 2, 128)) < D(10) ** -35


def test_z_three_point_quadrature():
    # n = 3, beta = 2: int |Delta|^2 exp(-6 |x|^2) / 3! by Andreief's Hankel determinant
    m = [mpmath.quad(lambda x, k=k: x**k * mpmath.exp(-6 * x * x), [-mpmath.inf, mpmath.inf]) for k in range(5)]
    hank = mpmath.det(mpmath.matrix([[m[i + j] for j in range(3)] for i in range(3)]))
    assert abs(z_const(3, 2, 128) - hank) < D(10) ** -35 * hank


@pytest.mark.parametrize("N", range(1, 7))
def test_normalization_identity(N):
    assert normalization_identity(N, 128)["rel_err"] < D(10) ** -30


@pytest.mark.parametrize("bad", [(0, 1), (2, 3)])
def test_z_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        z_const(*bad)


def test_pfaffian_small():
    a = D("1.7")
    assert pfaffian(mpmath.matrix([[0, a], [-a, 0]])) == a
    v = [D(k) / 7 + 1 for k in range(6)]
    A = mpmath.matrix(4, 4)
    idx = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    for (i, j), x in zip(idx, v):
        A[i, j], A[j, i] = x, -x
    ref = A[0, 1] * A[2, 3] - A[0, 2] * A[1, 3] + A[0, 3] * A[1, 2]
    assert abs(pfaffian(A) - ref) < D(10) ** -40


def _antisym(vals, n):
    A = mpmath.zeros(n, n)
    it = iter(vals)
    for i in range(n):
        for j in range(i + 1, n):
            x = D(next(it))
            A[i, j], A[j, i] = x, -x
    return A


def test_pfaffian_random_six():
    rng = mpmath.rand
    A = _antisym([rng() - D("0.5") for _ in range(15)], 6)
    assert abs(pfaffian(A) ** 2 - mpmath.det(A)) < D(10) ** -25


def test_pfaffian_rejects_odd_and_asymmetric():
    with pytest.raises(ValueError):
        pfaffian(mpmath.zeros(3, 3))
    B = _antisym([1, 2, 3, 4, 5, 6], 4)
    B[0, 1] += D("0.1")
    with pytest.raises(ValueError):
        pfaffian(B)


entries = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=30, deadline=None)
@given(vals=st.lists(entries, min_size=6, max_size=6), bvals=st.lists(entries, min_size=16, max_size=16))
def test_pfaffian_congruence(vals, bvals):
    A = _antisym(vals, 4)
    B = mpmath.matrix(4, 4)
    for k, x in enumerate(bvals):
        B[k // 4, k % 4] = D(x)
    lhs = pfaffian(B * A * B.T)
    rhs = mpmath.det(B) * pfaffian(A)
    assert abs(lhs - rhs) <= D(10) ** -30 * (1 + abs(rhs)) * (1 + mpmath.mnorm(B, 1)) ** 4


@pytest.fixture(scope="module")
def generic_set():
    return moment_matrices(make_spec(4, [0.2, -0.3], [0.3, 0.45], poly=(0.1, 0.2)), prec=128)


def test_moment_matrix_symmetries(generic_set):
    ms = generic_set
    for i in range(4):
        assert ms.m4[i, i] == 0 or abs(ms.m4[i, i]) < D(10) ** -35
        for j in range(4):
            assert abs(ms.m2[i, j] - ms.m2[j, i]) < D(10) ** -35
            assert abs(ms.m4[i, j] + ms.m4[j, i]) < D(10) ** -35
            assert abs(ms.m1[i, j] + ms.m1[j, i]) < D(10) ** -35
    assert abs(ms.pf_m1**2 - mpmath.det(ms.m1)) < D(10) ** -30 * (1 + abs(ms.pf_m1) ** 2)


def test_hankel_corner_is_gaussian_mass():
    ms = moment_matrices(make_spec(1), 2, 128)
    # spec of size 2: w = exp(-4 x^2)
    assert abs(ms.m2[0, 0] - mpmath.sqrt(pi) / 2) < D(10) ** -35


def test_sign_kernel_entry_closed_form():
    # eps(y e^{-2y^2})(x) = -e^{-2x^2}/4, so the entry is -int e^{-4x^2}/4
    ms = moment_matrices(make_spec(2), 2, 128)
    assert abs(ms.m1[0, 1] + mpmath.sqrt(pi) / 8) < D(10) ** -35


def test_sign_kernel_entry_brute_force():
    spec = make_spec(2, [0.5, -0.5], [0.3, 0.3])
    ms = moment_matrices(spec, 2, 128)
    sw = lambda t: mpmath.exp(-2 * t * t) * abs(t * t - D("0.25")) ** D("0.3")
    with mpmath.workdps(15):
        inner = lambda x: mpmath.quad(lambda y: y * sw(y) * mpmath.sign(x - y) / 2, sorted({-mpmath.inf, D(-0.5), D(0.5), x, mpmath.inf}))
        ref = mpmath.quad(lambda x: sw(x) * inner(x), [-mpmath.inf, -0.5, 0, 0.5, mpmath.inf])
    assert abs(ms.m1[0, 1] - ref) < D(10) ** -10


def test_trivial_moments_equal_z():
    spec = make_spec(4)
    for beta in (1, 2, 4):
        phi, norm = phi_moment(beta, spec, 128)
        assert abs(norm - 1) < D(10) ** -25


def test_wick_value():
    _, norm = phi_moment(2, make_spec(2, [0.0], [1.0]), 128)
    assert abs(norm - D(3) / 64) < D(10) ** -30


def test_goe_pair_against_double_integral():
    spec = make_spec(2, [0.2], [0.4])
    _, norm = phi_moment(1, spec, 128)
    lam = D("0.2")
    f = lambda x, y: abs(x - y) * mpmath.exp(-2 * (x * x + y * y)) * abs((x - lam) * (y - lam)) ** D("0.4")
    with mpmath.workdps(15):
        inner = lambda x: mpmath.quad(lambda y: f(x, y), sorted({-mpmath.inf, lam, x, mpmath.inf}))
        raw = mpmath.quad(inner, [-mpmath.inf, lam, mpmath.inf]) / 2
    assert abs(norm - raw / z_const(2, 1, 128)) < D(10) ** -10


def test_ratio_trivial_is_one():
    for n in (2, 4):
        assert abs(moment_ratio(make_spec(n), n, 128) - 1) < D(10) ** -20


def test_ratio_equals_pfaffian_combination(generic_set):
    ms = generic_set
    r = moment_ratio(ms.spec, 4, 128)
    assert abs(r - ms.pf_m1 * ms.pf_m4 / ms.det_m2) < D(10) ** -30


def test_ratio_is_mirror_invariant():
    spec = make_spec(4, [0.3], [0.4], poly=(0, 0.2))
    a = moment_ratio(spec, 4, 128)
    b = moment_ratio(spec.mirrored(), 4, 128)
    assert abs(a - b) < D(10) ** -30


def test_chebyshev_basis_agrees():
    spec = make_spec(6, [0.1], [0.35])
    a = moment_ratio(spec, 6, 160)
    b = moment_ratio(spec, 6, 160, basis="chebyshev")
    assert abs(a - b) < D(10) ** -30


def test_ratio_requires_even_size():
    with pytest.raises(ValueError):
        moment_ratio(make_spec(3), 3, 128)


def test_report_rows_csv():
    rows = report_rows(make_spec(2, [0.1], [0.3]), 128)
    text = rows_to_csv(rows)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert set(parsed[0]) == {"n", "beta", "config_hash", "phi", "z", "normalized", "ratio", "abs_err_vs_one"}
    assert {r["beta"] for r in parsed} == {"1", "2", "4"}
