import json

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmtlab.numerics import integrate_weighted
from rmtlab.orthopoly import OrthoBasis, build_basis, cd_kernel, eval_pair, project
from rmtlab.weights import make_spec, weight_eval

D = mpmath.mpf
BITS = 256
GENERIC = make_spec(5, [0.4, -0.2], [0.3, -0.25], poly=(0.1, 0.3, -0.2))


@pytest.fixture(scope="module")
def hermite():
    return build_basis(make_spec(3), 12, BITS)


@pytest.fixture(scope="module")
def generic():
    return build_basis(GENERIC, 12, BITS)


def test_hermite_recurrence(hermite):
    for j in range(12):
        assert abs(hermite.a[j]) < D(10) ** -40
        assert abs(hermite.b[j] - mpmath.sqrt(D(j + 1) / 12)) < D(10) ** -40


def test_even_spec_has_zero_diagonal():
    basis = build_basis(make_spec(4, [0.5, -0.5], [0.3, 0.3], poly=(0.2, 0, 0.5)), 8, 128)
    assert all(abs(a) < D(10) ** -30 for a in basis.a)


def test_gram_matrix_is_identity(generic):
    assert generic.residual < D(10) ** -20
    pairs = [(0, 0), (0, 12), (3, 10), (5, 7), (11, 12), (12, 12)]
    for i, j in pairs:
        g = integrate_weighted(lambda x: (lambda v: v[i] * v[j])(generic.values(x, 12)), GENERIC, BITS, degree=24)
        assert abs(g - (1 if i == j else 0)) < D(10) ** -20


def test_structure_identities(generic):
    for j in range(12):
        assert abs(generic.b[j] - generic.kappa[j] / generic.kappa[j + 1]) < D(10) ** -40
        assert abs(generic.a[j] - (generic.beta_sub[j] - generic.beta_sub[j + 1])) < D(10) ** -40
        assert generic.kappa[j] > 0


def test_p0_is_normalizing_constant(generic):
    mass = integrate_weighted(lambda x: 1, GENERIC, BITS)
    assert abs(generic.values(0.3, 0)[0] - mass ** D(-0.5)) < D(10) ** -40


def test_hermite_p1(hermite):
    mass = integrate_weighted(lambda x: 1, make_spec(3), BITS)
    x = D("0.37")
    # x p_0 = b_0 p_1 and b_0 = 1/sqrt(4N)
    assert abs(eval_pair(hermite, 1, 0, x)[0] - 2 * mpmath.sqrt(3) * x * mass ** D(-0.5)) < D(10) ** -40


def test_decay_outside_support():
    x = D("1.3")
    vals = []
    for n in (8, 16):
        spec = make_spec(n, [0.2], [0.3])
        basis = build_basis(spec, n, 128)
        vals.append(abs(eval_pair(basis, n, 0, x)[0]) * mpmath.sqrt(weight_eval(spec, x)))
    assert vals[1] < vals[0] ** 1.5


def test_hankel_route_agrees(generic):
    # independent route: Cholesky of the Hankel moment matrix
    with mpmath.workprec(BITS):
        mom = [integrate_weighted(lambda x, k=k: x**k, GENERIC, BITS, degree=20) for k in range(17)]
        H = mpmath.matrix(9, 9)
        for i in range(9):
            for j in range(9):
                H[i, j] = mom[i + j]
        L = mpmath.cholesky(H)
        C = mpmath.inverse(L)  # row k: monomial coefficients of p_k
        for k in range(9):
            ref = [C[k, i] for i in range(k + 1)]
            got = generic.monomial_coeffs(k)
            assert max(abs(a - b) for a, b in zip(ref, got)) < D(10) ** -25 * max(abs(c) for c in ref)
        x = D("0.61")
        vals = generic.values(x, 8)
        for k in range(9):
            assert abs(vals[k] - mpmath.polyval(list(reversed(generic.monomial_coeffs(k))), x)) < D(10) ** -40


def test_cd_kernel_matches_sum(generic):
    x, y = D("0.3"), D("-0.55")
    direct = sum(p * q for p, q in zip(generic.values(x, 5), generic.values(y, 5)))
    assert abs(cd_kernel(generic, 6, x, y) - direct) < D(10) ** -20
    diag = sum(p * p for p in generic.values(x, 5))
    assert abs(cd_kernel(generic, 6, x, x) - diag) < D(10) ** -20


def test_cd_kernel_reproduces(generic):
    x = D("0.12")
    for k in (0, 3):
        val = integrate_weighted(lambda y: cd_kernel(generic, 6, x, y) * generic.values(y, k)[k], GENERIC, 128, degree=14)
        assert abs(val - generic.values(x, k)[k]) < D(10) ** -25


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-2, 2), n=st.integers(1, 12))
def test_cd_kernel_diagonal_positive(generic, x, n):
    assert cd_kernel(generic, n, x, x) > 0


def test_project_examples(generic):
    e = lambda k: [D(0)] * k + [D(1)]
    low, high = project(generic, 5, e(2))
    assert low == e(2) and all(c == 0 for c in high)
    low, high = project(generic, 5, e(7))
    assert all(c == 0 for c in low)
    xp4 = generic.mul_x(e(4))
    low, high = project(generic, 5, xp4)
    assert abs(high[5] - generic.b[4]) < D(10) ** -40 and all(c == 0 for c in high[:5])


@settings(max_examples=25, deadline=None)
@given(coeffs=st.lists(st.floats(-5, 5), min_size=1, max_size=12), n=st.integers(0, 12))
def test_project_splits_exactly(generic, coeffs, n):
    f = [D(c) for c in coeffs]
    low, high = project(generic, n, f)
    assert [a + b for a, b in zip(low, high)] == f
    assert all(c == 0 for c in low[n:]) and all(c == 0 for c in high[:n])


def test_project_degree_overflow(generic):
    with pytest.raises(ValueError):
        project(generic, 5, [1] * 14)


def test_index_errors(generic):
    with pytest.raises(IndexError):
        eval_pair(generic, 20, 0, 0.1)
    with pytest.raises(IndexError):
        cd_kernel(generic, 0, 0.1, 0.2)


def test_from_monomial_round_trip(generic):
    coeffs = [D(1), D(-2), D("0.5"), D(3)]
    oc = generic.from_monomial(coeffs)
    x = D("0.77")
    vals = generic.values(x, len(oc) - 1)
    assert abs(sum(c * v for c, v in zip(oc, vals)) - mpmath.polyval(list(reversed(coeffs)), x)) < D(10) ** -40


def test_json_round_trip(generic):
    again = OrthoBasis.from_dict(json.loads(generic.to_json()))
    assert again.K == generic.K
    assert all(abs(a - b) < D(10) ** -70 for a, b in zip(again.b, generic.b))


def test_beta_sub_bounded():
    vals = []
    for n in (8, 16, 24):
        basis = build_basis(GENERIC.with_n(n), n, 192)
        vals.append(abs(basis.beta_sub[n - 1]))
    assert max(vals) < 5
