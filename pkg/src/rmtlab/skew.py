"""Moment matrices, Pfaffians and normalized characteristic-polynomial moments.

Size conventions: a matrix ensemble of dimension n lives on the weight
w(x; n) of ``spec.with_n(n)``.  For one WeightSpec with ``spec.n = n``:

* GUE of size n has joint density |Delta|^2 prod w(x_i), so phi_2 = det M2;
* GOE of size n has |Delta| prod sqrt(w(x_i)), so phi_1 = 2^(n/2) |pf M1|;
* GSE of size n/2 has |Delta|^4 prod w(x_i), so phi_4 = 2^(n/2) |pf M4|.

Every route here works in the monomial (or Chebyshev) basis with generic
quadrature and never touches the orthogonal-polynomial machinery, so it can
serve as an independent check of the Delta_N computation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import gmpy2
import mpmath
import numpy as np
from mpmath import mpf

from .mpx import Precision, as_bits, decimal_str, mf, working
from .numerics import SignKernel, plan_for
from .weights import WeightSpec

__all__ = [
    "SkewMomentSet",
    "z_const",
    "normalization_identity",
    "pfaffian",
    "moment_matrices",
    "phi_moment",
    "moment_ratio",
    "report_rows",
    "rows_to_csv",
]


def z_const(n: int, beta: int, prec: Precision | int | None = None) -> mpf:
    """Z_{n,beta} = int |Delta|^beta prod exp(-n beta x_i^2) dx / n!."""
    if beta not in (1, 2, 4):
        raise ValueError("beta must be 1, 2 or 4")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    bits = as_bits(prec)
    with working(bits + 16):
        n = mpf(n)
        b = mpf(beta)
        e = b * n * (n - 1) / 4
        logz = (
            -(e + n / 2) * mpmath.log(2 * n)
            - mpmath.loggamma(n + 1)
            - (n / 2 + e) * mpmath.log(b)
            + (n / 2) * mpmath.log(2 * mpmath.pi)
        )
        for j in range(1, int(n) + 1):
            logz += mpmath.loggamma(1 + j * b / 2) - mpmath.loggamma(1 + b / 2)
        val = mpmath.exp(logz)
    with working(bits):
        return +val


def normalization_identity(N: int, prec: Precision | int | None = None) -> dict:
    """Both sides of Z_{2N,1} Z_{N,4} = 2^{2N} Z_{2N,2} and their relative gap."""
    bits = as_bits(prec)
    with working(bits + 16):
        lhs = z_const(2 * N, 1, bits + 16) * z_const(N, 4, bits + 16)
        rhs = mpf(2) ** (2 * N) * z_const(2 * N, 2, bits + 16)
        rel = abs(lhs / rhs - 1)
    with working(bits):
        return {"N": N, "lhs": +lhs, "rhs": +rhs, "rel_err": +rel}


def _as_matrix(A) -> list:
    if isinstance(A, mpmath.matrix):
        return [[A[i, j] for j in range(A.cols)] for i in range(A.rows)]
    return [[mpf(v) if not isinstance(v, gmpy2.mpfr) else mf(v) for v in row] for row in np.asarray(A, dtype=object)]


def pfaffian(A, tol=None) -> mpf:
    """Pfaffian by skew-symmetric elimination with pivoting."""
    M = _as_matrix(A)
    n = len(M)
    if any(len(r) != n for r in M):
        raise ValueError("matrix must be square")
    if n % 2:
        raise ValueError("Pfaffian needs an even dimension")
    scale = max((abs(v) for r in M for v in r), default=mpf(0))
    if tol is None:
        tol = mpf(2) ** (-(mpmath.mp.prec // 2))
    for i in range(n):
        for j in range(i, n):
            if abs(M[i][j] + M[j][i]) > tol * (scale + 1):
                raise ValueError("matrix is not antisymmetric")
    pf = mpf(1)
    for k in range(0, n, 2):
        # bring the largest entry of row k into position k+1
        piv = max(range(k + 1, n), key=lambda j: abs(M[k][j]))
        if piv != k + 1:
            M[k + 1], M[piv] = M[piv], M[k + 1]
            for r in M:
                r[k + 1], r[piv] = r[piv], r[k + 1]
            pf = -pf
        a = M[k][k + 1]
        if a == 0:
            return mpf(0)
        pf *= a
        # Schur complement of the 2x2 block [[0, a], [-a, 0]]
        rk = M[k]
        rk1 = M[k + 1]
        for i in range(k + 2, n):
            ui = M[i][k]
            vi = M[i][k + 1]
            if ui == 0 and vi == 0:
                continue
            ri = M[i]
            for j in range(k + 2, n):
                ri[j] += (ui * rk1[j] - vi * rk[j]) / a
    return pf


@dataclass(frozen=True)
class SkewMomentSet:
    """Moment matrices of size n for ``spec`` (with spec.n = n)."""

    spec: WeightSpec
    n: int
    basis: str
    m2: mpmath.matrix
    m4: mpmath.matrix
    m1: mpmath.matrix
    border: list
    det_m2: mpf
    pf_m4: mpf | None
    pf_m1: mpf
    basis_scale: mpf
    bits: int


def _basis_values(xs, n: int, basis: str) -> np.ndarray:
    """[len(xs), n] array of basis polynomials (monomials or Chebyshev T_k)."""
    out = np.empty((len(xs), n), dtype=object)
    for q, x in enumerate(xs):
        p0 = gmpy2.mpfr(1)
        out[q, 0] = p0
        if n == 1:
            continue
        p1 = x
        out[q, 1] = p1
        for k in range(2, n):
            if basis == "monomial":
                p0, p1 = p1, p1 * x
            else:
                p0, p1 = p1, 2 * x * p1 - p0
            out[q, k] = p1
    return out


def _basis_derivs(xs, n: int, basis: str) -> np.ndarray:
    out = np.empty((len(xs), n), dtype=object)
    for q, x in enumerate(xs):
        if basis == "monomial":
            pw = gmpy2.mpfr(1)
            out[q, 0] = gmpy2.mpfr(0)
            for k in range(1, n):
                out[q, k] = k * pw
                pw *= x
        else:
            # T_k' = k U_{k-1}
            u0, u1 = gmpy2.mpfr(1), 2 * x
            out[q, 0] = gmpy2.mpfr(0)
            for k in range(1, n):
                out[q, k] = k * u0
                u0, u1 = u1, 2 * x * u1 - u0
    return out


def _leading(n: int, basis: str) -> mpf:
    """Product of leading coefficients of basis polynomials 0..n-1."""
    if basis == "monomial":
        return mpf(1)
    return mpf(2) ** sum(k - 1 for k in range(1, n))


def moment_matrices(
    spec: WeightSpec, n: int | None = None, prec: Precision | int | None = None, basis: str = "monomial"
) -> SkewMomentSet:
    """M2 (Hankel), M4 (antisymmetric derivative pairing) and M1 (sign kernel) of size n.

    The determinant and Pfaffians are reported for the monomial basis whatever
    basis is used internally.
    """
    if basis not in ("monomial", "chebyshev"):
        raise ValueError("basis must be 'monomial' or 'chebyshev'")
    n = spec.n if n is None else int(n)
    spec = spec.with_n(n)
    bits = as_bits(prec)
    guard = bits + 32
    plan_w = plan_for(spec, "w", guard, 2 * n + 2)
    plan_s = plan_for(spec, "sqrt", guard, 2 * n + 2)
    with working(guard):
        xs, ws = plan_w.all_nodes("e")
        V = _basis_values(xs, n, basis)
        D = _basis_derivs(xs, n, basis)
        WV = V * ws[:, None]
        m2 = V.T.dot(WV)
        cross = D.T.dot(WV)  # int f_i' f_j w
        m4 = (cross - cross.T) / 2

        def fv(x):
            return _basis_values(x, n, basis)

        ker = SignKernel(plan_s, fv)
        S = ker.pair(fv)  # S[k, j] = int f_j sqrt(w) eps(f_k sqrt(w))
        m1 = S.T
        border = list(ker.total)
        M2 = mpmath.matrix([[mf(v) for v in r] for r in m2])
        M4 = mpmath.matrix([[mf(v) for v in r] for r in m4])
        M1 = mpmath.matrix([[mf(v) for v in r] for r in m1])
        border = [mf(v) for v in border]
        lead = _leading(n, basis)
        det_m2 = mpmath.det(M2) / lead**2
        if n % 2 == 0:
            pf_m4 = pfaffian(M4) / lead
            pf_m1 = pfaffian(M1) / lead
        else:
            pf_m4 = None
            big = mpmath.zeros(n + 1, n + 1)
            for i in range(n):
                for j in range(n):
                    big[i, j] = M1[i, j]
                big[i, n] = border[i]
                big[n, i] = -border[i]
            pf_m1 = pfaffian(big) / lead
    with working(bits):
        return SkewMomentSet(spec, n, basis, M2, M4, M1, border, +det_m2, None if pf_m4 is None else +pf_m4, +pf_m1, lead, bits)


def _phi_from_set(beta: int, ms: SkewMomentSet) -> mpf:
    n = ms.n
    if beta == 2:
        return ms.det_m2
    if beta == 4:
        if n % 2:
            raise ValueError("the symplectic moment needs an even matrix dimension")
        return (-1) ** (n // 2) * mpf(2) ** (n // 2) * ms.pf_m4
    if n % 2 == 0:
        return (-1) ** (n // 2) * mpf(2) ** (n // 2) * ms.pf_m1
    return (-1) ** ((n - 1) // 2) * mpf(2) ** ((n - 1) // 2) * ms.pf_m1


def phi_moment(beta: int, spec: WeightSpec, prec: Precision | int | None = None, basis: str = "monomial") -> tuple:
    """(Phi, Phi / Z) for the ensemble attached to ``spec`` (see module docstring).

    beta=1: GOE of size spec.n, expectation of e^{Tr W} prod |det(A - lam_i)|^{alpha_i};
    beta=2: GUE of size spec.n, expectation of e^{Tr 2W} prod |det(A - lam_i)|^{2 alpha_i};
    beta=4: GSE of size spec.n/2, same integrand as beta=2.
    """
    if beta not in (1, 2, 4):
        raise ValueError("beta must be 1, 2 or 4")
    bits = as_bits(prec)
    ms = moment_matrices(spec, prec=bits, basis=basis)
    with working(bits + 32):
        phi = _phi_from_set(beta, ms)
        size = spec.n // 2 if beta == 4 else spec.n
        z = z_const(size, beta, bits + 32)
        norm = phi / z
    with working(bits):
        return +phi, +norm


def moment_ratio(spec: WeightSpec, n: int | None = None, prec: Precision | int | None = None, basis: str = "monomial") -> mpf:
    """E_1 E_4 / E_2 with GOE and GUE of size n and GSE of size n/2.

    With 2N = n this is the left side of the moment identity divided by its
    right side: exponents alpha_i for GOE and 2 alpha_i otherwise, potential W
    for GOE and 2W otherwise.
    """
    n = spec.n if n is None else int(n)
    if n % 2:
        raise ValueError("the moment ratio needs an even dimension")
    spec = spec.with_n(n)
    bits = as_bits(prec)
    ms = moment_matrices(spec, prec=bits, basis=basis)
    with working(bits + 32):
        e1 = _phi_from_set(1, ms) / z_const(n, 1, bits + 32)
        e2 = _phi_from_set(2, ms) / z_const(n, 2, bits + 32)
        e4 = _phi_from_set(4, ms) / z_const(n // 2, 4, bits + 32)
        r = e1 * e4 / e2
    with working(bits):
        return +r


def report_rows(spec: WeightSpec, prec: Precision | int | None = None) -> list:
    """CSV-ready rows {n, beta, config_hash, phi, z, normalized, ratio, abs_err_vs_one}."""
    bits = as_bits(prec)
    ms = moment_matrices(spec, prec=bits)
    n = spec.n
    rows = []
    with working(bits + 32):
        norms = {}
        for beta in (1, 2, 4):
            if beta == 4 and n % 2:
                continue
            phi = _phi_from_set(beta, ms)
            z = z_const(n // 2 if beta == 4 else n, beta, bits + 32)
            norms[beta] = phi / z
            rows.append({"n": n, "beta": beta, "config_hash": spec.config_hash(), "phi": phi, "z": z, "normalized": phi / z})
        ratio = norms[1] * norms[4] / norms[2] if 4 in norms else None
        digits = max(17, int(bits * 0.30103))
        for r in rows:
            r["ratio"] = "" if ratio is None else decimal_str(ratio, digits)
            r["abs_err_vs_one"] = "" if ratio is None else decimal_str(abs(ratio - 1), 20)
            for k in ("phi", "z", "normalized"):
                r[k] = decimal_str(r[k], digits)
    return rows


def rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()
