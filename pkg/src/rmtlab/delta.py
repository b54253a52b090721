"""J, J^-1, the functions l_i and q_i, the matrix Delta_N and its low-rank form.

All inner products are <f, g> = int f g w with w = w(x; n) of ``spec``.

Direct route: Delta[i, j] = <J^-1 Pi J p_i, p_j> = sum_k <J p_i, p_k> <J^-1 p_k, p_j>,
with <J p_i, p_k> = (<p_i', p_k> - <p_i, p_k'>) / 2 computed exactly from the
recurrence and <J^-1 p_k, p_j> from the sign-kernel pairing.

Block route: for f in P_n,

    Delta0 f = f + Pi J^-1 ( sum_k alpha_k l_k f(lam_k) + 2n Pi_+(x f) - Pi_+(W0' f) ),

a rank-(d+m) perturbation of the identity, so det Delta0 = det(I + D M) with
D[r, c] = <J^-1 g_c, v_r>, g = (p_n, ..., p_{n+d-1}, l_1, ..., l_m) and
v = (p_{n-1}, ..., p_{n-d}, q_1, ..., q_m).  The remaining piece
Delta - Delta0 = -Pi J^-1 Pi_+(E' .) comes from the potential tail E.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import gmpy2
import mpmath
import numpy as np
from mpmath import mpf

from .mpx import Precision, as_bits, fr, mf, working
from .numerics import SignKernel, _hilbert_on_plan, plan_for
from .orthopoly import OrthoBasis, build_basis
from .skew import moment_ratio
from .weights import WeightSpec, num

__all__ = [
    "apply_J",
    "apply_Jinv",
    "apply_Jinv_inner",
    "derivative_matrix",
    "AuxFunctions",
    "aux_functions",
    "DeltaReport",
    "delta_core",
    "delta_matrix",
    "delta0_matrix",
    "block_dm",
    "three_route_report",
    "frobenius_tail",
    "RouteDisagreement",
]


class RouteDisagreement(AssertionError):
    """Two determinant routes disagree beyond tolerance."""


# ---------------------------------------------------------------------------
# J and J^-1
# ---------------------------------------------------------------------------

def apply_J(spec: WeightSpec, f, x, fprime=None):
    """(J f)(x) = f'(x) - 2n x f(x) + sum alpha_i f(x)/(x - lam_i) + W'(x) f(x)."""
    x = mpf(x)
    for lam in spec.lams:
        if x == num(lam):
            raise ZeroDivisionError(f"J evaluated at the pole {lam}")
    fx = f(x)
    d = fprime(x) if fprime is not None else mpmath.diff(f, x)
    out = d - 2 * spec.n * x * fx + spec.potential_deriv(x) * fx
    for lam, al in zip(spec.lams, spec.alphas):
        out += num(al) * fx / (x - num(lam))
    return out


def _poly_fn(coeffs):
    cs = [num(c) if isinstance(c, float) else mpf(c) for c in coeffs]

    def f(x):
        return mpmath.polyval(cs[::-1], x)

    def vec(xs):
        frc = [fr(c) for c in cs]
        out = np.empty((len(xs), 1), dtype=object)
        for q, x in enumerate(xs):
            acc = gmpy2.mpfr(0)
            for c in reversed(frc):
                acc = acc * x + c
            out[q, 0] = acc
        return out

    return f, vec


def apply_Jinv(spec: WeightSpec, f, x, prec: Precision | int | None = None, degree: int = 8):
    """(J^-1 f)(x) = w(x)^(-1/2) eps(f sqrt(w))(x) for a scalar callable f."""
    bits = as_bits(prec)
    plan = plan_for(spec, "sqrt", bits + 32, degree)
    with working(bits + 32):
        def vec(xs):
            return np.array([[fr(f(mf(v)))] for v in xs], dtype=object)

        ker = SignKernel(plan, vec)
        e = mf(ker.values([fr(mpf(x))])[0][0])
        val = e / plan.wf.value(mpf(x))
    with working(bits):
        return +val


def apply_Jinv_inner(spec: WeightSpec, f, g, prec: Precision | int | None = None):
    """int (J^-1 f) g w for polynomials f, g in ascending monomial coefficients."""
    bits = as_bits(prec)
    deg = len(f) + len(g)
    plan = plan_for(spec, "sqrt", bits + 32, deg + 2)
    _, fv = _poly_fn(f)
    _, gv = _poly_fn(g)
    with working(bits + 32):
        ker = SignKernel(plan, fv)
        val = mf(ker.pair(gv)[0, 0])
    with working(bits):
        return +val


# ---------------------------------------------------------------------------
# Coefficient-space algebra on the orthonormal basis
# ---------------------------------------------------------------------------

def derivative_matrix(basis: OrthoBasis, size: int) -> list:
    """Dm[i][k] = <p_i', p_k> for i, k < size, exactly from the recurrence."""
    if size > basis.K + 1:
        raise ValueError("basis too short")
    rows = [[mpf(0)] * size]
    if size == 1:
        return rows
    rows.append([mpf(0)] * size)
    rows[1][0] = basis.kappa[1] / basis.kappa[0]
    for j in range(1, size - 1):
        # b_j p_{j+1}' = p_j + (x - a_j) p_j' - b_{j-1} p_{j-1}'
        xc = basis.mul_x(rows[j][: j + 1])
        nxt = [mpf(0)] * size
        nxt[j] += 1
        for k, c in enumerate(xc):
            if k < size:
                nxt[k] += c
        for k in range(size):
            nxt[k] -= basis.a[j] * rows[j][k] + basis.b[j - 1] * rows[j - 1][k]
        rows.append([c / basis.b[j] for c in nxt])
    return rows


def _potential_poly_coeffs(spec: WeightSpec, basis: OrthoBasis, i: int) -> list:
    """Orthonormal coefficients of W0'(x) p_i(x)."""
    dcoef = [k * num(c) for k, c in enumerate(spec.poly)][1:]
    c = [mpf(0)] * (i + 1)
    c[i] = mpf(1)
    out = [mpf(0)] * (i + len(dcoef) + 1)
    cur = c
    for k, dc in enumerate(dcoef):
        if k > 0:
            cur = basis.mul_x(cur)
        for idx, v in enumerate(cur):
            out[idx] += dc * v
    return out


# ---------------------------------------------------------------------------
# Shared numerical core
# ---------------------------------------------------------------------------

@dataclass
class DeltaCore:
    """Quantities from which every Delta route is assembled."""

    spec: WeightSpec
    n: int
    d: int
    bits: int
    basis: OrthoBasis
    A1: list  # (n+d) x n : <J^-1 p_k, p_j>
    A4: list  # n x n : <J p_i, p_k>
    Q: list  # m x (n+1): H(p_k)(lam_l)
    plam: list  # m x (n+1): p_k(lam_l)
    R: list  # m x n: <J^-1 (x - lam_l)^-1, p_j>
    M1: list  # d x d: <W0' p_{n-i}, p_{n+j-1}>  (row j, column i), 1-based in the formulas
    cache: dict = field(default_factory=dict)


@lru_cache(maxsize=16)
def delta_core(spec: WeightSpec, n: int | None = None, prec: Precision | int | None = None) -> DeltaCore:
    n = spec.n if n is None else int(n)
    spec = spec.with_n(n)
    if n <= spec.m + spec.poly_degree:
        raise ValueError("need n > m + deg W0")
    bits = as_bits(prec)
    d = spec.block_dim
    guard = bits + 32
    K = n + d
    basis = build_basis(spec, K, guard)
    m = spec.m
    with working(guard):
        plan_s = plan_for(spec, "sqrt", guard, 2 * K + 2)
        plan_w = plan_for(spec, "w", guard, 2 * K + 2)

        def allp(xs):
            return basis.values_at(xs, K - 1)

        def lowp(xs):
            return basis.values_at(xs, n - 1)

        ker = SignKernel(plan_s, allp)
        S = ker.pair(lowp)
        A1 = [[mf(S[k, j]) for j in range(n)] for k in range(K)]
        Dm = derivative_matrix(basis, n)
        A4 = [[(Dm[i][k] - Dm[k][i]) / 2 for k in range(n)] for i in range(n)]
        Q, plam, R = [], [], []
        for l in range(m):
            lam = spec.lams[l]
            h = _hilbert_on_plan(plan_w, lambda xs: basis.values_at(xs, n), lam, l)
            Q.append([mf(v) for v in h])
            plam.append(basis.values(num(lam), n))
            T = ker.pv_pair(l)
            R.append([-mf(T[j]) for j in range(n)])
        M1 = [[mpf(0)] * d for _ in range(d)]
        if spec.has_potential:
            for i in range(1, d + 1):
                if n - i < 0:
                    continue
                c = _potential_poly_coeffs(spec, basis, n - i)
                for j in range(1, d + 1):
                    idx = n + j - 1
                    M1[j - 1][i - 1] = c[idx] if idx < len(c) else mpf(0)
    return DeltaCore(spec, n, d, guard, basis, A1, A4, Q, plam, R, M1)


# ---------------------------------------------------------------------------
# l_i, q_i and V_i
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuxFunctions:
    """l_i, q_i and the matrices V_i for every singularity."""

    core: DeltaCore
    V: tuple

    def ell(self, i: int, x):
        c = self.core
        n = c.n
        b = c.basis
        with working(c.bits):
            p = b.values(x, n)
            return b.b[n - 1] * (p[n] * c.Q[i][n - 1] - c.Q[i][n] * p[n - 1]) / (mpf(x) - num(c.spec.lams[i]))

    def ell_polypart(self, i: int, x):
        """l_i(x) + 1/(x - lam_i), which is the polynomial sum_{k<n} H(p_k)(lam_i) p_k(x)."""
        c = self.core
        with working(c.bits):
            p = c.basis.values(x, c.n)
            return mpmath.fsum(c.Q[i][k] * p[k] for k in range(c.n))

    def q(self, i: int, x):
        c = self.core
        with working(c.bits):
            p = c.basis.values(x, c.n)
            return mpmath.fsum(c.plam[i][k] * p[k] for k in range(c.n))

    def relation_residual(self, i: int, x) -> mpf:
        """Max deviation in (x - lam)(-l, 2 pi i q)^T = V (p_n / kappa_n, -2 pi i kappa_{n-1} p_{n-1})^T."""
        c = self.core
        n = c.n
        with working(c.bits):
            x = mpf(x)
            p = c.basis.values(x, n)
            lhs = [(x - num(c.spec.lams[i])) * -self.ell(i, x), (x - num(c.spec.lams[i])) * 2j * mpmath.pi * self.q(i, x)]
            vec = [p[n] / c.basis.kappa[n], -2j * mpmath.pi * c.basis.kappa[n - 1] * p[n - 1]]
            V = self.V[i]
            rhs = [V[0, 0] * vec[0] + V[0, 1] * vec[1], V[1, 0] * vec[0] + V[1, 1] * vec[1]]
            return max(abs(lhs[0] - rhs[0]), abs(lhs[1] - rhs[1]))


def aux_functions(spec: WeightSpec, n: int | None = None, prec: Precision | int | None = None) -> AuxFunctions:
    core = delta_core(spec, n, prec)
    Vs = []
    with working(core.bits):
        kn = core.basis.kappa[core.n]
        km = core.basis.kappa[core.n - 1]
        tpi = 2j * mpmath.pi
        for i in range(core.spec.m):
            Q = core.Q[i]
            p = core.plam[i]
            V = mpmath.matrix(2, 2)
            V[0, 0] = -km * Q[core.n - 1]
            V[0, 1] = -Q[core.n] / (kn * tpi)
            V[1, 0] = tpi * km * p[core.n - 1]
            V[1, 1] = p[core.n] / kn
            Vs.append(V)
    return AuxFunctions(core, tuple(Vs))


# ---------------------------------------------------------------------------
# Delta_N routes
# ---------------------------------------------------------------------------

def delta_matrix(spec: WeightSpec, n: int | None = None, prec: Precision | int | None = None, max_n: int = 16) -> tuple:
    """(Delta_N, det Delta_N) by the direct route, Delta = A4 A1."""
    n = spec.n if n is None else int(n)
    if n > max_n:
        raise ValueError(f"direct route is capped at n = {max_n}")
    core = delta_core(spec, n, prec)
    with working(core.bits):
        A4 = mpmath.matrix(core.A4)
        A1 = mpmath.matrix(core.A1[: core.n])
        D = A4 * A1
        det = mpmath.det(A4) * mpmath.det(A1)
    return D, det


def _jinv_g_on_p(core: DeltaCore) -> list:
    """rows c: <J^-1 g_c, p_j> for j < n, g = (p_n..p_{n+d-1}, l_1..l_m)."""
    n, d = core.n, core.d
    rows = [list(core.A1[n + j]) for j in range(d)]
    for l in range(core.spec.m):
        Ql = core.Q[l]
        row = []
        for j in range(n):
            s = mpmath.fsum(Ql[k] * core.A1[k][j] for k in range(n))
            row.append(-core.R[l][j] + s)
        rows.append(row)
    return rows


def _v_on_p(core: DeltaCore) -> list:
    """rows r: <v_r, p_i> for i < n, v = (p_{n-1}..p_{n-d}, q_1..q_m)."""
    n, d = core.n, core.d
    rows = []
    for i in range(1, d + 1):
        row = [mpf(0)] * n
        if n - i >= 0:
            row[n - i] = mpf(1)
        rows.append(row)
    for l in range(core.spec.m):
        rows.append(list(core.plam[l][:n]))
    return rows


def _m_matrix(core: DeltaCore) -> mpmath.matrix:
    d, m = core.d, core.spec.m
    M = mpmath.zeros(d + m, d + m)
    M[0, 0] = 2 * core.n * core.basis.b[core.n - 1]
    for j in range(d):
        for i in range(d):
            M[j, i] -= core.M1[j][i]
    for k in range(m):
        M[d + k, d + k] = num(core.spec.alphas[k])
    return M


@dataclass(frozen=True)
class DeltaReport:
    n: int
    det_direct: mpf | None
    det_block: mpf
    det_ratio: mpf | None
    d_matrix: mpmath.matrix
    m_matrix: mpmath.matrix
    frobenius_tail: mpf | None
    bits: int
    spec: WeightSpec

    def pairwise(self) -> dict:
        out = {}
        vals = {"direct": self.det_direct, "block": self.det_block, "ratio": self.det_ratio}
        keys = [k for k, v in vals.items() if v is not None]
        for i, a in enumerate(keys):
            for b in keys[i + 1:]:
                out[f"{a}-{b}"] = abs(vals[a] - vals[b])
        return out


def block_dm(spec: WeightSpec, n: int | None = None, prec: Precision | int | None = None) -> DeltaReport:
    """D, M and det(I + D M)."""
    core = delta_core(spec, n, prec)
    with working(core.bits):
        G = _jinv_g_on_p(core)  # c x n
        Vr = _v_on_p(core)  # r x n
        size = core.d + core.spec.m
        D = mpmath.matrix(size, size)
        for r in range(size):
            for c in range(size):
                D[r, c] = mpmath.fsum(G[c][j] * Vr[r][j] for j in range(core.n))
        M = _m_matrix(core)
        det = mpmath.det(mpmath.eye(size) + D * M)
    return DeltaReport(core.n, None, det, None, D, M, None, core.bits, core.spec)


def delta0_matrix(spec: WeightSpec, n: int | None = None, prec: Precision | int | None = None) -> mpmath.matrix:
    """The n x n matrix of Delta0 assembled from the low-rank factors."""
    core = delta_core(spec, n, prec)
    with working(core.bits):
        G = mpmath.matrix(_jinv_g_on_p(core))  # c x n
        Vr = mpmath.matrix(_v_on_p(core))  # r x n
        M = _m_matrix(core)
        # Delta0[i, j] = delta_ij + sum_{c, r} G[c, j] M[c, r] Vr[r, i]
        return mpmath.eye(core.n) + Vr.T * M.T * G


def frobenius_tail(spec: WeightSpec, n: int | None = None, prec: Precision | int | None = None) -> mpf:
    """||Delta - Delta0||_F."""
    D, _ = delta_matrix(spec, n, prec)
    D0 = delta0_matrix(spec, n, prec)
    core = delta_core(spec, n, prec)
    with working(core.bits):
        return mpmath.mnorm(D - D0, "f")


def three_route_report(
    spec: WeightSpec,
    n: int | None = None,
    prec: Precision | int | None = None,
    tol=None,
    check: bool = True,
    max_direct: int = 16,
) -> DeltaReport:
    """det Delta_N by the direct matrix, by det(I + D M) and by the Pfaffian ratio.

    The Pfaffian route yields E1 E4 / E2, whose square equals det Delta_N.
    Without a tail all three must agree; with a tail the block route omits
    Delta1 and only the direct and Pfaffian routes are compared.
    """
    n = spec.n if n is None else int(n)
    bits = as_bits(prec)
    core = delta_core(spec, n, bits)
    blk = block_dm(spec, n, bits)
    direct = delta_matrix(spec, n, bits, max_n=max_direct)[1] if n <= max_direct else None
    ratio = moment_ratio(spec, n, bits)
    with working(core.bits):
        det_ratio = ratio**2
    tail = frobenius_tail(spec, n, bits) if (spec.has_tail and n <= max_direct) else None
    rep = DeltaReport(n, direct, blk.det_block, det_ratio, blk.d_matrix, blk.m_matrix, tail, bits, core.spec)
    if check:
        tol = mpf(10) ** -10 if tol is None else mpf(tol)
        diffs = rep.pairwise()
        if spec.has_tail:
            diffs = {k: v for k, v in diffs.items() if "block" not in k}
        bad = {k: v for k, v in diffs.items() if v > tol}
        if bad:
            raise RouteDisagreement(f"routes disagree: { {k: mpmath.nstr(v, 5) for k, v in bad.items()} }")
    return rep
