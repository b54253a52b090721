"""Leading-order asymptotics of p_{N-k} sqrt(w): bulk, Airy edges, Bessel points.

Notation: N = spec.n, E(t) = exp(i t sigma) with sigma = diag(1, -1), and
z^sigma = diag(z, 1/z).  Predictions are for the vector

    ( sqrt(pi) p_{N-k}(x) sqrt(w(x)),  -i sqrt(pi) p_{N-k-1}(x) sqrt(w(x)) ).

Singularity phases use positions: the bulk factor at x is
exp(-i pi sum_{lam_i > x} alpha_i sigma).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import mpmath
from mpmath import mpf

from .mpx import Precision, as_bits, working
from .orthopoly import OrthoBasis
from .weights import WeightSpec, num, weight_eval

__all__ = [
    "ell_constant",
    "airy_pair",
    "bessel_j",
    "s_map",
    "scalar_maps",
    "chebyshev_coeffs",
    "Szego",
    "szego",
    "ParametrixFrame",
    "frames",
    "predict",
    "observed",
    "predict_v",
    "v_relative_error",
    "kappa_sq_prediction",
    "kappa_sq_literal",
    "bessel_matching_residual",
    "airy_matching_residual",
    "ChartError",
]


class ChartError(ValueError):
    """The requested point lies outside the chart of the requested map."""


def ell_constant():
    """l = -1 - 2 log 2 at the current working precision."""
    return -1 - 2 * mpmath.log(2)


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------

def airy_pair(x) -> tuple:
    """(Ai(x), Ai'(x))."""
    x = mpf(x)
    return mpmath.airyai(x), mpmath.airyai(x, derivative=1)


def bessel_j(nu, x):
    """J_nu(x) for nu > -1 and x >= 0."""
    nu = num(nu)
    x = mpf(x)
    if not nu > -1:
        raise ValueError("bessel_j needs nu > -1")
    if x < 0:
        raise ValueError("bessel_j needs x >= 0")
    if x == 0:
        return mpf(1) if nu == 0 else mpf(0)
    return mpmath.besselj(nu, x)


def _sqrt_pi_z_j(nu, z):
    """sqrt(pi z) J_nu(z) for z >= 0, continuous at z = 0 when nu > -1/2."""
    if z == 0:
        if nu + mpf(1) / 2 > 0:
            return mpf(0)
        if nu + mpf(1) / 2 == 0:
            return mpmath.sqrt(mpmath.pi) / (mpmath.power(2, nu) * mpmath.gamma(nu + 1))
        return mpmath.inf
    return mpmath.sqrt(mpmath.pi * z) * mpmath.besselj(nu, z)


def bessel_vector(alpha, z) -> list:
    """(sign(z) sqrt(pi|z|) J_{alpha+1/2}(|z|), sqrt(pi|z|) J_{alpha-1/2}(|z|))."""
    alpha = num(alpha)
    z = mpf(z)
    a = abs(z)
    sg = 1 if z >= 0 else -1
    half = mpf(1) / 2
    return [sg * _sqrt_pi_z_j(alpha + half, a), _sqrt_pi_z_j(alpha - half, a)]


def bessel_plane_vector(alpha, z) -> list:
    """Large-argument form (sign(z) sqrt2 sin(|z| - alpha pi/2), sqrt2 cos(|z| - alpha pi/2))."""
    alpha = num(alpha)
    z = mpf(z)
    sg = 1 if z >= 0 else -1
    t = abs(z) - alpha * mpmath.pi / 2
    r2 = mpmath.sqrt(2)
    return [sg * r2 * mpmath.sin(t), r2 * mpmath.cos(t)]


# ---------------------------------------------------------------------------
# scalar maps
# ---------------------------------------------------------------------------

def s_map(x):
    """2 int_x^1 sqrt(1-y^2) dy on [-1, 1]; 2 int_1^|x| sqrt(y^2-1) dy outside."""
    x = mpf(x)
    if abs(x) <= 1:
        return mpmath.acos(x) - x * mpmath.sqrt(1 - x * x)
    a = abs(x)
    return a * mpmath.sqrt(a * a - 1) - mpmath.acosh(a)


def _eta(n: int, k: int):
    if not 0 <= k < n:
        raise ValueError("need 0 <= k < n")
    return mpmath.sqrt(1 - mpf(k) / n)


def f_edge(x, side: int):
    """f_{+1} = sign(x-1)(3/2 |s|)^(2/3); f_{-1} the mirror image, with derivative -2 at -1."""
    x = mpf(x)
    if side == 1:
        g = abs(s_map(x))
        sg = 1 if x > 1 else (-1 if x < 1 else 0)
        return sg * mpmath.cbrt(mpf(3) / 2 * g) ** 2
    if side == -1:
        g = (mpmath.pi - s_map(x)) if x >= -1 else s_map(x)
        sg = 1 if x > -1 else (-1 if x < -1 else 0)
        return -sg * mpmath.cbrt(mpf(3) / 2 * abs(g)) ** 2
    raise ValueError("side must be +1 or -1")


def f_lam(lam, z):
    """s(lam) - s(z) = 2 int_lam^z sqrt(1-y^2) dy."""
    lam = mpf(lam)
    z = mpf(z)
    if not (abs(lam) < 1 and abs(z) <= 1):
        raise ChartError("f_lam is defined for |lam| < 1, |z| <= 1")
    return s_map(lam) - s_map(z)


def scalar_maps(spec: WeightSpec, x, k: int = 0, n: int | None = None) -> dict:
    """s, s_k, f_{+1}, f_{-1}, f_{+1,k}, f_{-1,k}, and f_{lam_j}, f_{lam_j,k} for every singularity."""
    n = spec.n if n is None else int(n)
    x = mpf(x)
    et = _eta(n, k)
    out = {"s": s_map(x), "s_k": s_map(x / et), "eta_k": et}
    for side, name in ((1, "f_1"), (-1, "f_-1")):
        out[name] = f_edge(x, side)
        out[name + ",k"] = f_edge(x / et, side)
    for j, lam in enumerate(spec.lams, start=1):
        lam = num(lam)
        try:
            out[f"f_lam{j}"] = f_lam(lam, x)
            out[f"f_lam{j},k"] = f_lam(lam / et, x / et)
        except ChartError:
            pass
    return out


# ---------------------------------------------------------------------------
# Szego function
# ---------------------------------------------------------------------------

def chebyshev_coeffs(poly) -> list:
    """Chebyshev coefficients c_k with sum c_k T_k = sum poly[j] x^j."""
    res = [mpf(0)]
    for c in reversed(list(poly) or [0]):
        nxt = [mpf(0)] * (len(res) + 1)
        for k, a in enumerate(res):
            if k == 0:
                nxt[1] += a
            else:
                nxt[k + 1] += a / 2
                nxt[k - 1] += a / 2
        nxt[0] += num(c)
        res = nxt
    while len(res) > 1 and res[-1] == 0:
        res.pop()
    return res


def _cheb_u(k: int, x):
    """U_k(x) by recurrence, U_{-1} = 0."""
    if k < 0:
        return mpf(0)
    u0, u1 = mpf(1), 2 * x
    if k == 0:
        return u0
    for _ in range(k - 1):
        u0, u1 = u1, 2 * x * u1 - u0
    return u1


@dataclass(frozen=True)
class Szego:
    """D(x) and D_inf built from the polynomial part W0 and A = sum alpha_i."""

    spec: WeightSpec

    @cached_property
    def coeffs(self) -> list:
        return chebyshev_coeffs(self.spec.poly)

    @property
    def total_alpha(self):
        return self.spec.total_alpha

    def pv_integral(self, x):
        """p.v. int_{-1}^1 W0(u) / (sqrt(1-u^2) (x-u)) du (closed form per Chebyshev mode)."""
        x = mpf(x)
        c = self.coeffs
        if abs(x) < 1:
            return -mpmath.pi * mpmath.fsum(c[k] * _cheb_u(k - 1, x) for k in range(1, len(c)))
        if abs(x) == 1:
            raise ChartError("integral diverges at |x| = 1")
        r = mpmath.sqrt(x * x - 1)
        a = abs(x)
        rho = a - r
        sg = 1 if x > 0 else -1
        return sg * mpmath.pi / r * mpmath.fsum(c[k] * (sg ** k) * rho**k for k in range(len(c)))

    def phase(self, x):
        """Real exponent i^-1 log D(x) for |x| < 1."""
        x = mpf(x)
        c = self.coeffs
        hil = -mpmath.sqrt(1 - x * x) * mpmath.fsum(c[k] * _cheb_u(k - 1, x) for k in range(1, len(c)))
        return -self.total_alpha * mpmath.acos(x) + hil

    def __call__(self, x):
        x = mpf(x)
        if abs(x) < 1:
            return mpmath.expj(self.phase(x))
        a = abs(x)
        rho = a - mpmath.sqrt(a * a - 1)
        sg = 1 if x > 0 else -1
        c = self.coeffs
        return mpmath.exp(-self.total_alpha * mpmath.acosh(a) + mpmath.fsum(c[k] * (sg ** k) * rho**k for k in range(len(c))))

    @property
    def d_inf(self):
        return mpmath.power(2, -self.total_alpha) * mpmath.exp(self.coeffs[0])


def szego(spec: WeightSpec) -> tuple:
    """(D callable, D_inf)."""
    sz = Szego(spec)
    return sz, sz.d_inf


# ---------------------------------------------------------------------------
# 2x2 helpers
# ---------------------------------------------------------------------------

def _m(rows) -> mpmath.matrix:
    return mpmath.matrix(rows)


def _E(t) -> mpmath.matrix:
    """exp(i t sigma)."""
    return _m([[mpmath.expj(t), 0], [0, mpmath.expj(-t)]])


def _spow(z) -> mpmath.matrix:
    """z^sigma."""
    return _m([[z, 0], [0, 1 / z]])


def _vec(a, b) -> mpmath.matrix:
    return mpmath.matrix([a, b])


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParametrixFrame:
    """Scalar maps, constants and 2x2 frames for one (spec, N, k)."""

    spec: WeightSpec
    n: int
    k: int = 0
    margin: float = 0.1

    @cached_property
    def szego(self) -> Szego:
        return Szego(self.spec)

    @property
    def ell(self):
        return ell_constant()

    @property
    def eta(self):
        return _eta(self.n, self.k)

    @property
    def d_inf(self):
        return self.szego.d_inf

    # ---- constants --------------------------------------------------------
    def right_alpha(self, x):
        """Sum of alpha_i over singularities strictly to the right of x."""
        x = mpf(x)
        return mpmath.fsum(num(s.alpha) for s in self.spec.singularities if num(s.lam) > x)

    def rho(self, j: int):
        """rho_j = 2 N s(lam_j) + pi alpha_j - 2 pi sum_{lam_i >= lam_j} alpha_i (j is 1-based)."""
        sj = self.spec.singularities[j - 1]
        lam = num(sj.lam)
        tot = mpmath.fsum(num(s.alpha) for s in self.spec.singularities if num(s.lam) >= lam)
        return 2 * self.n * s_map(lam) + mpmath.pi * num(sj.alpha) - 2 * mpmath.pi * tot

    def c_const(self, j: int):
        """c_j = sqrt(2 pi) (N^2 (1 - lam_j^2))^(alpha_j/2) / Gamma(alpha_j + 1/2) prod_{k != j} |lam_k - lam_j|^-alpha_k."""
        sj = self.spec.singularities[j - 1]
        lam, a = num(sj.lam), num(sj.alpha)
        val = mpmath.sqrt(2 * mpmath.pi) * mpmath.power(self.n**2 * (1 - lam * lam), a / 2) / mpmath.gamma(a + mpf(1) / 2)
        for i, s in enumerate(self.spec.singularities, start=1):
            if i != j:
                val *= mpmath.power(abs(num(s.lam) - lam), -num(s.alpha))
        return val

    # ---- maps -------------------------------------------------------------
    def A(self, x) -> mpmath.matrix:
        x = mpf(x)
        if abs(x) == 1:
            raise ChartError("A is singular at +-1")
        if abs(x) < 1:
            em, ep = mpmath.expj(-mpmath.pi / 4), mpmath.expj(mpmath.pi / 4)
            u, v = em * mpmath.sqrt(1 + x), ep * mpmath.sqrt(1 - x)
            pre = 1 / (2 * mpmath.root(1 - x * x, 4))
        else:
            u, v = mpmath.sqrt(abs(1 + x)), mpmath.sqrt(abs(1 - x))
            pre = 1 / (2 * mpmath.root(x * x - 1, 4))
        return pre * _m([[u + v, 1j * (u - v)], [-1j * (u - v), u + v]])

    def T_inf(self, x) -> mpmath.matrix:
        return self.A(x) * _spow(1 / self.szego(x))

    def _edge_at(self, x, side: int) -> mpmath.matrix:
        x = mpf(x)
        if abs(x - side) > 0.5:
            raise ChartError("edge frame used outside its chart")
        f = abs(f_edge(x, side))
        fs = _m([[mpmath.root(f, 4), 0], [0, 1 / mpmath.root(f, 4)]])
        pi4 = mpmath.pi / 4
        outer = (x - side) * side > 0
        wf = _spow(mpmath.exp(self.spec.potential(x))) if outer else mpmath.eye(2)
        mix = _m([[1, -1], [1, 1]])
        if side == 1:
            inner = _E(pi4) * wf * mix * (mpmath.eye(2) if outer else _E(pi4))
            return mpmath.sqrt(mpmath.pi) * mpmath.expj(-pi4) * self.T_inf(x) * inner * fs
        shift = mpmath.eye(2) if outer else _E(-mpmath.pi * self.spec.total_alpha)
        inner = shift * _E(-pi4) * wf * mix * (mpmath.eye(2) if outer else _E(-pi4))
        return mpmath.sqrt(mpmath.pi) * mpmath.expj(pi4) * self.T_inf(x) * inner * fs

    def T_edge(self, x, side: int) -> mpmath.matrix:
        """T_{+1} or T_{-1}; at x = +-1 the two one-sided limits are averaged."""
        x = mpf(x)
        if x == side:
            p = mpmath.mp.prec
            with mpmath.workprec(3 * p + 64):
                h = mpmath.ldexp(1, -p)
                val = (self._edge_at(x - h, side) + self._edge_at(x + h, side)) / 2
            return val.apply(lambda v: +v)
        return self._edge_at(x, side)

    def T_lam(self, j: int, x) -> mpmath.matrix:
        """T_{lam_j, k}(x)."""
        lam = num(self.spec.lams[j - 1])
        x = mpf(x)
        if not abs(x) < 1:
            raise ChartError("singular frame needs |x| < 1")
        ph = -self.k * mpmath.acos(lam) + self.rho(j) / 2
        r2 = 1 / mpmath.sqrt(2)
        return (
            mpmath.expj(-mpmath.pi / 4)
            * self.T_inf(x)
            * _E(ph)
            * _E(-mpmath.pi / 4)
            * (r2 * _m([[1, 1j], [1j, 1]]))
        )

    def at(self, x) -> dict:
        """Every frame whose chart contains x."""
        x = mpf(x)
        out = {}
        if abs(x) != 1:
            out["A"] = self.A(x)
            out["T_inf"] = self.T_inf(x)
        for side, name in ((1, "T_1"), (-1, "T_-1")):
            if abs(x - side) <= 0.5:
                out[name] = self.T_edge(x, side)
        for j, lam in enumerate(self.spec.lams, start=1):
            if abs(x - num(lam)) <= 2 * num(self.margin) and abs(x) < 1:
                out[f"T_lam{j}"] = self.T_lam(j, x)
        return out

    # ---- predictions ----------------------------------------------------------
    def region_of(self, x) -> str:
        x = mpf(x)
        dl = num(self.margin)
        if abs(x - 1) < dl:
            return "edge+1"
        if abs(x + 1) < dl:
            return "edge-1"
        for j, lam in enumerate(self.spec.lams, start=1):
            if abs(x - num(lam)) < dl:
                return f"sing{j}"
        return "bulk" if abs(x) < 1 else "outside"

    def predict(self, region: str, x) -> mpmath.matrix:
        x = mpf(x)
        N, k = self.n, self.k
        dl = num(self.margin)
        if region == "bulk":
            pts = [mpf(-1), mpf(1)] + [num(l) for l in self.spec.lams]
            if not abs(x) < 1 or min(abs(x - p) for p in pts) < dl:
                raise ChartError(f"x = {x} is not in the bulk with margin {self.margin}")
            ph = -k * mpmath.acos(x) - mpmath.pi * self.right_alpha(x)
            s = s_map(x)
            return self.T_inf(x) * _E(ph) * _vec(mpmath.expj(N * s), mpmath.expj(-N * s))
        if region in ("edge+1", "edge-1"):
            side = 1 if region == "edge+1" else -1
            if abs(x - side) > dl:
                raise ChartError(f"x = {x} is not within {self.margin} of {side}")
            nk = mpf(N - k)
            z = mpmath.cbrt(nk) ** 2 * f_edge(x / self.eta, side)
            ai, aip = airy_pair(z)
            v = _vec(mpmath.cbrt(mpmath.sqrt(nk)) * ai, aip / mpmath.cbrt(mpmath.sqrt(nk)))
            sgn = 1 if side == 1 else (-1) ** (N - k)
            return sgn * self.T_edge(x, side) * v
        if region.startswith("sing"):
            j = int(region[4:])
            lam = num(self.spec.lams[j - 1])
            if abs(x - lam) > dl:
                raise ChartError(f"x = {x} is not within {self.margin} of lambda_{j}")
            alpha = num(self.spec.alphas[j - 1])
            z = (N - k) * f_lam(lam / self.eta, x / self.eta)
            return self.T_lam(j, x) * mpmath.matrix(bessel_vector(alpha, z))
        raise ValueError(f"unknown region {region!r}")


def frames(spec: WeightSpec, n: int, k: int, x, prec: Precision | int | None = 128) -> dict:
    with working(as_bits(prec)):
        return ParametrixFrame(spec, int(n), int(k)).at(x)


def predict(spec: WeightSpec, n: int, k: int, region: str, x, prec: Precision | int | None = 128, margin: float = 0.1) -> list:
    """Leading-order prediction of (sqrt(pi) p_{N-k} sqrt(w), -i sqrt(pi) p_{N-k-1} sqrt(w)) at x."""
    with working(as_bits(prec)):
        v = ParametrixFrame(spec.with_n(int(n)), int(n), int(k), margin).predict(region, x)
        return [v[0], v[1]]


def observed(basis: OrthoBasis, n: int, k: int, x) -> list:
    """(sqrt(pi) p_{N-k}(x) sqrt(w(x)), -i sqrt(pi) p_{N-k-1}(x) sqrt(w(x))) from the recurrence."""
    with working(basis.bits):
        x = mpf(x)
        p = basis.values(x, n - k)
        sw = mpmath.sqrt(weight_eval(basis.spec, x))
        r = mpmath.sqrt(mpmath.pi)
        return [r * p[n - k] * sw, -1j * r * p[n - k - 1] * sw]


def predict_v(spec: WeightSpec, n: int, j: int, prec: Precision | int | None = 128) -> dict:
    """Leading-order V_j with its constants c_j and rho_j (error term dropped).

    Row two comes from the Bessel form of (p_N, p_{N-1}) at lam_j, row one
    from det V_j = 1; kappa_N and kappa_{N-1} are replaced by their predictions.
    """
    n = int(n)
    spec = spec.with_n(n)
    if not 1 <= j <= spec.m:
        raise IndexError("singularity index out of range")
    with working(as_bits(prec)):
        fr = ParametrixFrame(spec, n, 0)
        lam = num(spec.lams[j - 1])
        c = fr.c_const(j)
        g = mpmath.exp(n * lam * lam - spec.potential(lam)) * c / mpmath.sqrt(mpmath.pi)
        kn = mpmath.sqrt(kappa_sq_prediction(spec, n, 0))
        km = mpmath.sqrt(kappa_sq_prediction(spec, n, 1))
        two_pi = 2 * mpmath.pi
        left = _m([[0, -kn / (two_pi * g * km)], [-1j * g, 0]])  # det T_lam = -i
        right = _m([[-two_pi * km, 0], [0, -1 / kn]])
        V = left * mpmath.inverse(fr.T_lam(j, lam)) * right
        return {"V": V, "c": c, "rho": fr.rho(j), "left": left, "right": right}


def v_relative_error(pred: dict, V_obs: mpmath.matrix) -> mpf:
    """Frobenius error of a predict_v result against V_obs, measured in the frame where V ~ T_lam^-1.

    Entries of V differ by factors e^{+-N l}; undoing the outer scalings first
    keeps entries that are small only through an oscillating phase from
    dominating the comparison.
    """
    li = mpmath.inverse(pred["left"])
    ri = mpmath.inverse(pred["right"])
    core = li * pred["V"] * ri
    diff = li * (pred["V"] - V_obs) * ri
    return mpmath.mnorm(diff, "f") / mpmath.mnorm(core, "f")


def kappa_sq_prediction(spec: WeightSpec, n: int, k: int, prec: Precision | int | None = 128):
    """kappa_{N-k}^2 ~ (e^k / pi) e^{-(N-k) l} D_inf^-2."""
    with working(as_bits(prec)):
        d = Szego(spec).d_inf
        return mpmath.exp(k) / mpmath.pi * mpmath.exp(-(n - k) * ell_constant()) / (d * d)


def kappa_sq_literal(spec: WeightSpec, n: int, k: int, prec: Precision | int | None = 128):
    """(e / pi) e^{-(N-k) l} D_inf^-2, which agrees with kappa_{N-k}^2 at k = 1 only."""
    with working(as_bits(prec)):
        d = Szego(spec).d_inf
        return mpmath.e / mpmath.pi * mpmath.exp(-(n - k) * ell_constant()) / (d * d)


# ---------------------------------------------------------------------------
# matching identities
# ---------------------------------------------------------------------------

def bessel_matching_residual(spec: WeightSpec, n: int, j: int, x, k: int = 0, prec: Precision | int | None = 128):
    """|T_{lam_j,k}(x) I_alpha((N-k) f_{lam_j,k}(x)) - T_inf(x) E(-pi sum_{lam_i > x} alpha_i) (e^{i phi}, e^{-i phi})|.

    phi = (N-k) s_k(x).  The identity is exact at k = 0.
    """
    with working(as_bits(prec)):
        n = int(n)
        fr = ParametrixFrame(spec.with_n(n), n, int(k))
        x = mpf(x)
        lam = num(spec.lams[j - 1])
        alpha = num(spec.alphas[j - 1])
        et = fr.eta
        z = (n - k) * f_lam(lam / et, x / et)
        lhs = fr.T_lam(j, x) * mpmath.matrix(bessel_plane_vector(alpha, z))
        phi = (n - k) * s_map(x / et)
        rhs = fr.T_inf(x) * _E(-mpmath.pi * fr.right_alpha(x)) * _vec(mpmath.expj(phi), mpmath.expj(-phi))
        return max(abs(lhs[0] - rhs[0]), abs(lhs[1] - rhs[1]))


def airy_matching_residual(spec: WeightSpec, n: int, side: int, x, k: int = 0, prec: Precision | int | None = 128):
    """Residual of the edge/bulk matching identity at x inside (-1, 1).

    Left side: the edge frame applied to the large-argument Airy vector
    pi^-1/2 (|f|^-1/4 sin(theta), -|f|^1/4 cos(theta)), theta = (2/3)(N-k)|f_{side,k}|^(3/2) + pi/4,
    times (-1)^(N-k) at the left edge.  Right side: the bulk form with phase (N-k) s_k(x).
    """
    with working(as_bits(prec)):
        n = int(n)
        fr = ParametrixFrame(spec.with_n(n), n, int(k))
        x = mpf(x)
        if not abs(x) < 1:
            raise ChartError("matching is stated inside (-1, 1)")
        et = fr.eta
        f = abs(f_edge(x / et, side))
        th = mpf(2) / 3 * (n - k) * f ** (mpf(3) / 2) + mpmath.pi / 4
        r = 1 / mpmath.sqrt(mpmath.pi)
        v = _vec(r * mpmath.sin(th) / mpmath.root(f, 4), -r * mpmath.cos(th) * mpmath.root(f, 4))
        sgn = 1 if side == 1 else (-1) ** (n - k)
        lhs = sgn * fr.T_edge(x, side) * v
        phi = (n - k) * s_map(x / et)
        rhs = fr.T_inf(x) * _E(-mpmath.pi * fr.right_alpha(x)) * _vec(mpmath.expj(phi), mpmath.expj(-phi))
        return max(abs(lhs[0] - rhs[0]), abs(lhs[1] - rhs[1]))
