"""Extended-precision integration kernel.

Integrals against weights of the form

    exp(-g x^2 + c W(x)) * prod_i |x - lam_i|^(e_i)

are discretized on panels.  A panel that touches a singular point carries a
Gauss-Jacobi rule with the local exponent built in; other panels use
Gauss-Legendre.  Panels are bisected until a polynomial probe agrees between a
panel and its two halves.

The sign-kernel transform eps(f)(x) = 1/2 (int_{-inf}^x f - int_x^inf f) is
accumulated panel by panel with the exact Jacobi antiderivative, so that on a
panel with exponent e the partial integral from the singular end is
|x - s|^(e+1) times a polynomial.  Pairings of eps(.) with a second function
are then integrated with a rule of exponent 2e+1, which keeps them spectral.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import gmpy2
import mpmath
import numpy as np
from mpmath import mpf
from scipy.special import roots_jacobi

from .mpx import Precision, as_bits, fr, mf, working, zeros
from .weights import WeightSpec, exact, num

__all__ = [
    "Precision",
    "gauss_jacobi",
    "jacobi_table",
    "WeightFunction",
    "PanelPlan",
    "Panel",
    "build_plan",
    "integrate_weighted",
    "pv_hilbert",
    "sign_transform",
    "local_sign_term",
    "pv_double_sign",
    "iterated_double_sign",
    "fubini_family",
    "fubini_check",
    "QuadratureFailure",
]


_ZERO = Fraction(0)


class QuadratureFailure(RuntimeError):
    """Adaptive refinement did not converge."""


# ---------------------------------------------------------------------------
# Jacobi polynomials and Gauss-Jacobi rules
# ---------------------------------------------------------------------------

def jacobi_table(nmax: int, a, b, t) -> list:
    """Values P_0..P_nmax of the Jacobi polynomials P^(a,b) at t (mpfr arithmetic)."""
    a = fr(a)
    b = fr(b)
    vals = [gmpy2.mpfr(1)]
    if nmax == 0:
        return vals
    vals.append((a + 1) + (a + b + 2) * (t - 1) / 2)
    ab = a + b
    a2b2 = a * a - b * b
    for n in range(2, nmax + 1):
        c = 2 * n + ab
        num1 = (c - 1) * (c * (c - 2) * t + a2b2)
        num2 = 2 * (n + a - 1) * (n + b - 1) * c
        den = 2 * n * (n + ab) * (c - 2)
        vals.append((num1 * vals[-1] - num2 * vals[-2]) / den)
    return vals


def _jacobi_norm(n: int, a, b):
    """h_n = int (1-t)^a (1+t)^b P_n^2 dt."""
    a = fr(a)
    b = fr(b)
    lg = gmpy2.lgamma
    logv = (
        (a + b + 1) * gmpy2.log(gmpy2.mpfr(2))
        - gmpy2.log(2 * n + a + b + 1)
        + lg(n + a + 1)[0]
        + lg(n + b + 1)[0]
        - lg(n + a + b + 1)[0]
        - lg(gmpy2.mpfr(n + 1))[0]
    )
    return gmpy2.exp(logv)


@lru_cache(maxsize=512)
def gauss_jacobi(n: int, a, b, bits: int):
    """Gauss-Jacobi nodes/weights on [-1, 1] for (1-t)^a (1+t)^b, at ``bits`` precision.

    Double-precision roots seed a Newton polish in mpfr.
    """
    with working(bits + 20):
        af = fr(num(a))
        bf = fr(num(b))
        t0, _ = roots_jacobi(n, float(a), float(b))
        nodes = []
        tol = gmpy2.mpfr(2) ** (-(bits + 10))
        for guess in t0:
            t = gmpy2.mpfr(float(guess))
            for _ in range(40):
                vals = jacobi_table(n, af, bf, t)
                pn, pm = vals[n], vals[n - 1]
                c = 2 * n + af + bf
                dp = (n * ((af - bf) - c * t) * pn + 2 * (n + af) * (n + bf) * pm) / (c * (1 - t * t))
                step = pn / dp
                t -= step
                if abs(step) < tol:
                    break
            else:  # pragma: no cover - Newton always converges from these seeds
                raise QuadratureFailure("Gauss-Jacobi Newton iteration stalled")
            nodes.append(t)
        lg = gmpy2.lgamma
        logc = (
            lg(n + af + 1)[0]
            + lg(n + bf + 1)[0]
            - lg(n + af + bf + 1)[0]
            - lg(gmpy2.mpfr(n + 1))[0]
            + (af + bf + 1) * gmpy2.log(gmpy2.mpfr(2))
        )
        cst = gmpy2.exp(logc)
        weights = []
        for t in nodes:
            vals = jacobi_table(n, af, bf, t)
            c = 2 * n + af + bf
            dp = (n * ((af - bf) - c * t) * vals[n] + 2 * (n + af) * (n + bf) * vals[n - 1]) / (c * (1 - t * t))
            weights.append(cst / ((1 - t * t) * dp * dp))
    with working(bits):
        return (
            np.array([gmpy2.mpfr(t) for t in nodes], dtype=object),
            np.array([gmpy2.mpfr(w) for w in weights], dtype=object),
        )


@dataclass(frozen=True)
class _RefPanel:
    """Reference data for a panel with weight (1+t)^e on [-1, 1]."""

    n: int
    e: Fraction
    bits: int
    t_e: np.ndarray
    w_e: np.ndarray
    t_c: np.ndarray  # rule with exponent 2e+1 (pairing with cumulative part)
    w_c: np.ndarray
    L_c: np.ndarray  # maps values at t_e to the antiderivative polynomial at t_c
    t_p: np.ndarray  # rule with exponent 2e (principal value pairing)
    w_p: np.ndarray
    L_p: np.ndarray


def _antideriv_matrix(n: int, e, targets, t_e, w_e) -> np.ndarray:
    """Matrix L with G(targets) = L @ g(t_e), where

    int_{-1}^{t} (1+s)^e g(s) ds = (1+t)^(e+1) G(t)

    for g a polynomial of degree < n (exact), using the Jacobi antiderivative
    d/dt[(1-t)(1+t)^(e+1) P_{k-1}^(1,e+1)] = -2k (1+t)^e P_k^(0,e).
    """
    ef = fr(num(e))
    norms = [_jacobi_norm(k, 0, ef) for k in range(n)]
    P = [jacobi_table(n - 1, 0, ef, t) for t in t_e]
    # coefficient map: c_k = sum_q w_q P_k(t_q) g_q / h_k
    C = zeros((n, n))
    for q in range(n):
        for k in range(n):
            C[k, q] = w_e[q] * P[q][k] / norms[k]
    B = zeros((len(targets), n))
    for i, s in enumerate(targets):
        Q = jacobi_table(max(n - 2, 0), 1, ef + 1, s)
        B[i, 0] = 1 / (ef + 1)
        for k in range(1, n):
            B[i, k] = -(1 - s) * Q[k - 1] / (2 * k)
    return B.dot(C)


@lru_cache(maxsize=256)
def ref_panel(n: int, e, bits: int) -> _RefPanel:
    e = exact(e)
    t_e, w_e = gauss_jacobi(n, _ZERO, e, bits)
    mat = np.vectorize(gmpy2.mpfr, otypes=[object])
    extra = []
    for expo in (2 * e + 1, 2 * e):
        if expo <= -1:
            extra += [None, None, None]
            continue
        t_x, w_x = gauss_jacobi(n, _ZERO, expo, bits)
        with working(bits + 20):
            L = _antideriv_matrix(n, e, t_x, t_e, w_e)
        with working(bits):
            extra += [t_x, w_x, mat(L)]
    t_c, w_c, L_c, t_p, w_p, L_p = extra
    return _RefPanel(n, e, bits, t_e, w_e, t_c, w_c, L_c, t_p, w_p, L_p)


# ---------------------------------------------------------------------------
# Weight functions and panel plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightFunction:
    """exp(-gauss x^2 + pot_scale W(x)) prod |x - lam_i|^(exps_i)."""

    gauss: float
    pot_scale: float
    spec: WeightSpec | None
    lams: tuple
    exps: tuple

    @classmethod
    def weight(cls, spec: WeightSpec) -> "WeightFunction":
        """The weight w(x; N) itself."""
        return cls(2 * spec.n, 2, spec, tuple(spec.lams), tuple(2 * exact(a) for a in spec.alphas))

    @classmethod
    def sqrt_weight(cls, spec: WeightSpec) -> "WeightFunction":
        """sqrt(w(x; N))."""
        return cls(spec.n, 1, spec, tuple(spec.lams), tuple(exact(a) for a in spec.alphas))

    def log_value(self, x, exclude: int | None = None):
        """log of the weight at x (mpmath), dropping singular factor ``exclude``."""
        x = mpf(x)
        val = -num(self.gauss) * x * x
        if self.spec is not None and self.spec.has_potential:
            val += num(self.pot_scale) * self.spec.potential(x)
        for i, (lam, e) in enumerate(zip(self.lams, self.exps)):
            if i == exclude or e == 0:
                continue
            val += num(e) * mpmath.log(abs(x - num(lam)))
        return val

    def value(self, x, exclude: int | None = None):
        return mpmath.exp(self.log_value(x, exclude))

    def tail_cutoff(self, bits: int):
        return mpmath.sqrt(bits * mpmath.log(2) / num(self.gauss)) + 2


@dataclass(frozen=True)
class Panel:
    lo: object
    hi: object
    side: int  # +1: local variable runs from lo; -1: runs from hi
    e: Fraction  # Jacobi exponent at the anchored end (0 for regular panels)
    sing: int | None  # index of the singularity at the anchored end

    @property
    def anchor(self):
        return self.lo if self.side > 0 else self.hi

    @property
    def half(self):
        return (self.hi - self.lo) / 2


@dataclass
class PanelNodes:
    """Physical nodes of one panel for one rule (exponent e, 2e+1 or 2e)."""

    x: np.ndarray  # mpfr
    dist: np.ndarray  # |x - anchor|
    smooth: np.ndarray  # weight without the anchored singular factor
    wts: np.ndarray  # full quadrature weights: ref weight * scale * smooth


@dataclass
class PanelPlan:
    """A discretization of one weight function on [-R, R]."""

    wf: WeightFunction
    bits: int
    order: int
    tail_cutoff: object
    panels: list
    pv_points: tuple = ()
    windows: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def breakpoints(self) -> list:
        pts = [p.lo for p in self.panels] + [self.panels[-1].hi]
        return [mf(x) for x in pts]

    @property
    def jacobi_exponents(self) -> dict:
        out = {}
        for p in self.panels:
            if p.sing is not None:
                out[float(mf(p.anchor))] = float(p.e)
        return out

    @property
    def size(self) -> int:
        return len(self.panels) * self.order

    def ref(self, panel: Panel) -> _RefPanel:
        return ref_panel(self.order, panel.e, self.bits)

    def nodes(self, idx: int, kind: str = "e") -> PanelNodes:
        key = (idx, kind)
        if key in self._cache:
            return self._cache[key]
        panel = self.panels[idx]
        ref = self.ref(panel)
        t, w, expo = {
            "e": (ref.t_e, ref.w_e, panel.e),
            "c": (ref.t_c, ref.w_c, 2 * panel.e + 1),
            "p": (ref.t_p, ref.w_p, 2 * panel.e),
        }[kind]
        with working(self.bits):
            h = fr(panel.half)
            a = fr(panel.anchor)
            dist = np.array([h * (1 + ti) for ti in t], dtype=object)
            x = np.array([a + panel.side * d for d in dist], dtype=object)
            scale = h ** (fr(num(expo)) + 1)
            smooth = np.array(
                [fr(self.wf.value(mf(xi), exclude=panel.sing)) for xi in x], dtype=object
            )
            wts = np.array([wi * scale * si for wi, si in zip(w, smooth)], dtype=object)
        pn = PanelNodes(x, dist, smooth, wts)
        self._cache[key] = pn
        return pn

    def all_nodes(self, kind: str = "e"):
        xs, ws = [], []
        for i in range(len(self.panels)):
            pn = self.nodes(i, kind)
            if kind == "e":
                xs.append(pn.x)
                ws.append(pn.wts)
        return np.concatenate(xs), np.concatenate(ws)

    def integrate(self, f: Callable) -> mpf:
        """int f(x) w(x) dx for a vectorized callable f acting on mpfr arrays."""
        x, w = self.all_nodes("e")
        with working(self.bits):
            vals = f(x)
            return mf(gmpy2.fsum(list(np.asarray(vals, dtype=object) * w)))


def _sing_points(wf: WeightFunction):
    return [(fr(num(l)), e, i) for i, (l, e) in enumerate(zip(wf.lams, wf.exps))]


@lru_cache(maxsize=128)
def _coef_matrix(n: int, e, bits: int) -> np.ndarray:
    """Map from values at the e-rule nodes to orthonormal Jacobi coefficients."""
    ref = ref_panel(n, e, bits)
    with working(bits + 20):
        ef = fr(num(e))
        C = zeros((n, n))
        for q, t in enumerate(ref.t_e):
            P = jacobi_table(n - 1, 0, ef, t)
            for k in range(n):
                C[k, q] = ref.w_e[q] * P[k] / gmpy2.sqrt(_jacobi_norm(k, 0, ef))
    with working(bits):
        return np.vectorize(gmpy2.mpfr, otypes=[object])(C)


def _probe(wf, panel: Panel, order: int, bits: int, degree: int) -> tuple:
    """(integral, spectral tail) of smooth * (1 + x^2)^(degree/2 + 1) on a panel."""
    ref = ref_panel(order, panel.e, bits)
    h = fr(panel.half)
    a = fr(panel.anchor)
    g = []
    for ti in ref.t_e:
        x = a + panel.side * h * (1 + ti)
        g.append(fr(wf.value(mf(x), exclude=panel.sing)) * (1 + x * x) ** (degree // 2 + 1))
    scale = h ** (fr(num(panel.e)) + 1)
    coef = _coef_matrix(order, panel.e, bits).dot(np.array(g, dtype=object))
    tail = max(abs(c) for c in coef[-4:])
    return gmpy2.fsum([w * v for w, v in zip(ref.w_e, g)]) * scale, tail * scale


def _split(panel: Panel, mid) -> tuple:
    if panel.side > 0:
        left = Panel(panel.lo, mid, +1, panel.e, panel.sing)
        right = Panel(mid, panel.hi, +1, _ZERO, None)
    else:
        left = Panel(panel.lo, mid, +1, _ZERO, None)
        right = Panel(mid, panel.hi, -1, panel.e, panel.sing)
    return left, right


def build_plan(
    wf: WeightFunction,
    bits: int,
    degree: int,
    order: int | None = None,
    extra_breaks: Sequence = (),
    pv_points: Sequence = (),
    window=None,
    max_panel: float = 0.25,
) -> PanelPlan:
    """Adaptive panel plan for ``wf`` resolving polynomials up to ``degree``.

    ``pv_points`` are regular points where a principal value will be taken;
    they get a symmetric window of breakpoints like the singular points.
    """
    if order is None:
        order = max(24, bits // 5, degree // 2 + 20)
    with working(bits + 10):
        R = fr(wf.tail_cutoff(bits))
        sings = _sing_points(wf)
        marks = [(p, e, i) for p, e, i in sings if e != 0]
        pv = [fr(num(t)) for t in pv_points]
        anchors = sorted([p for p, _, _ in sings] + pv)
        pts = {-R, R, gmpy2.mpfr(-1), gmpy2.mpfr(1)}
        windows = []
        for i, p in enumerate(anchors):
            gap_lo = p - anchors[i - 1] if i > 0 else gmpy2.mpfr(1)
            gap_hi = anchors[i + 1] - p if i + 1 < len(anchors) else gmpy2.mpfr(1)
            delta = min(gap_lo / 2, gap_hi / 2, fr(num(window)) if window else gmpy2.mpfr("0.1"), (R - abs(p)) / 2)
            pts.update({p - delta, p, p + delta})
            windows.append((mf(p), mf(delta)))
        if wf.spec is not None and wf.spec.has_tail:
            eps = fr(num(wf.spec.epsilon))
            for r in (1 + eps, 1 + 2 * eps):
                if r < R:
                    pts.update({r, -r})
        for b in extra_breaks:
            b = fr(num(b))
            if -R < b < R:
                pts.add(b)
        pts = sorted(pts)
        sing_at = {p: (e, i) for p, e, i in marks}
        initial = []
        for lo, hi in zip(pts, pts[1:]):
            sl, sh = sing_at.get(lo), sing_at.get(hi)
            # split long intervals to start the refinement from a sane grid
            pieces = max(1, int(math.ceil(float(hi - lo) / max_panel)))
            if sl is not None and sh is not None and pieces == 1:
                pieces = 2
            cuts = [lo + (hi - lo) * k / pieces for k in range(pieces + 1)]
            for k, (a, b) in enumerate(zip(cuts, cuts[1:])):
                if k == 0 and sl is not None:
                    initial.append(Panel(a, b, +1, sl[0], sl[1]))
                elif k == pieces - 1 and sh is not None:
                    initial.append(Panel(a, b, -1, sh[0], sh[1]))
                else:
                    initial.append(Panel(a, b, +1, _ZERO, None))
        probes = [_probe(wf, p, order, bits, degree) for p in initial]
        scale = sum(abs(v) for v, _ in probes)
        tol = scale * gmpy2.mpfr(2) ** (-(bits - 4))
        final = []
        stack = list(zip(initial, probes, [0] * len(initial)))[::-1]
        while stack:
            panel, (val, tail), depth = stack.pop()
            if tail <= tol:
                final.append(panel)
                continue
            if depth > 40:
                raise QuadratureFailure("panel refinement did not converge; check exponents")
            left, right = _split(panel, (panel.lo + panel.hi) / 2)
            stack.append((right, _probe(wf, right, order, bits, degree), depth + 1))
            stack.append((left, _probe(wf, left, order, bits, degree), depth + 1))
    return PanelPlan(wf, bits, order, mf(R), final, tuple(pv_points), tuple(windows))


_PLAN_CACHE: dict = {}


def plan_for(spec: WeightSpec, kind: str, bits: int, degree: int, pv_points=()) -> PanelPlan:
    """Cached plan for the weight (kind='w') or its square root (kind='sqrt')."""
    key = (spec, kind, bits, degree, tuple(pv_points))
    plan = _PLAN_CACHE.get(key)
    if plan is None:
        wf = WeightFunction.weight(spec) if kind == "w" else WeightFunction.sqrt_weight(spec)
        plan = build_plan(wf, bits, degree, pv_points=pv_points)
        if len(_PLAN_CACHE) > 64:
            _PLAN_CACHE.clear()
        _PLAN_CACHE[key] = plan
    return plan


def _vectorize(f: Callable):
    def g(xs):
        return np.array([fr(f(mf(x))) for x in xs], dtype=object)

    return g


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def integrate_weighted(f: Callable, spec: WeightSpec, prec: Precision | int | None = None, degree: int = 8):
    """int f(x) w(x) dx, f a scalar callable on mpf (sub-Gaussian growth)."""
    bits = as_bits(prec)
    plan = plan_for(spec, "w", bits, degree)
    with working(bits):
        return plan.integrate(_vectorize(f))


def _window_weight(plan: PanelPlan, idx_pt: int | None, t, x):
    """weight-without-factor ratio rho(x) = w_excl(t) / w_excl(x) used for subtraction."""
    wf = plan.wf
    return mpmath.exp(wf.log_value(t, exclude=idx_pt) - wf.log_value(x, exclude=idx_pt))


def _window(plan: PanelPlan, t):
    """Half-width of the symmetric breakpoint window around t."""
    t = num(t)
    for p, d in plan.windows:
        if abs(p - t) <= mpf(2) ** (-plan.bits // 2):
            return d
    raise ValueError("no symmetric window around the principal value point")


def _hilbert_on_plan(plan: PanelPlan, fvals_fn: Callable, t, sing_index: int | None):
    """p.v. int f(x) wf(x) / (x - t) dx for a vectorized f returning [Q, K] arrays.

    The local term is removed on a symmetric window [t - d, t + d]: there the
    integrand f(t) wf_excl(t) |x-t|^e / (x-t) integrates to zero.
    """
    bits = plan.bits
    with working(bits):
        tt = fr(num(t))
        delta = fr(_window(plan, t))
        ft = None
        totals = None
        for i, panel in enumerate(plan.panels):
            pn = plan.nodes(i, "e")
            vals = np.asarray(fvals_fn(pn.x), dtype=object)
            if vals.ndim == 1:
                vals = vals[:, None]
            inside = panel.lo >= tt - delta - gmpy2.mpfr(2) ** (-bits // 2) and panel.hi <= tt + delta + gmpy2.mpfr(2) ** (-bits // 2)
            contrib = zeros(vals.shape[1])
            if inside:
                if ft is None:
                    ft = np.asarray(fvals_fn(np.array([tt], dtype=object)), dtype=object)
                    ft = ft.reshape(-1)
                for q in range(len(pn.x)):
                    xq = pn.x[q]
                    rho = fr(_window_weight(plan, sing_index, mf(tt), mf(xq)))
                    contrib = contrib + pn.wts[q] * (vals[q] - ft * rho) / (xq - tt)
            else:
                inv = np.array([1 / (xq - tt) for xq in pn.x], dtype=object)
                contrib = (pn.wts * inv).dot(vals)
            totals = contrib if totals is None else totals + contrib
        return totals


def pv_hilbert(f: Callable, spec: WeightSpec, t, prec: Precision | int | None = None, degree: int = 8):
    """H(f)(t) = p.v. int f(x) w(x) / (x - t) dx.

    ``t`` may be a singular point lam_i (requires alpha_i > -1/2) or any regular
    interior point.
    """
    bits = as_bits(prec)
    with working(bits):
        tv = num(t)
        sing_index = None
        for i, lam in enumerate(spec.lams):
            if num(lam) == tv:
                sing_index = i
        pv = () if sing_index is not None else (t,)
        plan = plan_for(spec, "w", bits, degree, pv_points=pv)
        vec = _vectorize(f)
        res = _hilbert_on_plan(plan, vec, t, sing_index)
        return mf(res[0])


def local_sign_term(alpha, lam, delta, x):
    """int_{|y-lam|<delta} sign(x-y) |y-lam|^alpha / (y-lam) dy (principal value).

    Equals 2(|x-lam|^alpha - delta^alpha)/alpha inside the window (2 log(|x-lam|/delta)
    when alpha = 0) and zero outside.
    """
    alpha, lam, delta, x = (num(v) if isinstance(v, (float, int, str)) else v for v in (alpha, lam, delta, x))
    r = abs(x - lam)
    if r >= delta:
        return mpf(0)
    if alpha == 0:
        return 2 * (mpmath.log(r) - mpmath.log(delta))
    return 2 * (r**alpha - delta**alpha) / alpha


# ---------------------------------------------------------------------------
# Sign-kernel transform
# ---------------------------------------------------------------------------

class SignKernel:
    """Cumulative sign transform on a plan, vectorized over many functions.

    For functions f_k given by ``fvals(x) -> [len(x), K]`` the transform of
    f_k * wf is represented panel by panel as

        eps_k(x) = base_k(panel) + side * |x - anchor|^(e+1) G_k(x),

    where G_k is the polynomial produced by the Jacobi antiderivative.
    """

    def __init__(self, plan: PanelPlan, fvals: Callable):
        self.plan = plan
        bits = plan.bits
        self.panel_data = []
        with working(bits):
            run = None
            raw = []
            for i, panel in enumerate(plan.panels):
                pn = plan.nodes(i, "e")
                ref = plan.ref(panel)
                v = np.asarray(fvals(pn.x), dtype=object)
                if v.ndim == 1:
                    v = v[:, None]
                g = v * pn.smooth[:, None]  # f * smooth part, weight (1+t)^e left out
                scale = fr(panel.half) ** (fr(num(panel.e)) + 1)
                total = (ref.w_e[None, :] * scale).dot(g).reshape(-1)
                raw.append((g, total))
                run = total if run is None else run + total
            self.total = run
            acc = zeros(run.shape[0])
            for (g, total), panel in zip(raw, plan.panels):
                if panel.side > 0:
                    base = acc - run / 2
                else:
                    base = acc + total - run / 2
                self.panel_data.append((g, base))
                acc = acc + total

    def values(self, x_list) -> np.ndarray:
        """eps(f_k wf) at arbitrary points (slow path, used by tests and J^-1 evaluation)."""
        out = []
        plan = self.plan
        with working(plan.bits):
            for x in x_list:
                x = fr(num(x)) if not isinstance(x, gmpy2.mpfr) else x
                if x <= plan.panels[0].lo:
                    out.append(-self.total / 2)
                    continue
                if x >= plan.panels[-1].hi:
                    out.append(self.total / 2)
                    continue
                for i, panel in enumerate(plan.panels):
                    if panel.lo <= x <= panel.hi:
                        break
                g, base = self.panel_data[i]
                ref = plan.ref(panel)
                h = fr(panel.half)
                dist = abs(x - fr(panel.anchor))
                s = dist / h - 1
                L = fr_row_antideriv(ref, s, plan.bits)
                G = L.dot(g)
                out.append(base + panel.side * dist ** (fr(num(panel.e)) + 1) * G)
        return np.array(out, dtype=object)

    def pair(self, vvals: Callable) -> np.ndarray:
        """S[k, j] = int v_j(x) wf(x) eps(f_k wf)(x) dx."""
        plan = self.plan
        S = None
        with working(plan.bits):
            for i, panel in enumerate(plan.panels):
                g, base = self.panel_data[i]
                ref = plan.ref(panel)
                pe = plan.nodes(i, "e")
                ve = np.asarray(vvals(pe.x), dtype=object)
                if ve.ndim == 1:
                    ve = ve[:, None]
                Iv = pe.wts.dot(ve)  # int_panel v_j wf
                pc = plan.nodes(i, "c")
                vc = np.asarray(vvals(pc.x), dtype=object)
                if vc.ndim == 1:
                    vc = vc[:, None]
                G = ref.L_c.dot(g)  # [nc, K]
                # pc.wts already carry h^(2e+2) and the smooth part of wf
                cum = (G * pc.wts[:, None]).T.dot(vc)  # [K, J]
                term = np.outer(base, Iv) + panel.side * cum
                S = term if S is None else S + term
        return S

    def pv_pair(self, sing_index: int) -> np.ndarray:
        """T[k] = p.v. int eps(f_k wf)(x) wf(x) / (x - lam) dx for the singular point lam."""
        plan = self.plan
        lam = plan.wf.lams[sing_index]
        e_l = plan.wf.exps[sing_index]
        with working(plan.bits):
            lt = fr(num(lam))
            delta = fr(_window(plan, lam))
            eps_lam = self.values([lt])[0]
            wl = fr(plan.wf.value(num(lam), exclude=sing_index))
            tiny = gmpy2.mpfr(2) ** (-plan.bits // 2)
            T = None
            for i, panel in enumerate(plan.panels):
                g, base = self.panel_data[i]
                pe = plan.nodes(i, "e")
                inside = panel.lo >= lt - delta - tiny and panel.hi <= lt + delta + tiny
                if panel.sing == sing_index:
                    ref = plan.ref(panel)
                    # constant part: eps(lam) * (smooth(x) - smooth(lam)) |x-lam|^e / (x-lam)
                    sgn = panel.side
                    const = zeros(1)[0]
                    for q in range(len(pe.x)):
                        const += ref.w_e[q] * (pe.smooth[q] - wl) / pe.dist[q]
                    const = const * fr(panel.half) ** (fr(num(panel.e)) + 1) * sgn
                    term = eps_lam * const
                    # cumulative part: side*|x-lam|^(e+1) G(x) * smooth * |x-lam|^e / (x-lam)
                    pp = plan.nodes(i, "p")
                    G = ref.L_p.dot(g)
                    scale_p = fr(panel.half) ** (2 * fr(num(panel.e)) + 1)
                    wp = ref.w_p * pp.smooth * scale_p
                    cum = (G * wp[:, None]).sum(axis=0) * sgn * panel.side
                    term = term + cum
                elif inside:
                    # regular panel inside the window: subtract the local constant term
                    vals = self._eps_on_nodes(i, pe)
                    term = zeros(vals.shape[1])
                    for q in range(len(pe.x)):
                        d = pe.x[q] - lt
                        loc = wl * abs(d) ** fr(num(e_l)) / d
                        term = term + (pe.wts[q] / d) * vals[q] - eps_lam * loc * self._ref_weight(i, q)
                elif panel.sing is not None:
                    # another singular point: split eps into its constant and |x - s|^(e+1) parts
                    ref = plan.ref(panel)
                    inv = np.array([1 / (xq - lt) for xq in pe.x], dtype=object)
                    term = base * pe.wts.dot(inv)
                    pc = plan.nodes(i, "c")
                    G = ref.L_c.dot(g)
                    invc = np.array([w / (xq - lt) for w, xq in zip(pc.wts, pc.x)], dtype=object)
                    term = term + panel.side * invc.dot(G)
                else:
                    vals = self._eps_on_nodes(i, pe)
                    inv = np.array([1 / (xq - lt) for xq in pe.x], dtype=object)
                    term = (pe.wts * inv).dot(vals)
                T = term if T is None else T + term
        return T

    def _ref_weight(self, i, q):
        plan = self.plan
        panel = plan.panels[i]
        ref = plan.ref(panel)
        return ref.w_e[q] * fr(panel.half) ** (fr(num(panel.e)) + 1)

    def _eps_on_nodes(self, i, pe) -> np.ndarray:
        """eps values at the e-rule nodes of panel i."""
        plan = self.plan
        panel = plan.panels[i]
        key = ("Le", panel.e, plan.order)
        L = _LE_CACHE.get((key, plan.bits))
        if L is None:
            L = _antideriv_matrix_cached(plan.order, panel.e, plan.bits)
            _LE_CACHE[(key, plan.bits)] = L
        g, base = self.panel_data[i]
        G = L.dot(g)
        ee = fr(num(panel.e)) + 1
        powd = np.array([d**ee for d in pe.dist], dtype=object)
        return base[None, :] + panel.side * G * powd[:, None]


_LE_CACHE: dict = {}


@lru_cache(maxsize=128)
def _antideriv_matrix_cached(n: int, e, bits: int):
    ref = ref_panel(n, e, bits)
    with working(bits + 20):
        L = _antideriv_matrix(n, e, ref.t_e, ref.t_e, ref.w_e)
    with working(bits):
        return np.vectorize(gmpy2.mpfr, otypes=[object])(L)


def fr_row_antideriv(ref: _RefPanel, s, bits: int) -> np.ndarray:
    with working(bits + 20):
        L = _antideriv_matrix(ref.n, ref.e, [s], ref.t_e, ref.w_e)
    return L[0]


def sign_transform(f: Callable, plan: PanelPlan, x):
    """eps(f)(x) = 1/2 (int_{-inf}^x f - int_x^inf f) for f = g * wf.

    ``f`` here is the cofactor g: the transform is taken of g(x) times the
    plan's weight function.  Use a plan with a trivial weight to transform
    arbitrary integrable functions.
    """
    ker = SignKernel(plan, _vectorize(f))
    with working(plan.bits):
        return mf(ker.values([x])[0][0])


# ---------------------------------------------------------------------------
# Double principal value with the sign kernel
# ---------------------------------------------------------------------------

def _check_exponents(a, b):
    if not (a > -1 and b > -1 and a + b > -1):
        raise ValueError("need a > -1, b > -1 and a + b > -1")


def pv_double_sign(h: Callable, a, b, support=1, dps: int = 30):
    """Symmetric-eps limit of int int |x|^a |y|^b h(x,y) sign(x-y) / (x y) dx dy.

    Reflecting both variables folds the region min(|x|,|y|) > eps onto the
    positive quadrant, where the folded integrand vanishes on the axes.  The
    quadrant is split along the diagonal where sign(x-y) jumps.
    """
    _check_exponents(a, b)
    with mpmath.workdps(dps):
        a = num(a)
        b = num(b)
        L = num(support)

        def folded(x, y):
            return (
                h(x, y) * mpmath.sign(x - y)
                - h(-x, y) * mpmath.sign(-x - y)
                - h(x, -y) * mpmath.sign(x + y)
                + h(-x, -y) * mpmath.sign(y - x)
            )

        def inner_lower(y):  # x < y
            if y == 0:
                return mpf(0)
            return mpmath.quad(lambda x: x ** (a - 1) * folded(x, y), [0, y])

        def inner_upper(y):  # x > y
            return mpmath.quad(lambda x: x ** (a - 1) * folded(x, y), [y, L])

        lower = mpmath.quad(lambda y: y ** (b - 1) * inner_lower(y), [0, L])
        upper = mpmath.quad(lambda y: y ** (b - 1) * inner_upper(y), [0, L])
        return lower + upper


def _pv_1d(g: Callable, a, L, breaks=()):
    """p.v. int_{-L}^{L} |x|^a g(x) / x dx via folding onto (0, L)."""
    pts = sorted({mpf(0), L} | {abs(mpf(t)) for t in breaks if 0 < abs(mpf(t)) < L})
    return mpmath.quad(lambda x: x ** (a - 1) * (g(x) - g(-x)), pts)


def iterated_double_sign(h: Callable, a, b, order: str = "xy", support=1, dps: int = 30):
    """Iterated principal values: 'xy' integrates x first, 'yx' integrates y first."""
    _check_exponents(a, b)
    with mpmath.workdps(dps):
        a = num(a)
        b = num(b)
        L = num(support)
        if order == "xy":
            def outer(y):
                return _pv_1d(lambda x: h(x, y) * mpmath.sign(x - y), a, L, breaks=(y,))

            return _pv_1d(outer, b, L)
        if order == "yx":
            def outer(x):
                return _pv_1d(lambda y: h(x, y) * mpmath.sign(x - y), b, L, breaks=(x,))

            return _pv_1d(outer, a, L)
        raise ValueError("order must be 'xy' or 'yx'")


def _bump(t):
    return mpmath.exp(-1 / (1 - t * t)) if abs(t) < 1 else mpf(0)


def fubini_family() -> list:
    """Ten (label, h, a, b) cases with smooth compactly supported h and nonzero integrals."""

    def wrap(g):
        return lambda x, y: g(x, y) * _bump(x) * _bump(y)

    return [
        ("y", wrap(lambda x, y: y), 0, 0),
        ("x", wrap(lambda x, y: x), 0, 0),
        ("1+x+2y", wrap(lambda x, y: 1 + x + 2 * y), 0.3, 0.2),
        ("sin(x-2y)", wrap(lambda x, y: mpmath.sin(x - 2 * y)), 0.5, 0.3),
        ("x+y^2", wrap(lambda x, y: x + y * y), -0.3, 0.6),
        ("(1+y)exp(xy)", wrap(lambda x, y: (1 + y) * mpmath.exp(x * y)), 0.6, -0.4),
        ("x-y/2", wrap(lambda x, y: x - y / 2), 1.0, 0.0),
        ("sin(3x+y)", wrap(lambda x, y: mpmath.sin(3 * x + y)), 0.25, 0.75),
        ("(1+x)(1-y)", wrap(lambda x, y: (1 + x) * (1 - y)), 0.0, 0.4),
        ("y-x^3", wrap(lambda x, y: y - x**3), -0.2, -0.2),
    ]


def fubini_check(cases=None, dps: int = 12) -> list:
    """Rows {case, a, b, symmetric, xy, yx, max_diff} comparing the three evaluations."""
    rows = []
    for label, h, a, b in cases if cases is not None else fubini_family():
        with mpmath.workdps(dps):
            sym = pv_double_sign(h, a, b, dps=dps)
            xy = iterated_double_sign(h, a, b, "xy", dps=dps)
            yx = iterated_double_sign(h, a, b, "yx", dps=dps)
            diff = max(abs(sym - xy), abs(sym - yx), abs(xy - yx))
        rows.append({"case": label, "a": a, "b": b, "symmetric": sym, "xy": xy, "yx": yx, "max_diff": diff})
    return rows
