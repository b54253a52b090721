"""Orthonormal polynomials of the weight w, the Christoffel-Darboux kernel and Pi_N.

The recurrence is

    x p_j = b_j p_{j+1} + a_j p_j + b_{j-1} p_{j-1},

with p_j = kappa_j (x^j + beta_j x^(j-1) + ...), b_j = kappa_j / kappa_{j+1} and
a_j = beta_j - beta_{j+1}.  Coefficients come from the Stieltjes procedure run
on the panel discretization of w.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import gmpy2
import mpmath
import numpy as np
from mpmath import mpf

from .mpx import Precision, as_bits, decimal_str, fr, mf, working, zeros
from .numerics import plan_for
from .weights import WeightSpec, num

__all__ = [
    "OrthoBasis",
    "PrecisionExhausted",
    "build_basis",
    "eval_pair",
    "cd_kernel",
    "project",
]


class PrecisionExhausted(RuntimeError):
    """The recurrence lost its significant digits; more mantissa bits are needed."""


@dataclass(frozen=True)
class OrthoBasis:
    """Recurrence data of p_0..p_K (a_j, b_j for j < K; kappa_j, beta_j for j <= K)."""

    spec: WeightSpec
    K: int
    a: tuple
    b: tuple
    kappa: tuple
    beta_sub: tuple
    bits: int
    residual: object = None
    _fr: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    # ---- evaluation ---------------------------------------------------------
    def _coeffs_fr(self):
        if "ab" not in self._fr:
            with working(self.bits):
                self._fr["ab"] = ([fr(v) for v in self.a], [fr(v) for v in self.b], fr(self.kappa[0]))
        return self._fr["ab"]

    def values(self, x, upto: int | None = None) -> list:
        """[p_0(x), ..., p_upto(x)] as mpf."""
        upto = self.K if upto is None else upto
        self._check(upto)
        x = mpf(x)
        p = [mpf(self.kappa[0])]
        prev = mpf(0)
        for j in range(upto):
            bm = self.b[j - 1] if j > 0 else 0
            nxt = ((x - self.a[j]) * p[j] - bm * prev) / self.b[j]
            prev = p[j]
            p.append(nxt)
        return p

    def values_at(self, xs: np.ndarray, upto: int | None = None) -> np.ndarray:
        """Array [len(xs), upto+1] of p_j at mpfr nodes (gmpy2 arithmetic)."""
        upto = self.K if upto is None else upto
        self._check(upto)
        a, b, k0 = self._coeffs_fr()
        out = np.empty((len(xs), upto + 1), dtype=object)
        with working(self.bits):
            for q, x in enumerate(xs):
                p0 = k0
                pm = gmpy2.mpfr(0)
                out[q, 0] = p0
                for j in range(upto):
                    bm = b[j - 1] if j > 0 else 0
                    p1 = ((x - a[j]) * p0 - bm * pm) / b[j]
                    pm, p0 = p0, p1
                    out[q, j + 1] = p1
        return out

    def derivs(self, x, upto: int | None = None) -> tuple:
        """(values, derivatives) of p_0..p_upto at x."""
        upto = self.K if upto is None else upto
        self._check(upto)
        x = mpf(x)
        p = [mpf(self.kappa[0])]
        d = [mpf(0)]
        for j in range(upto):
            bm = self.b[j - 1] if j > 0 else 0
            pm = p[j - 1] if j > 0 else 0
            dm = d[j - 1] if j > 0 else 0
            p.append(((x - self.a[j]) * p[j] - bm * pm) / self.b[j])
            d.append((p[j] + (x - self.a[j]) * d[j] - bm * dm) / self.b[j])
        return p, d

    def monomial_coeffs(self, j: int) -> list:
        """Ascending monomial coefficients of p_j (for small j; ill-conditioned beyond)."""
        self._check(j)
        prev = [mpf(0)]
        cur = [mpf(self.kappa[0])]
        for i in range(j):
            nxt = [mpf(0)] * (i + 2)
            for k, c in enumerate(cur):
                nxt[k + 1] += c
                nxt[k] -= self.a[i] * c
            if i > 0:
                for k, c in enumerate(prev):
                    nxt[k] -= self.b[i - 1] * c
            nxt = [c / self.b[i] for c in nxt]
            prev, cur = cur, nxt
        return cur

    # ---- coefficient-space algebra -------------------------------------------
    def mul_x(self, c: Sequence) -> list:
        """Orthonormal coefficients of x*f from those of f (length grows by one)."""
        c = list(c)
        if len(c) > self.K:
            raise ValueError("degree overflow in mul_x")
        out = [mpf(0)] * (len(c) + 1)
        for k, ck in enumerate(c):
            if ck == 0:
                continue
            out[k + 1] += self.b[k] * ck
            out[k] += self.a[k] * ck
            if k > 0:
                out[k - 1] += self.b[k - 1] * ck
        return out

    def from_monomial(self, coeffs: Sequence) -> list:
        """Orthonormal coefficients of a polynomial given in ascending monomial form."""
        coeffs = [num(c) if isinstance(c, float) else mpf(c) for c in coeffs]
        if len(coeffs) - 1 > self.K:
            raise ValueError("degree overflow")
        # Horner in coefficient space
        res = [mpf(0)]
        for c in reversed(coeffs):
            res = self.mul_x(res)[: max(len(res) + 1, 1)]
            res[0] += c / self.kappa[0]
        while len(res) > 1 and res[-1] == 0:
            res.pop()
        return res

    def _check(self, j: int) -> None:
        if j < 0 or j > self.K:
            raise IndexError(f"polynomial index {j} outside 0..{self.K}")

    # ---- export -------------------------------------------------------------
    def to_dict(self) -> dict:
        with working(self.bits):
            return {
                "spec": self.spec.to_dict(),
                "K": self.K,
                "bits": self.bits,
                "a": [decimal_str(v) for v in self.a],
                "b": [decimal_str(v) for v in self.b],
                "kappa": [decimal_str(v) for v in self.kappa],
                "beta_sub": [decimal_str(v) for v in self.beta_sub],
            }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "OrthoBasis":
        bits = int(d["bits"])
        with working(bits):
            conv = lambda xs: tuple(mpf(x) for x in xs)  # noqa: E731
            return cls(
                WeightSpec.from_dict(d["spec"]),
                int(d["K"]),
                conv(d["a"]),
                conv(d["b"]),
                conv(d["kappa"]),
                conv(d["beta_sub"]),
                bits,
            )


def _stieltjes(xs: np.ndarray, ws: np.ndarray, K: int, bits: int):
    """Orthonormal Stieltjes procedure on a discrete measure (mpfr arrays)."""
    with working(bits):
        mu0 = gmpy2.fsum(list(ws))
        p0 = np.array([1 / gmpy2.sqrt(mu0)] * len(xs), dtype=object)
        pm = zeros(len(xs))
        a, b = [], []
        last = [p0]
        for j in range(K):
            wp = ws * p0
            aj = gmpy2.fsum(list(wp * p0 * xs))
            r = (xs - aj) * p0 - (b[-1] * pm if b else 0)
            bj = gmpy2.sqrt(gmpy2.fsum(list(ws * r * r)))
            if not bj > 0:
                raise PrecisionExhausted("vanishing recurrence coefficient")
            a.append(aj)
            b.append(bj)
            pm, p0 = p0, r / bj
            last.append(p0)
        # orthonormality residual against the last few polynomials
        resid = gmpy2.mpfr(0)
        P = np.array(last, dtype=object)
        tail = range(max(0, K - 3), K + 1)
        for i in tail:
            row = P.dot(ws * P[i])
            for j, v in enumerate(row):
                resid = max(resid, abs(v - (1 if i == j else 0)))
        return a, b, mu0, resid


def build_basis(spec: WeightSpec, K: int, prec: Precision | int | None = None, max_bits: int = 4096) -> OrthoBasis:
    """Recurrence coefficients of p_0..p_K for the weight of ``spec``.

    The orthonormality residual must stay below 2^(-bits/4); otherwise the
    computation is repeated with a doubled mantissa.
    """
    if int(K) != K or K < 1:
        raise ValueError("K must be a positive integer")
    bits = as_bits(prec)
    work = bits
    while True:
        guard = work + 32
        plan = plan_for(spec, "w", guard, 2 * K + 4)
        xs, ws = plan.all_nodes("e")
        a, b, mu0, resid = _stieltjes(xs, ws, K, guard)
        with working(guard):
            ok = resid < gmpy2.mpfr(2) ** (-(bits // 4))
        if ok:
            break
        if work * 2 > max_bits:
            raise PrecisionExhausted(f"orthonormality residual {float(resid):.3e} at {work} bits")
        work *= 2
    with working(bits):
        a_m = tuple(mf(v) for v in a)
        b_m = tuple(mf(v) for v in b)
        kappa = [1 / mpmath.sqrt(mf(mu0))]
        for bj in b_m:
            kappa.append(kappa[-1] / bj)
        beta = [mpf(0)]
        for aj in a_m:
            beta.append(beta[-1] - aj)
        return OrthoBasis(spec, int(K), a_m, b_m, tuple(kappa), tuple(beta), bits, mf(resid))


def eval_pair(basis: OrthoBasis, n: int, k: int, x) -> tuple:
    """(p_{n-k}(x), p_{n-k-1}(x))."""
    j = n - k
    if j < 1 or j > basis.K:
        raise IndexError(f"index {j} outside 1..{basis.K}")
    with working(basis.bits):
        p = basis.values(x, j)
        return p[j], p[j - 1]


def cd_kernel(basis: OrthoBasis, n: int, x, y) -> mpf:
    """K_n(x, y) = sum_{i<n} p_i(x) p_i(y) in Christoffel-Darboux form."""
    if n < 1 or n > basis.K:
        raise IndexError(f"kernel index {n} outside 1..{basis.K}")
    with working(basis.bits):
        x = mpf(x)
        y = mpf(y)
        bn = basis.b[n - 1]  # kappa_{n-1} / kappa_n
        if x == y:
            p, d = basis.derivs(x, n)
            return bn * (d[n] * p[n - 1] - d[n - 1] * p[n])
        px = basis.values(x, n)
        py = basis.values(y, n)
        return bn * (px[n] * py[n - 1] - px[n - 1] * py[n]) / (x - y)


def project(basis: OrthoBasis, n: int, f: Sequence) -> tuple:
    """Split orthonormal coefficients f into (Pi_n f, (Pi_n)_+ f)."""
    f = [mpf(c) for c in f]
    if len(f) - 1 > basis.K:
        raise ValueError("degree overflow")
    low = f[:n] + [mpf(0)] * max(0, len(f) - n)
    high = [mpf(0)] * min(n, len(f)) + f[n:]
    return low[: len(f)], high[: len(f)]
