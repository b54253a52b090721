"""Multiprecision plumbing shared by the kernels.

Scalars exposed by the public API are :class:`mpmath.mpf`.  Bulk arrays inside
the quadrature kernels hold :class:`gmpy2.mpfr` objects in numpy object arrays,
which keeps matrix products roughly ten times cheaper than with mpmath.
"""

from __future__ import annotations

import contextlib
import os
from dataclasses import dataclass
from typing import Iterator

import gmpy2
import mpmath
import numpy as np

PREC_ENV = "RMTLAB_PREC"


def default_bits() -> int:
    """Default mantissa size, overridable through ``RMTLAB_PREC``."""
    raw = os.environ.get(PREC_ENV)
    if raw is None:
        return 256
    bits = int(raw)
    if bits < 64:
        raise ValueError(f"{PREC_ENV} must be at least 64, got {bits}")
    return bits


@dataclass(frozen=True)
class Precision:
    """Working precision in mantissa bits."""

    mantissa_bits: int = 256

    def __post_init__(self) -> None:
        if int(self.mantissa_bits) != self.mantissa_bits or self.mantissa_bits < 64:
            raise ValueError("mantissa_bits must be an integer >= 64")


def as_bits(prec: Precision | int | None) -> int:
    if prec is None:
        return default_bits()
    if isinstance(prec, Precision):
        return prec.mantissa_bits
    return Precision(int(prec)).mantissa_bits


@contextlib.contextmanager
def working(bits: int) -> Iterator[None]:
    """Set mpmath and gmpy2 precision together."""
    with mpmath.workprec(bits), gmpy2.context(gmpy2.get_context(), precision=bits):
        yield


def fr(x) -> gmpy2.mpfr:
    """Convert to mpfr at the current gmpy2 precision (exact for mpf input)."""
    if isinstance(x, mpmath.mpf):
        sign, man, exp, _ = x._mpf_
        if not man:
            return gmpy2.mpfr(str(x)) if x != 0 else gmpy2.mpfr(0)
        val = gmpy2.mul_2exp(gmpy2.mpfr(int(man)), exp)
        return -val if sign else val
    if isinstance(x, gmpy2.mpfr):
        return gmpy2.mpfr(x)
    if isinstance(x, (int, float)):
        return gmpy2.mpfr(x)
    return fr(mpmath.mpf(x))


def mf(y) -> mpmath.mpf:
    """Convert mpfr (or anything mpmath accepts) to mpf."""
    if isinstance(y, gmpy2.mpfr):
        if not gmpy2.is_finite(y):
            return mpmath.mpf(str(y))
        if y == 0:
            return mpmath.mpf(0)
        man, exp = y.as_mantissa_exp()
        return mpmath.mpf((int(man), int(exp)))
    return mpmath.mpf(y)


def fr_array(values) -> np.ndarray:
    return np.array([fr(v) for v in values], dtype=object)


def mf_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        out[idx] = mf(v)
    return out


def zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(gmpy2.mpfr(0))
    return out


def decimal_str(x, digits: int | None = None) -> str:
    """Full-precision decimal string for JSON export."""
    x = mf(x) if not isinstance(x, (mpmath.mpf, mpmath.mpc)) else x
    if digits is None:
        digits = max(17, int(mpmath.mp.prec * 0.30103))
    return mpmath.nstr(x, digits, strip_zeros=False)
