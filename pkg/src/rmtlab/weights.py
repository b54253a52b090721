"""Weight model: w(x) = exp(-2N x^2) exp(2 W(x)) prod |x - lam_i|^(2 alpha_i).

The potential W coincides with a polynomial W0 on (-1-eps, 1+eps).  When a
tail is requested W = W0 * chi, where chi is a smooth cutoff equal to one on
[-1-eps, 1+eps] and vanishing outside [-1-2eps, 1+2eps]; the difference
E = W - W0 is the tail.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from dataclasses import dataclass, replace
from typing import Sequence

import mpmath
from mpmath import mpf

__all__ = [
    "num",
    "exact",
    "Singularity",
    "TailSpec",
    "WeightSpec",
    "smooth_step",
    "weight_eval",
    "split_potential",
]


def num(x):
    """Parse a user-facing number at the working precision (floats via their repr)."""
    if isinstance(x, float):
        return mpf(repr(x))
    if isinstance(x, Fraction):
        return mpf(x.numerator) / x.denominator
    return mpf(x)


def exact(x) -> Fraction:
    """Exact rational value of a decimal input, so exponent arithmetic stays exact."""
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def _step_kernel(t):
    return mpmath.exp(-1 / t) if t > 0 else mpf(0)


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, exp(-1/t) based in between."""
    t = mpf(t)
    if t <= 0:
        return mpf(0)
    if t >= 1:
        return mpf(1)
    a = _step_kernel(t)
    b = _step_kernel(1 - t)
    return a / (a + b)


def smooth_step_deriv(t):
    t = mpf(t)
    if t <= 0 or t >= 1:
        return mpf(0)
    a = _step_kernel(t)
    b = _step_kernel(1 - t)
    da = a / t**2
    db = -b / (1 - t) ** 2
    return (da * (a + b) - a * (da + db)) / (a + b) ** 2


@dataclass(frozen=True)
class Singularity:
    lam: float
    alpha: float


@dataclass(frozen=True)
class TailSpec:
    """Cutoff that turns W0 into a compactly supported W."""

    epsilon: float = 0.05

    @property
    def inner(self):
        return 1 + num(self.epsilon)

    @property
    def outer(self):
        return 1 + 2 * num(self.epsilon)

    def mollifier(self, x):
        """Equal to 1 on |x| <= 1+eps and 0 on |x| >= 1+2eps."""
        eps = num(self.epsilon)
        return smooth_step((self.outer - abs(num(x))) / eps)

    def mollifier_deriv(self, x):
        x = num(x)
        eps = num(self.epsilon)
        sgn = 1 if x >= 0 else -1
        return -sgn * smooth_step_deriv((self.outer - abs(x)) / eps) / eps


@dataclass(frozen=True)
class WeightSpec:
    """Description of the weight w(x; N, W, {lam_i}, {alpha_i}).

    ``poly`` holds W0 in ascending degree.  ``singularities`` are listed with
    strictly decreasing positions inside (-1, 1).
    """

    n: int
    poly: tuple = ()
    singularities: tuple = ()
    epsilon: float = 0.05
    tail: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "poly", tuple(self.poly))
        sings = tuple(
            s if isinstance(s, Singularity) else Singularity(*s) for s in self.singularities
        )
        object.__setattr__(self, "singularities", sings)
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        lams = [s.lam for s in sings]
        for s in sings:
            if not -1 < s.lam < 1:
                raise ValueError(f"singularity {s.lam} outside (-1, 1)")
            if not s.alpha > -0.5:
                raise ValueError(f"exponent alpha={s.alpha} must exceed -1/2")
        if any(a <= b for a, b in zip(lams, lams[1:])):
            raise ValueError("singularities must be strictly decreasing")
        deg = self.poly_degree
        if not self.tail and deg >= 2:
            lead = self.poly[deg]
            if deg > 2 or lead >= self.n:
                raise ValueError("untruncated potential makes the weight non-integrable; set tail=True")

    # ---- derived quantities -------------------------------------------------
    @property
    def poly_degree(self) -> int:
        deg = len(self.poly) - 1
        while deg >= 0 and self.poly[deg] == 0:
            deg -= 1
        return max(deg, 0)

    @property
    def has_potential(self) -> bool:
        return any(c != 0 for c in self.poly)

    @property
    def m(self) -> int:
        return len(self.singularities)

    @property
    def lams(self) -> list:
        return [s.lam for s in self.singularities]

    @property
    def alphas(self) -> list:
        return [s.alpha for s in self.singularities]

    @property
    def total_alpha(self):
        """The sum of all exponents."""
        return sum(num(s.alpha) for s in self.singularities)

    @property
    def block_dim(self) -> int:
        """d = max(1, deg W0 - 1)."""
        return max(1, self.poly_degree - 1)

    @property
    def tail_spec(self) -> TailSpec | None:
        return TailSpec(self.epsilon) if self.tail else None

    @property
    def has_tail(self) -> bool:
        return self.tail and self.has_potential

    # ---- potential ----------------------------------------------------------
    def poly_value(self, x):
        return mpmath.polyval(list(reversed([num(c) for c in self.poly])) or [0], x)

    def poly_deriv(self, x):
        coeffs = [k * num(c) for k, c in enumerate(self.poly)][1:]
        if not coeffs:
            return mpf(0)
        return mpmath.polyval(list(reversed(coeffs)), x)

    def potential(self, x):
        """Full potential W (the polynomial times the cutoff when a tail is set)."""
        if not self.has_potential:
            return mpf(0)
        val = self.poly_value(x)
        if self.tail:
            val = val * self.tail_spec.mollifier(x)
        return val

    def potential_deriv(self, x):
        if not self.has_potential:
            return mpf(0)
        if not self.tail:
            return self.poly_deriv(x)
        ts = self.tail_spec
        return self.poly_deriv(x) * ts.mollifier(x) + self.poly_value(x) * ts.mollifier_deriv(x)

    def tail_value(self, x):
        """E(x) = W(x) - W0(x)."""
        if not self.has_tail:
            return mpf(0)
        return self.poly_value(x) * (self.tail_spec.mollifier(x) - 1)

    def tail_deriv(self, x):
        if not self.has_tail:
            return mpf(0)
        return self.potential_deriv(x) - self.poly_deriv(x)

    # ---- variants -----------------------------------------------------------
    def with_n(self, n: int) -> "WeightSpec":
        return replace(self, n=n)

    def scaled(self, potential_factor=1, alpha_factor=1) -> "WeightSpec":
        return replace(
            self,
            poly=tuple(c * potential_factor for c in self.poly),
            singularities=tuple(Singularity(s.lam, s.alpha * alpha_factor) for s in self.singularities),
        )

    def mirrored(self) -> "WeightSpec":
        """Spec of x -> w(-x)."""
        poly = tuple(c * (-1) ** k for k, c in enumerate(self.poly))
        sings = tuple(Singularity(-s.lam, s.alpha) for s in reversed(self.singularities))
        return replace(self, poly=poly, singularities=sings)

    def is_even(self) -> bool:
        return self == self.mirrored()

    # ---- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "poly": list(self.poly),
            "singularities": [{"lambda": s.lam, "alpha": s.alpha} for s in self.singularities],
            "epsilon": self.epsilon,
            "tail": self.tail,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "WeightSpec":
        return cls(
            n=int(d["n"]),
            poly=tuple(d.get("poly", ())),
            singularities=tuple(
                Singularity(float(s["lambda"]), float(s["alpha"])) for s in d.get("singularities", ())
            ),
            epsilon=float(d.get("epsilon", 0.05)),
            tail=bool(d.get("tail", False)),
        )

    @classmethod
    def from_json(cls, text: str) -> "WeightSpec":
        return cls.from_dict(json.loads(text))

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]


def make_spec(n: int, lams: Sequence[float] = (), alphas: Sequence[float] = (), poly=(), **kw) -> WeightSpec:
    """Convenience constructor; sorts singularities into decreasing order."""
    pairs = sorted(zip(lams, alphas), key=lambda p: -p[0])
    return WeightSpec(n=n, poly=tuple(poly), singularities=tuple(Singularity(l, a) for l, a in pairs), **kw)


def weight_eval(spec: WeightSpec, x):
    """Evaluate w(x) = exp(-2N x^2 + 2 W(x)) prod |x - lam_i|^(2 alpha_i)."""
    x = num(x)
    val = mpmath.exp(-2 * spec.n * x * x + 2 * spec.potential(x))
    for s in spec.singularities:
        d = abs(x - num(s.lam))
        if d == 0:
            if s.alpha < 0:
                raise ZeroDivisionError(f"weight is singular at lambda={s.lam}")
            if s.alpha > 0:
                return mpf(0)
            continue
        val *= d ** (2 * num(s.alpha))
    return val


def split_potential(spec: WeightSpec):
    """Return callables (W0, E) with W = W0 + E."""
    return spec.poly_value, spec.tail_value
