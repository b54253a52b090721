"""Chebyshev construction of the log-correlated field and the measures built on it.

X_M(x) = sum_{k<=M} Z_k T_k(x) / sqrt(k) has covariance sum_{k<=M} T_k(x) T_k(y) / k,
which tends to -1/2 log(2|x - y|).  The matrix field is
X_{N,M,beta}(x) = -sum_{k<=M} (2/k) T_k(x) Tr T~_k(A) with T~_k = T_k times a
cutoff equal to one on [-1-eps, 1+eps] and zero outside [-1-2eps, 1+2eps].
Measures are evaluated by trapezoidal quadrature on a fixed grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.special import logsumexp
from scipy.stats import ks_2samp

from .ensembles import _eigs, trial_rng, tridiagonal_model

__all__ = [
    "ALPHA_MAX",
    "default_grid",
    "bump",
    "cheb",
    "cheb_tail",
    "mollifier",
    "cov_partial",
    "cov_limit",
    "cov_partial_error_fit",
    "variance_profile",
    "GmcField",
    "sample_field",
    "measure_weights",
    "field_from_spectrum",
    "measure_integral",
    "ChannelSummary",
    "GmcExperimentReport",
    "coupling_experiment",
    "derive_seed",
]

ALPHA_MAX = {1: 2**-0.5, 2: 2**0.5, 4: 2**0.5}


def default_grid(points: int = 512) -> np.ndarray:
    return np.linspace(-0.95, 0.95, points)


def bump(x, radius: float = 0.8, normalized: bool = True) -> np.ndarray:
    """Smooth bump exp(-1/(1 - (x/r)^2)) on |x| < r, scaled to unit mass when ``normalized``."""
    x = np.asarray(x, dtype=float)
    u = x / radius
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    if normalized:
        out /= _bump_mass(radius)
    return out


@lru_cache(maxsize=None)
def _bump_mass(radius: float) -> float:
    from scipy.integrate import quad

    val, _ = quad(lambda t: math.exp(-1.0 / (1.0 - (t / radius) ** 2)), -radius, radius, epsabs=1e-14, epsrel=1e-13)
    return val


def cheb(k: int, x) -> np.ndarray:
    """T_k(x) on the whole real line (cos/cosh forms)."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    inner = np.abs(x) <= 1
    out[inner] = np.cos(k * np.arccos(x[inner]))
    xo = x[~inner]
    out[~inner] = np.sign(xo) ** k * np.cosh(k * np.arccosh(np.abs(xo)))
    return out


def _smooth_step(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def mollifier(x, eps: float = 0.05) -> np.ndarray:
    """1 on |x| <= 1+eps, 0 on |x| >= 1+2eps, smooth in between."""
    x = np.asarray(x, dtype=float)
    return _smooth_step((1 + 2 * eps - np.abs(x)) / eps)


def cheb_tail(k: int, x, eps: float = 0.05) -> np.ndarray:
    """Compactly supported T~_k = T_k times the cutoff."""
    x = np.asarray(x, dtype=float)
    chi = mollifier(x, eps)
    out = np.zeros_like(x)
    live = chi > 0
    out[live] = cheb(k, x[live]) * chi[live]
    return out


def cov_partial(M: int, x, y) -> np.ndarray:
    """sum_{k=1}^{M} T_k(x) T_k(y) / k for x, y in [-1, 1]."""
    if M < 0:
        raise ValueError("M must be nonnegative")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(x) > 1) or np.any(np.abs(y) > 1):
        raise ValueError("x and y must lie in [-1, 1]")
    if M == 0:
        return np.zeros(np.broadcast(x, y).shape)
    k = np.arange(1, M + 1, dtype=float)
    tx = np.cos(np.multiply.outer(np.arccos(x), k))
    ty = np.cos(np.multiply.outer(np.arccos(y), k))
    return np.sum(tx * ty / k, axis=-1)


def cov_limit(x, y) -> np.ndarray:
    """-1/2 log(2|x - y|)."""
    return -0.5 * np.log(2 * np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))


def cov_partial_error_fit(x: float, y: float, Ms=(100, 1000, 10000), window: float = 0.25) -> dict:
    """Envelope of |cov_partial - cov_limit| over [M, (1+window) M] and the fit err ~ C M^s.

    The tail sum oscillates in M, so each error is the largest value over a
    short window; C is the largest M * err.
    """
    top = int(max(Ms) * (1 + window)) + 1
    theta, phi = math.acos(x), math.acos(y)
    k = np.arange(1, top + 1, dtype=float)
    partial = np.cumsum(np.cos(k * theta) * np.cos(k * phi) / k)
    err_all = np.abs(partial - float(cov_limit(x, y)))
    errs = [float(np.max(err_all[M - 1 : int(M * (1 + window))])) for M in Ms]
    slope = float(np.polyfit(np.log(Ms), np.log(errs), 1)[0])
    C = max(M * e for M, e in zip(Ms, errs))
    return {"M": list(Ms), "error": errs, "C": C, "slope": slope}


def variance_profile(M: int, grid) -> np.ndarray:
    """sum_{k=1}^{M} T_k(x)^2 / k."""
    g = np.asarray(grid, dtype=float)
    return cov_partial(M, g, g)


def _cheb_table(M: int, grid: np.ndarray) -> np.ndarray:
    k = np.arange(1, M + 1, dtype=float)
    return np.cos(np.multiply.outer(k, np.arccos(grid)))


@dataclass(frozen=True)
class GmcField:
    m_trunc: int
    grid: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    variance_profile: np.ndarray = field(repr=False)


def derive_seed(seed: int, *tags: int) -> int:
    """64-bit seed for a tagged sub-experiment."""
    state = np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(t) for t in tags]]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def sample_field(M: int, grid=None, seed: int = 0, trial: int = 0) -> GmcField:
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    z = trial_rng(seed, trial).standard_normal(M)
    if M == 0:
        vals = np.zeros_like(grid)
    else:
        vals = (z / np.sqrt(np.arange(1, M + 1))) @ _cheb_table(M, grid)
    return GmcField(M, grid, z, vals, variance_profile(M, grid))


def measure_weights(fld: GmcField, alpha: float) -> np.ndarray:
    """exp(alpha X_M - alpha^2/2 E X_M^2) on the grid."""
    if not -2 < alpha < 2:
        raise ValueError("alpha must lie in (-2, 2)")
    return np.exp(alpha * fld.values - 0.5 * alpha**2 * fld.variance_profile)


def _traces(eigs: np.ndarray, M: int, eps: float) -> np.ndarray:
    """[Tr T~_k(A) for k = 1..M]."""
    e = np.asarray(eigs, dtype=float)
    return np.array([float(np.sum(cheb_tail(k, e, eps))) for k in range(1, M + 1)])


def field_from_spectrum(eigs, M: int, grid=None, eps: float = 0.05) -> np.ndarray:
    """X_{N,M,beta} on the grid from a sampled spectrum."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if M == 0:
        return np.zeros_like(grid)
    coef = -2.0 / np.arange(1, M + 1) * _traces(eigs, M, eps)
    return coef @ _cheb_table(M, grid)


def _integrate(values: np.ndarray, grid: np.ndarray) -> float:
    return float(trapezoid(values, grid))


def _warn_alpha(beta: int, alpha: float) -> None:
    if abs(alpha) >= ALPHA_MAX[beta]:
        warnings.warn(f"alpha={alpha} is outside the range covered by the convergence theorem for beta={beta}", stacklevel=3)


def _channel_fields(beta, n, M, grid, eps, seed, trials) -> np.ndarray:
    table = _cheb_table(M, grid)
    k = np.arange(1, M + 1)
    out = np.empty((trials, grid.size))
    for t in range(trials):
        x = _eigs(*tridiagonal_model(beta, n, trial_rng(seed, t)))
        out[t] = (-2.0 / k * _traces(x, M, eps)) @ table
    return out


@lru_cache(maxsize=8)
def _calibration(beta, n, M, eps, seed, trials, grid: tuple) -> np.ndarray:
    """Calibration fields shared by every trial drawn with the same seed."""
    out = _channel_fields(beta, n, M, np.asarray(grid), eps, seed, trials)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _exact_denominator(beta: int, n: int, alpha: float, nodes: int, lo: float, hi: float, bits: int):
    from .skew import phi_moment
    from .weights import make_spec

    xs = np.cos(np.pi * (np.arange(nodes) + 0.5) / nodes)[::-1] * (hi - lo) / 2 + (hi + lo) / 2
    size = 2 * n if beta == 4 else n
    a = alpha if beta == 1 else alpha / 2
    vals = [float(phi_moment(beta, make_spec(size, [float(x)], [a]), bits)[1]) for x in xs]
    return CubicSpline(xs, np.log(vals))


def measure_integral(kind: str, phi: Callable | None = None, params: dict | None = None, seed: int = 0, trial: int = 0) -> float:
    """phi integrated against one draw of the requested random measure.

    kind 'gmc-approx' uses mu_{X_M, alpha}; 'matrix-truncated' uses
    exp(alpha X_{N,M,beta}) over its expectation, with the expectation taken
    from params['normalizer'] (grid values) or estimated from
    params['calibration_trials'] independent spectra; 'matrix-exact' uses
    |D_{N,beta}|^alpha over E|D_{N,beta}|^alpha with the denominator from the
    quadrature route (n <= 16).
    """
    p = dict(params or {})
    phi = phi or bump
    grid = np.asarray(p.get("grid", default_grid()), dtype=float)
    alpha = float(p.get("alpha", 0.0))
    phis = phi(grid)
    if not np.any(phis):
        return 0.0
    if kind == "gmc-approx":
        fld = sample_field(int(p.get("M", 16)), grid, seed, trial)
        return _integrate(phis * measure_weights(fld, alpha), grid)
    beta = int(p.get("beta", 2))
    n = int(p.get("n", 8))
    _warn_alpha(beta, alpha)
    if kind == "matrix-truncated":
        M = int(p.get("M", 16))
        eps = float(p.get("eps", 0.05))
        x = field_from_spectrum(_eigs(*tridiagonal_model(beta, n, trial_rng(seed, trial))), M, grid, eps)
        if "normalizer" in p:
            return _integrate(phis * np.exp(alpha * x) / np.asarray(p["normalizer"]), grid)
        cal = _calibration(beta, n, M, eps, derive_seed(seed, 0xCA1), int(p.get("calibration_trials", 2000)), tuple(grid))
        center = cal.mean(axis=0)
        log_z = logsumexp(alpha * (cal - center), axis=0) - math.log(cal.shape[0])
        return _integrate(phis * np.exp(alpha * (x - center) - log_z), grid)
    if kind == "matrix-exact":
        if alpha == 0:
            return _integrate(phis, grid)
        if n > 16:
            raise ValueError("exact denominators are only precomputed for n <= 16; use 'matrix-truncated'")
        support = grid[phis > 0]
        spline = _exact_denominator(beta, n, alpha, int(p.get("nodes", 17)), float(support[0]), float(support[-1]), int(p.get("bits", 64)))
        eigs = _eigs(*tridiagonal_model(beta, n, trial_rng(seed, trial)))
        live = phis > 0
        num = np.zeros_like(grid)
        num[live] = np.exp(alpha * np.sum(np.log(np.abs(np.subtract.outer(grid[live], eigs))), axis=1) - spline(grid[live]))
        return _integrate(phis * num, grid)
    raise ValueError(f"unknown measure kind {kind!r}")


@dataclass(frozen=True)
class ChannelSummary:
    label: str
    beta: int
    n: int
    alpha: float
    mean: float
    variance: float
    stderr: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class GmcExperimentReport:
    alpha: float
    n: int
    m_trunc: int
    trials: int
    calibration_trials: int
    samples: dict = field(repr=False)
    channels: dict = field(repr=False)
    product_mean: float = 0.0
    product_variance: float = 0.0
    product_stderr: float = 0.0
    mean_difference: float = 0.0
    difference_stderr: float = 0.0
    ks_distance: float = 0.0

    @property
    def z_score(self) -> float:
        return self.mean_difference / self.difference_stderr if self.difference_stderr else 0.0

    def means_agree(self, sigmas: float = 3.0) -> bool:
        return abs(self.mean_difference) <= sigmas * self.difference_stderr

    def summary(self) -> dict:
        return {
            "alpha": self.alpha,
            "n": self.n,
            "m_trunc": self.m_trunc,
            "trials": self.trials,
            "calibration_trials": self.calibration_trials,
            "channels": {k: v.to_dict() for k, v in self.channels.items()},
            "product_mean": self.product_mean,
            "product_variance": self.product_variance,
            "product_stderr": self.product_stderr,
            "mean_difference": self.mean_difference,
            "difference_stderr": self.difference_stderr,
            "z_score": self.z_score,
            "ks_distance": self.ks_distance,
        }


def _channel(label, beta, n, a, M, grid, eps, phis, seed, trials, cal_trials):
    cal = _channel_fields(beta, n, M, grid, eps, derive_seed(seed, beta, 1), cal_trials)
    run = _channel_fields(beta, n, M, grid, eps, derive_seed(seed, beta, 2), trials)
    center = cal.mean(axis=0)
    # log-domain normalizer: large k Chebyshev traces at edge eigenvalues overflow exp
    log_z = logsumexp(a * (cal - center), axis=0) - math.log(cal.shape[0])
    with np.errstate(over="ignore", invalid="ignore"):
        mu = trapezoid(phis * np.exp(a * (run - center) - log_z), grid, axis=1)
        mu_cal = trapezoid(phis * np.exp(a * (cal - center) - log_z), grid, axis=1)
    # delta method: both the sample mean and the estimated normalizer fluctuate
    cal_var = float(np.var(mu_cal, ddof=1)) / cal_trials
    return mu, cal_var


def coupling_experiment(
    n: int,
    M: int,
    alpha: float,
    trials: int,
    phi: Callable | None = None,
    seed: int = 0,
    calibration_trials: int | None = None,
    grid=None,
    eps: float = 0.05,
) -> GmcExperimentReport:
    """Compare mu_{2N,M,1,alpha}(phi) mu_{N,M,4,2alpha}(phi) with mu_{2N,M,2,2alpha}(phi).

    The two factors of the product come from independent spectra.  Each
    channel's normalizer E exp(a X_{N,M,beta}) is estimated from its own
    independent calibration pool, and its uncertainty enters the standard
    errors.  With phi of unit mass every channel has mean one.
    """
    if not 0 <= alpha < ALPHA_MAX[1]:
        raise ValueError("alpha must lie in [0, 2^-1/2)")
    if trials < 2 or n < 1 or M < 1:
        raise ValueError("need trials >= 2, n >= 1 and M >= 1")
    phi = phi or bump
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    cal_trials = int(calibration_trials or 4 * trials)
    phis = phi(grid)
    specs = {"goe": (1, 2 * n, alpha), "gse": (4, n, 2 * alpha), "gue": (2, 2 * n, 2 * alpha)}
    samples, chans, calv = {}, {}, {}
    for label, (beta, size, a) in specs.items():
        mu, cv = _channel(label, beta, size, a, M, grid, eps, phis, seed, trials, cal_trials)
        samples[label] = mu
        calv[label] = cv
        var = float(np.var(mu, ddof=1))
        chans[label] = ChannelSummary(label, beta, size, a, float(np.mean(mu)), var, math.sqrt(var / trials + cv))
    prod = samples["goe"] * samples["gse"]
    samples["product"] = prod
    pvar = float(np.var(prod, ddof=1))
    pse = math.sqrt(pvar / trials + calv["goe"] + calv["gse"])
    diff = float(np.mean(prod)) - chans["gue"].mean
    dse = math.sqrt(pse**2 + chans["gue"].stderr ** 2)
    if not all(np.all(np.isfinite(v)) for v in samples.values()):
        warnings.warn("non-finite measure values: M is too large for this n (edge traces overflow)", RuntimeWarning, stacklevel=2)
    # values equal to 1e-10 count as ties
    ks = float(ks_2samp(np.round(prod, 10), np.round(samples["gue"], 10)).statistic)
    return GmcExperimentReport(
        alpha, n, M, trials, cal_trials, samples, chans, float(np.mean(prod)), pvar, pse, diff, dse, ks
    )
