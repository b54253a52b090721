"""Sampling of Gaussian beta ensembles and Monte Carlo characteristic-polynomial moments.

An ensemble of size n has eigenvalue density proportional to
|Delta(x)|^beta prod exp(-n beta x_i^2), so the spectrum fills [-1, 1].
Spectra come from the tridiagonal beta-Hermite model; dense GOE/GUE/GSE
samplers are kept as cross-checks.  Trial t of seed s draws from its own
stream SeedSequence([s, t]), so estimates do not depend on how trials are
split between workers.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

__all__ = [
    "EnsembleSample",
    "McEstimate",
    "LogdetStats",
    "trial_rng",
    "tridiagonal_model",
    "sample_spectrum",
    "sample_dense",
    "char_moment_mc",
    "logdet_stats",
]

BETAS = (1, 2, 4)


def _check(beta: int, n: int) -> None:
    if beta not in BETAS:
        raise ValueError("beta must be 1, 2 or 4")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for one (seed, trial) pair."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(trial)]))


@dataclass(frozen=True)
class EnsembleSample:
    beta: int
    n: int
    eigenvalues: tuple
    seed: int
    trial: int = 0


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    trials: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "trials": self.trials}


@dataclass(frozen=True)
class LogdetStats:
    beta: int
    n: int
    x: float
    mean: float
    variance: float
    variance_stderr: float
    trials: int

    @property
    def var_over_log_n(self) -> float:
        return self.variance / math.log(self.n)


def tridiagonal_model(beta: int, n: int, rng: np.random.Generator) -> tuple:
    """(diagonal, off-diagonal) of a tridiagonal matrix with the ensemble's spectrum.

    The beta-Hermite model has density |Delta|^beta exp(-sum l^2 / 2); dividing
    by sqrt(2 n beta) turns the Gaussian factor into exp(-n beta x^2).
    """
    _check(beta, n)
    scale = 1.0 / math.sqrt(2.0 * n * beta)
    diag = rng.standard_normal(n) * math.sqrt(2.0)
    dof = beta * np.arange(n - 1, 0, -1, dtype=float)
    off = np.sqrt(rng.chisquare(dof)) if n > 1 else np.empty(0)
    return diag * (scale / math.sqrt(2.0)), off * (scale / math.sqrt(2.0))


def _eigs(diag: np.ndarray, off: np.ndarray) -> np.ndarray:
    if diag.size == 1:
        return diag.copy()
    return eigvalsh_tridiagonal(diag, off)


def sample_spectrum(beta: int, n: int, seed: int, trial: int = 0) -> EnsembleSample:
    """Sorted eigenvalues of one draw of the size-n ensemble."""
    d, e = tridiagonal_model(beta, n, trial_rng(seed, trial))
    return EnsembleSample(beta, n, tuple(float(v) for v in _eigs(d, e)), int(seed), int(trial))


def sample_dense(beta: int, n: int, seed: int, trial: int = 0) -> EnsembleSample:
    """Dense-matrix sampler with density exp(-n beta Tr A^2) (GSE through its 2n x 2n complex form)."""
    _check(beta, n)
    rng = trial_rng(seed, trial)
    if beta == 1:
        g = rng.standard_normal((n, n)) * math.sqrt(1.0 / (2 * n))
        a = (g + g.T) / 2
        ev = np.linalg.eigvalsh(a)
    elif beta == 2:
        s = math.sqrt(1.0 / (4 * n))
        g = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * s
        ev = np.linalg.eigvalsh((g + g.conj().T) / 2)
    else:
        # [[X, Y], [-conj Y, conj X]] with X Hermitian and Y antisymmetric; each eigenvalue appears twice
        s = math.sqrt(1.0 / (32 * n))
        gx = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * s
        x = gx + gx.conj().T
        x[np.diag_indices(n)] = rng.standard_normal(n) * math.sqrt(1.0 / (8 * n))
        gy = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * s
        y = gy - gy.T
        h = np.block([[x, y], [-y.conj(), x.conj()]])
        ev = np.linalg.eigvalsh(h)[::2]
    return EnsembleSample(beta, n, tuple(float(v) for v in np.sort(ev)), int(seed), int(trial))


def _poly_fn(potential) -> Callable[[np.ndarray], np.ndarray]:
    if potential is None:
        return lambda x: np.zeros_like(x)
    if callable(potential):
        return potential
    coeffs = [float(c) for c in potential]
    if not any(coeffs):
        return lambda x: np.zeros_like(x)
    return lambda x: np.polynomial.polynomial.polyval(x, coeffs)


def _log_terms(beta, n, exps, potential, seed, start, stop) -> np.ndarray:
    """log of prod_j e^{W(x_j)} prod_i |x_j - lam_i|^{a_i} for trials start..stop-1."""
    w = _poly_fn(potential)
    out = np.empty(stop - start)
    for idx, t in enumerate(range(start, stop)):
        x = _eigs(*tridiagonal_model(beta, n, trial_rng(seed, t)))
        val = float(np.sum(w(x)))
        for lam, a in exps:
            if a:
                val += a * float(np.sum(np.log(np.abs(x - lam))))
        out[idx] = val
    return out


def _chunks(trials: int, workers: int) -> list:
    size = max(1, -(-trials // max(1, workers)))
    return [(s, min(trials, s + size)) for s in range(0, trials, size)]


def _collect(fn, args, trials: int, workers: int) -> np.ndarray:
    spans = _chunks(trials, workers)
    if workers <= 1 or len(spans) == 1:
        parts = [fn(*args, s, e) for s, e in spans]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(fn, *zip(*[(*args, s, e) for s, e in spans])))
    return np.concatenate(parts)


def char_moment_mc(
    beta: int,
    n: int,
    exponents: Sequence = (),
    potential=None,
    trials: int = 10_000,
    seed: int = 0,
    workers: int = 1,
) -> McEstimate:
    """Monte Carlo estimate of E e^{Tr W(A)} prod_i |det(A - lam_i)|^{a_i}.

    ``exponents`` holds (lam_i, a_i) pairs; ``potential`` is either ascending
    polynomial coefficients or a vectorized callable.  Products are accumulated
    as sums of logarithms and exponentiated after a common shift.
    """
    _check(beta, n)
    if trials < 100:
        raise ValueError("at least 100 trials are needed for a standard error")
    exps = [(float(l), float(a)) for l, a in exponents]
    if any(a >= 1 for _, a in exps):
        warnings.warn("exponents >= 1 give heavy-tailed samples; the standard error may be unreliable", stacklevel=2)
    logs = _collect(_log_terms, (beta, n, exps, potential, seed), trials, workers)
    shift = float(np.max(logs))
    vals = np.exp(logs - shift)
    scale = math.exp(shift)
    mean = float(np.mean(vals)) * scale
    stderr = float(np.std(vals, ddof=1)) / math.sqrt(trials) * scale
    return McEstimate(mean, stderr, trials)


def _logdet_chunk(beta, n, x, seed, start, stop) -> np.ndarray:
    """log|det(A - x)| through the three-term recurrence of the tridiagonal model."""
    out = np.empty(stop - start)
    for idx, t in enumerate(range(start, stop)):
        d, e = tridiagonal_model(beta, n, trial_rng(seed, t))
        # ratio recurrence r_k = det_k / det_{k-1}
        acc = 0.0
        r = d[0] - x
        acc += math.log(abs(r))
        for k in range(1, n):
            r = (d[k] - x) - e[k - 1] ** 2 / r
            acc += math.log(abs(r))
        out[idx] = acc
    return out


def logdet_stats(beta: int, n: int, x: float, trials: int, seed: int = 0, workers: int = 1) -> LogdetStats:
    """Sample mean and variance of log|det(A - x)| with a standard error for the variance."""
    _check(beta, n)
    if trials < 2:
        raise ValueError("trials must be at least 2")
    if not -1 < x < 1:
        raise ValueError("x must lie in (-1, 1)")
    v = _collect(_logdet_chunk, (beta, n, float(x), seed), trials, workers)
    var = float(np.var(v, ddof=1))
    c = v - np.mean(v)
    m4 = float(np.mean(c**4))
    var_se = math.sqrt(max(m4 - var**2, 0.0) / trials)
    return LogdetStats(beta, n, float(x), float(np.mean(v)), var, var_se, trials)
