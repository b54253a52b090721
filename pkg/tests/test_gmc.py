import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from rmtlab.ensembles import sample_spectrum
from rmtlab.gmc import (
    ALPHA_MAX,
    bump,
    cheb,
    cheb_tail,
    coupling_experiment,
    cov_limit,
    cov_partial,
    cov_partial_error_fit,
    default_grid,
    derive_seed,
    field_from_spectrum,
    measure_integral,
    measure_weights,
    mollifier,
    sample_field,
    variance_profile,
)


def test_alpha_range_constants():
    assert ALPHA_MAX[1] == pytest.approx(2**-0.5)


def test_cheb_small_values():
    assert cheb(2, 0.5) == pytest.approx(-0.5, abs=1e-15)
    assert cheb(3, 1.2) == pytest.approx(4 * 1.2**3 - 3 * 1.2, rel=1e-13)
    assert cheb(3, -1.2) == pytest.approx(-(4 * 1.2**3 - 3 * 1.2), rel=1e-13)


@settings(max_examples=50, deadline=None)
@given(k=st.integers(0, 60), theta=st.floats(0, math.pi))
def test_cheb_trigonometric_form(k, theta):
    assert cheb(k, math.cos(theta)) == pytest.approx(math.cos(k * theta), abs=1e-9)


def test_cheb_tail_band():
    assert cheb_tail(3, 1.02, 0.05) == pytest.approx(float(cheb(3, 1.02)), rel=1e-15)
    assert cheb_tail(3, 1.11, 0.05) == 0
    assert mollifier(1.05) == 1 and mollifier(1.1) == 0
    assert 0 < mollifier(1.07) < 1


def test_cov_partial_examples():
    assert cov_partial(10_000, 0.5, -0.5) == pytest.approx(-0.5 * math.log(2), abs=1e-3)
    for M in (2, 10, 64):
        harmonic = sum(1 / j for j in range(1, M // 2 + 1))
        assert cov_partial(M, 0.0, 0.0) == pytest.approx(harmonic / 2, rel=1e-12)
    assert cov_partial(0, 0.3, 0.1) == 0


@settings(max_examples=30, deadline=None)
@given(M=st.integers(0, 40), x=st.floats(-1, 1), y=st.floats(-1, 1))
def test_cov_partial_symmetric(M, x, y):
    assert cov_partial(M, x, y) == pytest.approx(cov_partial(M, y, x), abs=1e-12)


def test_cov_partial_rejects_outside_points():
    with pytest.raises(ValueError):
        cov_partial(3, 1.5, 0)


@pytest.mark.parametrize("x,y", [(0.5, -0.5), (0.3, 0.1), (-0.7, 0.2)])
def test_cov_partial_rate(x, y):
    fit = cov_partial_error_fit(x, y)
    assert fit["slope"] < -0.8
    assert all(e <= fit["C"] / M * (1 + 1e-12) for M, e in zip(fit["M"], fit["error"]))
    assert abs(cov_partial(10_000, x, y) - cov_limit(x, y)) < 5 * fit["C"] / 10_000


def test_field_structure():
    grid = default_grid(64)
    fld = sample_field(12, grid, seed=3, trial=2)
    ref = sum(fld.z[k - 1] * cheb(k, grid) / math.sqrt(k) for k in range(1, 13))
    assert np.allclose(fld.values, ref, atol=1e-12)
    assert np.allclose(fld.variance_profile, variance_profile(12, grid))
    assert np.all(measure_weights(fld, 0.0) == 1)


def test_field_moments():
    grid = default_grid(16)
    M, alpha, T = 16, 0.6, 10_000
    vals = np.array([sample_field(M, grid, 7, t).values for t in range(T)])
    prof = variance_profile(M, grid)
    var = vals.var(axis=0, ddof=1)
    assert np.all(np.abs(var - prof) < 3 * prof * math.sqrt(2 / (T - 1)) + 1e-12)
    w = np.exp(alpha * vals - 0.5 * alpha**2 * prof)
    se = w.std(axis=0, ddof=1) / math.sqrt(T)
    assert np.all(np.abs(w.mean(axis=0) - 1) < 3.5 * se)


def test_field_from_spectrum_trivial_and_band():
    grid = default_grid(32)
    eigs = np.array([-0.9, -0.2, 0.4, 0.95, 1.04])
    assert np.all(field_from_spectrum(eigs, 0, grid) == 0)
    plain = sum(-2 / k * float(np.sum(cheb(k, eigs))) * cheb(k, grid) for k in range(1, 7))
    assert np.allclose(field_from_spectrum(eigs, 6, grid, eps=0.05), plain, atol=1e-12)


def test_linear_statistic_variance():
    n, T = 256, 1500
    tr = np.array([[float(np.sum(cheb(k, np.array(sample_spectrum(2, n, 13, t).eigenvalues)))) for k in (1, 2, 3)] for t in range(T)])
    var = tr.var(axis=0, ddof=1)
    assert np.allclose(var, np.array([1, 2, 3]) / 4, rtol=0.15)


def test_bump_has_unit_mass():
    grid = np.linspace(-0.8, 0.8, 4001)
    assert trapezoid(bump(grid), grid) == pytest.approx(1.0, abs=1e-9)
    assert bump(0.85) == 0


def test_measure_integral_trivial_cases():
    assert measure_integral("gmc-approx", lambda x: 0 * x, {"alpha": 0.5}) == 0
    assert measure_integral("matrix-exact", None, {"alpha": 0.0, "beta": 1, "n": 4}) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        measure_integral("nonsense", None, {"alpha": 0.2})


def test_gmc_measure_is_normalized():
    vals = np.array([measure_integral("gmc-approx", None, {"alpha": 0.5, "M": 16}, seed=2, trial=t) for t in range(1000)])
    assert abs(vals.mean() - 1) < 3 * vals.std(ddof=1) / math.sqrt(vals.size)


def test_exact_matrix_measure_is_normalized():
    params = {"alpha": 0.4, "beta": 2, "n": 4}
    vals = np.array([measure_integral("matrix-exact", None, params, seed=4, trial=t) for t in range(2000)])
    assert abs(vals.mean() - 1) < 3 * vals.std(ddof=1) / math.sqrt(vals.size)


def test_truncated_matrix_measure_is_normalized():
    params = {"alpha": 0.3, "beta": 2, "n": 16, "M": 8, "calibration_trials": 2000}
    vals = np.array([measure_integral("matrix-truncated", None, params, seed=5, trial=t) for t in range(400)])
    assert abs(vals.mean() - 1) < 0.05


def test_alpha_warning():
    with pytest.warns(UserWarning):
        measure_integral("matrix-exact", None, {"alpha": 0.8, "beta": 1, "n": 2, "nodes": 5, "bits": 64})


def test_coupling_at_zero_alpha():
    rep = coupling_experiment(8, 4, 0.0, 50, seed=1)
    for ch in rep.channels.values():
        assert ch.mean == pytest.approx(1.0, abs=1e-9) and ch.variance == pytest.approx(0, abs=1e-20)
    assert rep.ks_distance == 0


def test_coupling_small_run():
    rep = coupling_experiment(16, 4, 0.3, 300, seed=2)
    assert np.all(rep.samples["product"] >= 0)
    assert rep.means_agree(4.0)
    s = rep.summary()
    assert set(s["channels"]) == {"goe", "gse", "gue"}
    assert s["channels"]["goe"]["n"] == 32 and s["channels"]["gse"]["n"] == 16


def test_coupling_rejects_bad_alpha():
    with pytest.raises(ValueError):
        coupling_experiment(8, 4, 0.8, 50)


def test_derived_seeds():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
    assert 0 <= derive_seed(2**70, 1) < 2**64


def test_no_warning_in_regular_regime():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        coupling_experiment(16, 4, 0.3, 20, seed=2)
