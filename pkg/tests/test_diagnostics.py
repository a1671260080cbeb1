import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from tensorgp.diagnostics import (
    autocorrelation,
    effective_sample_size,
    kde_marginal,
    mahalanobis_rank,
    randomize_factor_rotation,
    sigma3_samples,
    silverman_bandwidth,
    stationarity_check,
    summarize,
    symmetry_report,
    trace,
)
from tensorgp.exceptions import InsufficientDataError
from tensorgp.tmcmc import ChainRecord, TmcmcConfig, run_chain


def ar1(rng, n, rho):
    x = np.empty(n)
    x[0] = rng.standard_normal()
    eps = rng.standard_normal(n) * np.sqrt(1 - rho**2)
    for i in range(1, n):
        x[i] = rho * x[i - 1] + eps[i]
    return x


def test_autocorrelation_lag_zero_is_one(rng):
    rho = autocorrelation(rng.standard_normal(500))
    assert rho[0] == pytest.approx(1.0)
    assert np.all(np.abs(rho[1:20]) < 0.2)


def test_ess_independent_and_ar1(rng):
    assert effective_sample_size(rng.standard_normal(20_000)) == pytest.approx(20_000, rel=0.1)
    ess = effective_sample_size(ar1(rng, 50_000, 0.9))
    assert ess == pytest.approx(50_000 * 0.1 / 1.9, rel=0.2)
    assert effective_sample_size(np.ones(100)) == 100


def test_kde_integrates_to_one_and_finds_mode(rng):
    m = kde_marginal(rng.normal(3.0, 0.5, 5000), name="x")
    assert m.integral() == pytest.approx(1.0, abs=1e-3)
    assert m.mode == pytest.approx(3.0, abs=0.1)
    assert m.grid.size == 512 and m.name == "x"


def test_kde_on_tiny_scale_and_constant_samples(rng):
    m = kde_marginal(1e-9 * rng.standard_normal(1000) + 1e-7)
    assert m.integral() == pytest.approx(1.0, abs=1e-3)
    c = kde_marginal(np.full(100, 2.5))
    assert np.all(np.isfinite(c.density)) and c.bandwidth > 0
    # a single spike loses the mass beyond +-3h
    assert c.integral() == pytest.approx(1.0 - 2 * stats.norm.sf(3), abs=1e-4)


def test_kde_needs_thirty_samples():
    with pytest.raises(InsufficientDataError):
        kde_marginal(np.arange(29.0))


def test_kde_matches_scipy_with_same_bandwidth(rng):
    x = rng.standard_normal(400)
    h = silverman_bandwidth(x)
    m = kde_marginal(x, bandwidth=h)
    ref = stats.gaussian_kde(x, bw_method=h / x.std(ddof=1))(m.grid)
    np.testing.assert_allclose(m.density, ref, rtol=1e-10, atol=1e-14)


def test_trace_from_chain_and_records():
    chain = run_chain(lambda x: -0.5 * float(x @ x), [0.0], TmcmcConfig.symmetric([1.0], iterations=40, burn_in=10))
    t = trace(chain)
    assert t.shape == (40, 2)
    np.testing.assert_array_equal(t[:, 0], np.arange(1, 41))
    r = trace(list(chain))
    np.testing.assert_array_equal(r[:, 0], np.arange(11, 41))
    np.testing.assert_array_equal(r[:, 1], t[10:, 1])
    with pytest.raises(InsufficientDataError):
        trace([])
    rec = ChainRecord(5, np.zeros(1), -1.0, True)
    np.testing.assert_array_equal(trace([rec]), [[5.0, -1.0]])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_rotation_preserves_sigma3(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((20, 4))
    r = randomize_factor_rotation(a, rng)
    np.testing.assert_allclose(sigma3_samples(r), sigma3_samples(a), atol=1e-12)


def posterior_factor_draws(rng, a3, n=8000, rel_sd=0.05):
    """Factor draws whose row norms jitter independently by ``rel_sd``."""
    a = np.tile(np.asarray(a3, dtype=float).ravel(), (n, 1))
    a[:, :2] *= np.exp(rel_sd * rng.standard_normal(n))[:, None]
    a[:, 2:] *= np.exp(rel_sd * rng.standard_normal(n))[:, None]
    return a


def test_rotated_marginals_equal_iff_equal_row_norms(rng):
    n = 20_000
    equal = randomize_factor_rotation(np.tile([1.0, 0.3, 0.3, 1.0], (n, 1)), rng)
    assert stats.ks_2samp(equal[:, 1], equal[:, 2]).pvalue > 0.01
    skew = randomize_factor_rotation(np.tile([1.2, 0.9, 0.1, 0.5], (n, 1)), rng)
    assert stats.ks_2samp(skew[:, 1], skew[:, 2]).pvalue < 1e-10


def test_symmetry_report_flags_only_unequal_diagonals(rng):
    sym = symmetry_report(posterior_factor_draws(rng, [1.0, 0.3, 0.3, 1.0]), rng)
    assert not sym.flagged and sym.tv_distance < 0.1
    skew = symmetry_report(posterior_factor_draws(rng, [1.2, 0.9, 0.1, 0.5]), rng)
    assert skew.flagged and skew.tv_distance > 0.3 and skew.ks_p_value < 1e-6
    assert skew.log_ratio_mean == pytest.approx(np.log(2.25 / 0.26), abs=0.01)
    assert set(sym.to_dict()) >= {"tv_distance", "ks_p_value", "p_value", "flagged", "rotation_randomized"}


def test_symmetry_report_is_calibrated_under_posterior_noise(rng):
    # posterior centred on a noisy estimate of equal diagonals: the z-score
    # of the log ratio is standard normal, so flags occur at the nominal rate
    flags = 0
    for _ in range(300):
        shift = 0.1 * rng.standard_normal()
        a = posterior_factor_draws(rng, [np.exp(shift / 2), 0.0, 0.0, 1.0], n=2000, rel_sd=0.1 / (2 * np.sqrt(2)))
        flags += symmetry_report(a, rng, p_threshold=0.05).flagged
    assert flags / 300 == pytest.approx(0.05, abs=0.04)


def test_symmetry_report_without_rotation_and_errors(rng):
    a = posterior_factor_draws(rng, [1.0, 0.3, 0.3, 1.0], n=500, rel_sd=0.0)
    rep = symmetry_report(a, rotate=False)
    assert not rep.rotation_randomized
    assert rep.ks_statistic == 0.0 and rep.ks_p_value == 1.0
    assert symmetry_report(a, np.random.default_rng(1)) == symmetry_report(a, np.random.default_rng(1))
    with pytest.raises(InsufficientDataError):
        symmetry_report(a[:10])


def test_ks_sample_size_discounts_autocorrelation(rng):
    a = np.zeros((20_000, 4))
    a[:, 1], a[:, 2] = ar1(rng, 20_000, 0.99), ar1(rng, 20_000, 0.99)
    a[:, 0] = a[:, 3] = 1.0
    rep = symmetry_report(a, rotate=False)
    assert rep.n_effective < 500
    assert rep.ks_p_value >= stats.ks_2samp(a[:, 1], a[:, 2]).pvalue


def test_stationarity_passes_and_fails(rng):
    x = rng.standard_normal(4000)
    assert stationarity_check(x).passed
    assert not stationarity_check(x + np.linspace(0, 3, 4000)).passed
    rep = stationarity_check(np.column_stack([np.arange(4000), x]))
    assert rep.window == 1000
    with pytest.raises(InsufficientDataError):
        stationarity_check(np.ones(20))
    with pytest.raises(ValueError):
        stationarity_check(x, window_fraction=0.7)


def test_stationarity_false_alarm_rate(rng):
    fails = sum(not stationarity_check(ar1(rng, 4000, 0.5)).passed for _ in range(200))
    assert fails <= 25


def test_summarize(rng):
    s = rng.normal([1.0, -2.0], [0.5, 2.0], size=(20_000, 2))
    out = summarize(s, ["a", "b"])
    assert out["a"]["mean"] == pytest.approx(1.0, abs=0.02)
    assert out["b"]["sd"] == pytest.approx(2.0, rel=0.02)
    assert out["a"]["q05"] < out["a"]["q50"] < out["a"]["q95"]


def test_mahalanobis_rank_is_uniform_for_draws(rng):
    cov = np.array([[1.0, 0.8], [0.8, 1.0]])
    s = rng.multivariate_normal([0, 0], cov, size=4000)
    assert mahalanobis_rank(s, s.mean(axis=0)) == 0.0
    assert mahalanobis_rank(s, [10.0, -10.0]) == 1.0
    ranks = [mahalanobis_rank(s, rng.multivariate_normal([0, 0], cov)) for _ in range(400)]
    assert np.mean(np.array(ranks) <= 0.9) == pytest.approx(0.9, abs=0.05)
