import numpy as np
import pytest
from hypothesis import given, strategies as st

from shelab.errors import BlowUpError, InputError
from shelab.stats import (bootstrap_quantity_ci, bootstrap_slope_ci, fit_rate, lp_norm_columns,
                          mc_lp_norm, rate_report)

SCALES = 2.0 ** -np.arange(8, 0, -1)


def test_constant_sampler_exact():
    est, se, bad = mc_lp_norm(lambda i: -2.5, 3, n_replicates=200)
    assert est == 2.5 and se == 0.0 and bad == 0


@pytest.mark.parametrize("p,want", [(2, 1.0), (4, 3.0 ** 0.25)])
def test_gaussian_moments(p, want):
    x = np.random.default_rng(p).standard_normal(10_000)
    est, se, _ = mc_lp_norm(x, p)
    assert abs(est - want) < 5 * se


def test_nonfinite_samples_counted_then_abort():
    x = np.ones(1000)
    x[:5] = np.nan
    assert mc_lp_norm(x, 2)[2] == 5
    x[:20] = np.inf
    with pytest.raises(BlowUpError):
        mc_lp_norm(x, 2)
    with pytest.raises(InputError):
        mc_lp_norm(np.ones(99), 2)
    with pytest.raises(InputError):
        mc_lp_norm(np.ones(200), 0.5)


def test_columns_match_scalar_norm():
    x = np.random.default_rng(0).standard_normal((500, 3))
    est, se = lp_norm_columns(x, 2)
    for j in range(3):
        e, s, _ = mc_lp_norm(x[:, j], 2)
        assert est[j] == pytest.approx(e, rel=1e-14) and se[j] == pytest.approx(s, rel=1e-10)


def test_exact_power_law():
    slope, se = fit_rate(SCALES, SCALES ** 0.75)
    assert slope == pytest.approx(0.75, abs=1e-14) and se == pytest.approx(0.0, abs=1e-14)


@given(st.floats(1e-6, 1e6), st.floats(-2, 2))
def test_slope_invariant_under_constant_factor(c, a):
    slope, _ = fit_rate(SCALES, c * SCALES ** a)
    assert slope == pytest.approx(a, abs=1e-10)


def test_fit_preconditions():
    with pytest.raises(InputError):
        fit_rate([0.1, 0.2], [1.0, 2.0])
    with pytest.raises(InputError):
        fit_rate([0.1, 0.15, 0.2], [1.0, 2.0, 3.0])  # one octave only
    with pytest.raises(InputError):
        fit_rate(SCALES, np.r_[SCALES[:-1], 0.0])
    with pytest.raises(InputError):
        fit_rate(SCALES, SCALES, weights=-np.ones(8))


def test_noisy_power_law_coverage():
    # known multiplicative noise; the 2-stderr band should cover the true slope in most trials
    rng = np.random.default_rng(123)
    hits = 0
    for _ in range(100):
        y = SCALES ** 0.6 * np.exp(0.05 * rng.standard_normal(SCALES.size))
        s, se = fit_rate(SCALES, y)
        hits += abs(s - 0.6) <= 2 * se
    assert hits >= 85


def test_bootstrap_interval_brackets_the_fit():
    rng = np.random.default_rng(5)
    samples = SCALES[None, :] ** 0.5 * rng.lognormal(0, 0.3, (400, SCALES.size))
    rep = rate_report(SCALES, samples, 1, weighted=False)
    lo, hi = bootstrap_slope_ci(SCALES, samples, n_boot=300)
    assert lo < 0.5 < hi and rep.slope_stderr > 0
    lo, hi = bootstrap_quantity_ci(samples, lambda s: s[:, 0].mean(), n_boot=200)
    assert lo < samples[:, 0].mean() < hi


def test_report_within():
    rep = rate_report(SCALES, SCALES[None, :] * np.ones((3, 1)), 2, target=1.0, tolerance=0.01)
    assert rep.within() and not rep.within(target=1.5)
