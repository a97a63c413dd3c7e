import numpy as np
import pytest

from shelab import experiments as ex
from shelab.besov import mollify
from shelab.library import bounded_drift, constant_drift, half_derivative_drift, smooth_drift
from shelab.noise import NoiseBatch
from shelab.solver import SolverConfig, constant_sigma, sine_sigma
from shelab.errors import InputError


def _cfg(n_t=512, n_x=32, T=0.125, sigma=None, drift=None):
    return SolverConfig(n_t, n_x, T, sigma or sine_sigma(), drift)


def _noise(cfg, R, seed=1):
    return NoiseBatch.from_seeds(cfg.n_t, cfg.n_x, cfg.T, seed, range(R))


def _cos(n_x, a=1.0):
    return a * np.cos(2 * np.pi * np.arange(n_x) / n_x)


def test_driftless_rate_vanishes_without_drift():
    cfg = _cfg()
    gaps = [64 * cfg.dt, 128 * cfg.dt, 256 * cfg.dt]
    pw = ex.driftless_rate_samples(cfg, _cos(32), _noise(cfg, 4), cfg.T, gaps)
    # restarting from a stored field only adds FFT round-off
    assert np.max(pw) < 1e-28


def test_driftless_rate_rejects_short_gaps():
    cfg = _cfg()
    with pytest.raises(InputError):
        ex.driftless_rate_samples(cfg, _cos(32), _noise(cfg, 2), cfg.T, [32 * cfg.dt, 64 * cfg.dt, 128 * cfg.dt])


def test_rate_report_reproducible_bit_exactly():
    cfg = _cfg(drift=mollify(bounded_drift(), 4.0 ** -4))
    gaps = [64 * cfg.dt, 128 * cfg.dt, 256 * cfg.dt]
    a, pa = ex.exp_driftless_rate(cfg, np.zeros(32), _noise(cfg, 8), gaps)
    b, pb = ex.exp_driftless_rate(cfg, np.zeros(32), _noise(cfg, 8), gaps)
    assert np.array_equal(pa, pb) and a.slope == b.slope and a.target == 1.0


def _probes(cfg):
    return [(s * cfg.dt, (s + g) * cfg.dt) for s in (128, 256) for g in (64, 128, 256)]


def test_v_bracket_zero_and_constant_drift():
    cfg0 = _cfg()
    probes = _probes(cfg0)
    pw = ex.v_bracket_samples(cfg0, _cos(32), _noise(cfg0, 3), probes)
    assert ex.estimate_v_bracket(pw, probes, 2, 1.0).value == 0.0
    c = 0.8
    cfgc = _cfg(sigma=constant_sigma(0.0), drift=mollify(constant_drift(c), 0.1))
    pw = ex.v_bracket_samples(cfgc, np.zeros(32), _noise(cfgc, 3), probes)
    assert ex.estimate_v_bracket(pw, probes, 2, 1.0).value == pytest.approx(c, rel=1e-12)


def test_v_bracket_finite_and_refinement_stable():
    cfg = _cfg(drift=mollify(bounded_drift(), 4.0 ** -5))
    noise = _noise(cfg, 100)
    coarse = [(s * cfg.dt, (s + g) * cfg.dt) for s in (128, 256) for g in (64, 128)]
    fine = [(s * cfg.dt, (s + g) * cfg.dt) for s in (128, 192, 256) for g in (64, 96, 128)]
    v1 = ex.estimate_v_bracket(ex.v_bracket_samples(cfg, np.zeros(32), noise, coarse), coarse, 2, 1.0)
    v2 = ex.estimate_v_bracket(ex.v_bracket_samples(cfg, np.zeros(32), noise, fine), fine, 2, 1.0)
    assert np.isfinite(v1.value) and v2.value >= v1.value
    assert (v2.value - v1.value) / v1.value < 0.1


def test_bracket_monotone_under_probe_enlargement():
    cfg = _cfg(drift=mollify(bounded_drift(), 4.0 ** -4))
    probes = _probes(cfg)
    pw = ex.s_bracket_powers(cfg, np.zeros(32), cfg, np.full(32, 0.1), _noise(cfg, 20), probes)
    small = ex.s_bracket(pw[:, :3], probes[:3], 2).value
    assert ex.s_bracket(pw, probes, 2).value >= small


def test_stability_identical_inputs_and_additive_shift():
    cfg = _cfg(drift=mollify(bounded_drift(), 4.0 ** -4))
    probes = _probes(cfg)
    noise = _noise(cfg, 5)
    same = ex.s_bracket_powers(cfg, _cos(32), cfg, _cos(32), noise, probes)
    assert ex.s_bracket(same, probes, 2).value < 1e-10
    lin = _cfg(sigma=constant_sigma(1.0))
    shift = ex.s_bracket_powers(lin, _cos(32), lin, _cos(32) + 0.3, noise, probes)
    assert ex.s_bracket(shift, probes, 2).value < 1e-10


def test_stability_slope_on_shrinking_discrepancies():
    cfg = _cfg(drift=mollify(bounded_drift(), 4.0 ** -5))
    probes = _probes(cfg)
    shifts = [0.2, 0.1, 0.05, 0.025]
    pw = ex.stability_samples(cfg, np.zeros(32), shifts, _noise(cfg, 50), probes)
    rep = ex.exp_stability(pw, probes, [ex.initial_discrepancy(s) for s in shifts])
    assert rep.slope >= 0.9 and rep.extra["stability_constant"] > 0


def test_stability_with_drift_pairs():
    cfg = _cfg()
    b = bounded_drift()
    pairs = [(mollify(b, 4.0 ** -4), mollify(b, 4.0 ** -4)) for _ in range(2)]
    pw = ex.stability_samples(cfg, np.zeros(32), [0.0, 0.0], _noise(cfg, 3), _probes(cfg), pairs)
    assert np.max(pw) < 1e-20


def test_four_point_collapse_cases():
    cfg = _cfg(drift=mollify(bounded_drift(), 4.0 ** -4))
    noise = _noise(cfg, 4)
    s = 128 * cfg.dt
    same = ex.four_point_samples(cfg, _cos(32), _cos(32), noise, s, [64 * cfg.dt], cfg.T)
    assert np.all(same == 0.0)
    at_s = ex.four_point_samples(cfg, _cos(32), _cos(32) + 0.1, noise, s, [0.0], cfg.T)
    assert np.all(at_s == 0.0)


def test_holder_of_smooth_heat_flow():
    # horizon well below 1 / (4 pi^2) so the heat flow is in its linear regime
    cfg = _cfg(n_t=1024, n_x=64, T=1.0 / 256, sigma=constant_sigma(0.0))
    noise = _noise(cfg, 2)
    hs = [64 * cfg.dt, 128 * cfg.dt, 256 * cfg.dt]
    tm, sp, _ = ex.exp_holder_profile(cfg, _cos(64), noise, 256 * cfg.dt, hs, [1, 2, 4, 8], which="u")
    assert tm.slope == pytest.approx(1.0, abs=0.05)
    assert sp.slope == pytest.approx(1.0, abs=0.05)


def test_holder_of_drift_part_lower_bounds_and_plateau():
    cfg = _cfg(n_t=2048, n_x=64, T=0.0625, drift=mollify(bounded_drift(), 4.0 ** -5))
    noise = _noise(cfg, 100)
    hs = [64 * cfg.dt, 128 * cfg.dt, 256 * cfg.dt, 512 * cfg.dt]
    tm, sp, pw = ex.exp_holder_profile(cfg, np.zeros(64), noise, 1024 * cfg.dt, hs, [2, 4, 8, 16], which="D")
    assert tm.slope >= 0.25 and sp.slope >= 0.5
    trimmed = ex.drop_smallest_scale(tm, pw[:, :4], 2)
    assert abs(trimmed.slope - tm.slope) < 2 * max(tm.slope_stderr, trimmed.slope_stderr)


def test_sequence_gaps_for_smooth_drift_follow_the_mollification_scale():
    # b = sin: b^n - b^{n+1} is (exp(-4^-n) - exp(-4^-(n+1))) sin, so gaps shrink by close to 4 per level
    cfg = _cfg(n_t=256, n_x=16, T=0.0625)
    levels = [1, 2, 3, 4]
    stamps = [cfg.T * i / 4 for i in range(5)]
    sups = ex.sequence_samples(cfg, smooth_drift(), _cos(16, 2.0), _noise(cfg, 20), levels, stamps)
    d_gap = np.sqrt(np.mean(sups[:, 0] ** 2, axis=0))
    ratios = d_gap[:-1] / d_gap[1:]
    assert np.all(ratios > 3.4) and np.all(ratios < 4.2) and ratios[1] > ratios[0]
    dist = ex.sequence_drift_distances(smooth_drift(), levels, gamma=-1.0, k_max=12)
    # for a smooth drift the solution gaps are linear in the drift gaps
    assert np.allclose(ratios, dist[:-1] / dist[1:], rtol=0.05)


def test_sequence_outputs_shapes():
    cfg = _cfg(n_t=256, n_x=16, T=0.0625)
    stamps = [cfg.T * i / 4 for i in range(5)]
    sups = ex.sequence_samples(cfg, half_derivative_drift(), _cos(16, 2.0), _noise(cfg, 4), [1, 2, 3], stamps)
    assert sups.shape == (4, 2, 2) and np.all(sups > 0)
    out = ex.exp_sequence_convergence(sups, [1, 2, 3], [1.0, 0.5])
    assert set(out) >= {"d_gap", "v_gap", "d_monotone", "v_monotone", "d_ratio_spread"}
