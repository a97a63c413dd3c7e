import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from shelab.besov import mollify
from shelab.errors import InputError
from shelab.library import bounded_drift, constant_drift, zero_drift
from shelab.noise import NoiseBatch
from shelab.sewing import (DriftGerm, _gap_ratio, additive_germ, cauchy_gaps, dyadic_points,
                           measure_germ_exponents, riemann_sum, sewing_sums, zero_germ)
from shelab.solver import SolverConfig, sine_sigma, solve_she


def _path(drift, R, n_t=256, n_x=16, T=0.0625, seed=3):
    cfg = SolverConfig(n_t, n_x, T, sine_sigma(), drift, 1)
    noise = NoiseBatch.from_seeds(n_t, n_x, T, seed, range(R))
    u0 = np.cos(2 * np.pi * np.arange(n_x) / n_x)
    return solve_she(cfg, u0, noise)


def test_dyadic_points():
    assert np.allclose(dyadic_points(1.0, 2), [0, 0.25, 0.5, 0.75, 1.0])


def test_zero_germ_sums_vanish():
    g = zero_germ(5)
    for d in range(5):
        assert np.all(riemann_sum(g, d, 1.0) == 0.0)


def test_additive_germ_telescopes():
    f = lambda t: np.sin(3 * t) + t ** 2
    g = additive_germ(f, 100)
    sums = sewing_sums(g, [0, 2, 4, 6], 1.0)
    assert np.allclose(sums, f(1.0) - f(0.0), atol=1e-12)
    assert np.all(cauchy_gaps(sums) < 1e-12)
    rep = measure_germ_exponents(g, [0.05, 0.1, 0.2])
    assert not rep.x2_signal and rep.x2 is None
    # |f(h) - f(0)| ~ 3h at small h
    assert rep.x1 == pytest.approx(1.0, abs=0.1)


def test_negative_depth_rejected():
    with pytest.raises(InputError):
        riemann_sum(zero_germ(), -1, 1.0)


def test_failing_germ_names_interval():
    def bad(s, t):
        raise ValueError("boom")
    from shelab.sewing import Germ
    with pytest.raises(ValueError, match=r"\[0, 0.5\]"):
        riemann_sum(Germ(bad), 1, 1.0)


def test_drift_germ_of_zero_drift_is_zero():
    drift = mollify(zero_drift(), 1e-3)
    path = _path(drift, 3)
    g = DriftGerm(path, drift, M=4).germ()
    assert np.all(g(0.0, path.end) == 0.0)
    assert np.all(g.delta(0.0, path.end / 2, path.end) == 0.0)


def test_drift_germ_of_constant_drift_is_linear():
    c = 0.7
    drift = mollify(constant_drift(c), 1e-3)
    path = _path(drift, 3)
    g = DriftGerm(path, drift, M=4).germ()
    s, t = 16 * path.config.dt, 80 * path.config.dt
    assert np.allclose(g(s, t), c * (t - s), rtol=1e-12)
    assert np.allclose(riemann_sum(g, 3, path.end), c * path.end, rtol=1e-12)
    assert np.allclose(g.delta(s, (s + t) / 2, t), 0.0, atol=1e-14)


def test_pathwise_germ_along_solution_telescopes_to_drift_part():
    drift = mollify(bounded_drift(), 4.0 ** -3)
    path = _path(drift, 4)
    g = DriftGerm(path, drift, x_index=5, M=None, along="solution").germ()
    target = path.D[-1][:, 5]
    for depth in (0, 2, 4):
        assert np.allclose(riemann_sum(g, depth, path.end), target, atol=1e-10)


def test_futures_are_deterministic_and_keep_the_past():
    drift = mollify(bounded_drift(), 4.0 ** -3)
    path = _path(drift, 2)
    a = DriftGerm(path, drift, M=6, reseed_base=11)
    b = DriftGerm(path, drift, M=6, reseed_base=11)
    s, t = 64 * path.config.dt, 128 * path.config.dt
    assert np.array_equal(a.value(s, t), b.value(s, t))
    c = DriftGerm(path, drift, M=6, reseed_base=12)
    assert not np.array_equal(a.value(s, t), c.value(s, t))


def test_invalid_along():
    drift = mollify(zero_drift(), 1e-3)
    with pytest.raises(InputError):
        DriftGerm(_path(drift, 1), drift, along="sideways")


def test_small_ensemble_refused():
    with pytest.raises(InputError):
        measure_germ_exponents(zero_germ(50), [0.1, 0.2])


@given(arrays(float, (6, 4), elements=st.floats(-1e3, 1e3)))
def test_cauchy_gaps_nonnegative(sums):
    g = cauchy_gaps(sums)
    assert g.shape == (3,) and np.all(g >= 0)


def test_gap_ratio_of_geometric_sums():
    rng = np.random.default_rng(0)
    base = rng.standard_normal((200, 1))
    sums = np.concatenate([np.zeros((200, 1)), np.cumsum(base * 0.5 ** np.arange(5), axis=1)], axis=1)
    assert _gap_ratio(sums) == pytest.approx(0.5, rel=1e-10)
    assert _gap_ratio(np.ones((10, 3))) == 0.0


@pytest.mark.slow
def test_bounded_drift_germ_exponent_and_cauchy_sums():
    drift = mollify(bounded_drift(), 4.0 ** -4)
    path = _path(drift, 100, n_t=512, n_x=16, T=0.125)
    dt = path.config.dt
    g = DriftGerm(path, drift, x_index=0, M=8).germ()
    rep = measure_germ_exponents(g, [8 * dt, 16 * dt, 32 * dt, 64 * dt], depths=[1, 2, 3, 4, 5],
                                 T=path.end, n_boot=200)
    assert rep.x1 >= 0.75
    assert rep.gap_ratio < 1.0
