import numpy as np
import pytest
from scipy import stats

from shelab.besov import mollify
from shelab.errors import BlowUpError, InputError, WindowError
from shelab.library import bounded_drift, constant_drift, zero_drift
from shelab.noise import NoiseBatch, sample_noise
from shelab.solver import (Sigma, SolverConfig, constant_sigma, driftless_shadow, load_path_arrays,
                           sine_sigma, solve_driftless, solve_she)
from shelab.torus import apply_semigroup


def _cos(n_x, a=1.0):
    return a * np.cos(2 * np.pi * np.arange(n_x) / n_x)


def _heat_matrix(n_x, t):
    # P_t as a dense matrix built from the full complex DFT
    F = np.exp(-2j * np.pi * np.outer(np.arange(n_x), np.arange(n_x)) / n_x)
    m = np.fft.fftfreq(n_x, 1.0 / n_x)
    return np.real(np.linalg.inv(F) @ np.diag(np.exp(-(2 * np.pi * m) ** 2 * t)) @ F)


def test_heat_flow_without_noise_or_drift():
    cfg = SolverConfig(256, 32, 0.25, constant_sigma(0.0))
    w = sample_noise(256, 32, 0.25, 1)
    u0 = _cos(32) + 0.3 * np.sin(6 * np.pi * np.arange(32) / 32)
    path = solve_she(cfg, u0, w, span=(0.0625, 0.25), stamps=[0.125, 0.25])
    assert np.max(np.abs(path.at(0.25) - apply_semigroup(u0, 0.1875))) < 1e-13
    assert np.max(np.abs(path.D)) == 0.0 and np.max(np.abs(path.V)) == 0.0


def test_constant_drift_gives_linear_growth():
    c = 1.7
    cfg = SolverConfig(128, 16, 0.5, constant_sigma(0.0), mollify(constant_drift(c), 0.1))
    path = solve_she(cfg, np.zeros(16), sample_noise(128, 16, 0.5, 1), span=(0.125, 0.5))
    assert np.max(np.abs(path.at(0.5) - c * 0.375)) < 1e-13


def test_linear_scheme_matches_mode_recursion():
    n_x, n_t, T, c = 16, 64, 0.5, 1.3
    w = sample_noise(n_t, n_x, T, 8)
    cfg = SolverConfig(n_t, n_x, T, constant_sigma(c))
    u0 = _cos(n_x, 0.5)
    ours = solve_she(cfg, u0, w).at(T)
    m = np.fft.fftfreq(n_x, 1.0 / n_x)
    E = np.exp(-(2 * np.pi * m) ** 2 * cfg.dt)
    uh = np.fft.fft(u0)
    for k in range(n_t):
        uh = E * (uh + np.fft.fft(c * w.increments[k] / cfg.dx))
    assert np.max(np.abs(ours - np.fft.ifft(uh).real)) < 1e-10


def _linear_variance(n_x, n_t, T, c):
    """Var u(T, 0) for b = 0, sigma = c from explicit powers of the one-step heat matrix."""
    dt, dx = T / n_t, 1.0 / n_x
    P = _heat_matrix(n_x, dt)
    var, row = 0.0, np.eye(n_x)[0]
    for _ in range(n_t):
        row = row @ P
        var += np.sum(row ** 2)
    return c * c * dt * dx / dx ** 2 * var


def test_linear_variance_oracle_closed_form():
    n_x, n_t, T = 16, 64, 0.25
    dt = T / n_t
    lam = (2 * np.pi * np.fft.fftfreq(n_x, 1.0 / n_x)) ** 2
    q = np.exp(-2 * lam * dt)
    closed = dt * np.sum([np.sum(qm ** np.arange(1, n_t + 1)) for qm in q])
    assert _linear_variance(n_x, n_t, T, 1.0) == pytest.approx(closed, rel=1e-12)


def test_monte_carlo_variance_and_gaussianity():
    n_x, n_t, T, R = 16, 64, 0.25, 10_000
    cfg = SolverConfig(n_t, n_x, T, constant_sigma(1.0))
    noise = NoiseBatch.from_seeds(n_t, n_x, T, 31, range(R))
    x = solve_she(cfg, np.zeros(n_x), noise, stamps=[T]).at(T)[:, 0]
    v = np.var(x, ddof=1)
    se = np.sqrt(np.var(x ** 2, ddof=1) / R)
    assert abs(v - _linear_variance(n_x, n_t, T, 1.0)) < 5 * se
    assert abs(stats.skew(x)) < 5 * np.sqrt(6.0 / R)


def test_zero_drift_bit_identical_to_driftless():
    cfg = SolverConfig(128, 16, 0.25, sine_sigma(), mollify(zero_drift(), 0.01))
    w = sample_noise(128, 16, 0.25, 3)
    a = solve_she(cfg, _cos(16), w, span=(0.0625, 0.25))
    b = solve_driftless(cfg, _cos(16), 0.0625, w)
    assert np.array_equal(a.u, b.u)
    assert np.array_equal(a.V, b.V)


def test_restart_consistency_of_driftless_flow():
    cfg = SolverConfig(256, 32, 0.25, sine_sigma())
    w = sample_noise(256, 32, 0.25, 4)
    full = solve_driftless(cfg, _cos(32), 0.0, w, stamps=[0.125, 0.25])
    again = solve_driftless(cfg, full.at(0.125), 0.125, w)
    assert np.max(np.abs(full.at(0.25) - again.at(0.25))) < 1e-8


def test_shadow_of_driftless_path_and_empty_interval():
    cfg = SolverConfig(128, 16, 0.25, sine_sigma())
    w = sample_noise(128, 16, 0.25, 5)
    path = solve_she(cfg, _cos(16), w, stamps=[0.125, 0.25])
    shadow = driftless_shadow(path, 0.125)
    assert np.max(np.abs(shadow.at(0.25) - path.at(0.25))) < 1e-12
    empty = driftless_shadow(path, 0.25)
    assert len(empty.times) == 1 and np.array_equal(empty.at(0.25), path.at(0.25))


def test_decomposition_identity_with_drift():
    cfg = SolverConfig(512, 32, 0.125, sine_sigma(), mollify(bounded_drift(), 4.0 ** -4), stride=16)
    noise = NoiseBatch.from_seeds(512, 32, 0.125, 6, range(4))
    path = solve_she(cfg, _cos(32), noise)
    assert path.u.shape == (33, 4, 32)
    assert path.decomposition_error() < 1e-10


def test_identical_solves_agree_bit_exactly():
    cfg = SolverConfig(256, 16, 0.125, sine_sigma(), mollify(bounded_drift(), 4.0 ** -4))
    noise = NoiseBatch.from_seeds(256, 16, 0.125, 9, range(3))
    assert np.array_equal(solve_she(cfg, _cos(16), noise).u, solve_she(cfg, _cos(16), noise).u)


def test_batch_and_single_stream_agree():
    cfg = SolverConfig(128, 16, 0.125, sine_sigma(), mollify(bounded_drift(), 4.0 ** -3))
    noise = NoiseBatch.from_seeds(128, 16, 0.125, 2, [0, 1, 2])
    batch = solve_she(cfg, _cos(16), noise).at(0.125)
    single = solve_she(cfg, _cos(16), noise.grid(1)).at(0.125)
    assert np.max(np.abs(batch[1] - single)) < 1e-13


def test_shadow_gap_stable_under_time_refinement():
    n_x, n_t, T, R = 32, 1024, 0.125, 1000
    drift = mollify(bounded_drift(), 4.0 ** -4)
    fine = NoiseBatch.from_seeds(n_t, n_x, T, 14, range(R))
    gaps = []
    for noise, nt in ((fine, n_t), (fine.coarsen(2, 1), n_t // 2)):
        cfg = SolverConfig(nt, n_x, T, sine_sigma(), drift)
        s = T / 2
        path = solve_she(cfg, np.zeros(n_x), noise, stamps=[s, T])
        err = path.at(T) - driftless_shadow(path, s).at(T)
        gaps.append(np.sqrt(np.mean(err ** 2)))
    assert gaps[0] > 0
    assert abs(gaps[1] - gaps[0]) / gaps[0] < 0.1


def test_shadow_error_shrinks_as_start_approaches_end():
    n_x, n_t, T = 32, 512, 0.125
    cfg = SolverConfig(n_t, n_x, T, sine_sigma(), mollify(bounded_drift(), 4.0 ** -4))
    noise = NoiseBatch.from_seeds(n_t, n_x, T, 15, range(200))
    starts = [T - k * cfg.dt for k in (256, 128, 64, 32)]
    path = solve_she(cfg, np.zeros(n_x), noise, stamps=starts + [T])
    errs = [np.mean((path.at(T) - driftless_shadow(path, s).at(T)) ** 2) for s in starts]
    assert np.all(np.diff(errs) < 0)


def test_window_and_blow_up_errors():
    cfg = SolverConfig(64, 8, 0.5, constant_sigma(0.0), mollify(bounded_drift(), 0.01))
    with pytest.raises(WindowError) as ei:
        solve_she(cfg, np.full(8, 7.0), sample_noise(64, 8, 0.5, 1))
    assert ei.value.step == 0
    wild = Sigma("wild", lambda x: 1e200 * (1 + x * x), lambda x: 0 * x, lambda x: 0 * x, 1.0)
    with pytest.raises(BlowUpError), np.errstate(over="ignore", invalid="ignore"):
        solve_she(SolverConfig(64, 8, 0.5, wild), np.ones(8), sample_noise(64, 8, 0.5, 1))


def test_input_errors():
    with pytest.raises(InputError):
        SolverConfig(64, 7, 0.5, constant_sigma())
    with pytest.raises(InputError):
        SolverConfig(64, 8, 1.5, constant_sigma())
    cfg = SolverConfig(64, 8, 0.5, constant_sigma())
    with pytest.raises(InputError):
        solve_she(cfg, np.zeros(8), sample_noise(32, 8, 0.5, 1))
    with pytest.raises(InputError):
        solve_she(cfg, np.zeros(6), sample_noise(64, 8, 0.5, 1))
    with pytest.raises(InputError):
        solve_she(cfg, np.zeros(8), sample_noise(64, 8, 0.5, 1), span=(0.001, 0.5))
    assert not SolverConfig(16, 8, 0.5, constant_sigma()).within_accuracy_guideline
    assert SolverConfig(4096, 32, 0.25, constant_sigma()).within_accuracy_guideline


def test_sigma_floor():
    s = sine_sigma(1.0, 0.5)
    x = np.linspace(-10, 10, 1001)
    assert s.mu == 0.5 and np.all(s(x) ** 2 >= s.mu ** 2)


def test_path_exports(tmp_path):
    cfg = SolverConfig(32, 8, 0.25, sine_sigma(), stride=16)
    path = solve_she(cfg, _cos(8), NoiseBatch.from_seeds(32, 8, 0.25, 1, [0, 1]))
    path.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "time,replicate,x,u,D,V"
    assert len(lines) == 1 + 3 * 2 * 8
    path.dump(tmp_path / "p.bin")
    back = load_path_arrays(tmp_path / "p.bin")
    assert np.array_equal(back["u"], path.u) and np.array_equal(back["rows"], path.rows)
