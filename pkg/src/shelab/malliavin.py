"""First Malliavin derivative of the discrete driftless flow.

For the scheme ``phi^{k+1} = P_dt[phi^k + sigma(phi^k) W^k / dx]`` the
derivative of ``phi^n(x)`` with respect to the cell mass ``W^k_i`` is

    (P_dt lam^{k+1})_i * sigma(phi^k_i) / dx,

where ``lam`` solves the backward recursion ``lam^n = e_x`` and
``lam^k = diag(1 + sigma'(phi^k) W^k / dx) P_dt lam^{k+1}``.  One backward
sweep therefore yields the derivative for every source cell at once.  The
forward tangent sweep is kept as :func:`derivative_forward` for small grids.
"""
from dataclasses import dataclass, field
import csv

import numpy as np
from scipy.special import polygamma

from .errors import DegenerateSampleError, InputError
from .stats import RateReport, bootstrap_slope_ci, fit_rate
from .solver import solve_driftless
from .torus import semigroup_multiplier


@dataclass(frozen=True)
class MalliavinField:
    """``values[k, i]`` is the derivative along noise cell ``(k, i)``; rows past the target are zero."""

    t: float
    x_index: int
    values: np.ndarray = field(repr=False)
    dt: float
    dx: float

    @property
    def target_row(self):
        return int(round(self.t / self.dt))


@dataclass(frozen=True)
class ConvexCombo:
    weights: tuple
    initial: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size != len(self.initial) or w.size == 0:
            raise InputError("one weight per component initial condition is required")
        if np.any(w < 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-12:
            raise InputError("weights must lie in [0, 1] and sum to 1")


def h_norm(fld):
    """``sqrt(sum values^2 dtheta dzeta)``."""
    v = fld.values if isinstance(fld, MalliavinField) else np.asarray(fld)
    dt, dx = (fld.dt, fld.dx) if isinstance(fld, MalliavinField) else (1.0, 1.0)
    return float(np.sqrt(np.sum(v * v) * dt * dx))


def _check_path(path, noise):
    if path.noise is not noise and path.noise is not None and noise is not None:
        same = (type(path.noise) is type(noise) and path.noise == noise)
        if not same:
            raise InputError("derivative must use the noise that drove the path")
    cfg = path.config
    if path.rows[0] != 0 or np.any(np.diff(path.rows) != 1):
        raise InputError("the path must start at 0 and be stored at every step (stride 1)")
    return cfg


def _adjoint_sweep(phi, W, sigma, n, x_index, dt, dx, n_x):
    """Backward recursion on a batch; ``phi`` is ``(steps + 1, R, n_x)`` and ``W`` ``(R, steps, n_x)``."""
    E = semigroup_multiplier(n_x, dt)
    R = phi.shape[1]
    lam = np.zeros((R, n_x))
    lam[:, x_index] = 1.0
    out = np.zeros((R, n, n_x))
    for k in range(n - 1, -1, -1):
        Plam = np.fft.irfft(np.fft.rfft(lam, axis=-1) * E, n=n_x, axis=-1)
        out[:, k] = Plam * sigma.f(phi[k]) / dx
        lam = (1.0 + sigma.df(phi[k]) * W[:, k] / dx) * Plam
    return out


def simulate_first_derivative(path, noise, t, x_index=0):
    """Derivative field of ``phi(t, x_index)`` for every noise cell of a stride-1 driftless path.

    ``path.u`` may carry a replicate axis; the result then has one field per
    replicate (``values`` of shape ``(R, n_t, n_x)``).
    """
    cfg = _check_path(path, noise)
    n = cfg.row_of(t)
    if n > path.rows[-1]:
        raise InputError("target time lies beyond the stored path")
    if not 0 <= x_index < cfg.n_x:
        raise InputError("target point off the grid")
    phi = path.u[: n + 1]
    single = phi.ndim == 2
    if single:
        phi = phi[:, None]
    W = noise.rows(0, n)
    vals = np.zeros((phi.shape[1], cfg.n_t, cfg.n_x))
    vals[:, :n] = _adjoint_sweep(phi, W, cfg.sigma, n, x_index, cfg.dt, cfg.dx, cfg.n_x)
    if single:
        vals = vals[0]
    vals.setflags(write=False)
    return MalliavinField(float(t), int(x_index), vals, cfg.dt, cfg.dx)


def derivative_forward(path, noise, t, x_index=0):
    """Same field as :func:`simulate_first_derivative` by propagating every source cell forward.

    Cost is ``O(n^2 n_x^2)``; only meant for small grids and cross-checks.
    Works on a single (unbatched) path.
    """
    cfg = _check_path(path, noise)
    n = cfg.row_of(t)
    if path.u.ndim != 2:
        raise InputError("forward sweep takes a single path")
    E = semigroup_multiplier(cfg.n_x, cfg.dt)
    W = noise.rows(0, n)[0]
    phi = path.u
    vals = np.zeros((cfg.n_t, cfg.n_x))
    sig = cfg.sigma
    eye = np.eye(cfg.n_x)
    for k in range(n):
        # columns: perturbation of cell (k, i) for every i
        J = np.fft.irfft(np.fft.rfft(eye * sig.f(phi[k])[None, :] / cfg.dx, axis=0) * E[:, None],
                         n=cfg.n_x, axis=0)
        for j in range(k + 1, n):
            J = (1.0 + sig.df(phi[j]) * W[j] / cfg.dx)[:, None] * J
            J = np.fft.irfft(np.fft.rfft(J, axis=0) * E[:, None], n=cfg.n_x, axis=0)
        vals[k] = J[x_index]
    return MalliavinField(float(t), int(x_index), vals, cfg.dt, cfg.dx)


def h_norm_ensemble(cfg, u0, noise, times, x_index=0, block=32, weights=None):
    """``||D phi(t, x)||_H`` per replicate and time, shape ``(R, len(times))``.

    ``u0`` is one initial field or, for a convex combination, a sequence of
    fields paired with ``weights``; all components share the noise.
    Replicates are processed in blocks to bound the stored path.
    """
    cfg = cfg.without_drift()
    times = np.asarray(times, dtype=float)
    rows = [cfg.row_of(t) for t in times]
    n_max = max(rows)
    if weights is None:
        comps, weights = [np.asarray(u0, dtype=float)], [1.0]
    else:
        ConvexCombo(tuple(weights), tuple(u0))
        comps = [np.asarray(z, dtype=float) for z in u0]
    R = noise.n_streams
    out = np.zeros((R, times.size))
    stamps = np.arange(n_max + 1) * cfg.dt
    for b0 in range(0, R, block):
        sub = noise.select(range(b0, min(b0 + block, R)))
        W = sub.rows(0, n_max)
        paths = [solve_driftless(cfg, z, 0.0, sub, T=n_max * cfg.dt, stamps=stamps).u for z in comps]
        for j, n in enumerate(rows):
            total = 0.0
            for c, phi in zip(weights, paths):
                total = total + c * _adjoint_sweep(phi, W, cfg.sigma, n, x_index, cfg.dt, cfg.dx,
                                                   cfg.n_x)
            out[b0:b0 + sub.n_streams, j] = np.sqrt(np.sum(total ** 2, axis=(1, 2)) * cfg.dt * cfg.dx)
    return out


def kernel_square_oracle(t, n_x, dt):
    """``sum_cells p_{t - theta}(x, zeta)^2 dtheta dzeta`` for the discrete semigroup (sigma = 1)."""
    n = int(round(t / dt))
    m = np.fft.fftfreq(n_x, 1.0 / n_x)
    q = np.exp(-2.0 * (2.0 * np.pi * m) ** 2 * dt)
    geo = np.where(q == 1.0, n, q * (1.0 - q ** n) / np.where(q == 1.0, 1.0, 1.0 - q))
    return float(dt * np.sum(geo))


def kernel_square_integral(t, n_modes=20000):
    """``int_0^t int_T p_r(x, y)^2 dy dr`` on the continuous torus."""
    m = np.arange(1, n_modes + 1)
    lam = (2.0 * np.pi * m) ** 2
    # modes beyond the cut have exp(-2 lam t) ~ 0: sum_{m > M} 1 / (8 pi^2 m^2) via trigamma
    tail = polygamma(1, n_modes + 1) / (8.0 * np.pi ** 2)
    return float(t + 2.0 * (np.sum(-np.expm1(-2.0 * lam * t) / (2.0 * lam)) + tail))


def estimate_moment_bounds(norms, times, p, sign="positive", n_boot=1000, seed=0, max_ci_width=0.3):
    """Fit ``log E||D phi||^(+-p)`` against ``log t``.

    ``norms`` has one row per replicate.  Under the negative sign, replicates
    with a zero norm at any time are excluded and counted.
    """
    norms = np.asarray(norms, dtype=float)
    times = np.asarray(times, dtype=float)
    if norms.ndim != 2 or norms.shape[1] != times.size:
        raise InputError("norms must be (replicates, times)")
    if sign not in ("positive", "negative"):
        raise InputError("sign must be 'positive' or 'negative'")
    excluded = 0
    if sign == "negative":
        bad = np.any(norms == 0, axis=1)
        excluded = int(bad.sum())
        norms = norms[~bad]
        if norms.shape[0] == 0:
            raise DegenerateSampleError("every replicate has a vanishing derivative norm")
    power = p if sign == "positive" else -p
    samples = norms ** power
    means = samples.mean(axis=0)
    stderr = samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])
    # a deterministic norm (constant sigma) has zero spread: fall back to an unweighted fit
    weights = (means / stderr) ** 2 if np.all(stderr > 0) else None
    slope, slope_err = fit_rate(times, means, weights=weights)
    lo, hi = bootstrap_slope_ci(times, samples, n_boot=n_boot, seed=seed)
    report = RateReport(scales=times, estimates=means, stderrs=stderr, slope=slope,
                        slope_stderr=slope_err, n_replicates=samples.shape[0],
                        label=f"{sign} moment p={p}", ci=(lo, hi), n_excluded=excluded)
    report.refused = (hi - lo) > max_ci_width
    return report


def combo_nondegeneracy(cfg, combo, noise, times, p, x_index=0, **kw):
    norms = h_norm_ensemble(cfg, list(combo.initial), noise, times, x_index,
                            weights=list(combo.weights))
    return estimate_moment_bounds(norms, times, p, "negative", **kw), norms


def write_ensemble_csv(path, times, norms):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "replicate", "h_norm"])
        for r in range(norms.shape[0]):
            for j, t in enumerate(times):
                w.writerow([repr(float(t)), r, repr(float(norms[r, j]))])
