"""Riemann sums of two-parameter germs over dyadic partitions.

A germ maps an interval ``[s, t]`` to one value per replicate.  The drift germ
``A_{s,t} = E^s int_s^t (P_{T-r} b(psi^s_r))(x) dr`` runs the driftless flow
from the solution at ``s``; the conditional expectation ``E^s`` is estimated
by averaging ``M`` futures drawn after ``s`` while the past noise stays frozen.
"""
from dataclasses import dataclass, field
import hashlib
import json

import numpy as np

from .errors import InputError
from .solver import solve_driftless, solve_she
from .stats import bootstrap_quantity_ci, fit_rate
from .torus import semigroup_multiplier

MIN_ENSEMBLE = 100


@dataclass(frozen=True)
class Germ:
    """``evaluator(s, t) -> array`` of one value per replicate."""

    evaluator: callable = field(repr=False)
    name: str = "germ"
    claimed_exponents: tuple = (None, None)
    delta: callable = field(default=None, repr=False)

    def __call__(self, s, t):
        return np.asarray(self.evaluator(s, t), dtype=float)


def dyadic_points(T, depth):
    return T * np.arange(2 ** depth + 1) / 2 ** depth


def riemann_sum(germ, depth, T):
    """Sum of ``germ(s, t)`` over the ``2^depth`` dyadic intervals of ``[0, T]``."""
    if depth < 0:
        raise InputError("depth must be >= 0")
    pts = dyadic_points(T, depth)
    total = 0.0
    for s, t in zip(pts[:-1], pts[1:]):
        try:
            total = total + germ(s, t)
        except Exception as err:
            raise type(err)(f"germ failed on [{s:.6g}, {t:.6g}]: {err}") from err
    return total


def zero_germ(n_replicates=1):
    return Germ(lambda s, t: np.zeros(n_replicates), "zero", (np.inf, np.inf),
                lambda s, a, t: np.zeros(n_replicates))


def additive_germ(f, n_replicates=1):
    """``A_{s,t} = f(t) - f(s)``; its sums telescope and ``delta A`` vanishes."""
    return Germ(lambda s, t: np.full(n_replicates, f(t) - f(s)), "additive", (None, None),
                lambda s, a, t: np.full(n_replicates, (f(t) - f(s)) - (f(a) - f(s)) - (f(t) - f(a))))


def _reseed(base, row, m):
    # one deterministic future seed per (run, split row, future index)
    h = hashlib.blake2b(json.dumps([int(base), int(row), int(m)]).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little") >> 1


class DriftGerm:
    """Drift germ along a solution path.

    ``path`` must be a batched solution on ``[0, T]`` storing every point the
    germ is evaluated at; ``drift`` is the mollified drift that drives it.
    With ``M=None`` the germ is pathwise (no conditional expectation, real
    future noise); its Riemann sums along ``u`` itself telescope to ``D_T``.
    """

    def __init__(self, path, drift, x_index=0, M=64, reseed_base=0, T=None, along="shadow"):
        self.path = path
        self.cfg = path.config.with_drift(drift)
        self.drift = drift
        self.noise = path.noise
        self.x_index = int(x_index)
        self.M = M
        self.reseed_base = int(reseed_base)
        self.T = path.end if T is None else T
        self.n_T = self.cfg.row_of(self.T)
        if along not in ("shadow", "solution"):
            raise InputError("along must be 'shadow' or 'solution'")
        self.along = along
        self._E = semigroup_multiplier(self.cfg.n_x, self.cfg.dt)

    @property
    def n_replicates(self):
        return self.noise.n_streams

    def _futures(self, s):
        row = self.cfg.row_of(s)
        if self.M is None:
            return self.noise, 1
        reseeds = [_reseed(self.reseed_base, row, m) for _ in range(self.n_replicates)
                   for m in range(self.M)]
        return self.noise.repeat(self.M).split_at(s, reseeds), self.M

    def _start(self, s, copies):
        u = np.atleast_2d(self.path.at(s))
        return np.repeat(u, copies, axis=0)

    def _integral(self, z, s, t, noise, with_drift=False):
        """``int_s^t (P_{T-r} b(flow_r))(x) dr`` for the flow from ``z`` at ``s``."""
        cfg = self.cfg
        k_s, k_t = cfg.row_of(s), cfg.row_of(t)
        n_x, dt = cfg.n_x, cfg.dt
        acc = np.zeros(z.shape[:-1] + (n_x // 2 + 1,), dtype=complex)

        def observe(k, u):
            if k_s <= k < k_t:
                nonlocal acc
                g = self.drift.fast(u)
                acc = acc + np.fft.rfft(dt * g, axis=-1) * self._E ** (self.n_T - k)

        if k_t > k_s:
            if with_drift:
                solve_she(cfg, z, noise, span=(s, t), stamps=[t], observer=observe)
            else:
                solve_driftless(cfg, z, s, noise, T=t, stamps=[t], observer=observe)
        return np.fft.irfft(acc, n=n_x, axis=-1)[..., self.x_index]

    def value(self, s, t):
        """``A_{s,t}`` per replicate."""
        if self.along == "solution":
            return self._integral(self._start(s, 1), s, t, self.noise, with_drift=True)
        noise, m = self._futures(s)
        vals = self._integral(self._start(s, m), s, t, noise)
        return vals.reshape(self.n_replicates, m).mean(axis=1)

    def delta(self, s, a, t):
        """Estimate of ``E^s (A_{s,t} - A_{s,a} - A_{a,t})`` per replicate.

        Equals ``E^s int_a^t P(b(psi^s_r) - b(psi^a_r)) dr`` with ``psi^a``
        restarted from the solution at ``a``, which is itself simulated on
        the same resampled future.
        """
        if self.M is None:
            return self.value(s, t) - self.value(s, a) - self.value(a, t)
        noise, m = self._futures(s)
        z = self._start(s, m)
        cfg = self.cfg
        psi = solve_driftless(cfg, z, s, noise, T=a, stamps=[a]).u[-1]
        u_a = solve_she(cfg, z, noise, span=(s, a), stamps=[a]).u[-1]
        diff = self._integral(psi, a, t, noise) - self._integral(u_a, a, t, noise)
        return diff.reshape(self.n_replicates, m).mean(axis=1)

    def germ(self):
        return Germ(self.value, f"drift-germ[{self.along}]", (None, None), self.delta)


def drift_germ(path, drift, x_index=0, M=64, reseed_base=0, T=None):
    return DriftGerm(path, drift, x_index, M, reseed_base, T).germ()


@dataclass
class SewingReport:
    levels: list
    sums: np.ndarray
    cauchy_gaps: np.ndarray
    gap_ratio: float = None
    gap_ratio_ci: tuple = None
    x1: float = None
    x1_stderr: float = None
    x2: float = None
    x2_stderr: float = None
    x2_signal: bool = True
    scales: np.ndarray = None
    a_norms: np.ndarray = None
    delta_norms: np.ndarray = None


def cauchy_gaps(sums):
    """``||S_d - S_{d+1}||_{L_2}`` for consecutive depths; ``sums`` is ``(R, depths)``."""
    d = np.diff(np.asarray(sums, dtype=float), axis=1)
    return np.sqrt(np.mean(d * d, axis=0))


def _gap_ratio(sums):
    g = cauchy_gaps(sums)
    if np.any(g <= 0):
        return 0.0
    x = np.arange(g.size)
    return float(2.0 ** np.polyfit(x, np.log2(g), 1)[0])


def sewing_sums(germ, depths, T):
    return np.stack([riemann_sum(germ, d, T) for d in depths], axis=1)


def measure_germ_exponents(germ, scales, s0=0.0, depths=None, T=None, n_boot=1000, seed=0,
                           noise_floor=1e-14):
    """Fit ``||A_{s0, s0+h}||_2 ~ h^x1`` and ``||E^s delta A||_2 ~ h^x2`` (midpoint split).

    With ``depths`` and ``T`` the Riemann sums at those depths and their
    Cauchy gaps are included, with a bootstrap interval for the per-depth
    geometric gap ratio.
    """
    scales = np.asarray(scales, dtype=float)
    a_vals = np.stack([germ(s0, s0 + h) for h in scales], axis=1)
    if a_vals.shape[0] < MIN_ENSEMBLE:
        raise InputError(f"ensemble of {a_vals.shape[0]} replicates is below {MIN_ENSEMBLE}")
    a_norm = np.sqrt(np.mean(a_vals ** 2, axis=0))
    x1 = x1_err = None
    if np.all(a_norm > noise_floor):
        x1, x1_err = fit_rate(scales, a_norm)
    d_norm = None
    x2 = x2_err = None
    signal = False
    if germ.delta is not None:
        d_vals = np.stack([germ.delta(s0, s0 + h / 2, s0 + h) for h in scales], axis=1)
        d_norm = np.sqrt(np.mean(d_vals ** 2, axis=0))
        signal = bool(np.all(d_norm > noise_floor))
        if signal:
            x2, x2_err = fit_rate(scales, d_norm)
    rep = SewingReport(levels=[], sums=np.empty((a_vals.shape[0], 0)), cauchy_gaps=np.empty(0),
                       x1=x1, x1_stderr=x1_err, x2=x2, x2_stderr=x2_err, x2_signal=signal,
                       scales=scales, a_norms=a_norm, delta_norms=d_norm)
    if depths is not None:
        sums = sewing_sums(germ, depths, T)
        rep.levels = list(depths)
        rep.sums = sums
        rep.cauchy_gaps = cauchy_gaps(sums)
        rep.gap_ratio = _gap_ratio(sums)
        lo, hi = bootstrap_quantity_ci(sums, _gap_ratio, n_boot=n_boot, seed=seed)
        rep.gap_ratio_ci = (float(lo), float(hi))
    return rep


def report_to_dict(rep):
    def conv(v):
        if isinstance(v, np.ndarray):
            return v.tolist()
        return v
    return {k: conv(v) for k, v in rep.__dict__.items()}
