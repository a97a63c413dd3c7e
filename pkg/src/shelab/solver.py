"""Exponential-Euler time stepping of the mild equation on the torus.

One step of size ``dt`` maps ``u`` to ``P_dt[u + dt b(u) + sigma(u) W / dx]``
where ``W`` is the row of noise cell masses.  The three parts are carried
separately in Fourier space (``P_t u0``, the drift convolution ``D`` and the
stochastic convolution ``V``) so ``u = P_t u0 + D + V`` holds at every step
up to round-off.  Fields may carry leading batch axes (one per replicate).
"""
from dataclasses import dataclass, field
import csv

import numpy as np

from .errors import BlowUpError, InputError, WindowError
from .noise import NoiseGrid, dump_arrays, load_arrays
from .torus import semigroup_multiplier

CHUNK_ROWS = 64


@dataclass(frozen=True)
class Sigma:
    """Diffusion coefficient with its first two derivatives and ellipticity floor ``mu``."""

    name: str
    f: callable = field(repr=False)
    df: callable = field(repr=False)
    d2f: callable = field(repr=False)
    mu: float
    params: tuple = ()

    def __call__(self, x):
        return self.f(x)

    @property
    def is_constant(self):
        return self.name == "constant"


def constant_sigma(c=1.0):
    c = float(c)
    return Sigma("constant", lambda x: np.full(np.shape(x), c), lambda x: np.zeros(np.shape(x)),
                 lambda x: np.zeros(np.shape(x)), abs(c), (("c", c),))


def sine_sigma(a=1.0, c=0.5):
    """``sigma(x) = a + c sin(x)``, elliptic with ``mu = a - |c|`` when ``a > |c|``."""
    a, c = float(a), float(c)
    return Sigma("sine", lambda x: a + c * np.sin(x), lambda x: c * np.cos(x),
                 lambda x: -c * np.sin(x), max(a - abs(c), 0.0), (("a", a), ("c", c)))


def scaled_sigma(sigma, k):
    k = float(k)
    return Sigma(f"{k}*{sigma.name}", lambda x: k * sigma.f(x), lambda x: k * sigma.df(x),
                 lambda x: k * sigma.d2f(x), abs(k) * sigma.mu, sigma.params + (("scale", k),))


@dataclass(frozen=True)
class SolverConfig:
    """Grid, coefficients and output stride of a solve.

    The exponential integrator is unconditionally stable; ``dt <= c_stab dx^2``
    with ``c_stab = 1`` is only an accuracy guideline and is not enforced.
    """

    n_t: int
    n_x: int
    T: float
    sigma: Sigma
    drift: object = None
    stride: int = 1
    scheme: str = "exponential-euler"

    C_STAB = 1.0

    def __post_init__(self):
        if self.n_t < 1 or self.n_x < 2 or self.n_x % 2:
            raise InputError("need n_t >= 1 and an even n_x >= 2")
        if not 0 < self.T <= 1:
            raise InputError("horizon T must lie in (0, 1]")
        if self.stride < 1:
            raise InputError("stride must be >= 1")
        if self.scheme != "exponential-euler":
            raise InputError(f"unknown scheme {self.scheme!r}")

    @property
    def dt(self):
        return self.T / self.n_t

    @property
    def dx(self):
        return 1.0 / self.n_x

    @property
    def within_accuracy_guideline(self):
        return self.dt <= self.C_STAB * self.dx ** 2

    def without_drift(self):
        return SolverConfig(self.n_t, self.n_x, self.T, self.sigma, None, self.stride, self.scheme)

    def with_drift(self, drift):
        return SolverConfig(self.n_t, self.n_x, self.T, self.sigma, drift, self.stride, self.scheme)

    def row_of(self, t):
        k = t / self.dt
        kr = int(round(k))
        if abs(k - kr) > 1e-9 * max(1.0, k) or not 0 <= kr <= self.n_t:
            raise InputError(f"time {t} is not on the solver grid (dt = {self.dt})")
        return kr


@dataclass(frozen=True)
class FieldState:
    values: np.ndarray
    time: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 1 or not np.all(np.isfinite(v)):
            raise InputError("field values must be finite with a spatial axis")
        object.__setattr__(self, "values", v)


@dataclass
class SolutionPath:
    """Stored stamps of ``u``, ``P u0``, ``D`` and ``V``; arrays are ``(stamp, *batch, n_x)``."""

    times: np.ndarray
    rows: np.ndarray
    u: np.ndarray
    D: np.ndarray
    V: np.ndarray
    free: np.ndarray
    config: SolverConfig
    noise: object = field(repr=False, default=None)

    @property
    def start(self):
        return float(self.times[0])

    @property
    def end(self):
        return float(self.times[-1])

    def index_of(self, t):
        k = self.config.row_of(t)
        hit = np.nonzero(self.rows == k)[0]
        if hit.size == 0:
            raise InputError(f"time {t} is not a stored stamp of this path")
        return int(hit[0])

    def at(self, t):
        return self.u[self.index_of(t)]

    def state(self, t):
        return FieldState(self.at(t), float(t))

    def decomposition_error(self):
        return float(np.max(np.abs(self.u - self.free - self.D - self.V)))

    def to_csv(self, path):
        batch = self.u.shape[1:-1]
        n_x = self.u.shape[-1]
        xs = np.arange(n_x) / n_x
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "replicate", "x", "u", "D", "V"])
            for i, t in enumerate(self.times):
                for r in np.ndindex(*batch) if batch else [()]:
                    rep = int(np.ravel_multi_index(r, batch)) if batch else 0
                    for j in range(n_x):
                        w.writerow([repr(float(t)), rep, repr(float(xs[j])),
                                    repr(float(self.u[(i,) + r + (j,)])),
                                    repr(float(self.D[(i,) + r + (j,)])),
                                    repr(float(self.V[(i,) + r + (j,)]))])

    def dump(self, path):
        cfg = self.config
        dump_arrays(path, "path", [self.times, self.rows.astype(float), self.u, self.D, self.V,
                                   self.free, np.array(self.u.shape, dtype=float)],
                    cfg.n_t, cfg.n_x, cfg.T)


def load_path_arrays(path):
    meta, arrays = load_arrays(path)
    if meta["kind"] != "path":
        raise InputError(f"{path}: dump kind is {meta['kind']!r}, expected 'path'")
    times, rows, u, D, V, free, shape = arrays
    shape = tuple(int(s) for s in shape)
    return dict(times=times, rows=rows.astype(int), u=u.reshape(shape), D=D.reshape(shape),
                V=V.reshape(shape), free=free.reshape(shape), meta=meta)


def _initial_field(u0, noise, n_x):
    values = u0.values if isinstance(u0, FieldState) else np.asarray(u0, dtype=float)
    if values.shape[-1] != n_x:
        raise InputError(f"initial field has {values.shape[-1]} points, solver has {n_x}")
    if not np.all(np.isfinite(values)):
        raise InputError("initial field must be finite")
    R = noise.n_streams
    if values.ndim == 1:
        batch = (R,) if R > 1 or not isinstance(noise, NoiseGrid) else ()
        values = np.broadcast_to(values, batch + (n_x,)).copy()
    elif values.shape[0] != R:
        raise InputError(f"initial field batch {values.shape[0]} != noise streams {R}")
    return values


def _stamp_rows(k_start, k_end, stride, stamps, cfg):
    if stamps is not None:
        rows = sorted({cfg.row_of(t) for t in stamps} | {k_start, k_end})
        if rows[0] < k_start or rows[-1] > k_end:
            raise InputError("requested stamps outside the solve span")
        return np.array(rows)
    rows = list(range(k_start, k_end + 1, stride))
    if rows[-1] != k_end:
        rows.append(k_end)
    return np.array(rows)


def _march(cfg, u0, noise, span, drift, stamps=None, observer=None):
    if (noise.n_t, noise.n_x) != (cfg.n_t, cfg.n_x) or abs(noise.T - cfg.T) > 1e-15 * cfg.T:
        raise InputError("noise resolution does not match the solver configuration")
    s, t_end = span if span is not None else (0.0, cfg.T)
    k0, k1 = cfg.row_of(s), cfg.row_of(t_end)
    if k1 < k0:
        raise InputError("span must satisfy s <= T")
    u = _initial_field(u0, noise, cfg.n_x)
    squeeze = isinstance(noise, NoiseGrid) and u.ndim == 1
    if squeeze:
        u = u[None]
    n_x, dt, dx = cfg.n_x, cfg.dt, cfg.dx
    E = semigroup_multiplier(n_x, dt)
    sig = cfg.sigma
    rows_out = _stamp_rows(k0, k1, cfg.stride, stamps, cfg)
    store = {int(r): i for i, r in enumerate(rows_out)}
    shape = (len(rows_out),) + u.shape
    U, Dv, Vv, Fv = (np.zeros(shape) for _ in range(4))
    U[0] = u
    Fv[0] = u
    free_hat = np.fft.rfft(u, axis=-1)
    D_hat = np.zeros_like(free_hat)
    V_hat = np.zeros_like(free_hat)
    for c0 in range(k0, k1, CHUNK_ROWS):
        c1 = min(c0 + CHUNK_ROWS, k1)
        W = noise.rows(c0, c1)
        for k in range(c0, c1):
            if observer is not None:
                observer(k, u)
            if drift is not None:
                try:
                    drift.check_window(u)
                except WindowError as err:
                    raise WindowError(f"step {k}: {err}", step=k, value=err.value) from None
                D_hat = E * (D_hat + np.fft.rfft(dt * drift.fast(u), axis=-1))
            V_hat = E * (V_hat + np.fft.rfft(sig.f(u) * W[:, k - c0] / dx, axis=-1))
            free_hat = free_hat * E
            u = np.fft.irfft(free_hat + D_hat + V_hat, n=n_x, axis=-1)
            if not np.all(np.isfinite(u)):
                raise BlowUpError(f"non-finite field at step {k + 1}", step=k + 1)
            i = store.get(k + 1)
            if i is not None:
                U[i] = u
                Dv[i] = np.fft.irfft(D_hat, n=n_x, axis=-1)
                Vv[i] = np.fft.irfft(V_hat, n=n_x, axis=-1)
                Fv[i] = np.fft.irfft(free_hat, n=n_x, axis=-1)
    if squeeze:
        U, Dv, Vv, Fv = U[:, 0], Dv[:, 0], Vv[:, 0], Fv[:, 0]
    times = rows_out * dt
    return SolutionPath(times, rows_out, U, Dv, Vv, Fv, cfg, noise)


def solve_she(cfg, u0, noise, span=None, stamps=None, observer=None):
    """Solve ``(d_t - Lap) u = b(u) + sigma(u) xi`` on ``span = (s, T)``.

    ``cfg.drift`` is a mollified drift (or ``None``); ``u0`` is a field of
    length ``n_x`` or a batch matching ``noise.n_streams``.  ``observer(k, u)``
    is called before each step with the current field.
    """
    return _march(cfg, u0, noise, span, cfg.drift, stamps, observer)


def solve_driftless(cfg, z, s, noise, T=None, stamps=None, observer=None):
    """The driftless flow started from ``z`` at time ``s`` (``D`` is identically 0)."""
    return _march(cfg, z, noise, (s, cfg.T if T is None else T), None, stamps, observer)


def driftless_shadow(path, s, T=None, stamps=None, observer=None):
    """Driftless flow restarted from ``path.u(s)`` at ``s`` with the path's own noise."""
    z = path.at(s)
    return solve_driftless(path.config, z, s, path.noise, path.end if T is None else T,
                           stamps, observer)
