"""Heat kernels on the real line and on the torus T = R/Z, and the heat semigroup.

The generator is the plain Laplacian, so the real-line kernel is
``(4 pi t)^(-1/2) exp(-x^2 / (4 t))`` and the Fourier multiplier of mode ``m``
on the torus is ``exp(-(2 pi m)^2 t)``.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DomainError, InputError


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid ``x_j = j / n_x`` on [0, 1)."""

    n_x: int
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_x) != self.n_x or self.n_x < 2:
            raise InputError(f"n_x must be an integer >= 2, got {self.n_x!r}")
        pts = np.arange(self.n_x) / self.n_x
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def dx(self):
        return 1.0 / self.n_x


@dataclass(frozen=True)
class HeatKernelConfig:
    """Truncation of the image sum ``sum_k p_t(x - y + k)`` to ``|k| <= wrap_terms``.

    With ``wrap_terms = 12`` the discarded mass at ``t = 1`` is below 1e-14.
    """

    wrap_terms: int = 12
    tail_tol: float = 1e-12

    def __post_init__(self):
        if self.wrap_terms < 1:
            raise InputError("wrap_terms must be positive")
        if not self.tail_tol > 0:
            raise InputError("tail_tol must be positive")

    def tail_bound(self, t=1.0):
        """Upper bound on the discarded images for ``|x - y| < 1``."""
        K = self.wrap_terms
        # |x - y + k| >= |k| - 1 for the discarded k, summed as a geometric-type tail
        ks = np.arange(K + 1, K + 200)
        return float(2.0 * np.sum(heat_kernel_real(t, ks - 1.0)))


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("heat kernel requires t > 0")
    return t


def heat_kernel_real(t, x):
    """Gaussian heat kernel on R at time ``t`` (vectorised)."""
    t = _check_time(t)
    x = np.asarray(x, dtype=float)
    out = np.exp(-(x * x) / (4.0 * t)) / np.sqrt(4.0 * np.pi * t)
    return out if out.ndim else float(out)


def heat_kernel_torus(t, x, y, cfg=HeatKernelConfig()):
    """Periodic heat kernel ``p_t(x, y)`` by a truncated wrapped-Gaussian sum."""
    t = _check_time(t)
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    # reduce to [-1/2, 1/2) so the truncation is symmetric around the main image
    d = d - np.floor(d + 0.5)
    ks = np.arange(-cfg.wrap_terms, cfg.wrap_terms + 1, dtype=float)
    arg = d[..., None] + ks
    tt = t[..., None] if t.ndim else t
    out = np.sum(np.exp(-(arg * arg) / (4.0 * tt)), axis=-1) / np.sqrt(4.0 * np.pi * t)
    return out if np.ndim(out) else float(out)


def mode_numbers(n_x):
    """Integer frequencies of the real-FFT modes of an ``n_x``-point grid."""
    return np.arange(n_x // 2 + 1)


def mode_eigenvalues(n_x):
    """``(2 pi m)^2`` for the real-FFT modes."""
    m = mode_numbers(n_x)
    return (2.0 * np.pi * m) ** 2


def semigroup_multiplier(n_x, t):
    return np.exp(-mode_eigenvalues(n_x) * t)


def _as_field(g):
    g = np.asarray(g, dtype=float)
    if g.ndim == 0 or g.shape[-1] < 2:
        raise InputError("field must have a trailing spatial axis of length >= 2")
    if not np.all(np.isfinite(g)):
        raise InputError("field has non-finite entries")
    return g


def apply_semigroup(g, t, method="spectral", cfg=HeatKernelConfig()):
    """Apply ``P_t`` to grid field(s) ``g`` (last axis is space).

    ``method="spectral"`` diagonalises in the discrete Fourier basis,
    ``method="quadrature"`` sums the periodic kernel against the samples.
    """
    t = float(t)
    if t < 0:
        raise DomainError("semigroup time must be nonnegative")
    g = _as_field(g)
    if t == 0:
        return g.copy()
    n = g.shape[-1]
    if method == "spectral":
        return np.fft.irfft(np.fft.rfft(g, axis=-1) * semigroup_multiplier(n, t), n=n, axis=-1)
    if method == "quadrature":
        x = np.arange(n) / n
        row = heat_kernel_torus(t, x, 0.0, cfg) / n
        # circulant matrix K[i, j] = row[(i - j) mod n]
        idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
        return g @ row[idx].T
    raise InputError(f"unknown semigroup method {method!r}")


def evaluate_at(g_hat, n_x, x):
    """Evaluate the trigonometric interpolant of real-FFT coefficients at points ``x``."""
    m = mode_numbers(n_x)
    w = np.full(m.shape, 2.0)
    w[0] = 1.0
    if n_x % 2 == 0:
        w[-1] = 1.0
    phase = np.exp(2j * np.pi * np.multiply.outer(np.asarray(x, dtype=float), m))
    return (np.real(g_hat[..., None, :] * phase) @ w) / n_x


# --- heat-kernel difference estimates ----------------------------------------

def _spatial_sq_integral(h, t, n_modes):
    """int_0^t int_T |p_r(x, y) - p_r(x + h, y)|^2 dy dr, exactly in Fourier modes."""
    m = np.arange(1, n_modes + 1, dtype=float)
    lam = (2.0 * np.pi * m) ** 2
    h = np.asarray(h, dtype=float)[..., None]
    t = np.asarray(t, dtype=float)[..., None]
    one_minus_cos = 1.0 - np.cos(2.0 * np.pi * m * h)
    # sum over +-m of 2 (1 - cos) (1 - e^{-2 lam t}) / (2 lam); the e^0 part has the
    # closed form sum_m (1 - cos(2 pi m h)) / (2 pi^2 m^2) = h (1 - h) / 2 for h in [0, 1]
    hh = h[..., 0] - np.floor(h[..., 0])
    full = 0.5 * hh * (1.0 - hh)
    decay = np.sum(2.0 * one_minus_cos * np.exp(-2.0 * lam * t) / lam, axis=-1)
    return full - decay


def _temporal_sq_integral(s, t, n_modes):
    """int_0^s int_T |p_{t-r}(x, y) - p_{s-r}(x, y)|^2 dy dr for s <= t."""
    m = np.arange(1, n_modes + 1, dtype=float)
    lam = (2.0 * np.pi * m) ** 2
    s = np.asarray(s, dtype=float)[..., None]
    t = np.asarray(t, dtype=float)[..., None]
    terms = (np.expm1(-lam * (t - s)) ** 2) * (-np.expm1(-2.0 * lam * s)) / (2.0 * lam)
    return 2.0 * np.sum(terms, axis=-1)


@dataclass
class KernelEstimateReport:
    eps: float
    n_x: int
    l1_spatial: float
    sq_spatial: float
    sq_temporal: float

    def as_rows(self):
        return [
            ("l1_spatial", self.l1_spatial),
            ("sq_spatial", self.sq_spatial),
            ("sq_temporal", self.sq_temporal),
        ]


def validate_kernel_estimates(eps, t_grid, n_x, separations=None, n_modes=20000,
                              cfg=HeatKernelConfig()):
    """Measure the suprema of LHS/RHS for the three heat-kernel difference estimates.

    ``separations`` are the sampled ``|x - xbar|`` (defaults to every grid
    offset ``j / n_x`` up to 1/2); ``t_grid`` supplies ``t`` and, for the
    temporal estimate, all ordered pairs ``s < t`` drawn from it.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0:
        raise InputError("empty t grid")
    if np.any(t_grid <= 0) or np.any(t_grid > 1):
        raise DomainError("t grid must lie in (0, 1]")
    if not 0 < eps <= 1:
        raise DomainError("eps must lie in (0, 1]")
    if separations is None:
        separations = np.arange(1, n_x // 2 + 1) / n_x
    h = np.asarray(separations, dtype=float)
    if h.size == 0:
        raise InputError("empty separation grid")

    grid = TorusGrid(n_x)
    l1 = 0.0
    for t in t_grid:
        base = heat_kernel_torus(t, grid.points, 0.0, cfg)
        for hv in h:
            shifted = heat_kernel_torus(t, grid.points, hv, cfg)
            lhs = np.sum(np.abs(base - shifted)) * grid.dx
            l1 = max(l1, lhs / (hv ** eps * t ** (-eps / 2)))

    T, H = np.meshgrid(t_grid, h, indexing="ij")
    sq = _spatial_sq_integral(H, T, n_modes)
    sq_ratio = float(np.max(sq / (H ** (1 - eps) * T ** (eps / 2))))

    ss, tt = np.meshgrid(t_grid, t_grid, indexing="ij")
    mask = ss < tt
    if np.any(mask):
        tmp = _temporal_sq_integral(ss[mask], tt[mask], n_modes)
        tmp_ratio = float(np.max(tmp / (tt[mask] - ss[mask]) ** (0.5 - eps / 2)))
    else:
        tmp_ratio = 0.0
    return KernelEstimateReport(eps=eps, n_x=n_x, l1_spatial=float(l1),
                                sq_spatial=sq_ratio, sq_temporal=tmp_ratio)


def kernel_suite(n_x=2048, times=(1e-4, 1e-2, 1.0), cfg=HeatKernelConfig(), seed=0):
    """Normalisation, composition and eigenfunction checks of the torus kernel and semigroup."""
    grid = TorusGrid(n_x)
    norm = {float(t): abs(float(np.sum(heat_kernel_torus(t, grid.points, 0.0, cfg)) * grid.dx) - 1.0)
            for t in times}
    g = np.random.default_rng(seed).standard_normal(n_x)
    g = apply_semigroup(g, 1e-4)  # a smooth but rough-looking test field
    comp = 0.0
    for s, t in ((1e-4, 1e-3), (1e-3, 1e-2), (1e-2, 0.1)):
        for method in ("spectral", "quadrature"):
            two = apply_semigroup(apply_semigroup(g, s, method, cfg), t, method, cfg)
            one = apply_semigroup(g, s + t, method, cfg)
            comp = max(comp, float(np.max(np.abs(two - one))))
    eig = 0.0
    c = np.cos(2.0 * np.pi * grid.points)
    for t in times:
        for method in ("spectral", "quadrature"):
            eig = max(eig, float(np.max(np.abs(apply_semigroup(c, t, method, cfg)
                                               - np.exp(-4.0 * np.pi ** 2 * t) * c))))
    return dict(normalization=norm, composition=comp, eigen=eig)
