"""Distributional drifts, their Gaussian mollification and heat-based Besov-Hoelder norms.

For ``alpha < 0`` the norm of a distribution ``f`` on R is
``sup_{eps in (0, 1]} eps^(-alpha/2) ||P_eps f||_inf`` where ``P_eps`` is the
real-line heat semigroup (kernel variance ``2 eps``).  The estimators here take
the maximum over finite dyadic scales and a finite evaluation window, so they
return lower bounds for the true norm.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .errors import DomainError, InputError, WindowError
from .torus import heat_kernel_real

DEFAULT_WINDOW = (-6.0, 6.0)


class DistributionalDrift:
    """Base class; concrete variants implement ``_mollified(x, eps)``."""

    alpha_nominal = 0.0
    window = DEFAULT_WINDOW

    def _mollified(self, x, eps):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class SmoothFn(DistributionalDrift):
    """A smooth bounded function ``f`` with bounded derivatives."""

    f: callable
    alpha_nominal: float = 0.0
    window: tuple = DEFAULT_WINDOW
    name: str = "smooth"

    def _mollified(self, x, eps):
        # adaptive quadrature of f(x - y) p_eps(y) over |y| <= 12 sqrt(eps)
        half = 12.0 * np.sqrt(eps)
        x = np.asarray(x, dtype=float)

        def integrand(y):
            return np.asarray(self.f(x - y), dtype=float) * heat_kernel_real(eps, y)

        val, _ = integrate.quad_vec(integrand, -half, half, epsabs=1e-13, epsrel=1e-11,
                                    points=(0.0,))
        return val


@dataclass(frozen=True, eq=False)
class WeakDerivative(DistributionalDrift):
    """``b = F'`` in the distributional sense for a bounded continuous primitive ``F``.

    ``F`` is either a callable or piecewise linear through ``(knots, values)``;
    outside the knot range ``F`` is extended by constants.  The piecewise-linear
    case is mollified in closed form.
    """

    F: callable = None
    knots: np.ndarray = None
    values: np.ndarray = None
    alpha_nominal: float = -0.5
    window: tuple = DEFAULT_WINDOW
    name: str = "weak-derivative"

    def __post_init__(self):
        if self.F is None and self.knots is None:
            raise InputError("WeakDerivative needs a callable F or (knots, values)")
        if self.knots is not None:
            k = np.asarray(self.knots, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if k.ndim != 1 or k.shape != v.shape or k.size < 2 or np.any(np.diff(k) <= 0):
                raise InputError("knots must be strictly increasing and match values")
            if not np.all(np.isfinite(v)):
                raise InputError("primitive values must be finite")
            object.__setattr__(self, "knots", k)
            object.__setattr__(self, "values", v)

    @classmethod
    def from_csv(cls, path, alpha_nominal=-0.5, window=DEFAULT_WINDOW, name=None):
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        if data.shape[1] != 2:
            raise InputError(f"{path}: expected two columns (x, F(x))")
        order = np.argsort(data[:, 0])
        return cls(knots=data[order, 0], values=data[order, 1], alpha_nominal=alpha_nominal,
                   window=window, name=name or str(path))

    @cached_property
    def _jumps(self):
        slopes = np.diff(self.values) / np.diff(self.knots)
        # derivative jumps at each knot, starting from slope 0 on the left
        return np.diff(np.concatenate(([0.0], slopes, [0.0])))

    def primitive_mollified(self, x, eps):
        """``P_eps F`` (used by finite-difference checks)."""
        x = np.asarray(x, dtype=float)
        if self.knots is not None:
            F = lambda y: np.interp(y, self.knots, self.values)
        else:
            F = self.F
        return SmoothFn(F)._mollified(x, eps)

    def _mollified(self, x, eps):
        x = np.asarray(x, dtype=float)
        sd = np.sqrt(2.0 * eps)
        if self.knots is not None:
            return self._pl_mollified(x, sd)
        # d/dx (p_eps * F)(x) = int p_eps'(y) F(x - y) dy,  p_eps'(y) = -y / (2 eps) p_eps(y)
        half = 12.0 * np.sqrt(eps)

        def integrand(y):
            return np.asarray(self.F(x - y), dtype=float) * (-y / (2.0 * eps)) * heat_kernel_real(eps, y)

        val, _ = integrate.quad_vec(integrand, -half, half, epsabs=1e-13, epsrel=1e-11,
                                    points=(0.0,))
        return val

    def _pl_mollified(self, x, sd, chunk=1 << 21):
        # P_eps F'(x) = sum_i J_i Phi((x - a_i) / sd), J the slope jumps at knots a_i.
        # Knots far left contribute J_i (Phi = 1), far right contribute 0.
        a = self.knots
        J = self._jumps
        cumJ = np.concatenate(([0.0], np.cumsum(J)))
        flat = x.ravel()
        out = np.empty_like(flat)
        reach = 10.0 * sd
        lo = np.searchsorted(a, flat - reach)
        hi = np.searchsorted(a, flat + reach)
        width = int(np.max(hi - lo)) if flat.size else 0
        step = max(1, chunk // max(width, 1))
        for i0 in range(0, flat.size, step):
            sl = slice(i0, i0 + step)
            l = lo[sl]
            idx = l[:, None] + np.arange(width)[None, :]
            valid = idx < hi[sl][:, None]
            idx = np.minimum(idx, a.size - 1)
            terms = J[idx] * ndtr((flat[sl, None] - a[idx]) / sd)
            out[sl] = cumJ[l] + np.sum(np.where(valid, terms, 0.0), axis=1)
        return out.reshape(x.shape)


@dataclass(frozen=True, eq=False)
class AtomicMeasure(DistributionalDrift):
    """``b = sum_i w_i delta_{x_i}``."""

    locations: tuple = ()
    weights: tuple = ()
    alpha_nominal: float = -0.99
    window: tuple = DEFAULT_WINDOW
    name: str = "atomic"

    def __post_init__(self):
        loc = np.atleast_1d(np.asarray(self.locations, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if loc.shape != w.shape or loc.ndim != 1:
            raise InputError("locations and weights must be 1-d of equal length")
        if not (np.all(np.isfinite(loc)) and np.all(np.isfinite(w))):
            raise InputError("atoms must be finite")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", w)

    def _mollified(self, x, eps):
        x = np.asarray(x, dtype=float)
        return np.sum(self.weights * heat_kernel_real(eps, x[..., None] - self.locations), axis=-1)


@dataclass(frozen=True, eq=False)
class ScaledDrift(DistributionalDrift):
    """``sum_i c_i b_i`` for drifts ``b_i`` (formal linear combination)."""

    parts: tuple = ()
    coefs: tuple = ()
    alpha_nominal: float = 0.0
    window: tuple = DEFAULT_WINDOW
    name: str = "combination"

    def _mollified(self, x, eps):
        x = np.asarray(x, dtype=float)
        return sum(c * b._mollified(x, eps) for b, c in zip(self.parts, self.coefs))


def scale(b, c):
    return ScaledDrift((b,), (float(c),), b.alpha_nominal, b.window, f"{c}*{getattr(b, 'name', 'b')}")


def difference(b1, b2):
    window = (max(b1.window[0], b2.window[0]), min(b1.window[1], b2.window[1]))
    return ScaledDrift((b1, b2), (1.0, -1.0), min(b1.alpha_nominal, b2.alpha_nominal), window,
                       "difference")


@dataclass(frozen=True, eq=False)
class MollifiedDrift:
    """``P_eps b`` as an ordinary function on the window.

    Calling the object evaluates the mollification exactly (closed form or
    adaptive quadrature).  :meth:`fast` evaluates a dense linear-interpolation
    table, which is what the time steppers use.
    """

    base: DistributionalDrift
    eps: float
    table_points_per_sd: int = 64

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError("mollification scale must be positive")

    @property
    def window(self):
        return self.base.window

    @property
    def alpha_nominal(self):
        return self.base.alpha_nominal

    def check_window(self, x):
        x = np.asarray(x)
        lo, hi = self.window
        if x.size and (np.min(x) < lo or np.max(x) > hi):
            bad = float(np.min(x)) if np.min(x) < lo else float(np.max(x))
            raise WindowError(f"value {bad:.4g} outside drift window [{lo}, {hi}]", value=bad)

    def __call__(self, x):
        self.check_window(x)
        return self.base._mollified(np.asarray(x, dtype=float), self.eps)

    def evaluation(self, x):
        return self(x)

    @cached_property
    def table(self):
        lo, hi = self.window
        sd = np.sqrt(2.0 * self.eps)
        h = min(sd / self.table_points_per_sd, (hi - lo) / 256)
        n = min(int(np.ceil((hi - lo) / h)) + 1, 1 << 20)
        xs = np.linspace(lo, hi, n)
        ys = self.base._mollified(xs, self.eps)
        xs.setflags(write=False)
        ys.setflags(write=False)
        return xs, ys

    def fast(self, x):
        if not np.all(np.isfinite(self.window)):
            # unbounded window: the drift has a cheap closed form
            return self.base._mollified(np.asarray(x, dtype=float), self.eps)
        xs, ys = self.table
        return np.interp(x, xs, ys)

    def as_smooth(self):
        return SmoothFn(self.__call__, self.alpha_nominal, self.window, f"P{self.eps:g}")


class ZeroDrift(DistributionalDrift):
    """The zero distribution."""

    name = "zero"
    window = (-np.inf, np.inf)

    def _mollified(self, x, eps):
        return np.zeros(np.shape(x))


def mollify(b, eps):
    """Gaussian mollification ``P^R_eps b`` of a drift."""
    if not 0 < eps <= 1:
        raise DomainError(f"mollification scale must lie in (0, 1], got {eps}")
    return MollifiedDrift(b, float(eps))


def mollification_schedule(n):
    """Scale ``eps_n = 4^-n``."""
    return 4.0 ** (-n)


def dyadic_scales(k_min, k_max):
    return 2.0 ** -np.arange(k_min, k_max + 1)


def _validate_grids(eps_grid, x_grid):
    eps_grid = np.atleast_1d(np.asarray(eps_grid, dtype=float))
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    if eps_grid.size == 0 or x_grid.size == 0:
        raise InputError("empty scale or evaluation grid")
    if np.any(eps_grid <= 0) or np.any(eps_grid > 1):
        raise DomainError("scales must lie in (0, 1]")
    return eps_grid, x_grid


def besov_norm_estimate(b, alpha, eps_grid, x_grid, per_scale=False):
    """``max_eps eps^(-alpha/2) max_x |P_eps b(x)|`` over the given finite grids."""
    if not alpha < 0:
        raise DomainError("alpha must be negative")
    eps_grid, x_grid = _validate_grids(eps_grid, x_grid)
    values = np.array([eps ** (-alpha / 2.0) * np.max(np.abs(b._mollified(x_grid, eps)))
                       for eps in eps_grid])
    return (float(values.max()), values) if per_scale else float(values.max())


def drift_distance(b1, b2, gamma, eps_grid, x_grid):
    """Estimated ``C^gamma`` distance of two drifts through their mollified difference."""
    if not gamma < 0:
        raise DomainError("gamma must be negative")
    eps_grid, x_grid = _validate_grids(eps_grid, x_grid)
    out = 0.0
    for eps in eps_grid:
        d = _evaluate_at_scale(b1, x_grid, eps) - _evaluate_at_scale(b2, x_grid, eps)
        out = max(out, eps ** (-gamma / 2.0) * float(np.max(np.abs(d))))
    return out


def _evaluate_at_scale(b, x, eps):
    # a MollifiedDrift at scale e0 mollified again at eps equals the base at e0 + eps
    if isinstance(b, MollifiedDrift):
        return b.base._mollified(x, b.eps + eps)
    return b._mollified(x, eps)
