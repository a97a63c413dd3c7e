"""Named drifts and diffusion coefficients shipped with the package.

Each drift carries a declared nominal regularity index ``alpha``; experiments
derive their target exponents from it instead of measuring it.
"""
import numpy as np

from .besov import DEFAULT_WINDOW, AtomicMeasure, DistributionalDrift, WeakDerivative, ZeroDrift
from .errors import InputError
from .solver import constant_sigma, sine_sigma


def bounded_drift(window=DEFAULT_WINDOW):
    """``sign(x)``, the weak derivative of ``|x|``."""
    lo, hi = window
    return WeakDerivative(knots=[lo, 0.0, hi], values=[-lo, 0.0, hi], alpha_nominal=0.0,
                          window=window, name="bounded")


class LacunaryDerivative(DistributionalDrift):
    """Weak derivative of ``F(x) = sum_k base^(-k h) cos(base^k x)``, ``k = 0 .. n_terms - 1``.

    ``F`` is Hoelder of order ``h`` at every point and scale (above the top
    frequency), so ``b = F'`` has regularity ``h - 1`` uniformly in space.
    The heat flow acts on each mode by ``exp(-base^(2k) eps)``.
    """

    window = DEFAULT_WINDOW

    def __init__(self, h=0.5, base=2.0, n_terms=16, amplitude=1.0, name="half-derivative"):
        self.h, self.base, self.n_terms, self.amplitude = float(h), float(base), int(n_terms), float(amplitude)
        self.alpha_nominal = self.h - 1.0
        self.name = name
        k = np.arange(self.n_terms)
        self._freq = self.base ** k
        self._coef = -self.amplitude * self.base ** (k * (1.0 - self.h))

    def _mollified(self, x, eps):
        x = np.asarray(x, dtype=float)
        damp = self._coef * np.exp(-self._freq ** 2 * eps)
        out = np.zeros(x.shape)
        for c, f in zip(damp, self._freq):
            if c != 0.0:
                out += c * np.sin(f * x)
        return out

    def primitive(self, x):
        k = np.arange(self.n_terms)
        x = np.asarray(x, dtype=float)
        return self.amplitude * sum(self.base ** (-kk * self.h) * np.cos(self.base ** kk * x) for kk in k)


def half_derivative_drift(n_terms=16, amplitude=1.0):
    """Nominal ``alpha = -1/2``: derivative of a lacunary cosine series of Hoelder order 1/2."""
    return LacunaryDerivative(0.5, 2.0, n_terms, amplitude, "half-derivative")


def brownian_derivative_drift(seed=2024, spacing=1.0 / 1024, window=DEFAULT_WINDOW, amplitude=1.0):
    """Weak derivative of a sampled Brownian path (nominal ``alpha = -1/2``).

    The path is pinned to 0 at the origin and sampled with the given knot
    spacing; it is piecewise linear between knots.
    """
    lo, hi = window
    rng = np.random.default_rng(seed)
    n_left = int(round(-lo / spacing))
    n_right = int(round(hi / spacing))
    left = np.concatenate(([0.0], np.cumsum(rng.standard_normal(n_left)) * np.sqrt(spacing)))
    right = np.concatenate(([0.0], np.cumsum(rng.standard_normal(n_right)) * np.sqrt(spacing)))
    knots = np.concatenate((-np.arange(n_left, 0, -1) * spacing, np.arange(n_right + 1) * spacing))
    values = amplitude * np.concatenate((left[:0:-1], right))
    return WeakDerivative(knots=knots, values=values, alpha_nominal=-0.5, window=window,
                          name="brownian-derivative")


def atomic_drift(locations=(0.0,), weights=(1.0,), window=DEFAULT_WINDOW):
    return AtomicMeasure(locations, weights, alpha_nominal=-1.0 + 1e-9, window=window, name="atomic")


class SineDrift(DistributionalDrift):
    """``b(x) = a sin(x)``; the heat flow damps it by ``exp(-eps)``."""

    alpha_nominal = 0.0
    window = (-np.inf, np.inf)
    name = "smooth"

    def __init__(self, amplitude=1.0):
        self.amplitude = float(amplitude)

    def _mollified(self, x, eps):
        return self.amplitude * np.exp(-eps) * np.sin(x)


def smooth_drift(amplitude=1.0):
    return SineDrift(amplitude)


class ConstantDrift(DistributionalDrift):
    """``b = c``; invariant under mollification."""

    alpha_nominal = 0.0
    window = (-np.inf, np.inf)
    name = "constant"

    def __init__(self, c):
        self.c = float(c)

    def _mollified(self, x, eps):
        return np.full(np.shape(x), self.c)


def constant_drift(c=1.0):
    return ConstantDrift(c)


def zero_drift():
    return ZeroDrift()


DRIFTS = {
    "bounded": bounded_drift,
    "half-derivative": half_derivative_drift,
    "brownian-derivative": brownian_derivative_drift,
    "atomic": atomic_drift,
    "smooth": smooth_drift,
    "constant": constant_drift,
    "zero": zero_drift,
}

SIGMAS = {
    "constant": constant_sigma,
    "sine": sine_sigma,
}


def make_drift(name, **params):
    try:
        factory = DRIFTS[name]
    except KeyError:
        raise InputError(f"unknown drift {name!r}; choose from {sorted(DRIFTS)}") from None
    return factory(**params)


def make_sigma(name, **params):
    try:
        factory = SIGMAS[name]
    except KeyError:
        raise InputError(f"unknown sigma {name!r}; choose from {sorted(SIGMAS)}") from None
    return factory(**params)
