"""Monte-Carlo norms, log-log rate fits and bootstrap intervals."""
from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUpError, InputError


@dataclass
class RateReport:
    scales: np.ndarray
    estimates: np.ndarray
    stderrs: np.ndarray
    slope: float
    slope_stderr: float
    n_replicates: int
    label: str = ""
    seeds: tuple = ()
    target: float = None
    tolerance: float = None
    ci: tuple = None
    n_excluded: int = 0
    refused: bool = False
    extra: dict = field(default_factory=dict)

    def within(self, target=None, tolerance=None):
        target = self.target if target is None else target
        tolerance = self.tolerance if tolerance is None else tolerance
        return abs(self.slope - target) <= tolerance

    def rows(self):
        return [(self.label, float(s), float(e), float(se))
                for s, e, se in zip(self.scales, self.estimates, self.stderrs)]


def mc_lp_norm(sampler, p, n_replicates=None, max_nonfinite=0.01):
    """``(mean |X|^p)^(1/p)`` with a delta-method standard error.

    ``sampler`` is an array of replicate values or a callable ``i -> X_i``.
    Returns ``(estimate, stderr, n_nonfinite)``.
    """
    if p < 1:
        raise InputError("p must be >= 1")
    if callable(sampler):
        if n_replicates is None:
            raise InputError("n_replicates is required with a callable sampler")
        x = np.array([sampler(i) for i in range(n_replicates)], dtype=float)
    else:
        x = np.asarray(sampler, dtype=float).ravel()
    if x.size < 100:
        raise InputError(f"at least 100 replicates are required, got {x.size}")
    finite = np.isfinite(x)
    bad = int(x.size - finite.sum())
    if bad > max_nonfinite * x.size:
        raise BlowUpError(f"{bad} of {x.size} samples are non-finite")
    y = np.abs(x[finite]) ** p
    m = float(y.mean())
    if m == 0.0:
        return 0.0, 0.0, bad
    se_m = float(y.std(ddof=1) / np.sqrt(y.size))
    est = m ** (1.0 / p)
    return est, est * se_m / (p * m), bad


def lp_norm_columns(samples, p):
    """Column-wise :func:`mc_lp_norm` of a ``(replicates, scales)`` array."""
    y = np.abs(np.asarray(samples, dtype=float)) ** p
    m = y.mean(axis=0)
    se_m = y.std(axis=0, ddof=1) / np.sqrt(y.shape[0])
    est = m ** (1.0 / p)
    with np.errstate(invalid="ignore", divide="ignore"):
        se = np.where(m > 0, est * se_m / (p * m), 0.0)
    return est, se


def _check_scales(scales, estimates):
    scales = np.asarray(scales, dtype=float)
    estimates = np.asarray(estimates, dtype=float)
    if scales.shape != estimates.shape or scales.ndim != 1:
        raise InputError("scales and estimates must be 1-d of equal length")
    if scales.size < 3:
        raise InputError("a rate fit needs at least 3 scales")
    if np.any(scales <= 0) or np.log2(scales.max() / scales.min()) < 2 - 1e-12:
        raise InputError("scales must be positive and span at least 2 octaves")
    if np.any(~(estimates > 0)):
        raise InputError("estimates must be positive to fit a log-log rate")
    return scales, estimates


def fit_rate(scales, estimates, weights=None):
    """Weighted least squares of ``log estimate`` on ``log scale``.

    The slope error is the residual-scaled covariance, so an exact power law
    has zero error.  Returns ``(slope, stderr)``.
    """
    scales, estimates = _check_scales(scales, estimates)
    x, y = np.log(scales), np.log(estimates)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != x.shape or np.any(w < 0) or not np.any(w > 0):
        raise InputError("weights must be nonnegative, one per scale")
    w = w / w.sum()
    xm, ym = np.sum(w * x), np.sum(w * y)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    resid = y - ym - slope * (x - xm)
    dof = x.size - 2
    # weights normalised to unit sum: variance of the residual with effective weights n * w
    s2 = np.sum(w * resid ** 2) * x.size / dof
    stderr = np.sqrt(s2 / (sxx * x.size))
    return float(slope), float(stderr)


def _slopes(x, Y, W):
    """Weighted LS slopes for each row of ``Y`` (``W`` same shape)."""
    W = W / W.sum(axis=1, keepdims=True)
    xm = np.sum(W * x, axis=1, keepdims=True)
    ym = np.sum(W * Y, axis=1, keepdims=True)
    return np.sum(W * (x - xm) * (Y - ym), axis=1) / np.sum(W * (x - xm) ** 2, axis=1)


def bootstrap_slope_ci(scales, samples, n_boot=1000, level=0.95, seed=0, transform=None):
    """Percentile interval of the log-log slope of column means, resampling replicates jointly.

    ``samples`` is ``(replicates, scales)``; ``transform`` maps a matrix of
    column means to the fitted quantity (defaults to identity).
    """
    scales, _ = np.asarray(scales, dtype=float), None
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(n_boot, n))
    means = np.stack([samples[i].mean(axis=0) for i in idx])
    if transform is not None:
        means = transform(means)
    if np.any(~(means > 0)):
        raise InputError("bootstrap means must be positive")
    slopes = _slopes(np.log(scales)[None, :], np.log(means), np.ones_like(means))
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(slopes, [a, 1.0 - a])
    return float(lo), float(hi)


def bootstrap_quantity_ci(samples, statistic, n_boot=1000, level=0.95, seed=0):
    """Percentile interval of ``statistic(resampled rows)``."""
    samples = np.asarray(samples)
    rng = np.random.default_rng(seed)
    n = samples.shape[0]
    vals = np.array([statistic(samples[rng.integers(0, n, n)]) for _ in range(n_boot)])
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(vals, [a, 1.0 - a], axis=0)
    return lo, hi


def rate_report(scales, samples, p, label="", weighted=True, **kw):
    """Fit the ``L_p`` norms of the columns of ``samples`` against ``scales``."""
    est, se = lp_norm_columns(samples, p)
    weights = (est / np.maximum(se, 1e-300)) ** 2 if weighted and np.all(se > 0) else None
    slope, slope_err = fit_rate(scales, est, weights)
    return RateReport(np.asarray(scales, dtype=float), est, se, slope, slope_err,
                      int(np.asarray(samples).shape[0]), label, **kw)
