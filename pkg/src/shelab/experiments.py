"""Monte-Carlo drivers that turn exponent claims into rate reports.

Each experiment is split into a sampling step, which maps a batch of noise
streams to per-replicate raw values, and a reduction that fits rates.  The
sampling steps only ever look at their own streams, so a run can be cut into
replicate blocks and spread over workers without changing any number.

Norms are ``L_p(Omega)`` norms.  With ``pool=True`` the ``p``-th moment is
also averaged over the spatial grid, which is the same quantity for every
``x`` when the law of the field is translation invariant (constant initial
data) and a cheaper, less noisy estimator of it.
"""
from dataclasses import dataclass, field

import numpy as np

from .besov import drift_distance, dyadic_scales, mollification_schedule, mollify
from .errors import InputError
from .solver import solve_driftless, solve_she
from .stats import RateReport, fit_rate, lp_norm_columns
from .torus import apply_semigroup


# --- helpers -------------------------------------------------------------------------

def _powers(err, p, pool, x_index):
    """``|err|^p`` reduced over space: mean (pooled) or at one point; ``err`` is ``(R, n_x)``."""
    a = np.abs(err) ** p
    return a.mean(axis=-1) if pool else a[..., x_index]


def norms_from_powers(powers, p):
    """``(mean_r P_r)^(1/p)`` per column with a delta-method standard error."""
    powers = np.asarray(powers, dtype=float)
    m = powers.mean(axis=0)
    se_m = powers.std(axis=0, ddof=1) / np.sqrt(powers.shape[0])
    est = m ** (1.0 / p)
    with np.errstate(invalid="ignore", divide="ignore"):
        se = np.where(m > 0, est * se_m / (p * m), 0.0)
    return est, se


def _fit_report(scales, powers, p, label, target=None, tolerance=None, weighted=True):
    est, se = norms_from_powers(powers, p)
    w = (est / se) ** 2 if weighted and np.all(se > 0) else None
    slope, slope_err = fit_rate(scales, est, w)
    return RateReport(np.asarray(scales, dtype=float), est, se, slope, slope_err,
                      int(np.asarray(powers).shape[0]), label, target=target, tolerance=tolerance)


def _check_gaps(cfg, gaps, min_steps=64):
    gaps = np.asarray(gaps, dtype=float)
    steps = np.array([cfg.row_of(g) for g in gaps])
    if np.any(steps < min_steps):
        raise InputError(f"every probed gap must span at least {min_steps} time steps")
    return gaps


def drop_smallest_scale(report, powers, p):
    """Refit without the smallest scale (plateau check against the discretisation floor)."""
    keep = np.argsort(report.scales)[1:]
    return _fit_report(report.scales[keep], np.asarray(powers)[:, keep], p, report.label + " (trimmed)")


# --- driftless approximation ---------------------------------------------------------

def driftless_rate_samples(cfg, u0, noise, t, gaps, p=2, pool=True, x_index=0):
    """``|u(t) - psi^{t-g}(t)|^p`` per replicate (rows) and gap (columns)."""
    gaps = _check_gaps(cfg, gaps)
    starts = [t - g for g in gaps]
    path = solve_she(cfg, u0, noise, stamps=starts + [t])
    u_t = path.at(t)
    out = np.empty((noise.n_streams, gaps.size))
    for j, s in enumerate(starts):
        shadow = solve_driftless(cfg, path.at(s), s, noise, T=t, stamps=[t])
        out[:, j] = _powers(np.atleast_2d(u_t - shadow.u[-1]), p, pool, x_index)
    return out


def exp_driftless_rate(cfg, u0, noise, gaps, t=None, p=2, pool=True, x_index=0, tolerance=0.15):
    """Rate of ``||u(t) - phi^{u(s), s}(t)||_p`` in ``t - s``; target ``1 + alpha/4``."""
    t = cfg.T if t is None else t
    powers = driftless_rate_samples(cfg, u0, noise, t, gaps, p, pool, x_index)
    alpha = cfg.drift.alpha_nominal if cfg.drift is not None else 0.0
    rep = _fit_report(gaps, powers, p, "driftless-rate", 1.0 + alpha / 4.0, tolerance)
    return rep, powers


# --- regularity ----------------------------------------------------------------------

def _component(path, which, i):
    if which == "u_minus_Pu0":
        return path.u[i] - path.free[i]
    if which == "D":
        return path.D[i]
    if which == "V":
        return path.V[i]
    if which == "u":
        return path.u[i]
    raise InputError(f"unknown component {which!r}")


def holder_samples(cfg, u0, noise, t0, hs, deltas, which="V", p=2, pool=True, x_index=0):
    """Temporal increments ``X(t0 + h) - X(t0)`` and spatial ``X(t1, x + d) - X(t1, x)``.

    ``deltas`` are integer grid offsets; ``t1`` is the last temporal probe.
    Returns ``(R, len(hs) + len(deltas))`` powers.
    """
    _check_gaps(cfg, hs)
    stamps = [t0] + [t0 + h for h in hs]
    path = solve_she(cfg, u0, noise, stamps=stamps)
    base = np.atleast_2d(_component(path, which, path.index_of(t0)))
    cols = []
    for h in hs:
        X = np.atleast_2d(_component(path, which, path.index_of(t0 + h)))
        cols.append(_powers(X - base, p, pool, x_index))
    last = np.atleast_2d(_component(path, which, path.index_of(stamps[-1])))
    for d in deltas:
        cols.append(_powers(np.roll(last, -int(d), axis=-1) - last, p, pool, x_index))
    return np.stack(cols, axis=1)


def exp_holder_profile(cfg, u0, noise, t0, hs, deltas, which="V", p=2, pool=True, x_index=0):
    powers = holder_samples(cfg, u0, noise, t0, hs, deltas, which, p, pool, x_index)
    nh = len(hs)
    temporal = _fit_report(hs, powers[:, :nh], p, f"{which} temporal", 0.25, 0.05)
    spatial = _fit_report(np.asarray(deltas) * cfg.dx, powers[:, nh:], p, f"{which} spatial", 0.5, 0.05)
    return temporal, spatial, powers


# --- brackets --------------------------------------------------------------------------

@dataclass
class BracketEstimate:
    kind: str
    value: float
    probes: list
    p: float
    per_probe: np.ndarray = field(default=None, repr=False)


def v_bracket_samples(cfg, u0, noise, probes, p=2):
    """``|D_t(x) - P_{t-s} D_s(x)|^p`` per replicate, probe and grid point."""
    stamps = sorted({s for s, _ in probes} | {t for _, t in probes})
    path = solve_she(cfg, u0, noise, stamps=stamps)
    out = []
    for s, t in probes:
        Ds, Dt = np.atleast_2d(path.D[path.index_of(s)]), np.atleast_2d(path.D[path.index_of(t)])
        out.append(np.abs(Dt - apply_semigroup(Ds, t - s)) ** p)
    return np.stack(out, axis=1)


def estimate_v_bracket(powers, probes, p, gamma, x_indices=None):
    """``max_{(s, t), x} ||D_t(x) - P_{t-s} D_s(x)||_p / (t - s)^gamma`` from per-point powers."""
    powers = np.asarray(powers, dtype=float)
    if x_indices is not None:
        powers = powers[..., list(x_indices)]
    norms = np.mean(powers, axis=0) ** (1.0 / p)
    gaps = np.array([t - s for s, t in probes])
    if np.any(gaps <= 0):
        raise InputError("probes must satisfy s < t")
    per_probe = norms.max(axis=-1) / gaps ** gamma
    return BracketEstimate("V_p", float(per_probe.max()), list(probes), p, per_probe)


def s_bracket_powers(cfg1, u01, cfg2, u02, noise, probes, p=2, pool=True, x_index=0):
    """``|u1(t) - psi1^s(t) - u2(t) + psi2^s(t)|^p`` per replicate and probe ``(s, t)``."""
    stamps = sorted({s for s, _ in probes} | {t for _, t in probes})
    p1 = solve_she(cfg1, u01, noise, stamps=stamps)
    p2 = solve_she(cfg2, u02, noise, stamps=stamps)
    out = []
    for s, t in probes:
        q1 = solve_driftless(cfg1, p1.at(s), s, noise, T=t, stamps=[t]).u[-1]
        q2 = solve_driftless(cfg2, p2.at(s), s, noise, T=t, stamps=[t]).u[-1]
        diff = np.atleast_2d(p1.at(t) - q1 - p2.at(t) + q2)
        out.append(_powers(diff, p, pool, x_index))
    return np.stack(out, axis=1)


def s_bracket(powers, probes, p, beta=0.5):
    est, _ = norms_from_powers(powers, p)
    gaps = np.array([t - s for s, t in probes])
    per_probe = est / gaps ** beta
    return BracketEstimate("S_p^1/2", float(per_probe.max()), list(probes), p, per_probe)


def stability_samples(cfg, u0, shifts, noise, probes, drift_pairs=None, p=2):
    """S-bracket powers for each discrepancy level; returns ``(R, levels, probes)``.

    Level ``l`` compares ``(b1, u0)`` with ``(b2_l, u0 + shifts[l])``;
    ``drift_pairs[l]`` supplies ``(b1, b2_l)`` mollified drifts, otherwise both
    use ``cfg.drift``.
    """
    out = []
    for lvl, shift in enumerate(shifts):
        if drift_pairs is None:
            c1 = c2 = cfg
        else:
            c1, c2 = cfg.with_drift(drift_pairs[lvl][0]), cfg.with_drift(drift_pairs[lvl][1])
        out.append(s_bracket_powers(c1, u0, c2, np.asarray(u0) + shift, noise, probes, p))
    return np.stack(out, axis=1)


def exp_stability(powers, probes, discrepancies, p=2, min_slope=0.9):
    """Bracket per discrepancy level, its log-log decay slope and the constant through the origin."""
    powers = np.asarray(powers)
    values = np.array([s_bracket(powers[:, lvl], probes, p).value for lvl in range(powers.shape[1])])
    disc = np.asarray(discrepancies, dtype=float)
    slope, slope_err = fit_rate(disc, values)
    constant = float(np.sum(disc * values) / np.sum(disc * disc))
    rep = RateReport(disc, values, np.zeros_like(values), slope, slope_err, powers.shape[0],
                     "stability", target=min_slope)
    rep.extra["stability_constant"] = constant
    return rep


def initial_discrepancy(shift):
    """``sup_x |u0^1 - u0^2|`` for an additive shift."""
    return float(np.max(np.abs(shift)))


# --- four-point estimate -------------------------------------------------------------------

def four_point_samples(cfg, u01, u02, noise, s, gaps, t, p=2, pool=True, x_index=0):
    """``|phi^{Z1} - phi^{Z2} - phi^{Z3} + phi^{Z4}|^p`` at time ``t`` for ``a = s + gap``.

    ``Z = (psi1^s(a), psi2^s(a), u1(a), u2(a))`` and every flow runs driftless
    from ``a`` to ``t`` on the shared noise; ``phi^{Z1}`` is ``psi1^s`` itself.
    """
    a_list = [s + g for g in gaps]
    if any(a > t for a in a_list):
        raise InputError("need s <= a <= t")
    stamps = sorted({s, t, *a_list})
    p1 = solve_she(cfg, u01, noise, stamps=stamps)
    p2 = solve_she(cfg, u02, noise, stamps=stamps)
    psi1 = solve_driftless(cfg, p1.at(s), s, noise, T=t, stamps=[t]).u[-1]
    psi2 = solve_driftless(cfg, p2.at(s), s, noise, T=t, stamps=[t]).u[-1]
    cols = []
    for a in a_list:
        f3 = solve_driftless(cfg, p1.at(a), a, noise, T=t, stamps=[t]).u[-1]
        f4 = solve_driftless(cfg, p2.at(a), a, noise, T=t, stamps=[t]).u[-1]
        # paired so that the collapse cases (u1 = u2 or a = s) cancel exactly
        cols.append(_powers(np.atleast_2d((psi1 - f3) - (psi2 - f4)), p, pool, x_index))
    return np.stack(cols, axis=1)


def four_point_estimate(powers, p):
    """``(estimate, stderr)`` per column of four-point powers."""
    return norms_from_powers(powers, p)


def exp_four_point(cfg, u01, u02, noise, s, gaps, t, p=2, tolerance=0.15):
    powers = four_point_samples(cfg, u01, u02, noise, s, gaps, t, p)
    rep = _fit_report(gaps, powers, p, "four-point", 0.5, tolerance)
    return rep, powers


# --- approximating sequence -----------------------------------------------------------------

def sequence_samples(cfg, drift, u0, noise, levels, stamps, x_probe=None):
    """Per-replicate ``sup |D^n - D^{n+1}|`` and ``sup |V^n - V^{n+1}|`` for consecutive levels.

    ``u^n`` uses ``drift`` mollified at ``4^-n``; sups run over ``stamps`` and space.
    Returns ``(R, 2, len(levels) - 1)``.
    """
    prev = None
    out = np.empty((noise.n_streams, 2, len(levels) - 1))
    for i, n in enumerate(levels):
        path = solve_she(cfg.with_drift(mollify(drift, mollification_schedule(n))), u0, noise,
                         stamps=stamps)
        D, V = np.atleast_3d(path.D[1:].swapaxes(0, 1)), np.atleast_3d(path.V[1:].swapaxes(0, 1))
        if prev is not None:
            out[:, 0, i - 1] = np.max(np.abs(D - prev[0]), axis=(1, 2))
            out[:, 1, i - 1] = np.max(np.abs(V - prev[1]), axis=(1, 2))
        prev = (D, V)
    return out


def sequence_drift_distances(drift, levels, gamma=None, k_max=18, x_grid=None):
    """``||b^n - b^{n+1}||_{C^gamma}`` estimates with ``gamma = alpha - 1`` by default."""
    gamma = drift.alpha_nominal - 1.0 if gamma is None else gamma
    if x_grid is None:
        lo, hi = drift.window
        x_grid = np.linspace(max(lo, -3.0), min(hi, 3.0), 6001)
    eps = dyadic_scales(0, k_max)
    out = []
    for n, m in zip(levels[:-1], levels[1:]):
        b1 = mollify(drift, mollification_schedule(n))
        b2 = mollify(drift, mollification_schedule(m))
        out.append(drift_distance(b1, b2, gamma, eps, x_grid))
    return np.array(out)


def exp_sequence_convergence(powers_or_sups, levels, distances, p=2):
    """Gap norms, monotonicity flags and gap/distance ratios from per-replicate sups."""
    sups = np.asarray(powers_or_sups)
    d_gap, d_se = norms_from_powers(np.abs(sups[:, 0]) ** p, p)
    v_gap, v_se = norms_from_powers(np.abs(sups[:, 1]) ** p, p)
    distances = np.asarray(distances, dtype=float)
    out = dict(levels=list(levels), d_gap=d_gap, d_stderr=d_se, v_gap=v_gap, v_stderr=v_se,
               distances=distances,
               d_monotone=bool(np.all(np.diff(d_gap) < 0)),
               v_monotone=bool(np.all(np.diff(v_gap) < 0)))
    for key in ("d", "v"):
        r = out[f"{key}_gap"] / distances
        out[f"{key}_ratio"] = r
        out[f"{key}_ratio_spread"] = float(r.max() / r.min())
    return out
