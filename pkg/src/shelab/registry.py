"""Experiment table used by the runner: raw columns, per-block sampling, reduction."""
from dataclasses import dataclass

import numpy as np

from . import experiments as ex
from .malliavin import estimate_moment_bounds, h_norm_ensemble
from .runner import (Outcome, _plot_entry, block_noise, build_drift, build_solver, build_u0,
                     nominal_alpha, report_rows)
from .sewing import DriftGerm, _gap_ratio, cauchy_gaps, riemann_sum
from .stats import RateReport, bootstrap_quantity_ci, fit_rate
from .solver import solve_driftless, solve_she
from .torus import kernel_suite, validate_kernel_estimates


@dataclass(frozen=True)
class Experiment:
    columns: callable
    sample: callable
    reduce: callable
    units: callable = None

    def n_units(self, cfg):
        return self.units(cfg) if self.units else cfg.ensemble["n_replicates"]


def _dt(cfg):
    return cfg.solver["T"] / cfg.solver["n_t"]


def _u0(cfg):
    prm = cfg.params
    return build_u0(prm.get("u0", "zero"), cfg.solver["n_x"], prm.get("u0_amplitude", 1.0))


# --- validate-kernels ------------------------------------------------------------------

_KS_TIMES = (1e-4, 1e-2, 1.0)


def _vk_columns(cfg):
    n = cfg.params["n_x_check"]
    cols = [(q, m) for m in (n, 2 * n) for q in ("l1_spatial", "sq_spatial", "sq_temporal")]
    cols += [("normalization", t) for t in _KS_TIMES]
    return cols + [("composition", None), ("eigen", None)]


def _vk_sample(cfg, start, stop):
    prm = cfg.params
    t_grid = 2.0 ** -np.array(prm["t_exponents"], dtype=float)
    vals = []
    for m in (prm["n_x_check"], 2 * prm["n_x_check"]):
        r = validate_kernel_estimates(prm["eps"], t_grid, m)
        vals += [r.l1_spatial, r.sq_spatial, r.sq_temporal]
    ks = kernel_suite(2048, _KS_TIMES)
    vals += [ks["normalization"][t] for t in _KS_TIMES] + [ks["composition"], ks["eigen"]]
    return np.array([vals])


def _vk_reduce(cfg, raw):
    v = raw[0]
    rows = [dict(report=q, kind="value", scale=s, estimate=float(x))
            for (q, s), x in zip(_vk_columns(cfg), v)]
    ratios, fine = v[:3], v[3:6]
    change = np.max(np.abs(fine - ratios) / ratios)
    checks = {
        "ratios finite": (bool(np.all(np.isfinite(v[:6]))), [float(x) for x in v[:6]]),
        "refinement change < 10%": (bool(change < 0.1), float(change)),
        "normalization < 1e-6": (bool(np.all(v[6:9] < 1e-6)), float(np.max(v[6:9]))),
        "composition < 1e-8": (bool(v[9] < 1e-8), float(v[9])),
        "eigen decay < 1e-8": (bool(v[10] < 1e-8), float(v[10])),
    }
    return Outcome(rows, checks, [], dict(ratios=[float(x) for x in ratios]))


# --- simulate ----------------------------------------------------------------------------

def _sim_stamps(cfg):
    n, T = cfg.params["stamps"], cfg.solver["T"]
    return [T * i / n for i in range(n + 1)]


def _sim_columns(cfg):
    n_x = cfg.solver["n_x"]
    cols = [(f"{q}[x={j / n_x!r}]", t) for t in _sim_stamps(cfg) for j in range(n_x)
            for q in ("u", "D", "V")]
    return cols + [("decomposition_error", None)]


def _sim_sample(cfg, start, stop):
    path = solve_she(build_solver(cfg), _u0(cfg), block_noise(cfg, start, stop),
                     stamps=_sim_stamps(cfg))
    arr = np.stack([path.u, path.D, path.V], axis=-1)     # (stamp, R, n_x, 3)
    arr = np.moveaxis(arr, 1, 0).reshape(stop - start, -1)
    err = np.max(np.abs(path.u - path.free - path.D - path.V), axis=(0, 2))
    return np.concatenate([arr, err[:, None]], axis=1)


def _sim_reduce(cfg, raw):
    err = float(np.max(raw[:, -1]))
    rows = [dict(report="decomposition_error", kind="value", estimate=err)]
    return Outcome(rows, {"decomposition identity < 1e-10": (err < 1e-10, err)}, [],
                   dict(decomposition_error=err))


# --- driftless-rate ----------------------------------------------------------------------

def _dr_gaps(cfg):
    return [g * _dt(cfg) for g in cfg.params["gaps"]]


def _dr_columns(cfg):
    gaps = _dr_gaps(cfg)
    return [("err_pow", g) for g in gaps] + [("err_sup", g) for g in gaps]


def _dr_sample(cfg, start, stop):
    prm = cfg.params
    scfg = build_solver(cfg)
    noise = block_noise(cfg, start, stop)
    t = scfg.T
    gaps = _dr_gaps(cfg)
    path = solve_she(scfg, _u0(cfg), noise, stamps=[t - g for g in gaps] + [t])
    pw, sup = [], []
    for g in gaps:
        s = t - g
        err = path.at(t) - solve_driftless(scfg, path.at(s), s, noise, T=t, stamps=[t]).u[-1]
        pw.append(ex._powers(err, prm["p"], prm["pool"], prm["x_index"]))
        sup.append(np.max(np.abs(err), axis=-1))
    return np.stack(pw + sup, axis=1)


def _dr_reduce(cfg, raw):
    prm = cfg.params
    gaps = _dr_gaps(cfg)
    k = len(gaps)
    sup = raw[:, k:].max(axis=0)
    if cfg.drift["name"] == "zero":
        ok = bool(np.all(sup < 1e-8))
        rows = [dict(report="driftless-rate sup error", kind="point", scale=g, estimate=float(e))
                for g, e in zip(gaps, sup)]
        return Outcome(rows, {"zero drift: error < 1e-8 at every gap": (ok, float(sup.max()))}, [],
                       dict(max_error=float(sup.max())))
    target = prm.get("target", 1.0 + nominal_alpha(cfg) / 4.0)
    rep = ex._fit_report(gaps, raw[:, :k], prm["p"], f"driftless-rate [{cfg.drift['name']}]",
                         target, prm["tolerance"])
    ok = rep.within()
    return Outcome(report_rows(rep, ok),
                   {f"slope within {target:.4g} +- {prm['tolerance']}": (ok, rep.slope)},
                   [_plot_entry(rep)], dict(slope=rep.slope, slope_stderr=rep.slope_stderr))


# --- holder --------------------------------------------------------------------------------

def _h_t0(cfg):
    t0 = cfg.params["t0_steps"]
    return (t0 % cfg.solver["n_t"] if t0 < 0 else t0) * _dt(cfg)


def _h_columns(cfg):
    prm = cfg.params
    return ([("temporal_pow", h * _dt(cfg)) for h in prm["hs"]]
            + [("spatial_pow", d / cfg.solver["n_x"]) for d in prm["deltas"]])


def _h_sample(cfg, start, stop):
    prm = cfg.params
    return ex.holder_samples(build_solver(cfg), _u0(cfg), block_noise(cfg, start, stop), _h_t0(cfg),
                             [h * _dt(cfg) for h in prm["hs"]], prm["deltas"], prm["which"],
                             prm["p"], prm["pool"], prm["x_index"])


def _h_reduce(cfg, raw):
    prm = cfg.params
    nh = len(prm["hs"])
    which = prm["which"]
    tol = prm["tolerance"]
    tm = ex._fit_report([h * _dt(cfg) for h in prm["hs"]], raw[:, :nh], prm["p"],
                        f"{which} temporal", 0.25, tol)
    sp = ex._fit_report([d / cfg.solver["n_x"] for d in prm["deltas"]], raw[:, nh:], prm["p"],
                        f"{which} spatial", 0.5, tol)
    if which == "D":
        checks = {"temporal slope >= 0.25": (tm.slope >= 0.25, tm.slope),
                  "spatial slope >= 0.5": (sp.slope >= 0.5, sp.slope)}
    else:
        checks = {f"temporal slope within 0.25 +- {tol}": (tm.within(), tm.slope),
                  f"spatial slope within 0.5 +- {tol}": (sp.within(), sp.slope)}
    (ok_t, _), (ok_s, _) = checks.values()
    rows = report_rows(tm, ok_t) + report_rows(sp, ok_s)
    return Outcome(rows, checks, [_plot_entry(tm), _plot_entry(sp)],
                   dict(temporal=tm.slope, spatial=sp.slope))


# --- stability -----------------------------------------------------------------------------

def _st_probes(cfg):
    prm, dt = cfg.params, _dt(cfg)
    return [(s * dt, (s + g) * dt) for s in prm["probe_starts"] for g in prm["probe_gaps"]]


def _st_columns(cfg):
    return [(f"s_bracket_pow[shift={d!r},s={s!r}]", t - s) for d in cfg.params["shifts"]
            for s, t in _st_probes(cfg)]


def _st_sample(cfg, start, stop):
    prm = cfg.params
    pw = ex.stability_samples(build_solver(cfg), _u0(cfg), prm["shifts"],
                              block_noise(cfg, start, stop), _st_probes(cfg), p=prm["p"])
    return pw.reshape(stop - start, -1)


def _st_reduce(cfg, raw):
    prm = cfg.params
    probes = _st_probes(cfg)
    pw = raw.reshape(raw.shape[0], len(prm["shifts"]), len(probes))
    disc = [ex.initial_discrepancy(d) for d in prm["shifts"]]
    rep = ex.exp_stability(pw, probes, disc, prm["p"], prm["min_slope"])
    ok = rep.slope >= prm["min_slope"]
    rep.label = "stability bracket vs discrepancy"
    return Outcome(report_rows(rep, ok), {f"decay slope >= {prm['min_slope']}": (ok, rep.slope)},
                   [_plot_entry(rep)], dict(slope=rep.slope, **rep.extra))


# --- four-point ------------------------------------------------------------------------------

def _fp_gaps(cfg):
    return [g * _dt(cfg) for g in cfg.params["gaps"]]


def _fp_columns(cfg):
    return [("four_point_pow", g) for g in _fp_gaps(cfg)]


def _fp_sample(cfg, start, stop):
    prm = cfg.params
    scfg = build_solver(cfg)
    u1 = _u0(cfg)
    return ex.four_point_samples(scfg, u1, u1 + prm["u0_gap"], block_noise(cfg, start, stop),
                                 prm["s_steps"] * _dt(cfg), _fp_gaps(cfg), scfg.T, prm["p"])


def _fp_reduce(cfg, raw):
    prm = cfg.params
    target = prm.get("target", 0.5)
    rep = ex._fit_report(_fp_gaps(cfg), raw, prm["p"], "four-point", target, prm["tolerance"])
    ok = rep.within()
    return Outcome(report_rows(rep, ok),
                   {f"exponent within {target} +- {prm['tolerance']}": (ok, rep.slope)},
                   [_plot_entry(rep)], dict(slope=rep.slope, slope_stderr=rep.slope_stderr))


# --- sequence ----------------------------------------------------------------------------------

def _sq_stamps(cfg):
    # the first stamp (t = 0) is dropped by the sampler
    n = cfg.params["stamps"]
    return [cfg.solver["T"] * i / n for i in range(n + 1)]


def _sq_columns(cfg):
    lv = cfg.params["levels"]
    pairs = [f"{a}-{b}" for a, b in zip(lv[:-1], lv[1:])]
    return [("D_gap_sup", p) for p in pairs] + [("V_gap_sup", p) for p in pairs]


def _sq_sample(cfg, start, stop):
    prm = cfg.params
    sups = ex.sequence_samples(build_solver(cfg, with_drift=False), build_drift(cfg), _u0(cfg),
                               block_noise(cfg, start, stop), prm["levels"], _sq_stamps(cfg))
    return sups.reshape(stop - start, -1)


def _sq_reduce(cfg, raw):
    prm = cfg.params
    lv = prm["levels"]
    sups = raw.reshape(raw.shape[0], 2, len(lv) - 1)
    dist = ex.sequence_drift_distances(build_drift(cfg), lv, k_max=prm["k_max"])
    out = ex.exp_sequence_convergence(sups, lv, dist, prm["p"])
    rows = []
    for i, (a, b) in enumerate(zip(lv[:-1], lv[1:])):
        for key in ("d", "v"):
            rows.append(dict(report=f"{key.upper()} gap", kind="point", scale=a,
                             estimate=float(out[f"{key}_gap"][i]),
                             stderr=float(out[f"{key}_stderr"][i])))
        rows.append(dict(report="drift distance", kind="point", scale=a, estimate=float(dist[i])))
    ms = prm["max_spread"]
    checks = {
        "D gaps decrease": (out["d_monotone"], [float(x) for x in out["d_gap"]]),
        "V gaps decrease": (out["v_monotone"], [float(x) for x in out["v_gap"]]),
        f"D gap / distance spread < {ms}": (out["d_ratio_spread"] < ms, out["d_ratio_spread"]),
        f"V gap / distance spread < {ms}": (out["v_ratio_spread"] < ms, out["v_ratio_spread"]),
    }
    plots = []
    for key in ("d", "v"):
        rep = RateReport(np.array(lv[:-1], dtype=float), out[f"{key}_gap"], out[f"{key}_stderr"],
                         float(np.polyfit(np.log(lv[:-1]), np.log(out[f"{key}_gap"]), 1)[0]),
                         0.0, raw.shape[0], f"{key.upper()} gap vs level")
        plots.append(_plot_entry(rep))
    summary = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in out.items()}
    return Outcome(rows, checks, plots, summary)


# --- malliavin -------------------------------------------------------------------------------

def _ml_times(cfg):
    return [2.0 ** -e for e in cfg.params["time_exponents"]]


def _ml_columns(cfg):
    return [("h_norm", t) for t in _ml_times(cfg)]


def _ml_sample(cfg, start, stop):
    prm = cfg.params
    scfg = build_solver(cfg, with_drift=False)
    noise = block_noise(cfg, start, stop)
    n_x = cfg.solver["n_x"]
    if "weights" in prm:
        levels = prm.get("u0_levels", list(range(len(prm["weights"]))))
        comps = [np.full(n_x, float(c)) for c in levels]
        return h_norm_ensemble(scfg, comps, noise, _ml_times(cfg), prm["x_index"],
                               block=stop - start, weights=prm["weights"])
    return h_norm_ensemble(scfg, _u0(cfg), noise, _ml_times(cfg), prm["x_index"], block=stop - start)


def _ml_reduce(cfg, raw):
    prm = cfg.params
    times = np.array(_ml_times(cfg))
    p = prm["p"]
    reps = {}
    for sign in ("positive", "negative"):
        r = estimate_moment_bounds(raw, times, p, sign, n_boot=prm["n_boot"], seed=cfg.ensemble["seed"],
                                   max_ci_width=prm["max_ci_width"])
        r.label = f"{sign} moment p={p:g}"
        reps[sign] = r
    pos, neg = reps["positive"], reps["negative"]
    tol = prm.get("tolerance", 0.05)
    pos.target, pos.tolerance = p / 4.0, tol
    neg.target = -p / 4.0
    checks = {}
    if prm["sign"] == "positive":
        checks[f"positive slope within {p / 4:g} +- {tol}"] = (pos.within(), pos.slope)
    else:
        floor = prm.get("target", -p / 4.0 - 0.15)
        checks[f"negative slope >= {floor:g}"] = (neg.slope >= floor, neg.slope)
        width = neg.ci[1] - neg.ci[0]
        checks[f"bootstrap CI width <= {prm['max_ci_width']}"] = (not neg.refused, width)
    rows = report_rows(pos) + report_rows(neg)
    summary = dict(positive=pos.slope, negative=neg.slope, negative_ci=list(neg.ci),
                   positive_ci=list(pos.ci), excluded=neg.n_excluded)
    return Outcome(rows, checks, [_plot_entry(pos), _plot_entry(neg)], summary)


# --- sewing ------------------------------------------------------------------------------------

def _sw_scales(cfg):
    return [h * _dt(cfg) for h in cfg.params["scale_steps"]]


def _sw_columns(cfg):
    sc = _sw_scales(cfg)
    return ([("germ", h) for h in sc] + [("delta_germ", h) for h in sc]
            + [("riemann_sum", d) for d in cfg.params["depths"]])


def _sw_sample(cfg, start, stop):
    prm = cfg.params
    scfg = build_solver(cfg)
    noise = block_noise(cfg, start, stop)
    path = solve_she(scfg, _u0(cfg), noise)
    dg = DriftGerm(path, scfg.drift, prm["x_index"], prm["M"], reseed_base=cfg.ensemble["seed"])
    germ = dg.germ()
    s0 = prm["s0_steps"] * _dt(cfg)
    cols = [germ(s0, s0 + h) for h in _sw_scales(cfg)]
    cols += [germ.delta(s0, s0 + h / 2, s0 + h) for h in _sw_scales(cfg)]
    cols += [riemann_sum(germ, d, scfg.T) for d in prm["depths"]]
    return np.stack(cols, axis=1)


def _sw_reduce(cfg, raw):
    prm = cfg.params
    sc = np.array(_sw_scales(cfg))
    k = sc.size
    a = np.sqrt(np.mean(raw[:, :k] ** 2, axis=0))
    d = np.sqrt(np.mean(raw[:, k:2 * k] ** 2, axis=0))
    sums = raw[:, 2 * k:]
    se_a = np.std(raw[:, :k] ** 2, axis=0, ddof=1) / np.sqrt(raw.shape[0]) / (2 * a)
    se_d = np.std(raw[:, k:2 * k] ** 2, axis=0, ddof=1) / np.sqrt(raw.shape[0]) / (2 * d)
    x1, x1e = fit_rate(sc, a)
    x2, x2e = fit_rate(sc, d)
    gaps = cauchy_gaps(sums)
    ratio = _gap_ratio(sums)
    lo, hi = bootstrap_quantity_ci(sums, _gap_ratio, n_boot=prm["n_boot"], seed=cfg.ensemble["seed"])
    r1 = RateReport(sc, a, se_a, x1, x1e, raw.shape[0], "germ |A_{s,t}|", target=None)
    r2 = RateReport(sc, d, se_d, x2, x2e, raw.shape[0], "germ |E^s delta A|")
    ms = prm["min_slope"]
    checks = {f"x1 >= {ms}": (x1 >= ms, x1),
              "Cauchy gap ratio < 1 (95% bootstrap)": (hi < 1.0, [ratio, float(lo), float(hi)])}
    rows = report_rows(r1, x1 >= ms) + report_rows(r2)
    rows += [dict(report="cauchy gap", kind="point", scale=dd, estimate=float(g))
             for dd, g in zip(prm["depths"][:-1], gaps)]
    return Outcome(rows, checks, [_plot_entry(r1), _plot_entry(r2)],
                   dict(x1=x1, x2=x2, gap_ratio=ratio, gap_ratio_ci=[float(lo), float(hi)]))


EXPERIMENT_TABLE = {
    "validate-kernels": Experiment(_vk_columns, _vk_sample, _vk_reduce, units=lambda cfg: 1),
    "simulate": Experiment(_sim_columns, _sim_sample, _sim_reduce),
    "driftless-rate": Experiment(_dr_columns, _dr_sample, _dr_reduce),
    "holder": Experiment(_h_columns, _h_sample, _h_reduce),
    "stability": Experiment(_st_columns, _st_sample, _st_reduce),
    "four-point": Experiment(_fp_columns, _fp_sample, _fp_reduce),
    "sequence": Experiment(_sq_columns, _sq_sample, _sq_reduce),
    "malliavin": Experiment(_ml_columns, _ml_sample, _ml_reduce),
    "sewing": Experiment(_sw_columns, _sw_sample, _sw_reduce),
}
