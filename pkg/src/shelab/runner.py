"""Run orchestration: job blocks, worker pool, persistence of run artifacts."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
import csv
import json
import os
import platform
import time

import numpy as np

from . import __version__
from .besov import mollify, mollification_schedule
from .config import ExperimentConfig
from .errors import InputError
from .library import make_drift, make_sigma
from .noise import NoiseBatch
from .solver import SolverConfig

OUTPUT_ENV = "SHELAB_OUTPUT_ROOT"


class OutputDirError(OSError):
    pass


# --- object builders (run inside workers from plain configs) ------------------------------

_DRIFT_KEYS = {
    "half-derivative": ("n_terms", "amplitude"),
    "brownian-derivative": ("seed", "amplitude"),
    "smooth": ("amplitude",),
    "constant": ("c",),
}


def build_drift(cfg):
    d = cfg.drift
    kwargs = {k: d[k] for k in _DRIFT_KEYS.get(d["name"], ()) if k in d}
    return make_drift(d["name"], **kwargs)


def nominal_alpha(cfg):
    d = cfg.drift
    return d["alpha"] if "alpha" in d else build_drift(cfg).alpha_nominal


def build_sigma(cfg):
    s = cfg.solver
    if s["sigma"] == "constant":
        return make_sigma("constant", c=s["sigma_a"])
    return make_sigma("sine", a=s["sigma_a"], c=s["sigma_c"])


def build_solver(cfg, with_drift=True):
    s = cfg.solver
    drift = None
    if with_drift and cfg.drift["name"] != "zero":
        drift = mollify(build_drift(cfg), mollification_schedule(cfg.drift["level"]))
    return SolverConfig(s["n_t"], s["n_x"], s["T"], build_sigma(cfg), drift, s["stride"])


def build_u0(kind, n_x, amplitude=1.0):
    x = np.arange(n_x) / n_x
    if kind == "zero":
        return np.zeros(n_x)
    if kind == "constant":
        return np.full(n_x, float(amplitude))
    if kind == "cos":
        return amplitude * np.cos(2.0 * np.pi * x)
    raise InputError(f"unknown initial condition {kind!r} (zero, constant, cos)")


def block_noise(cfg, start, stop):
    s = cfg.solver
    return NoiseBatch.from_seeds(s["n_t"], s["n_x"], s["T"], cfg.ensemble["seed"], range(start, stop))


# --- results -------------------------------------------------------------------------

@dataclass
class Outcome:
    rate_rows: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    plots: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(ok for ok, _ in self.checks.values())


RATE_COLUMNS = ["report", "kind", "scale", "estimate", "stderr", "slope", "slope_stderr",
                "target", "tolerance", "passed"]


def report_rows(rep, passed=None):
    rows = [dict(report=rep.label, kind="point", scale=float(s), estimate=float(e), stderr=float(se))
            for s, e, se in zip(rep.scales, rep.estimates, rep.stderrs)]
    rows.append(dict(report=rep.label, kind="fit", slope=float(rep.slope),
                     slope_stderr=float(rep.slope_stderr), target=rep.target,
                     tolerance=rep.tolerance, passed=passed))
    return rows


def _plot_entry(rep, lower=None, upper=None):
    return dict(label=rep.label, scales=list(map(float, rep.scales)),
                estimates=list(map(float, rep.estimates)), stderrs=list(map(float, rep.stderrs)),
                slope=float(rep.slope), target=rep.target, tolerance=rep.tolerance)


# --- orchestration -------------------------------------------------------------------

def _blocks(n, size):
    return [(i, min(i + size, n)) for i in range(0, n, size)]


def _run_block(job):
    name, sections, start, stop = job
    from .registry import EXPERIMENT_TABLE
    cfg = ExperimentConfig(name, sections)
    return EXPERIMENT_TABLE[name].sample(cfg, start, stop)


def collect_raw(cfg, workers=None):
    """Per-replicate raw values for the whole ensemble, assembled in replicate order."""
    from .registry import EXPERIMENT_TABLE
    exp = EXPERIMENT_TABLE[cfg.experiment]
    n = exp.n_units(cfg)
    jobs = [(cfg.experiment, cfg.sections, a, b) for a, b in _blocks(n, cfg.ensemble["block"])]
    workers = cfg.parallel["workers"] if workers is None else workers
    if workers == 0:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(jobs) == 1:
        parts = [_run_block(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, jobs))
    return np.concatenate(parts, axis=0)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_raw_csv(path, columns, raw):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate", "quantity", "scale", "value"])
        for r in range(raw.shape[0]):
            for (q, s), v in zip(columns, raw[r]):
                w.writerow([r, q, _fmt(s), repr(float(v))])


def write_rates_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RATE_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in RATE_COLUMNS])


def write_svg(path, plots):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "shelab", "svg.fonttype": "path"}):
        n = len(plots)
        fig, axes = plt.subplots(1, n, figsize=(4.5 * n, 4.0), squeeze=False)
        for ax, pl in zip(axes[0], plots):
            x, y = np.array(pl["scales"]), np.array(pl["estimates"])
            se = np.array(pl["stderrs"])
            ax.errorbar(x, y, yerr=se, fmt="o", ms=4, capsize=2, label="estimate")
            xm = np.exp(np.mean(np.log(x)))
            ym = np.exp(np.mean(np.log(y)))
            xx = np.geomspace(x.min(), x.max(), 50)
            ax.plot(xx, ym * (xx / xm) ** pl["slope"], "-", label=f"fit slope {pl['slope']:.3f}")
            if pl.get("target") is not None and pl.get("tolerance") is not None:
                lo = ym * (xx / xm) ** (pl["target"] - pl["tolerance"])
                hi = ym * (xx / xm) ** (pl["target"] + pl["tolerance"])
                ax.fill_between(xx, np.minimum(lo, hi), np.maximum(lo, hi), alpha=0.2,
                                label=f"target {pl['target']:.3g} +- {pl['tolerance']:.3g}")
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_title(pl["label"], fontsize=9)
            ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def _versions():
    import scipy
    return dict(shelab=__version__, python=platform.python_version(), numpy=np.__version__,
                scipy=scipy.__version__)


def output_root(cfg, override=None):
    if override:
        return override
    if cfg.output["directory"]:
        return cfg.output["directory"]
    return os.environ.get(OUTPUT_ENV, "runs")


def make_run_dir(root, cfg):
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    base = os.path.join(root, f"{cfg.experiment}-{stamp}-{cfg.hash()[:8]}")
    path, i = base, 1
    try:
        os.makedirs(root, exist_ok=True)
        while True:
            try:
                os.makedirs(path)
                break
            except FileExistsError:
                path = f"{base}-{i}"
                i += 1
        probe = os.path.join(path, ".write-test")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as err:
        raise OutputDirError(f"cannot write to output directory {root!r}: {err}") from None
    return path


def run_experiment(cfg, root=None, workers=None, plot=None, command=None):
    """Execute a validated configuration and write its artifacts; returns ``(run_dir, outcome)``."""
    from .registry import EXPERIMENT_TABLE
    cfg.validate()
    exp = EXPERIMENT_TABLE[cfg.experiment]
    run_dir = make_run_dir(output_root(cfg, root), cfg)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    raw = collect_raw(cfg, workers)
    outcome = exp.reduce(cfg, raw)
    wall = time.perf_counter() - t0
    write_raw_csv(os.path.join(run_dir, "raw.csv"), exp.columns(cfg), raw)
    write_rates_csv(os.path.join(run_dir, "rates.csv"), outcome.rate_rows)
    with open(os.path.join(run_dir, "config.ini"), "w") as fh:
        fh.write(cfg.to_ini())
    outputs = ["raw.csv", "rates.csv", "config.ini"]
    do_plot = cfg.output["plot"] if plot is None else plot
    if do_plot and outcome.plots:
        write_svg(os.path.join(run_dir, "rates.svg"), outcome.plots)
        outputs.append("rates.svg")
    n = exp.n_units(cfg)
    manifest = dict(
        experiment=cfg.experiment,
        config_hash=cfg.hash(),
        config=dict(experiment=cfg.experiment, sections=cfg.sections),
        resolved=cfg.resolved(),
        seeds=dict(base_seed=cfg.ensemble["seed"], streams=[0, n - 1] if n else []),
        versions=_versions(),
        started=started,
        wall_time_s=wall,
        workers=workers if workers is not None else cfg.parallel["workers"],
        command=command,
        checks={k: dict(passed=bool(ok), detail=d) for k, (ok, d) in outcome.checks.items()},
        summary=outcome.summary,
        outputs=outputs + ["manifest.json"],
    )
    with open(os.path.join(run_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
    return run_dir, outcome


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serialisable: {type(o)}")


def config_from_manifest(path):
    with open(path) as fh:
        m = json.load(fh)
    c = m["config"]
    return ExperimentConfig(c["experiment"], {k: dict(v) for k, v in c["sections"].items()})
