"""Experiment configuration: INI ingestion, validation, canonical hashing."""
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
import configparser
import hashlib
import io
import json

from .errors import InputError

EXPERIMENTS = ("validate-kernels", "simulate", "driftless-rate", "holder", "stability",
               "four-point", "sequence", "malliavin", "sewing")

SECTIONS = ("solver", "drift", "ensemble", "output", "parallel", "params")


class ConfigSyntaxError(InputError):
    """The configuration text cannot be parsed or has wrongly typed values."""


class ConfigValidationError(InputError):
    """The configuration parses but violates a numeric or semantic constraint."""


class UnknownExperimentError(InputError):
    pass


def _int(v):
    return int(v)


def _float(v):
    return float(Decimal(v))


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v):
    return [float(Decimal(x)) for x in str(v).split(",") if x.strip()]


def _ints(v):
    return [int(x) for x in str(v).split(",") if x.strip()]


def _str(v):
    return str(v).strip()


# typed keys per section; params keys are typed per experiment below
TYPES = {
    "solver": dict(n_x=_int, n_t=_int, T=_float, sigma=_str, sigma_a=_float, sigma_c=_float,
                   stride=_int),
    "drift": dict(name=_str, level=_int, alpha=_float, amplitude=_float, c=_float,
                  n_terms=_int, seed=_int),
    "ensemble": dict(n_replicates=_int, seed=_int, block=_int),
    "output": dict(directory=_str, plot=_bool),
    "parallel": dict(workers=_int),
}

PARAM_TYPES = dict(
    p=_float, gaps=_ints, hs=_ints, deltas=_ints, t0_steps=_int, which=_str, x_index=_int,
    pool=_bool, shifts=_floats, probe_starts=_ints, probe_gaps=_ints, s_steps=_int,
    t_steps=_int, u0=_str, u0_amplitude=_float, u0_gap=_float, levels=_ints, stamps=_int,
    time_exponents=_ints, sign=_str, weights=_floats, eps=_float, t_exponents=_ints,
    n_x_check=_int, M=_int, depths=_ints, scale_steps=_ints, s0_steps=_int, target=_float,
    tolerance=_float, min_slope=_float, max_spread=_float, max_ci_width=_float,
    n_boot=_int, k_max=_int, u0_levels=_floats,
)

DEFAULTS = {
    "solver": dict(n_x=128, n_t=8192, T=0.125, sigma="sine", sigma_a=1.0, sigma_c=0.5, stride=1),
    "drift": dict(name="bounded", level=6),
    "ensemble": dict(n_replicates=1000, seed=11, block=50),
    "output": dict(directory="", plot=True),
    "parallel": dict(workers=1),
}

# per-experiment overrides of the section defaults above (desk-scale resolutions)
EXPERIMENT_DEFAULTS = {
    "validate-kernels": dict(ensemble=dict(n_replicates=1)),
    "simulate": dict(solver=dict(n_x=64, n_t=1024, T=0.0625, stride=128),
                     drift=dict(name="bounded", level=5), ensemble=dict(n_replicates=4)),
    "driftless-rate": dict(),
    "holder": dict(solver=dict(n_x=256, n_t=4096, T=0.015625, sigma="constant", sigma_a=1.0),
                   drift=dict(name="zero")),
    "stability": dict(solver=dict(n_x=64, n_t=1024, T=0.0625), drift=dict(level=5),
                      ensemble=dict(n_replicates=500)),
    "four-point": dict(solver=dict(n_x=64, n_t=1024, T=0.0625), drift=dict(level=5),
                       ensemble=dict(n_replicates=500)),
    "sequence": dict(solver=dict(n_x=64, n_t=1024, T=0.0625), drift=dict(name="half-derivative"),
                     ensemble=dict(n_replicates=500)),
    "malliavin": dict(solver=dict(n_x=128, n_t=4096, T=0.0625), drift=dict(name="zero"),
                      ensemble=dict(block=32)),
    "sewing": dict(solver=dict(n_x=32, n_t=256, T=0.0625), drift=dict(level=5),
                   ensemble=dict(n_replicates=100, block=25)),
}

# experiment-specific parameters; times are given in solver steps
PARAM_DEFAULTS = {
    "validate-kernels": dict(eps=0.5, n_x_check=256, t_exponents=list(range(0, 14))),
    "simulate": dict(stamps=8, u0="zero"),
    "driftless-rate": dict(p=2.0, gaps=[64, 128, 256, 512, 1024], pool=True, x_index=0,
                           u0="zero", tolerance=0.15),
    "holder": dict(p=2.0, hs=[64, 128, 256, 512], deltas=[4, 8, 16, 32], t0_steps=-512,
                   which="V", pool=True, x_index=0, u0="zero", tolerance=0.05),
    "stability": dict(p=2.0, shifts=[0.2, 0.1, 0.05, 0.025], probe_starts=[256, 512],
                      probe_gaps=[128, 256, 512], u0="zero", min_slope=0.9),
    "four-point": dict(p=2.0, s_steps=256, gaps=[32, 64, 128, 256], u0_gap=0.1, u0="zero",
                       tolerance=0.15),
    "sequence": dict(levels=[1, 2, 3, 4, 5, 6], stamps=16, u0="cos", u0_amplitude=2.0,
                     p=2.0, max_spread=3.0, k_max=18),
    "malliavin": dict(p=2.0, sign="negative", time_exponents=[10, 9, 8, 7, 6, 5, 4], x_index=0,
                      u0="zero", max_ci_width=0.3, n_boot=1000),
    "sewing": dict(M=32, depths=[1, 2, 3, 4, 5], scale_steps=[16, 32, 64, 128], s0_steps=128,
                   x_index=0, u0="zero", min_slope=0.75, n_boot=1000),
}


def _canonical_value(v):
    """Decimal-exact, platform-independent string form of a raw config value."""
    s = str(v).strip()
    parts = [x.strip() for x in s.split(",")] if "," in s else [s]
    out = []
    for x in parts:
        try:
            d = Decimal(x)
        except InvalidOperation:
            low = x.lower()
            out.append(low if low in ("true", "false", "yes", "no", "on", "off") else x)
            continue
        if not d.is_finite():
            out.append(str(d))
            continue
        d = d.normalize()
        out.append("0" if d == 0 else format(d, "f") if abs(d.adjusted()) < 30 else str(d))
    return ",".join(out)


@dataclass
class ExperimentConfig:
    experiment: str
    sections: dict = field(default_factory=dict)   # raw string values as written

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise UnknownExperimentError(
                f"unknown experiment {self.experiment!r}; choose one of {', '.join(EXPERIMENTS)}")
        for name in self.sections:
            if name not in SECTIONS:
                raise ConfigSyntaxError(f"unknown section [{name}]; allowed: {', '.join(SECTIONS)}")

    # --- typed access -----------------------------------------------------------
    def _typed(self, section, key, conv):
        raw = self.sections.get(section, {}).get(key)
        if raw is None:
            return None
        try:
            return conv(raw)
        except (ValueError, InvalidOperation, ArithmeticError):
            raise ConfigSyntaxError(f"[{section}] {key} = {raw!r} is not a valid value") from None

    def section(self, name):
        types = PARAM_TYPES if name == "params" else TYPES[name]
        if name == "params":
            out = dict(PARAM_DEFAULTS[self.experiment])
        else:
            out = dict(DEFAULTS[name])
            out.update(EXPERIMENT_DEFAULTS[self.experiment].get(name, {}))
        for key in self.sections.get(name, {}):
            if key not in types:
                raise ConfigSyntaxError(f"[{name}] unknown key {key!r}")
            out[key] = self._typed(name, key, types[key])
        return out

    @property
    def solver(self):
        return self.section("solver")

    @property
    def drift(self):
        return self.section("drift")

    @property
    def ensemble(self):
        return self.section("ensemble")

    @property
    def output(self):
        return self.section("output")

    @property
    def parallel(self):
        return self.section("parallel")

    @property
    def params(self):
        return self.section("params")

    # --- overrides / serialisation ---------------------------------------------------
    def resolved(self):
        """Every section with defaults filled in (recorded in manifests)."""
        return {name: self.section(name) for name in SECTIONS}

    def with_overrides(self, overrides):
        """``overrides`` maps ``"section.key"`` to raw string values."""
        sections = {k: dict(v) for k, v in self.sections.items()}
        for dotted, value in overrides.items():
            if "." not in dotted:
                raise ConfigSyntaxError(f"override {dotted!r} must look like section.key")
            sec, key = dotted.split(".", 1)
            if sec not in SECTIONS:
                raise ConfigSyntaxError(f"unknown section in override {dotted!r}")
            sections.setdefault(sec, {})[key] = str(value)
        return ExperimentConfig(self.experiment, sections)

    def to_ini(self):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["experiment"] = {"name": self.experiment}
        for name in SECTIONS:
            if self.sections.get(name):
                cp[name] = dict(sorted(self.sections[name].items()))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def canonical(self):
        body = {"experiment": {"name": self.experiment}}
        for name in sorted(self.sections):
            entries = self.sections[name]
            if entries:
                body[name] = {k: _canonical_value(entries[k]) for k in sorted(entries)}
        return json.dumps(body, sort_keys=True, separators=(",", ":"))

    def hash(self):
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def validate(self):
        """Type-check every value and enforce numeric constraints; returns self."""
        sol, dr, ens, par = self.solver, self.drift, self.ensemble, self.parallel
        prm = self.params
        out = self.output
        problems = []

        def need(cond, msg):
            if not cond:
                problems.append(msg)

        need(sol["n_x"] >= 4 and sol["n_x"] % 2 == 0, "[solver] n_x must be an even integer >= 4")
        need(sol["n_t"] >= 1, "[solver] n_t must be >= 1")
        need(0 < sol["T"] <= 1, "[solver] T must lie in (0, 1]")
        need(sol["stride"] >= 1, "[solver] stride must be >= 1")
        need(sol["sigma"] in ("constant", "sine"), "[solver] sigma must be 'constant' or 'sine'")
        if sol["sigma"] == "sine":
            need(sol["sigma_a"] > abs(sol["sigma_c"]),
                 "[solver] sine sigma needs sigma_a > |sigma_c| so that sigma^2 >= mu^2 > 0")
        else:
            need(sol["sigma_a"] != 0, "[solver] constant sigma must be nonzero (set sigma_a)")
        need(ens["n_replicates"] >= 1, "[ensemble] n_replicates must be >= 1")
        need(ens["block"] >= 1, "[ensemble] block must be >= 1")
        need(par["workers"] >= 0, "[parallel] workers must be >= 0 (0 = one per CPU)")
        need(dr["level"] >= 0, "[drift] level must be >= 0 (scale 4^-level)")
        from .library import DRIFTS
        need(dr["name"] in DRIFTS, f"[drift] name must be one of {sorted(DRIFTS)}")
        if "p" in prm:
            need(prm["p"] >= 1, "[params] p must be >= 1")
        n_t = sol["n_t"]
        exp = self.experiment
        if exp == "driftless-rate":
            need(min(prm["gaps"]) >= 64, "[params] gaps must be >= 64 steps (dt <= gap / 64)")
            need(max(prm["gaps"]) <= n_t, "[params] gaps must fit in n_t steps")
            need(len(prm["gaps"]) >= 3, "[params] at least 3 gaps are needed for a rate fit")
            need(ens["n_replicates"] >= 100, "[ensemble] n_replicates must be >= 100")
        if exp == "holder":
            t0 = prm["t0_steps"] % n_t if prm["t0_steps"] < 0 else prm["t0_steps"]
            need(t0 + max(prm["hs"]) <= n_t, "[params] t0_steps + max(hs) must not exceed n_t")
            need(min(prm["hs"]) >= 64, "[params] hs must be >= 64 steps")
            need(prm["which"] in ("u_minus_Pu0", "D", "V"), "[params] which must be u_minus_Pu0, D or V")
            need(max(prm["deltas"]) <= sol["n_x"] // 2, "[params] deltas must be <= n_x / 2")
            need(ens["n_replicates"] >= 100, "[ensemble] n_replicates must be >= 100")
        if exp == "stability":
            need(all(s + g <= n_t for s in prm["probe_starts"] for g in prm["probe_gaps"]),
                 "[params] probe_starts + probe_gaps must not exceed n_t")
            need(len(prm["shifts"]) >= 2 and all(x > 0 for x in prm["shifts"]),
                 "[params] shifts must be >= 2 positive discrepancies")
        if exp == "four-point":
            need(prm["s_steps"] + max(prm["gaps"]) <= n_t, "[params] s_steps + max(gaps) must not exceed n_t")
        if exp == "sequence":
            need(len(prm["levels"]) >= 2, "[params] need at least 2 mollification levels")
            need(n_t % prm["stamps"] == 0, "[params] stamps must divide n_t")
        if exp == "malliavin":
            need(sol["n_x"] <= 128, "[solver] Malliavin runs are capped at n_x <= 128")
            need(prm["sign"] in ("positive", "negative"), "[params] sign must be positive or negative")
            need(all(2.0 ** -e <= sol["T"] for e in prm["time_exponents"]),
                 "[params] every 2^-e time must lie within (0, T]")
        if exp == "sewing":
            need(prm["M"] >= 1, "[params] M must be >= 1")
            need(n_t % (2 ** max(prm["depths"])) == 0, "[params] 2^max(depths) must divide n_t")
            need(ens["n_replicates"] >= 100, "[ensemble] sewing needs >= 100 replicates")
            need(prm["s0_steps"] + max(prm["scale_steps"]) <= n_t,
                 "[params] s0_steps + max(scale_steps) must not exceed n_t")
        if problems:
            raise ConfigValidationError("; ".join(problems))
        return self


def parse_config(text, experiment=None):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigSyntaxError(f"cannot parse configuration: {err}") from None
    name = cp.get("experiment", "name", fallback=None)
    if experiment is not None:
        if name is not None and name != experiment:
            raise ConfigValidationError(
                f"configuration is for {name!r} but {experiment!r} was requested")
        name = experiment
    if name is None:
        raise ConfigSyntaxError("missing [experiment] name")
    sections = {s: dict(cp[s]) for s in cp.sections() if s != "experiment"}
    return ExperimentConfig(name, sections)


def load_config(path, experiment=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigSyntaxError(f"cannot read configuration {path}: {err}") from None
    return parse_config(text, experiment)


def config_hash_file(path):
    """Hash of a configuration file, identical to the hash recorded in run manifests."""
    return load_config(path).hash()
