"""Command line entry point: ``shelab run|rerun|hash|list``."""
import argparse
import json
import sys

from .config import (EXPERIMENTS, ConfigSyntaxError, ConfigValidationError, ExperimentConfig,
                     UnknownExperimentError, load_config)
from .errors import InputError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2
EXIT_ASSERT = 3
EXIT_UNKNOWN_EXPERIMENT = 4
EXIT_MALFORMED_CONFIG = 5
EXIT_OUTPUT_DIR = 6


def _parser():
    p = argparse.ArgumentParser(prog="shelab", description="Numerical experiments for SHE with distributional drift.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("experiment")
    run.add_argument("--config", help="INI configuration file")
    run.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                     help="override one configuration value (repeatable)")
    run.add_argument("--drift", help="shorthand for --set drift.name=NAME")
    run.add_argument("--replicates", type=int, help="shorthand for --set ensemble.n_replicates=N")
    run.add_argument("--seed", type=int, help="shorthand for --set ensemble.seed=N")
    run.add_argument("--workers", type=int, help="worker processes (0 = one per CPU)")
    run.add_argument("--output", help="output root directory")
    run.add_argument("--assert", dest="check", action="store_true",
                     help="exit with status 3 when any check fails")
    run.add_argument("--no-plot", action="store_true", help="skip the SVG plot")

    rerun = sub.add_parser("rerun", help="repeat a run from its manifest.json")
    rerun.add_argument("manifest")
    rerun.add_argument("--workers", type=int)
    rerun.add_argument("--output")
    rerun.add_argument("--assert", dest="check", action="store_true")
    rerun.add_argument("--no-plot", action="store_true")

    h = sub.add_parser("hash", help="print the canonical hash of a configuration file")
    h.add_argument("config")

    sub.add_parser("list", help="list available experiments")
    return p


def _overrides(args):
    out = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigSyntaxError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    if args.drift:
        out["drift.name"] = args.drift
    if args.replicates is not None:
        out["ensemble.n_replicates"] = str(args.replicates)
    if args.seed is not None:
        out["ensemble.seed"] = str(args.seed)
    return out


def _execute(cfg, args, argv):
    from .runner import run_experiment
    run_dir, outcome = run_experiment(cfg, root=args.output, workers=args.workers,
                                      plot=False if args.no_plot else None,
                                      command=["shelab", *argv])
    for name, (ok, detail) in outcome.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {json.dumps(detail, default=float)}")
    print(f"results in {run_dir}")
    if args.check and not outcome.passed:
        return EXIT_ASSERT
    return EXIT_OK


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = _parser().parse_args(argv)
    from .runner import OutputDirError, config_from_manifest
    try:
        if args.command == "list":
            for name in EXPERIMENTS:
                print(name)
            return EXIT_OK
        if args.command == "hash":
            print(load_config(args.config).hash())
            return EXIT_OK
        if args.command == "rerun":
            try:
                cfg = config_from_manifest(args.manifest)
            except (OSError, ValueError, KeyError) as err:
                raise ConfigSyntaxError(f"cannot read manifest {args.manifest}: {err}") from None
        else:
            if args.config:
                cfg = load_config(args.config, args.experiment)
            else:
                cfg = ExperimentConfig(args.experiment, {})
            cfg = cfg.with_overrides(_overrides(args))
        cfg.validate()
        return _execute(cfg, args, argv)
    except UnknownExperimentError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_UNKNOWN_EXPERIMENT
    except ConfigSyntaxError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_MALFORMED_CONFIG
    except (ConfigValidationError, InputError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except OutputDirError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_OUTPUT_DIR
    except Exception as err:  # noqa: BLE001 - reported, not swallowed
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
