"""
Command-line entry point.

    halftaper experiment --config exp.yaml --out results/
    halftaper mse-sweep --set n_samples=10
    halftaper sparsity-table
    halftaper forecast --covariance exponential --taper "spherical(theta=0.12)" --domain 1 1 --n 400
    halftaper simulate --set kind=profile1d --set n_real=20

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import os
import sys

import numpy as np

from . import __version__, experiments, simulate
from .covmodel import Taper, effective_range, parse_covariance, parse_taper
from .errors import ConfigError, HalfTaperError, InvalidArgument, NotPositiveDefinite, NumericalFailure
from .field import GridSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _common(p):
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes for response evaluation")
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (dotted keys reach nested values); repeatable")


def build_parser():
    ap = argparse.ArgumentParser(prog="halftaper", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("experiment", help="F/T/HT response comparison over taper ranges")
    _common(p)
    p = sub.add_parser("mse-sweep", help="prediction MSE ratio against taper range")
    _common(p)
    p = sub.add_parser("sparsity-table", help="theoretical and experimental sparsity")
    _common(p)
    p = sub.add_parser("simulate", help="one conditional ensemble to CSV and raw float64")
    _common(p)
    p.add_argument("--mode", default="HT", choices=["F", "T", "HT"])
    p.add_argument("--theta-ratio", type=float, default=1.0,
                   help="taper range as a multiple of the effective range")

    p = sub.add_parser("forecast", help="a-priori sparsity and tail check")
    p.add_argument("--covariance", default="exponential", help='e.g. "matern(nu=1, range=0.2)"')
    p.add_argument("--taper", required=True, help='e.g. "spherical(theta=0.12)"')
    p.add_argument("--domain", type=float, nargs="+", required=True, help="box side lengths")
    p.add_argument("--n", type=int, required=True, help="number of data")
    return ap


def _load(args, kind=None):
    return experiments.load_config(args.config, args.overrides, kind=kind, seed=args.seed,
                                   workers=args.workers, out=args.out)


def _cmd_experiment(args):
    cfg = _load(args)
    if cfg.kind not in experiments.SIM_KINDS:
        raise ConfigError(f"experiment needs one of {', '.join(experiments.SIM_KINDS)}")
    res = experiments.run_experiment(cfg)
    for (ratio, resp, mode), k in sorted(res.ks.items()):
        print(f"theta_ratio={ratio:g} {resp} {mode} vs F: D={k.d_stat:.4f} p={k.p_value:.4g}")
    print(f"wrote {cfg['out']}")


def _cmd_mse_sweep(args):
    cfg = _load(args, "mse_sweep")
    experiments.run_mse_sweep(cfg)
    print(f"wrote {os.path.join(cfg['out'], 'mse_sweep.csv')}")


def _cmd_sparsity(args):
    cfg = _load(args, "sparsity")
    experiments.run_sparsity_table(cfg)
    print(f"wrote {os.path.join(cfg['out'], 'sparsity.csv')}")


def _cmd_simulate(args):
    cfg = _load(args)
    if cfg.kind not in experiments.SIM_KINDS:
        raise ConfigError(f"simulate needs one of {', '.join(experiments.SIM_KINDS)}")
    p = cfg.params
    cov0 = experiments.scaled_covariance(p["covariance"], p.get("effective_range"))
    taper = Taper(p["taper"], args.theta_ratio * effective_range(cov0))
    g = p["grid"]
    ens = simulate.run_ensemble(cov0, taper, GridSpec(g["counts"], g.get("spacing"), g.get("origin")),
                                p["n_data"], p["n_real"], args.mode, p["seed"], design=p["design"],
                                n_samples=p["n_samples"], config_digest=cfg.digest)
    os.makedirs(p["out"], exist_ok=True)
    base = os.path.join(p["out"], f"ensemble_{args.mode}")
    simulate.write_ensemble_csv(base + ".csv", ens, cfg.header())
    simulate.write_ensemble_raw(base + ".f64", ens, {"software_version": __version__,
                                                     "theta_ratio": args.theta_ratio})
    print(f"wrote {base}.csv and {base}.f64")


def _cmd_forecast(args):
    try:
        cov = parse_covariance(args.covariance)
        taper = parse_taper(args.taper)
        line = experiments.forecast_line(cov, taper, tuple(args.domain), args.n)
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from None
    print(line)


COMMANDS = {
    "experiment": _cmd_experiment,
    "mse-sweep": _cmd_mse_sweep,
    "sparsity-table": _cmd_sparsity,
    "simulate": _cmd_simulate,
    "forecast": _cmd_forecast,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, NotPositiveDefinite, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HalfTaperError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
