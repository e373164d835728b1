"""
Experiment configuration and runners behind the command-line interface.

A configuration is a YAML mapping. ``kind`` selects a preset whose values
fill every key not given explicitly; see :data:`PRESETS`. All randomness
derives from ``seed``, so results are pure functions of the configuration.
"""

import copy
import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np
import yaml

from . import __version__, kriging, linalg, responses, simulate, sparsity, stats
from .covmodel import (CovarianceSpec, Taper, TaperedCovariance, effective_range, parse_covariance,
                       tail_screen)
from .errors import ConfigError, HalfTaperError
from .field import BoxDomain, GridSpec, PointSet, SamplingDesign, draw_sample

__all__ = [
    "PRESETS",
    "ExperimentConfig",
    "load_config",
    "scaled_covariance",
    "run_experiment",
    "run_mse_sweep",
    "run_sparsity_table",
    "forecast_line",
]

DEFAULT_RATIOS = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0]
SIM_KINDS = ("profile1d", "connectivity2d", "transit2d", "connectivity3d")
KINDS = SIM_KINDS + ("mse_sweep", "sparsity")

PRESETS = {
    "profile1d": dict(
        covariance="exponential", effective_range=100.0 / 3.0, taper="spherical",
        theta_ratios=DEFAULT_RATIOS, grid=dict(counts=[100], spacing=1.0),
        n_data=10, n_samples=None, n_real=500, responses=["max_consec_diff", "profile_length"],
    ),
    "connectivity2d": dict(
        covariance="matern(nu=1)", effective_range=25.0, taper="wendland1",
        theta_ratios=DEFAULT_RATIOS, grid=dict(counts=[50, 50], spacing=1.0),
        n_data=100, n_samples=10, n_real=10, responses=["connectivity"], p=0.3,
    ),
    "transit2d": dict(
        covariance="matern(nu=1)", effective_range=25.0, taper="wendland1",
        theta_ratios=DEFAULT_RATIOS, grid=dict(counts=[50, 50], spacing=1.0),
        n_data=100, n_samples=40, n_real=10, responses=["transit_time"],
    ),
    "connectivity3d": dict(
        covariance="exponential", effective_range=20.0 / 3.0, taper="spherical",
        theta_ratios=DEFAULT_RATIOS, grid=dict(counts=[20, 20, 20], spacing=1.0),
        n_data=100, n_samples=10, n_real=10, responses=["connectivity"], p=0.2,
    ),
    "mse_sweep": dict(
        covariances=["spherical(range=1)", "exponential", "cubic(range=1)", "matern(nu=1)"],
        effective_range=1.0,
        tapers=["spherical", "cubic", "penta", "bohman", "wendland1"],
        theta_ratios=[0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0],
        n_data=400, n_samples=50, design="stratified", target=[0.5, 0.5], sparse=False,
    ),
    "sparsity": dict(
        taper="spherical", thetas=[round(0.1 * k, 1) for k in range(1, 16)],
        n_points=2000, grid_2d=50, grid_3d=15, designs=["regular", "stratified", "random", "cox"],
    ),
}

COMMON = dict(seed=20240611, design="random", adjacency="face", p=None, subtitle_samples=5,
              subtitle_targets=200, workers=1, out="results")
# keys that do not change any result
NON_SEMANTIC = ("workers", "out")


def _set_path(d, dotted, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        if not isinstance(d.get(k), dict):
            d[k] = {}
        d = d[k]
    d[keys[-1]] = value


def parse_override(text):
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k.strip(), yaml.safe_load(v)
    except yaml.YAMLError as exc:
        raise ConfigError(f"bad value in --set {text!r}: {exc}") from None


@dataclass
class ExperimentConfig:
    kind: str
    params: dict
    digest: str = ""

    def __getitem__(self, k):
        return self.params[k]

    def get(self, k, default=None):
        return self.params.get(k, default)

    def header(self):
        return [f"halftaper {__version__}", f"config_digest {self.digest}", f"kind {self.kind}"]


def _digest(kind, params):
    sem = {k: v for k, v in params.items() if k not in NON_SEMANTIC}
    blob = json.dumps({"kind": kind, **sem}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _validate(kind, p):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(isinstance(p.get("seed"), int) and p["seed"] >= 0, "seed must be a non-negative integer")
    need(isinstance(p.get("workers"), int) and p["workers"] >= 1, "workers must be >= 1")
    try:
        if kind in SIM_KINDS or kind == "mse_sweep":
            ratios = p["theta_ratios"]
            need(isinstance(ratios, list) and ratios and all(float(r) > 0 for r in ratios),
                 "theta_ratios must be a nonempty list of positive numbers")
            need(p.get("effective_range") is None or float(p["effective_range"]) > 0,
                 "effective_range must be > 0")
        if kind in SIM_KINDS:
            scaled_covariance(p["covariance"], p.get("effective_range"))
            Taper(p["taper"], 1.0)
            g = p["grid"]
            grid = GridSpec(g["counts"], g.get("spacing"), g.get("origin"))
            need(grid.dim == {"profile1d": 1, "connectivity2d": 2, "transit2d": 2, "connectivity3d": 3}[kind],
                 f"grid dimension does not match experiment {kind}")
            need(isinstance(p["n_data"], int) and 1 <= p["n_data"] <= grid.size, "n_data out of range")
            need(isinstance(p["n_real"], int) and p["n_real"] >= 0, "n_real must be >= 0")
            need(p["n_samples"] is None or (isinstance(p["n_samples"], int) and p["n_samples"] >= 1),
                 "n_samples must be null or >= 1")
            need(all(r in responses.RESPONSE_KINDS for r in p["responses"]), "unknown response kind")
            if "connectivity" in p["responses"]:
                need(p.get("p") is not None and 0 < float(p["p"]) < 1, "connectivity needs 0 < p < 1")
            need(p["adjacency"] in ("face", "full"), "adjacency must be face or full")
            SamplingDesign(p["design"])
        elif kind == "mse_sweep":
            for c in p["covariances"]:
                scaled_covariance(c, p.get("effective_range"))
            for t in p["tapers"]:
                Taper(t, 1.0)
            need(isinstance(p["n_data"], int) and p["n_data"] >= 1, "n_data must be >= 1")
            need(isinstance(p["n_samples"], int) and p["n_samples"] >= 1, "n_samples must be >= 1")
            need(len(p["target"]) == 2, "target must be a 2D location")
            SamplingDesign(p["design"])
        elif kind == "sparsity":
            Taper(p["taper"], 1.0)
            need(all(0 < float(t) for t in p["thetas"]), "thetas must be positive")
            need(int(p["n_points"]) >= 2, "n_points must be >= 2")
            for d in p["designs"]:
                SamplingDesign(d)
    except ConfigError:
        raise
    except (HalfTaperError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def load_config(path=None, overrides=(), kind=None, seed=None, workers=None, out=None):
    """
    Read a YAML config (optional), apply ``key=value`` overrides, fill preset
    defaults and validate.
    """
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping")
    for item in overrides:
        k, v = parse_override(item) if isinstance(item, str) else item
        _set_path(raw, k, v)
    kind = kind or raw.pop("kind", None) or raw.pop("experiment", None)
    raw.pop("kind", None)
    if kind not in KINDS:
        raise ConfigError(f"experiment kind must be one of {', '.join(KINDS)}; got {kind!r}")
    params = copy.deepcopy(COMMON)
    params.update(copy.deepcopy(PRESETS[kind]))
    for k, v in raw.items():
        if k not in params:
            raise ConfigError(f"unknown config key {k!r} for {kind}")
        if isinstance(params[k], dict) and isinstance(v, dict):
            params[k].update(v)
        else:
            params[k] = v
    for k, v in (("seed", seed), ("workers", workers), ("out", out)):
        if v is not None:
            params[k] = v
    _validate(kind, params)
    return ExperimentConfig(kind, params, _digest(kind, params))


def scaled_covariance(text, eff=None):
    """Parse a covariance; with `eff` set, rescale its range so the effective range equals `eff`."""
    spec = text if isinstance(text, CovarianceSpec) else parse_covariance(text)
    if eff is None or (isinstance(text, str) and "range" in text.replace(" ", "").lower().split("(", 1)[-1]):
        return spec
    unit = CovarianceSpec(spec.family, spec.sill, 1.0, spec.nu, spec.alpha)
    return CovarianceSpec(spec.family, spec.sill, float(eff) / effective_range(unit), spec.nu, spec.alpha)


# ----------------------------------------------------------------------------
# Output helpers
# ----------------------------------------------------------------------------
class _Table:
    """CSV file written incrementally, flushed after every batch of rows."""

    def __init__(self, path, columns, header):
        self.fh = open(path, "w", newline="")
        for line in header:
            self.fh.write(f"# {line}\n")
        self.w = csv.writer(self.fh)
        self.w.writerow(columns)

    def rows(self, rows):
        for r in rows:
            self.w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        self.fh.flush()

    def close(self):
        self.fh.close()


def _eval_chunk(args):
    kind, vals, grid, p, adjacency = args
    return responses.evaluate(kind, vals, grid, p, adjacency)


def _evaluate(kind, values, grid, p, adjacency, workers):
    if workers <= 1 or values.shape[0] < 2:
        return responses.evaluate(kind, values, grid, p, adjacency)
    chunks = np.array_split(values, min(workers * 4, values.shape[0]))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(_eval_chunk, [(kind, c, grid, p, adjacency) for c in chunks]))
    return np.concatenate(parts)


# ----------------------------------------------------------------------------
# Conditional-simulation experiments
# ----------------------------------------------------------------------------
@dataclass
class ExperimentResult:
    config: ExperimentConfig
    responses: dict = dc_field(default_factory=dict)    # (ratio, response, mode) -> values
    ks: dict = dc_field(default_factory=dict)           # (ratio, response, "T"|"HT") -> KsResult
    summaries: dict = dc_field(default_factory=dict)    # (ratio, response, mode) -> DistSummary
    subtitles: dict = dc_field(default_factory=dict)    # ratio -> dict


def _subtitle(cov0, taper, grid, ens_f, n_samples, n_targets, seed):
    """Sum-over-targets MSE^s ratios and sparsities for the first samples."""
    nodes = grid.nodes()
    rng = np.random.default_rng([seed, 7])
    tgt = nodes if n_targets >= grid.size else nodes[np.sort(rng.choice(grid.size, n_targets, replace=False))]
    sf = st = sht = 0.0
    sp_exp = []
    for idx in ens_f.samples[:n_samples]:
        pts = PointSet(nodes[idx])
        rep = kriging.mse_report(cov0, taper, pts, tgt)
        sf += float(np.sum(rep.mses_f))
        st += float(np.sum(rep.mses_t))
        sht += float(np.sum(rep.mses_ht))
        sp_exp.append(linalg.sparsity(linalg.assemble_sparse_tapered(TaperedCovariance(cov0, taper), pts)))
    n_data = len(ens_f.samples[0]) if ens_f.samples else 0
    fc = sparsity.forecast(taper, BoxDomain(grid.lengths), max(n_data, 1))
    return dict(ratio_t=st / sf if sf > 0 else 1.0, ratio_ht=sht / sf if sf > 0 else 1.0,
                sparsity_experimental=float(np.mean(sp_exp)) if sp_exp else float("nan"),
                sparsity_forecast=fc.index)


def run_experiment(cfg, write=True):
    """
    F / T / HT ensembles for each taper-range ratio, the configured
    responses, KS tests against F, boxplot summaries and MSE^s ratios.
    """
    p = cfg.params
    cov0 = scaled_covariance(p["covariance"], p.get("effective_range"))
    eff = effective_range(cov0)
    g = p["grid"]
    grid = GridSpec(g["counts"], g.get("spacing"), g.get("origin"))
    res = ExperimentResult(cfg)
    run = dict(cov0=cov0, grid=grid, n_data=p["n_data"], n_real=p["n_real"], seed=p["seed"],
               design=p["design"], n_samples=p["n_samples"], config_digest=cfg.digest)
    tables = None
    if write:
        os.makedirs(p["out"], exist_ok=True)
        hdr = cfg.header()
        tables = dict(
            responses=_Table(os.path.join(p["out"], "responses.csv"),
                             ["theta_ratio", "response", "mode", "realization", "value"], hdr),
            ks=_Table(os.path.join(p["out"], "ks.csv"),
                      ["theta_ratio", "response", "comparison", "D", "p", "n1", "n2"], hdr),
            boxplot=_Table(os.path.join(p["out"], "boxplot.csv"),
                           ["theta_ratio", "response", "mode", "min", "q1", "median", "q3", "max",
                            "whisker_lo", "whisker_hi", "n_outliers"], hdr),
            subtitles=_Table(os.path.join(p["out"], "subtitles.csv"),
                             ["theta_ratio", "taper_range", "ratio_t", "ratio_ht",
                              "sparsity_experimental", "sparsity_forecast"], hdr),
        )
    try:
        ens_f = simulate.run_ensemble(taper=None, mode="F", **run)
        vals_f = ens_f.values
        resp_f = {r: _evaluate(r, vals_f, grid, p.get("p"), p["adjacency"], p["workers"]) for r in p["responses"]}
        del vals_f
        for ratio in p["theta_ratios"]:
            ratio = float(ratio)
            taper = Taper(p["taper"], ratio * eff)
            per_mode = {"F": resp_f}
            for mode in ("T", "HT"):
                vals = simulate.run_ensemble(taper=taper, mode=mode, **run).values
                per_mode[mode] = {r: _evaluate(r, vals, grid, p.get("p"), p["adjacency"], p["workers"])
                                  for r in p["responses"]}
                del vals
            sub = _subtitle(cov0, taper, grid, ens_f, p["subtitle_samples"], p["subtitle_targets"], p["seed"])
            res.subtitles[ratio] = sub
            for r in p["responses"]:
                for mode in ("F", "T", "HT"):
                    v = per_mode[mode][r]
                    res.responses[(ratio, r, mode)] = v
                    if v.size:
                        res.summaries[(ratio, r, mode)] = stats.summarize(v)
                if p["n_real"] > 0:
                    for mode in ("T", "HT"):
                        res.ks[(ratio, r, mode)] = stats.ks_two_sample(per_mode[mode][r], per_mode["F"][r])
            if tables:
                tables["subtitles"].rows([[ratio, ratio * eff, sub["ratio_t"], sub["ratio_ht"],
                                           sub["sparsity_experimental"], sub["sparsity_forecast"]]])
                for r in p["responses"]:
                    tables["responses"].rows([[ratio, r, m, k, float(x)]
                                              for m in ("F", "T", "HT")
                                              for k, x in enumerate(res.responses[(ratio, r, m)])])
                    tables["boxplot"].rows([[ratio, r, m, s.min, s.q1, s.median, s.q3, s.max,
                                             s.whisker_lo, s.whisker_hi, len(s.outliers)]
                                            for m in ("F", "T", "HT")
                                            if (s := res.summaries.get((ratio, r, m))) is not None])
                    tables["ks"].rows([[ratio, r, f"{m} vs F", k.d_stat, k.p_value, k.n1, k.n2]
                                       for m in ("T", "HT") if (k := res.ks.get((ratio, r, m))) is not None])
    finally:
        if tables:
            for t in tables.values():
                t.close()
        simulate.clear_factor_cache()
    return res


# ----------------------------------------------------------------------------
# Prediction MSE sweep
# ----------------------------------------------------------------------------
def run_mse_sweep(cfg, write=True):
    """
    Mean plug-in MSE over mean kriging variance at a fixed target, across
    random samples, for every (covariance, taper, taper-range ratio).

    Returns a list of (covariance, taper, theta_ratio, mean_ratio).
    """
    p = cfg.params
    dom = BoxDomain((1.0, 1.0))
    target = np.asarray(p["target"], float)
    samples = [draw_sample(p["design"], p["n_data"], dom, [p["seed"], s]) for s in range(p["n_samples"])]
    rows = []
    for ctext in p["covariances"]:
        cov0 = scaled_covariance(ctext, p.get("effective_range"))
        eff = effective_range(cov0)
        sys0 = [kriging.build_system(cov0, pts, sparse_if_tapered=False) for pts in samples]
        mse0 = np.mean([kriging.kriging_variance(s0, target) for s0 in sys0])
        for tname in p["tapers"]:
            for ratio in p["theta_ratios"]:
                taper = Taper(tname, float(ratio) * eff)
                tc = TaperedCovariance(cov0, taper)
                mse1 = np.mean([kriging.plugin_mse(s0, kriging.build_system(tc, s0.points, p["sparse"]), target)
                                for s0 in sys0])
                rows.append((str(cov0), taper.family, float(ratio), float(mse1 / mse0)))
    if write:
        os.makedirs(p["out"], exist_ok=True)
        t = _Table(os.path.join(p["out"], "mse_sweep.csv"),
                   ["covariance", "taper", "theta_ratio", "mean_ratio"], cfg.header())
        t.rows(rows)
        t.close()
    return rows


# ----------------------------------------------------------------------------
# Sparsity curves
# ----------------------------------------------------------------------------
def _ball_points(n, dim, rng):
    out = np.empty((0, dim))
    while out.shape[0] < n:
        c = rng.uniform(-1.0, 1.0, size=(4 * n, dim))
        out = np.vstack([out, c[np.einsum("ij,ij->i", c, c) <= 1.0]])
    return out[:n]


def _experimental_sparsity(taper_family, pts, theta):
    tc = TaperedCovariance(CovarianceSpec("exponential", 1.0, 1.0), Taper(taper_family, theta))
    return linalg.sparsity(linalg.assemble_sparse_tapered(tc, pts))


def run_sparsity_table(cfg, write=True):
    """
    Theoretical S(theta) next to experimental sparsities: random points in
    the unit disk / ball and in the square / cube of equal measure, and the
    four sampling designs on that square / cube.

    Returns a list of (dim, setting, theta, F_d, S_theory, S_experimental).
    """
    p = cfg.params
    n = int(p["n_points"])
    rows = []
    for dim in (2, 3):
        side = (math.pi if dim == 2 else 4.0 * math.pi / 3.0) ** (1.0 / dim)
        box = BoxDomain((side,) * dim)
        rng = np.random.default_rng([p["seed"], dim])
        settings = {"ball": _ball_points(n, dim, rng),
                    "box": draw_sample("random", n, box, [p["seed"], dim, 1]).coords}
        m = int(p["grid_2d"] if dim == 2 else p["grid_3d"]) ** dim
        for k, d in enumerate(p["designs"]):
            settings[f"design_{SamplingDesign(d).kind}"] = draw_sample(d, m, box, [p["seed"], dim, 2, k]).coords
        for theta in p["thetas"]:
            theta = float(theta)
            F = sparsity.distance_cdf(dim, theta)
            for name, pts in settings.items():
                S = sparsity.sparsity_index(theta, pts.shape[0], dim)
                rows.append((dim, name, theta, F, S, _experimental_sparsity(p["taper"], pts, theta)))
    if write:
        os.makedirs(p["out"], exist_ok=True)
        t = _Table(os.path.join(p["out"], "sparsity.csv"),
                   ["dim", "setting", "theta", "F_d", "S_theory", "S_experimental"], cfg.header())
        t.rows(rows)
        t.close()
    return rows


# ----------------------------------------------------------------------------
# Forecast
# ----------------------------------------------------------------------------
def forecast_line(covariance, taper, lengths, n):
    """One-line a-priori report: equivalent theta, F_d, S and the tail screen."""
    dom = BoxDomain(lengths)
    fc = sparsity.forecast(taper, dom, n)
    ts = tail_screen(covariance, taper)
    return (f"theta_norm={fc.theta_norm:.6g} F_{fc.dim}={fc.cdf:.6g} S={fc.index:.6g} "
            f"n={fc.n} tail_condition={ts.satisfied} ({ts.gamma_note})")
