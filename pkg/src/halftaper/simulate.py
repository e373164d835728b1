"""
Unconditional simulation by dense Cholesky and conditional simulation by
post-conditioning,

    Z_cs(x) = Z*(x) + Z_s(x) - Z_s*(x),

with Z* the simple-kriging prediction from the data and Z_s* the same
predictor applied to the unconditional field's values at the data sites.

Three modes differ only in the covariance used for each step:

    F  : simulate with C0, krige with C0
    T  : simulate with C1, krige with C1
    HT : simulate with C0, krige with C1

where C1 = C0 * taper. Random streams are keyed by (seed, sample, realization,
stream) and never by mode, so F/T/HT ensembles share parents, samples and
normal deviates (common random numbers).
"""

import csv
import hashlib
import json
from collections import OrderedDict
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Optional

import numpy as np

from . import kriging, linalg
from .covmodel import TaperedCovariance
from .errors import InvalidArgument
from .field import GridSpec, PointSet, corner_indices, sample_grid_nodes

__all__ = [
    "ConditioningMode",
    "Realization",
    "ConditionalRealization",
    "Ensemble",
    "unconditional",
    "simulate_realization",
    "post_condition",
    "run_ensemble",
    "simulation_error_study",
    "write_ensemble_csv",
    "write_ensemble_raw",
    "read_ensemble_raw",
]

STREAM_PARENT = 0
STREAM_SAMPLE = 1
STREAM_UNCOND = 2
FACTOR_CACHE_SIZE = 2


class ConditioningMode(str, Enum):
    F = "F"
    T = "T"
    HT = "HT"

    def models(self, cov0, taper):
        """(unconditional model, conditioning model); taper None means C1 = C0."""
        c1 = cov0 if taper is None else TaperedCovariance(cov0, taper)
        if self is ConditioningMode.F:
            return cov0, cov0
        if self is ConditioningMode.T:
            return c1, c1
        return cov0, c1


def _mode(mode):
    try:
        return ConditioningMode(str(getattr(mode, "value", mode)).upper())
    except ValueError:
        raise InvalidArgument(f"unknown conditioning mode {mode!r}") from None


def _rng(seed, *ids):
    return np.random.default_rng([int(seed)] + [int(v) for v in ids])


# ----------------------------------------------------------------------------
# Dense factors of site covariance matrices, cached per (model, sites)
# ----------------------------------------------------------------------------
_factor_cache = OrderedDict()


def _coords_key(X):
    return hashlib.sha1(np.ascontiguousarray(X).tobytes()).hexdigest() + str(X.shape)


def site_factor(cov, sites):
    """Lower Cholesky factor of the covariance matrix of `sites` (cached)."""
    X = sites.coords if isinstance(sites, PointSet) else np.atleast_2d(np.asarray(sites, float))
    key = (cov, _coords_key(X))
    hit = _factor_cache.get(key)
    if hit is not None:
        _factor_cache.move_to_end(key)
        return hit
    while len(_factor_cache) >= FACTOR_CACHE_SIZE:
        _factor_cache.popitem(last=False)
    L = linalg.cholesky(linalg.assemble_dense(cov, X)).lower
    _factor_cache[key] = L
    return L


def clear_factor_cache():
    _factor_cache.clear()


def unconditional(cov, sites, seed, size=None):
    """
    Draw L eps at `sites`.

    Parameters
    ----------
    cov : covariance model
    sites : PointSet or (n, d) array
    seed : int, sequence or Generator
    size : int, optional
        number of independent draws; returns (n, size) when given

    Returns
    -------
    (n,) or (n, size) array
    """
    L = site_factor(cov, sites)
    rng = np.random.default_rng(seed)
    if size is None:
        return L @ rng.standard_normal(L.shape[0])
    return L @ rng.standard_normal((int(size), L.shape[0])).T


# ----------------------------------------------------------------------------
# Realizations
# ----------------------------------------------------------------------------
@dataclass
class Realization:
    grid: GridSpec
    grid_values: np.ndarray
    data_sites: PointSet
    data_site_values: np.ndarray


@dataclass
class ConditionalRealization:
    grid_values: np.ndarray
    mode: ConditioningMode
    provenance: dict = dc_field(default_factory=dict)


@dataclass
class Ensemble:
    grid: GridSpec
    mode: ConditioningMode
    realizations: list
    config_digest: str = ""
    samples: list = dc_field(default_factory=list)
    data_values: list = dc_field(default_factory=list)

    def __len__(self):
        return len(self.realizations)

    @property
    def values(self):
        if not self.realizations:
            return np.zeros((0, self.grid.size))
        return np.vstack([r.grid_values for r in self.realizations])


def _stack_sites(grid, data_coords, tol=1e-9):
    """Grid nodes followed by the data sites that are not grid nodes."""
    nodes = grid.nodes()
    D = np.atleast_2d(np.asarray(data_coords, float))
    sp = np.asarray(grid.spacing)
    idx = np.rint((D - np.asarray(grid.origin)) / sp).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < np.asarray(grid.counts)), axis=1)
    lin = np.full(D.shape[0], -1, dtype=np.int64)
    if np.any(inside):
        cand = np.ravel_multi_index(idx[inside].T, grid.counts)
        near = np.max(np.abs(nodes[cand] - D[inside]), axis=1) <= tol * float(sp.max())
        lin[np.nonzero(inside)[0][near]] = cand[near]
    extra = np.nonzero(lin < 0)[0]
    lin[extra] = grid.size + np.arange(extra.size)
    stacked = np.vstack([nodes, D[extra]]) if extra.size else nodes
    return stacked, lin


def simulate_realization(cov, grid, data_sites, seed):
    """Joint unconditional draw on grid nodes and data sites."""
    if not isinstance(data_sites, PointSet):
        data_sites = PointSet(data_sites)
    stacked, lin = _stack_sites(grid, data_sites.coords)
    z = unconditional(cov, stacked, seed)
    return Realization(grid, z[:grid.size], data_sites, z[lin])


def post_condition(u, data_values, cond_cov, grid=None, system=None, mode=None, provenance=None):
    """
    Condition an unconditional realization on `data_values`.

    Parameters
    ----------
    u : Realization
    data_values : (n,) array
        observed values at ``u.data_sites``
    cond_cov : covariance model used for kriging (C0 or C1)
    grid : GridSpec, optional
        defaults to ``u.grid``
    system : KrigingSystem, optional
        prebuilt system on the data sites under `cond_cov`
    mode : ConditioningMode, optional
        recorded on the output
    provenance : dict, optional

    Returns
    -------
    ConditionalRealization
    """
    grid = u.grid if grid is None else grid
    z = np.asarray(data_values, float)
    if z.shape != (u.data_sites.n,):
        raise InvalidArgument("data_values length differs from the data-site count")
    if system is None:
        system = kriging.build_system(cond_cov, u.data_sites)
    alpha = linalg.solve(system.factor, np.column_stack([z, u.data_site_values]))
    Kgd = linalg.cross_covariance(cond_cov, grid.nodes(), u.data_sites)
    z_star = Kgd @ alpha[:, 0]
    zs_star = Kgd @ alpha[:, 1]
    return ConditionalRealization(z_star + u.grid_values - zs_star,
                                  None if mode is None else _mode(mode), dict(provenance or {}))


def _condition_batch(Zs, idx, z, cond_cov, nodes, data_pts):
    system = kriging.build_system(cond_cov, data_pts)
    alpha = linalg.solve(system.factor, z[:, None] - Zs[idx])
    return Zs + linalg.cross_covariance(cond_cov, nodes, data_pts) @ alpha


def run_ensemble(cov0, taper, grid, n_data, n_real, mode, seed, design="random",
                 n_samples=None, forced="corners", data=None, config_digest=""):
    """
    Conditional ensemble on a grid, data taken at grid nodes of parent fields.

    Scheme A (``n_samples`` None): each realization gets a new parent F
    field, a new sample of ``n_data`` nodes and one conditional realization.
    Scheme B: ``n_samples`` parents/samples, ``n_real`` realizations each.
    ``n_data`` counts the forced nodes (grid corners / endpoints by default).
    With ``data=(PointSet, values)`` the given data condition all
    ``n_real`` realizations instead.

    Returns
    -------
    Ensemble
    """
    mode = _mode(mode)
    grid = grid if isinstance(grid, GridSpec) else GridSpec(grid)
    if n_real < 0:
        raise InvalidArgument("n_real must be >= 0")
    u_cov, c_cov = mode.models(cov0, taper)
    nodes = grid.nodes()
    ens = Ensemble(grid, mode, [], config_digest)
    if n_real == 0:
        return ens
    if data is not None:
        pts, vals = data
        pts = pts if isinstance(pts, PointSet) else PointSet(pts)
        stacked, lin = _stack_sites(grid, pts.coords)
        Zs = np.column_stack([unconditional(u_cov, stacked, _rng(seed, 0, r, STREAM_UNCOND))
                              for r in range(n_real)])
        Zcs = _condition_batch(Zs, lin, np.asarray(vals, float), c_cov, stacked, pts)[:grid.size]
        ens.samples.append(lin)
        ens.data_values.append(np.asarray(vals, float))
        ens.realizations = [ConditionalRealization(Zcs[:, r], mode, {"seed": seed, "sample": 0, "realization": r})
                            for r in range(n_real)]
        return ens

    forced_idx = corner_indices(grid) if isinstance(forced, str) and forced == "corners" else \
        np.asarray([] if forced is None else forced, dtype=np.int64)
    L0 = site_factor(cov0, nodes)

    def parent_and_sample(s):
        parent = L0 @ _rng(seed, s, 0, STREAM_PARENT).standard_normal(grid.size)
        idx = sample_grid_nodes(grid, n_data, _rng(seed, s, 0, STREAM_SAMPLE), design, forced_idx)
        return parent, idx

    Lu = site_factor(u_cov, nodes)
    if n_samples is None:
        eps = np.column_stack([_rng(seed, r, 0, STREAM_UNCOND).standard_normal(grid.size) for r in range(n_real)])
        Zs = Lu @ eps
        for r in range(n_real):
            parent, idx = parent_and_sample(r)
            zc = _condition_batch(Zs[:, r:r + 1], idx, parent[idx], c_cov, nodes, PointSet(nodes[idx]))[:, 0]
            ens.samples.append(idx)
            ens.data_values.append(parent[idx])
            ens.realizations.append(ConditionalRealization(zc, mode, {"seed": seed, "sample": r, "realization": 0}))
        return ens
    for s in range(int(n_samples)):
        parent, idx = parent_and_sample(s)
        eps = np.column_stack([_rng(seed, s, r, STREAM_UNCOND).standard_normal(grid.size) for r in range(n_real)])
        Zcs = _condition_batch(Lu @ eps, idx, parent[idx], c_cov, nodes, PointSet(nodes[idx]))
        ens.samples.append(idx)
        ens.data_values.append(parent[idx])
        ens.realizations.extend(ConditionalRealization(Zcs[:, r], mode, {"seed": seed, "sample": s, "realization": r})
                                for r in range(n_real))
    return ens


def simulation_error_study(cov0, taper, data_points, probes, n_real, mode, seed, batch=5000):
    """
    Empirical simulation MSE E[(Z(x) - Z_cs(x))^2] at probe locations.

    Each replicate draws a new truth under C0 at data sites and probes
    (conditioning data plus reference values) and an independent
    unconditional field under the mode's simulation model.
    """
    mode = _mode(mode)
    u_cov, c_cov = mode.models(cov0, taper)
    dp = data_points if isinstance(data_points, PointSet) else PointSet(data_points)
    P = np.atleast_2d(np.asarray(probes, float)).reshape(-1, dp.dim)
    sites = np.vstack([dp.coords, P])
    n = dp.n
    L_truth = site_factor(cov0, sites)
    L_sim = L_truth if u_cov == cov0 else site_factor(u_cov, sites)
    system = kriging.build_system(c_cov, dp)
    W = linalg.solve(system.factor, linalg.cross_covariance(c_cov, dp, P))   # n x m
    rng_t = _rng(seed, 0, 0, STREAM_PARENT)
    rng_s = _rng(seed, 0, 0, STREAM_UNCOND)
    acc = np.zeros(P.shape[0])
    done = 0
    while done < n_real:
        k = min(batch, n_real - done)
        Z = L_truth @ rng_t.standard_normal((k, sites.shape[0])).T
        S = L_sim @ rng_s.standard_normal((k, sites.shape[0])).T
        zcs = W.T @ Z[:n] + S[n:] - W.T @ S[:n]
        acc += np.sum((Z[n:] - zcs) ** 2, axis=1)
        done += k
    return acc / n_real


# ----------------------------------------------------------------------------
# Export
# ----------------------------------------------------------------------------
def write_ensemble_csv(path, ens, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["realization", "grid_index", "value"])
        for r, real in enumerate(ens.realizations):
            for g, v in enumerate(real.grid_values):
                w.writerow([r, g, repr(float(v))])


def write_ensemble_raw(path, ens, extra=None):
    """
    Raw little-endian float64 block (realizations x grid nodes, row-major)
    at `path` plus a JSON sidecar at `path` + ".json".
    """
    vals = ens.values.astype("<f8")
    with open(path, "wb") as fh:
        fh.write(vals.tobytes(order="C"))
    meta = {
        "dtype": "<f8",
        "shape": list(vals.shape),
        "order": "C",
        "mode": ens.mode.value,
        "grid_counts": list(ens.grid.counts),
        "grid_spacing": list(ens.grid.spacing),
        "grid_origin": list(ens.grid.origin),
        "config_digest": ens.config_digest,
    }
    meta.update(extra or {})
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def read_ensemble_raw(path):
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    vals = np.fromfile(path, dtype=meta["dtype"]).reshape(meta["shape"])
    return vals, meta
