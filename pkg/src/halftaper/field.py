"""
Domains, grids, sampling designs and radius-limited neighbor search.
"""

import csv
import itertools
import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "BoxDomain",
    "PointSet",
    "GridSpec",
    "SamplingDesign",
    "draw_sample",
    "random_disk_pairs",
    "neighbors_within",
    "brute_force_neighbors",
    "sample_grid_nodes",
    "corner_indices",
    "write_points_csv",
    "read_points_csv",
]

DESIGN_KINDS = ("regular", "stratified", "random", "cox")
# intensity grids for the Cox design (cells per axis)
COX_GRID = {1: 256, 2: 64, 3: 16}


@dataclass(frozen=True)
class BoxDomain:
    lengths: tuple
    origin: Optional[tuple] = None

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        if len(lengths) not in (1, 2, 3):
            raise InvalidArgument("domain dimension must be 1, 2 or 3")
        if any(not v > 0 for v in lengths):
            raise InvalidArgument("domain extents must be positive")
        object.__setattr__(self, "lengths", lengths)
        origin = (0.0,) * len(lengths) if self.origin is None else tuple(float(v) for v in self.origin)
        if len(origin) != len(lengths):
            raise InvalidArgument("origin and lengths differ in dimension")
        object.__setattr__(self, "origin", origin)

    @property
    def dim(self):
        return len(self.lengths)

    @property
    def diameter(self):
        return math.sqrt(sum(v * v for v in self.lengths))

    @property
    def measure(self):
        return float(np.prod(self.lengths))

    def contains(self, coords, tol=1e-12):
        c = np.atleast_2d(coords)
        lo = np.asarray(self.origin) - tol
        hi = np.asarray(self.origin) + np.asarray(self.lengths) + tol
        return np.all((c >= lo) & (c <= hi), axis=1)


@dataclass
class PointSet:
    """n x d coordinates, optionally tied to a domain."""

    coords: np.ndarray
    domain: Optional[BoxDomain] = None

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] not in (1, 2, 3):
            raise InvalidArgument("coords must be an (n, d) array with n >= 1 and d in 1..3")
        self.coords = c
        if self.domain is not None:
            if self.domain.dim != c.shape[1]:
                raise InvalidArgument("point and domain dimensions differ")
            if not np.all(self.domain.contains(c)):
                raise InvalidArgument("points outside their domain")

    @property
    def n(self):
        return self.coords.shape[0]

    @property
    def dim(self):
        return self.coords.shape[1]

    def __len__(self):
        return self.n

    def min_separation(self, eps=None):
        """Default minimum separation, 1e-9 times the domain (or bounding box) diameter."""
        if eps is not None:
            return eps
        if self.domain is not None:
            diam = self.domain.diameter
        else:
            diam = float(np.linalg.norm(np.ptp(self.coords, axis=0)))
        return 1e-9 * max(diam, 1e-300)

    def close_pairs(self, eps=None):
        i, j, _ = neighbors_within(self, self.min_separation(eps))
        return i, j

    def subset(self, idx):
        return PointSet(self.coords[np.asarray(idx)], self.domain)


@dataclass(frozen=True)
class GridSpec:
    """Regular grid; nodes enumerate in row-major (C) order, last axis fastest."""

    counts: tuple
    spacing: tuple = None
    origin: tuple = None

    def __post_init__(self):
        counts = tuple(int(v) for v in np.atleast_1d(self.counts))
        if len(counts) not in (1, 2, 3) or any(v < 1 for v in counts):
            raise InvalidArgument("grid counts must be 1..3 positive integers")
        d = len(counts)
        spacing = (1.0,) * d if self.spacing is None else tuple(float(v) for v in np.broadcast_to(self.spacing, (d,)))
        origin = (0.0,) * d if self.origin is None else tuple(float(v) for v in np.broadcast_to(self.origin, (d,)))
        if any(not v > 0 for v in spacing):
            raise InvalidArgument("grid spacing must be positive")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dim(self):
        return len(self.counts)

    @property
    def size(self):
        return int(np.prod(self.counts))

    @property
    def lengths(self):
        # extent covered by the cells centered on the nodes
        return tuple(c * s for c, s in zip(self.counts, self.spacing))

    def nodes(self):
        idx = np.indices(self.counts).reshape(self.dim, -1).T
        return np.asarray(self.origin) + idx * np.asarray(self.spacing)

    def pointset(self):
        return PointSet(self.nodes())

    def shape_values(self, values):
        return np.asarray(values).reshape(self.counts)


@dataclass(frozen=True)
class SamplingDesign:
    """
    kind: "regular", "stratified", "random" or "cox".

    For "cox" the log-intensity is a zero-mean, unit-variance Gaussian field
    with exponential covariance whose practical range is
    ``cox_range_fraction`` times the mean side length.
    """

    kind: str = "random"
    cox_range_fraction: float = 0.3

    def __post_init__(self):
        aliases = {"regulargrid": "regular", "randomstratified": "stratified",
                   "purelyrandom": "random", "coxprocess": "cox"}
        k = aliases.get(self.kind.lower().replace("_", ""), self.kind.lower())
        if k not in DESIGN_KINDS:
            raise InvalidArgument(f"unknown sampling design {self.kind!r}")
        object.__setattr__(self, "kind", k)


# ----------------------------------------------------------------------------
# Sampling
# ----------------------------------------------------------------------------
def _cells(n, d):
    m = int(round(n ** (1.0 / d)))
    if m ** d < n:
        m += 1
    return m


def _cell_lattice(m, d):
    return np.indices((m,) * d).reshape(d, -1).T


@lru_cache(maxsize=8)
def _cox_factor(d, m, corr_range):
    from . import covmodel, linalg
    nodes = (_cell_lattice(m, d) + 0.5) / m
    cov = covmodel.CovarianceSpec("exponential", 1.0, corr_range)
    return linalg.cholesky(linalg.assemble_dense(cov, PointSet(nodes))).lower


def _draw_once(design, n, domain, rng):
    d = domain.dim
    lo = np.asarray(domain.origin)
    L = np.asarray(domain.lengths)
    if design.kind == "random":
        u = rng.random((n, d))
    elif design.kind in ("regular", "stratified"):
        m = _cells(n, d)
        cells = _cell_lattice(m, d)
        if len(cells) > n:
            cells = cells[np.sort(rng.choice(len(cells), n, replace=False))]
        off = 0.5 if design.kind == "regular" else rng.random((n, d))
        u = (cells + off) / m
    else:
        m = COX_GRID[d]
        # practical range on the unit cube
        eff = design.cox_range_fraction
        corr_range = eff / -math.log(0.05)
        lower = _cox_factor(d, m, corr_range)
        z = lower @ rng.standard_normal(lower.shape[0])
        w = np.exp(z)
        cell = rng.choice(len(w), size=n, p=w / w.sum())
        u = (_cell_lattice(m, d)[cell] + rng.random((n, d))) / m
    return lo + u * L


def draw_sample(design, n, domain, seed=None, eps=None):
    """
    Draw exactly `n` points in `domain`.

    Regular and stratified designs use an m^d lattice of cells with
    m = ceil(n^(1/d)); when n is not a perfect d-th power a random subset of
    n cells is kept. The Cox design picks cells of a coarse intensity grid
    with probability proportional to exp(Z) and jitters uniformly inside.

    Parameters
    ----------
    design : SamplingDesign or str
    n : int
    domain : BoxDomain
    seed : int, sequence or numpy Generator
    eps : float, optional
        minimum separation; defaults to 1e-9 times the domain diameter

    Returns
    -------
    PointSet
    """
    if isinstance(design, str):
        design = SamplingDesign(design)
    if n < 1:
        raise InvalidArgument("sample size must be >= 1")
    rng = np.random.default_rng(seed)
    coords = _draw_once(design, n, domain, rng)
    ps = PointSet(coords, domain)
    for _ in range(100):
        i, j = ps.close_pairs(eps)
        if i.size == 0:
            return ps
        bad = np.unique(j)
        if design.kind == "regular":
            raise InvalidArgument("regular design produced coincident points")
        coords[bad] = _draw_once(SamplingDesign("random"), bad.size, domain, rng)
        ps = PointSet(coords, domain)
    raise InvalidArgument("could not enforce the minimum separation")


def random_disk_pairs(n_pairs, dim, seed=None, batch=1 << 18):
    """Distances between i.i.d. uniform point pairs in the unit ball of R^dim."""
    if n_pairs < 1:
        raise InvalidArgument("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)

    def ball(k):
        out = np.empty((0, dim))
        while out.shape[0] < k:
            c = rng.uniform(-1.0, 1.0, size=(max(batch, 2 * (k - out.shape[0])), dim))
            c = c[np.einsum("ij,ij->i", c, c) <= 1.0]
            out = np.vstack([out, c])
        return out[:k]

    a = ball(n_pairs)
    b = ball(n_pairs)
    return np.linalg.norm(a - b, axis=1)


# ----------------------------------------------------------------------------
# Neighbor search
# ----------------------------------------------------------------------------
def _half_offsets(d):
    offs = []
    for off in itertools.product((-1, 0, 1), repeat=d):
        # keep offsets whose first nonzero component is positive
        nz = [v for v in off if v != 0]
        if not nz or nz[0] > 0:
            offs.append(np.array(off))
    return offs


def neighbors_within(points, radius):
    """
    All pairs (i < j) closer than `radius`, found by uniform cell binning.

    Parameters
    ----------
    points : PointSet or (n, d) array
    radius : float > 0

    Returns
    -------
    i, j : int arrays
    dist : float array
        sorted by (i, j)
    """
    X = points.coords if isinstance(points, PointSet) else np.atleast_2d(np.asarray(points, float))
    if X.shape[0] == 1 and X.shape[1] > 3:
        X = X.T
    if not radius > 0:
        raise InvalidArgument("radius must be > 0")
    n, d = X.shape
    lo = X.min(axis=0)
    ext = float(np.max(np.ptp(X, axis=0))) if n > 1 else 0.0
    # cells never smaller than radius; cap the cell count so indices fit in int64
    cell = max(float(radius), ext / 2e5 if d == 3 else ext / 1e8, 1e-300)
    if not np.isfinite(radius):
        cell = max(ext, 1.0)
    keys = np.floor((X - lo) / cell).astype(np.int64) + 1
    dims = keys.max(axis=0) + 2
    strides = np.ones(d, dtype=np.int64)
    for k in range(d - 2, -1, -1):
        strides[k] = strides[k + 1] * dims[k + 1]
    lin = keys @ strides
    order = np.argsort(lin, kind="stable")
    lin_sorted = lin[order]
    ii, jj, dd = [], [], []
    ar = np.arange(n)
    for off in _half_offsets(d):
        nb = lin + int(off @ strides)
        start = np.searchsorted(lin_sorted, nb, "left")
        end = np.searchsorted(lin_sorted, nb, "right")
        cnt = end - start
        tot = int(cnt.sum())
        if tot == 0:
            continue
        i_idx = np.repeat(ar, cnt)
        first = np.repeat(np.cumsum(cnt) - cnt, cnt)
        j_idx = order[start[i_idx] + (np.arange(tot) - first)]
        if not np.any(off):
            keep = i_idx < j_idx
            i_idx, j_idx = i_idx[keep], j_idx[keep]
        diff = X[i_idx] - X[j_idx]
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        keep = dist < radius
        a, b = i_idx[keep], j_idx[keep]
        ii.append(np.minimum(a, b))
        jj.append(np.maximum(a, b))
        dd.append(dist[keep])
    if not ii:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    dist = np.concatenate(dd)
    o = np.lexsort((j, i))
    return i[o], j[o], dist[o]


def brute_force_neighbors(points, radius):
    """O(n^2) reference for :func:`neighbors_within`."""
    X = points.coords if isinstance(points, PointSet) else np.atleast_2d(points)
    n = X.shape[0]
    out = []
    for a in range(n):
        for b in range(a + 1, n):
            dist = math.sqrt(float(np.sum((X[a] - X[b]) ** 2)))
            if dist < radius:
                out.append((a, b, dist))
    return out


# ----------------------------------------------------------------------------
# Grid helpers for the experiments
# ----------------------------------------------------------------------------
def corner_indices(grid):
    """Node indices of the 2^d corners of a grid (1D: both endpoints)."""
    ranges = [(0, c - 1) if c > 1 else (0,) for c in grid.counts]
    idx = sorted({int(np.ravel_multi_index(corner, grid.counts))
                  for corner in itertools.product(*ranges)})
    return np.array(idx, dtype=np.int64)


def sample_grid_nodes(grid, n, rng, design="random", forced=None):
    """
    Choose `n` distinct grid nodes, `forced` ones included.

    For "random" the free nodes are drawn uniformly without replacement;
    other designs draw points with :func:`draw_sample` over the grid extent
    and snap them to the nearest free node.
    """
    forced = np.unique(np.asarray(forced if forced is not None else [], dtype=np.int64))
    if n < forced.size or n > grid.size:
        raise InvalidArgument("sample size incompatible with grid / forced nodes")
    free = np.setdiff1d(np.arange(grid.size), forced)
    k = n - forced.size
    if isinstance(design, str):
        design = SamplingDesign(design)
    if design.kind == "random" or k == 0:
        pick = rng.choice(free, size=k, replace=False)
    else:
        lo = np.asarray(grid.origin) - 0.5 * np.asarray(grid.spacing)
        dom = BoxDomain(grid.lengths, tuple(lo))
        pts = draw_sample(design, k, dom, rng).coords
        idx = np.rint((pts - np.asarray(grid.origin)) / np.asarray(grid.spacing)).astype(np.int64)
        idx = np.clip(idx, 0, np.asarray(grid.counts) - 1)
        cand = np.ravel_multi_index(idx.T, grid.counts)
        taken = set(forced.tolist())
        pick = []
        for c in cand:
            if c not in taken:
                taken.add(int(c))
                pick.append(int(c))
        if len(pick) < k:
            rest = np.setdiff1d(free, pick)
            pick.extend(rng.choice(rest, size=k - len(pick), replace=False).tolist())
        pick = np.array(pick, dtype=np.int64)
    return np.sort(np.concatenate([forced, pick]).astype(np.int64))


# ----------------------------------------------------------------------------
# CSV I/O: header x[,y[,z]][,value]
# ----------------------------------------------------------------------------
_AXES = ("x", "y", "z")


def write_points_csv(path, points, values=None):
    X = points.coords if isinstance(points, PointSet) else np.atleast_2d(points)
    d = X.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(_AXES[:d]) + (["value"] if values is not None else []))
        for k in range(X.shape[0]):
            row = [repr(float(v)) for v in X[k]]
            if values is not None:
                row.append(repr(float(values[k])))
            w.writerow(row)


def read_points_csv(path, domain=None):
    """Returns (PointSet, values or None)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header = [h.strip().lower() for h in rows[0]]
    d = sum(1 for h in header if h in _AXES)
    if header[:d] != list(_AXES[:d]) or d == 0:
        raise InvalidArgument(f"bad point CSV header {rows[0]}")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    values = data[:, d] if "value" in header else None
    return PointSet(data[:, :d], domain), values
