"""
Scalar responses evaluated on realizations: profile slope and length (1D),
facies connectivity (2D/3D) and fastest transit time (2D).
"""

import csv
import heapq
import itertools
import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import InvalidArgument
from .specfun import std_normal_quantile

__all__ = [
    "ResponseSample",
    "max_consec_diff",
    "profile_length",
    "connectivity",
    "cluster_sizes",
    "transit_time",
    "fastest_path",
    "RESPONSE_KINDS",
    "evaluate",
    "write_responses_csv",
]

RESPONSE_KINDS = ("max_consec_diff", "profile_length", "connectivity", "transit_time")


@dataclass
class ResponseSample:
    kind: str
    values: np.ndarray
    mode: str
    meta: dict = dc_field(default_factory=dict)


def _profile(z):
    z = np.asarray(z, dtype=float).ravel()
    if z.size < 2:
        raise InvalidArgument("profile needs at least two values")
    return z


def max_consec_diff(profile):
    return float(np.max(np.abs(np.diff(_profile(profile)))))


def profile_length(profile, dx=1.0):
    """Polyline arc length sum_i sqrt(dx^2 + (z_{i+1} - z_i)^2)."""
    z = _profile(profile)
    if not dx > 0:
        raise InvalidArgument("dx must be > 0")
    return float(np.sum(np.hypot(dx, np.diff(z))))


# ----------------------------------------------------------------------------
# Connectivity
# ----------------------------------------------------------------------------
def _offsets(dim, adjacency):
    if adjacency == "face":
        return [tuple(int(k == a) for k in range(dim)) for a in range(dim)]
    if adjacency == "full":
        out = []
        for off in itertools.product((-1, 0, 1), repeat=dim):
            nz = [v for v in off if v != 0]
            if nz and nz[0] > 0:
                out.append(off)
        return out
    raise InvalidArgument(f"adjacency must be 'face' or 'full', got {adjacency!r}")


def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


def cluster_sizes(mask, adjacency="face"):
    """
    Sizes of the connected components of True cells (union-find).

    Parameters
    ----------
    mask : bool array, 2D or 3D
    adjacency : {"face", "full"}
        face: 4 / 6 neighbors; full: 8 / 26 neighbors

    Returns
    -------
    int array of cluster sizes (unordered)
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim not in (2, 3):
        raise InvalidArgument("connectivity needs a 2D or 3D field")
    n = mask.size
    lin = np.arange(n).reshape(mask.shape)
    parent = list(range(n))
    for off in _offsets(mask.ndim, adjacency):
        src, dst = [], []
        for o, m in zip(off, mask.shape):
            if o >= 0:
                src.append(slice(0, m - o))
                dst.append(slice(o, m))
            else:
                src.append(slice(-o, m))
                dst.append(slice(0, m + o))
        both = mask[tuple(src)] & mask[tuple(dst)]
        a = lin[tuple(src)][both]
        b = lin[tuple(dst)][both]
        for u, v in zip(a.tolist(), b.tolist()):
            ru, rv = _find(parent, u), _find(parent, v)
            if ru != rv:
                if ru < rv:
                    parent[rv] = ru
                else:
                    parent[ru] = rv
    cells = lin[mask].tolist()
    roots = np.array([_find(parent, c) for c in cells], dtype=np.int64)
    if roots.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.unique(roots, return_counts=True)[1]


def connectivity(field, p, adjacency="face", threshold=None):
    """
    g(p) = sum n_i^2 / n_p^2 over clusters of cells with Z <= Phi^-1(p).

    Returns 0 (with a RuntimeWarning) when no cell is permeable.
    """
    field = np.asarray(field, dtype=float)
    if threshold is None:
        if not 0.0 < p < 1.0:
            raise InvalidArgument("p must lie in (0, 1)")
        threshold = std_normal_quantile(p)
    sizes = cluster_sizes(field <= threshold, adjacency).astype(float)
    n_p = sizes.sum()
    if n_p == 0:
        warnings.warn("no permeable cell; connectivity set to 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.sum(sizes ** 2) / n_p ** 2)


# ----------------------------------------------------------------------------
# Transit time
# ----------------------------------------------------------------------------
_MOVES = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _slowness(field):
    z = np.asarray(field, dtype=float)
    if z.ndim != 2:
        raise InvalidArgument("transit time needs a 2D field")
    if not np.all(np.isfinite(z)):
        raise InvalidArgument("field values must be finite")
    return np.exp(-z)


def fastest_path(field, spacing=1.0, source=None, target=None):
    """
    Dijkstra on the 8-neighbor cell graph with slowness exp(-z).

    Edge (a, b) costs step * (w_a + w_b) / 2, with step = spacing for axis
    moves and spacing * sqrt(2) for diagonal moves.

    Parameters
    ----------
    field : 2D array
    spacing : float
    source, target : (row, col), optional
        default to the upper-left and bottom-right cells

    Returns
    -------
    cost : float
    path : list of (row, col) from source to target
    """
    w = _slowness(field)
    nr, nc = w.shape
    src = (0, 0) if source is None else tuple(source)
    dst = (nr - 1, nc - 1) if target is None else tuple(target)
    steps = [spacing * (math.sqrt(2.0) if dr and dc else 1.0) for dr, dc in _MOVES]
    wl = w.tolist()
    dist = [[math.inf] * nc for _ in range(nr)]
    prev = {}
    dist[src[0]][src[1]] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, (r, c) = heapq.heappop(heap)
        if d > dist[r][c]:
            continue
        if (r, c) == dst:
            break
        wr = wl[r][c]
        for (dr, dc), st in zip(_MOVES, steps):
            rr, cc = r + dr, c + dc
            if 0 <= rr < nr and 0 <= cc < nc:
                nd = d + st * 0.5 * (wr + wl[rr][cc])
                if nd < dist[rr][cc]:
                    dist[rr][cc] = nd
                    prev[(rr, cc)] = (r, c)
                    heapq.heappush(heap, (nd, (rr, cc)))
    if math.isinf(dist[dst[0]][dst[1]]):
        raise InvalidArgument("target unreachable")
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    path.reverse()
    # re-sum the path edges with correct rounding
    cost = math.fsum(spacing * (math.sqrt(2.0) if (a[0] != b[0] and a[1] != b[1]) else 1.0)
                     * 0.5 * (wl[a[0]][a[1]] + wl[b[0]][b[1]]) for a, b in zip(path, path[1:]))
    return cost, path


def transit_time(field, spacing=1.0):
    return fastest_path(field, spacing)[0]


# ----------------------------------------------------------------------------
# Ensembles
# ----------------------------------------------------------------------------
def evaluate(kind, values, grid, p=None, adjacency="face"):
    """
    Apply a response to each row of `values` (realizations x grid nodes).

    Returns an array with one scalar per realization.
    """
    values = np.atleast_2d(values)
    out = np.empty(values.shape[0])
    for k, row in enumerate(values):
        f = grid.shape_values(row)
        if kind == "max_consec_diff":
            out[k] = max_consec_diff(f)
        elif kind == "profile_length":
            out[k] = profile_length(f, grid.spacing[0])
        elif kind == "connectivity":
            out[k] = connectivity(f, p, adjacency)
        elif kind == "transit_time":
            if len(set(grid.spacing)) != 1:
                raise InvalidArgument("transit time needs equal spacing on both axes")
            out[k] = transit_time(f, grid.spacing[0])
        else:
            raise InvalidArgument(f"unknown response {kind!r}")
    return out


def write_responses_csv(path, samples, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["mode", "realization", "value"])
        for s in samples:
            for r, v in enumerate(s.values):
                w.writerow([s.mode, r, repr(float(v))])
