"""
Covariance matrix assembly, dense and sparse Cholesky factorizations.

The sparse path stores the lower triangle in compressed-column form,
orders it with a minimum-degree heuristic, builds the elimination tree and
the row patterns of the factor symbolically, then runs a left-looking
numeric factorization. It is meant for desk-scale kriging systems (a few
thousand unknowns).
"""

import heapq
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse import csr_matrix
from scipy.spatial.distance import cdist

from .covmodel import TaperedCovariance
from .errors import InvalidArgument, NotPositiveDefinite
from .field import PointSet, neighbors_within

__all__ = [
    "DenseSym",
    "SparseSymMatrix",
    "CholFactor",
    "JitterPolicy",
    "assemble_dense",
    "cross_covariance",
    "assemble_sparse_tapered",
    "cholesky",
    "sparse_cholesky",
    "solve",
    "sparsity",
    "minimum_degree_order",
    "dump_coo",
]

MIN_DEGREE_MAX_N = 6000


def _coords(points):
    return points.coords if isinstance(points, PointSet) else np.atleast_2d(np.asarray(points, float))


@dataclass
class DenseSym:
    values: np.ndarray

    @property
    def n(self):
        return self.values.shape[0]

    def to_dense(self):
        return self.values


@dataclass
class SparseSymMatrix:
    """
    Symmetric matrix, lower triangle in CSC form.

    In each column the row indices are strictly increasing and the diagonal
    entry comes first.
    """

    n: int
    colptr: np.ndarray
    rowind: np.ndarray
    values: np.ndarray

    @property
    def nnz(self):
        return int(self.colptr[-1])

    @classmethod
    def from_lower_triplets(cls, n, rows, cols, vals):
        rows = np.asarray(rows, np.int64)
        cols = np.asarray(cols, np.int64)
        vals = np.asarray(vals, float)
        if np.any(rows < cols):
            raise InvalidArgument("triplets must lie in the lower triangle")
        o = np.lexsort((rows, cols))
        rows, cols, vals = rows[o], cols[o], vals[o]
        colptr = np.zeros(n + 1, np.int64)
        np.add.at(colptr, cols + 1, 1)
        colptr = np.cumsum(colptr)
        m = cls(n, colptr, rows, vals)
        if np.any(np.diff(colptr) == 0) or np.any(rows[colptr[:-1]] != np.arange(n)):
            raise InvalidArgument("every diagonal entry must be stored")
        return m

    def triplets(self):
        cols = np.repeat(np.arange(self.n), np.diff(self.colptr))
        return self.rowind.copy(), cols, self.values.copy()

    def to_dense(self):
        r, c, v = self.triplets()
        out = np.zeros((self.n, self.n))
        out[r, c] = v
        out[c, r] = v
        return out

    def diagonal(self):
        return self.values[self.colptr[:-1]]

    def matvec(self, x):
        r, c, v = self.triplets()
        x = np.asarray(x, float)
        y = np.zeros_like(x)
        np.add.at(y, r, v[:, None] * x[c] if x.ndim == 2 else v * x[c])
        off = r != c
        np.add.at(y, c[off], v[off, None] * x[r[off]] if x.ndim == 2 else v[off] * x[r[off]])
        return y


@dataclass(frozen=True)
class JitterPolicy:
    """Diagonal loading delta * sill * I tried on pivot failure, delta = start, start*factor, ... <= stop."""

    start: float = 1e-12
    stop: float = 1e-6
    factor: float = 10.0

    def levels(self):
        out = [0.0]
        d = self.start
        while d <= self.stop * (1 + 1e-9):
            out.append(d)
            d *= self.factor
        return out


@dataclass
class _SparseLower:
    n: int
    Lp: np.ndarray
    Li: np.ndarray
    Lx: np.ndarray

    @property
    def nnz(self):
        return int(self.Lp[-1])

    def to_dense(self):
        out = np.zeros((self.n, self.n))
        cols = np.repeat(np.arange(self.n), np.diff(self.Lp))
        out[self.Li, cols] = self.Lx
        return out


@dataclass
class CholFactor:
    """L L^T = P (M + jitter I) P^T; ``perm[k]`` is the original index of pivot k."""

    kind: str
    lower: object
    perm: Optional[np.ndarray] = None
    jitter_applied: float = 0.0

    @property
    def n(self):
        return self.lower.shape[0] if self.kind == "dense" else self.lower.n

    @property
    def nnz(self):
        if self.kind == "dense":
            return self.n * (self.n + 1) // 2
        return self.lower.nnz


# ----------------------------------------------------------------------------
# Assembly
# ----------------------------------------------------------------------------
def cross_covariance(model, a, b):
    """Matrix of model covariances between point sets `a` (rows) and `b` (columns)."""
    return model.covariance(cdist(_coords(a), _coords(b)))


def assemble_dense(model, points):
    """Dense covariance matrix [C(x_i - x_j)] of a plain or tapered model."""
    X = _coords(points)
    K = model.covariance(cdist(X, X))
    np.fill_diagonal(K, model.sill)
    return DenseSym(K)


def assemble_sparse_tapered(tc, points):
    """Tapered covariance matrix keeping only pairs closer than the taper range."""
    if not isinstance(tc, TaperedCovariance):
        raise InvalidArgument("assemble_sparse_tapered needs a TaperedCovariance")
    X = _coords(points)
    n = X.shape[0]
    i, j, dist = neighbors_within(X, tc.taper.theta)
    vals = tc.covariance(dist)
    keep = vals != 0.0
    i, j, vals = i[keep], j[keep], vals[keep]
    diag = np.arange(n)
    return SparseSymMatrix.from_lower_triplets(
        n,
        np.concatenate([diag, j]),
        np.concatenate([diag, i]),
        np.concatenate([np.full(n, tc.sill), vals]),
    )


def sparsity(m, zero_tol=0.0):
    """Fraction of the full n x n entry grid that is zero."""
    if isinstance(m, SparseSymMatrix):
        n = m.n
        r, c, v = m.triplets()
        nz = np.abs(v) > zero_tol
        off = int(np.count_nonzero(nz & (r != c)))
        on = int(np.count_nonzero(nz & (r == c)))
        return 1.0 - (2 * off + on) / float(n * n)
    A = m.values if isinstance(m, DenseSym) else np.asarray(m)
    return float(np.count_nonzero(np.abs(A) <= zero_tol)) / A.size


def dump_coo(m, path):
    """Write the lower triangle as 'i j value' lines."""
    if isinstance(m, SparseSymMatrix):
        r, c, v = m.triplets()
    else:
        A = m.values if isinstance(m, DenseSym) else np.asarray(m)
        r, c = np.tril_indices(A.shape[0])
        v = A[r, c]
    with open(path, "w") as fh:
        for a, b, x in zip(r, c, v):
            fh.write(f"{int(a)} {int(b)} {float(x)!r}\n")


# ----------------------------------------------------------------------------
# Dense Cholesky
# ----------------------------------------------------------------------------
def cholesky(m, jitter_policy=JitterPolicy()):
    A = m.values if isinstance(m, DenseSym) else np.asarray(m, float)
    if A.shape[0] != A.shape[1]:
        raise InvalidArgument("matrix must be square")
    scale = float(np.max(np.abs(np.diag(A)))) if A.size else 1.0
    for delta in jitter_policy.levels():
        B = A if delta == 0.0 else A + delta * scale * np.eye(A.shape[0])
        try:
            L = scipy.linalg.cholesky(B, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return CholFactor("dense", L, None, delta * scale)
    raise NotPositiveDefinite("matrix not positive definite after maximum jitter")


# ----------------------------------------------------------------------------
# Sparse Cholesky
# ----------------------------------------------------------------------------
def _adjacency(m):
    r, c, _ = m.triplets()
    off = r != c
    adj = [set() for _ in range(m.n)]
    for a, b in zip(r[off].tolist(), c[off].tolist()):
        adj[a].add(b)
        adj[b].add(a)
    return adj


def minimum_degree_order(m):
    """
    Minimum-degree ordering on the explicit elimination graph.

    Ties go to the smallest index, so the result is deterministic.
    Returns ``perm`` with ``perm[k]`` = original index eliminated k-th.
    """
    adj = _adjacency(m)
    n = m.n
    heap = [(len(adj[v]), v) for v in range(n)]
    heapq.heapify(heap)
    done = np.zeros(n, dtype=bool)
    order = []
    while heap:
        deg, v = heapq.heappop(heap)
        if done[v] or deg != len(adj[v]):
            continue
        done[v] = True
        order.append(v)
        nb = adj[v]
        for u in nb:
            au = adj[u]
            au.discard(v)
            au |= nb
            au.discard(u)
            heapq.heappush(heap, (len(au), u))
        adj[v] = set()
    return np.array(order, dtype=np.int64)


def rcm_order(m):
    r, c, _ = m.triplets()
    g = csr_matrix((np.ones(r.size), (r, c)), shape=(m.n, m.n))
    g = g + g.T
    return np.asarray(reverse_cuthill_mckee(g.tocsr(), symmetric_mode=True), dtype=np.int64)


def _etree(n, up_ptr, up_ind):
    parent = np.full(n, -1, dtype=np.int64).tolist()
    ancestor = [-1] * n
    for k in range(n):
        for p in range(up_ptr[k], up_ptr[k + 1]):
            i = up_ind[p]
            while i != -1 and i < k:
                nxt = ancestor[i]
                ancestor[i] = k
                if nxt == -1:
                    parent[i] = k
                i = nxt
    return parent


def _symbolic(n, up_ptr, up_ind):
    parent = _etree(n, up_ptr, up_ind)
    mark = [-1] * n
    row_pat = []
    for k in range(n):
        mark[k] = k
        pat = []
        for p in range(up_ptr[k], up_ptr[k + 1]):
            i = up_ind[p]
            while mark[i] != k:
                pat.append(i)
                mark[i] = k
                i = parent[i]
        row_pat.append(pat)
    return parent, row_pat


def _permuted_parts(m, perm):
    pinv = np.empty(m.n, np.int64)
    pinv[perm] = np.arange(m.n)
    r, c, v = m.triplets()
    pr, pc = pinv[r], pinv[c]
    lo, hi = np.minimum(pr, pc), np.maximum(pr, pc)
    # lower CSC of the permuted matrix (row hi, col lo)
    o = np.lexsort((hi, lo))
    low_ptr = np.searchsorted(lo[o], np.arange(m.n + 1))
    low_ind, low_val = hi[o], v[o]
    # strict upper CSC (row lo, col hi)
    off = lo != hi
    uo = np.lexsort((lo[off], hi[off]))
    up_col = hi[off][uo]
    up_ind = lo[off][uo]
    up_ptr = np.searchsorted(up_col, np.arange(m.n + 1))
    return low_ptr, low_ind, low_val, up_ptr.tolist(), up_ind.tolist()


def _numeric(n, row_pat, Lp, Li, low_ptr, low_ind, low_val, shift):
    Lx = np.zeros(Li.size)
    x = np.zeros(n)
    nxt = (Lp[:-1] + 1).copy()
    for j in range(n):
        s, e = low_ptr[j], low_ptr[j + 1]
        x[low_ind[s:e]] = low_val[s:e]
        x[j] += shift
        for k in row_pat[j]:
            p = nxt[k]
            ljk = Lx[p]
            q = Lp[k + 1]
            x[Li[p:q]] -= ljk * Lx[p:q]
            nxt[k] = p + 1
        d = x[j]
        if not d > 0.0:
            return None
        ljj = np.sqrt(d)
        a, b = Lp[j], Lp[j + 1]
        Lx[a] = ljj
        rows = Li[a + 1:b]
        Lx[a + 1:b] = x[rows] / ljj
        x[rows] = 0.0
        x[j] = 0.0
    return Lx


def sparse_cholesky(m, jitter_policy=JitterPolicy(), ordering="mindegree"):
    """
    Sparse Cholesky factorization with a fill-reducing ordering.

    Parameters
    ----------
    m : SparseSymMatrix
    jitter_policy : JitterPolicy
    ordering : {"mindegree", "rcm", "natural"}
        "mindegree" falls back to reverse Cuthill-McKee above
        ``MIN_DEGREE_MAX_N`` unknowns.

    Returns
    -------
    CholFactor
    """
    if not isinstance(m, SparseSymMatrix):
        raise InvalidArgument("sparse_cholesky needs a SparseSymMatrix")
    n = m.n
    if ordering == "mindegree" and n > MIN_DEGREE_MAX_N:
        ordering = "rcm"
    if ordering == "mindegree":
        perm = minimum_degree_order(m)
    elif ordering == "rcm":
        perm = rcm_order(m)
    elif ordering == "natural":
        perm = np.arange(n, dtype=np.int64)
    else:
        raise InvalidArgument(f"unknown ordering {ordering!r}")
    low_ptr, low_ind, low_val, up_ptr, up_ind = _permuted_parts(m, perm)
    _, row_pat = _symbolic(n, up_ptr, up_ind)
    counts = np.ones(n, np.int64)
    flat_cols = np.fromiter((k for pat in row_pat for k in pat), dtype=np.int64)
    flat_rows = np.repeat(np.arange(n), [len(p) for p in row_pat])
    np.add.at(counts, flat_cols, 1)
    Lp = np.concatenate([[0], np.cumsum(counts)])
    Li = np.empty(Lp[-1], np.int64)
    Li[Lp[:-1]] = np.arange(n)
    o = np.lexsort((flat_rows, flat_cols))
    fc = flat_cols[o]
    rank = np.arange(fc.size) - np.searchsorted(fc, fc)
    fill_pos = Lp[fc] + 1 + rank
    Li[fill_pos] = flat_rows[o]
    scale = float(np.max(np.abs(m.diagonal())))
    for delta in jitter_policy.levels():
        Lx = _numeric(n, row_pat, Lp, Li, low_ptr, low_ind, low_val, delta * scale)
        if Lx is not None:
            return CholFactor("sparse", _SparseLower(n, Lp, Li, Lx), perm, delta * scale)
    raise NotPositiveDefinite("sparse matrix not positive definite after maximum jitter")


# ----------------------------------------------------------------------------
# Solves
# ----------------------------------------------------------------------------
def _sparse_forward(L, x):
    Lp, Li, Lx = L.Lp, L.Li, L.Lx
    two = x.ndim == 2
    for j in range(L.n):
        a, b = Lp[j], Lp[j + 1]
        x[j] /= Lx[a]
        if b > a + 1:
            if two:
                x[Li[a + 1:b]] -= np.outer(Lx[a + 1:b], x[j])
            else:
                x[Li[a + 1:b]] -= Lx[a + 1:b] * x[j]
    return x


def _sparse_backward(L, x):
    Lp, Li, Lx = L.Lp, L.Li, L.Lx
    for j in range(L.n - 1, -1, -1):
        a, b = Lp[j], Lp[j + 1]
        if b > a + 1:
            x[j] -= Lx[a + 1:b] @ x[Li[a + 1:b]]
        x[j] /= Lx[a]
    return x


def solve(f, rhs):
    """Solve (M + jitter) x = rhs with a factor from :func:`cholesky` or :func:`sparse_cholesky`."""
    b = np.array(rhs, dtype=float)
    if b.shape[0] != f.n:
        raise InvalidArgument(f"rhs has {b.shape[0]} rows, factor has order {f.n}")
    if f.kind == "dense":
        return scipy.linalg.cho_solve((f.lower, True), b, check_finite=False)
    x = b[f.perm]
    x = _sparse_forward(f.lower, x)
    x = _sparse_backward(f.lower, x)
    out = np.empty_like(x)
    out[f.perm] = x
    return out


def reconstruct(f):
    """Dense L L^T mapped back to the original ordering (for checks)."""
    L = f.lower if f.kind == "dense" else f.lower.to_dense()
    A = L @ L.T
    if f.perm is None:
        return A
    out = np.empty_like(A)
    out[np.ix_(f.perm, f.perm)] = A
    return out
