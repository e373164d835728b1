"""
Simple kriging (known zero mean) and the prediction / simulation MSE
diagnostics for a true covariance C0 and a tapered plug-in C1 = C0 * CT.

Notation used below:

* ``sk_var_c0``  kriging variance under C0
* ``sk_var_c1``  kriging variance computed entirely under C1
* ``mse_plugin`` true (C0) error variance of the predictor with C1 weights
* ``mses_f``     simulation MSE, simulate and condition with C0 (= 2 sk_var_c0)
* ``mses_t``     simulate and condition with C1 (= mse_plugin + sk_var_c1)
* ``mses_ht``    simulate with C0, condition with C1 (= 2 mse_plugin)
"""

import csv
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from . import linalg
from .covmodel import TaperedCovariance
from .errors import InvalidArgument, NumericalFailure
from .field import PointSet

__all__ = [
    "KrigingSystem",
    "MseReport",
    "build_system",
    "weights",
    "kriging_variance",
    "plugin_mse",
    "mse_report",
    "write_mse_csv",
]

NEG_TOL = 1e-9
ROW_BLOCK = 2048


@dataclass
class KrigingSystem:
    points: PointSet
    cov: object
    factor: linalg.CholFactor
    sill: float


def _coords(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1 and x.size == dim
    return np.atleast_2d(x).reshape(-1, dim), single


def build_system(cov, points, sparse_if_tapered=True, jitter_policy=linalg.JitterPolicy()):
    """Assemble and factorize the kriging matrix once."""
    if not isinstance(points, PointSet):
        points = PointSet(points)
    if sparse_if_tapered and isinstance(cov, TaperedCovariance):
        factor = linalg.sparse_cholesky(linalg.assemble_sparse_tapered(cov, points), jitter_policy)
    else:
        factor = linalg.cholesky(linalg.assemble_dense(cov, points), jitter_policy)
    return KrigingSystem(points, cov, factor, float(cov.sill))


def covariance_vectors(sys, x):
    X, _ = _coords(x, sys.points.dim)
    return sys.cov.covariance(cdist(sys.points.coords, X))


def weights(sys, x):
    """
    Simple kriging weights K^-1 k(x).

    Parameters
    ----------
    sys : KrigingSystem
    x : (d,) or (m, d) array
        target location(s)

    Returns
    -------
    (n,) array for a single target, (n, m) otherwise
    """
    X, single = _coords(x, sys.points.dim)
    lam = linalg.solve(sys.factor, covariance_vectors(sys, X))
    return lam[:, 0] if single else lam


def _clamp(v, sill, what):
    v = np.asarray(v, dtype=float)
    if np.any(v < -NEG_TOL * sill):
        raise NumericalFailure(f"{what} is negative beyond round-off: {v.min():.3e}")
    return np.maximum(v, 0.0)


def kriging_variance(sys, x):
    X, single = _coords(x, sys.points.dim)
    k = covariance_vectors(sys, X)
    lam = linalg.solve(sys.factor, k)
    v = _clamp(sys.sill - np.einsum("ij,ij->j", k, lam), sys.sill, "kriging variance")
    return float(v[0]) if single else v


def cov_matvec(cov, points, v, block=ROW_BLOCK):
    """K v for the covariance matrix of `points`, generated by row blocks."""
    X = points.coords
    out = np.empty_like(np.asarray(v, float))
    for s in range(0, X.shape[0], block):
        rows = cov.covariance(cdist(X[s:s + block], X))
        out[s:s + block] = rows @ v
    return out


def _same_points(a, b):
    return a is b or (a.coords.shape == b.coords.shape and np.array_equal(a.coords, b.coords))


def plugin_mse(sys0, sys1, x):
    """True (under sys0.cov) error variance of the predictor using sys1 weights."""
    if not _same_points(sys0.points, sys1.points):
        raise InvalidArgument("plugin_mse needs both systems on the same points")
    X, single = _coords(x, sys0.points.dim)
    lam1 = linalg.solve(sys1.factor, covariance_vectors(sys1, X))
    k0 = covariance_vectors(sys0, X)
    K0lam1 = cov_matvec(sys0.cov, sys0.points, lam1)
    v = sys0.sill - 2.0 * np.einsum("ij,ij->j", lam1, k0) + np.einsum("ij,ij->j", lam1, K0lam1)
    v = _clamp(v, sys0.sill, "plug-in MSE")
    return float(v[0]) if single else v


@dataclass
class MseReport:
    target: np.ndarray
    sk_var_c0: float
    sk_var_c1: float
    mse_plugin: float
    delta: float
    mses_f: float
    mses_t: float
    mses_ht: float
    ratio_t: float
    ratio_ht: float
    plugin_exceeds_sk1: bool = False

    def rows(self):
        """One dict per target (fields may be arrays for multi-target reports)."""
        d = {k: np.atleast_1d(v) for k, v in asdict(self).items() if k != "target"}
        tgt = np.atleast_2d(self.target)
        out = []
        for i in range(tgt.shape[0]):
            row = {f"x{j}": float(tgt[i, j]) for j in range(tgt.shape[1])}
            row.update({k: (bool(v[i]) if v.dtype == bool else float(v[i])) for k, v in d.items()})
            out.append(row)
        return out


def _ratio(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(b > 0, a / np.where(b > 0, b, 1.0), 1.0)
    return r


def mse_report(cov0, taper, points, x, sparse=True, systems=None):
    """
    All prediction and simulation MSE quantities at target(s) `x`.

    Parameters
    ----------
    cov0 : CovarianceSpec
        true covariance
    taper : Taper
    points : PointSet
        data locations
    x : (d,) or (m, d) array
    sparse : bool
        factorize the tapered system with the sparse path
    systems : (KrigingSystem, KrigingSystem), optional
        prebuilt (C0, C1) systems to reuse

    Returns
    -------
    MseReport (scalar fields for a single target, arrays otherwise)
    """
    if not isinstance(points, PointSet):
        points = PointSet(points)
    if systems is None:
        tc = TaperedCovariance(cov0, taper)
        sys0 = build_system(cov0, points, sparse_if_tapered=False)
        sys1 = build_system(tc, points, sparse_if_tapered=sparse)
    else:
        sys0, sys1 = systems
    X, single = _coords(x, points.dim)
    sk0 = np.atleast_1d(kriging_variance(sys0, X))
    sk1 = np.atleast_1d(kriging_variance(sys1, X))
    mse = np.atleast_1d(plugin_mse(sys0, sys1, X))
    delta = mse - sk0
    mses_f = 2.0 * sk0
    mses_t = mse + sk1
    mses_ht = 2.0 * mse
    flag = mse > sk1
    vals = dict(sk_var_c0=sk0, sk_var_c1=sk1, mse_plugin=mse, delta=delta, mses_f=mses_f,
                mses_t=mses_t, mses_ht=mses_ht, ratio_t=_ratio(mses_t, mses_f),
                ratio_ht=_ratio(mses_ht, mses_f), plugin_exceeds_sk1=flag)
    if single:
        vals = {k: (bool(v[0]) if v.dtype == bool else float(v[0])) for k, v in vals.items()}
        return MseReport(target=X[0], **vals)
    return MseReport(target=X, **vals)


def write_mse_csv(path, reports, header_lines=()):
    rows = []
    for rep in reports:
        rows.extend(rep.rows())
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
