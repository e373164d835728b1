"""
Two-sample Kolmogorov-Smirnov test and Tukey boxplot summaries.
"""

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .specfun import kolmogorov_sf

__all__ = ["KsResult", "DistSummary", "ks_two_sample", "summarize", "write_ks_csv", "write_summary_csv"]

SMALL_SAMPLE = 10


@dataclass(frozen=True)
class KsResult:
    d_stat: float
    p_value: float
    n1: int
    n2: int


@dataclass(frozen=True)
class DistSummary:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple


def _sample(x, name):
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise InvalidArgument(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise InvalidArgument(f"{name} has non-finite values")
    return x


def ks_two_sample(a, b):
    """
    Two-sample KS statistic with the asymptotic Kolmogorov p-value.

    D = sup_x |F_a(x) - F_b(x)|, evaluated at every value of the merged
    sample; p = Q(D sqrt(n1 n2 / (n1 + n2))).
    """
    a = np.sort(_sample(a, "first sample"))
    b = np.sort(_sample(b, "second sample"))
    n1, n2 = a.size, b.size
    if min(n1, n2) < SMALL_SAMPLE:
        warnings.warn("asymptotic KS p-value with fewer than 10 observations", RuntimeWarning, stacklevel=2)
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / n1
    fb = np.searchsorted(b, pts, side="right") / n2
    d = float(np.max(np.abs(fa - fb)))
    p = kolmogorov_sf(d * math.sqrt(n1 * n2 / (n1 + n2)))
    return KsResult(d, p, n1, n2)


def summarize(sample, whisker=1.5):
    """Tukey boxplot statistics; quantiles by linear interpolation."""
    x = np.sort(_sample(sample, "sample"))
    q1, med, q3 = np.percentile(x, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo_fence = q1 - whisker * iqr
    hi_fence = q3 + whisker * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    out = x[(x < lo_fence) | (x > hi_fence)]
    return DistSummary(float(x[0]), float(q1), float(med), float(q3), float(x[-1]),
                       float(inside.min()), float(inside.max()), tuple(float(v) for v in out))


def write_ks_csv(path, rows, header_lines=()):
    """rows: iterable of (label, KsResult) or (extra dict, label, KsResult)."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["comparison", "D", "p", "n1", "n2"])
        for label, r in rows:
            w.writerow([label, repr(r.d_stat), repr(r.p_value), r.n1, r.n2])


def write_summary_csv(path, rows, header_lines=()):
    """rows: iterable of (label, DistSummary)."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["label", "min", "q1", "median", "q3", "max", "whisker_lo", "whisker_hi", "n_outliers"])
        for label, s in rows:
            w.writerow([label, repr(s.min), repr(s.q1), repr(s.median), repr(s.q3), repr(s.max),
                        repr(s.whisker_lo), repr(s.whisker_hi), len(s.outliers)])
