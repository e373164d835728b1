"""
A-priori sparsity of a tapered covariance matrix.

For n points uniform in the unit-radius ball of R^d, the distance between
two of them has CDF

    F_d(r) = r^d I_{1 - r^2/4}((d+1)/2, 1/2) + I_{r^2/4}((d+1)/2, (d+1)/2),

0 <= r <= 2, and the expected fraction of zero entries of an n x n matrix
tapered at range theta is S = 1 - F_d(theta) - (1 - F_d(theta)) / n.
Box domains are mapped onto the ball of equal measure.
"""

import math
from dataclasses import dataclass

import numpy as np

from .covmodel import Taper
from .errors import InvalidArgument
from .field import BoxDomain
from .specfun import regularized_inc_beta

__all__ = [
    "SparsityForecast",
    "distance_cdf",
    "sparsity_index",
    "equivalent_theta",
    "forecast",
]


@dataclass(frozen=True)
class SparsityForecast:
    theta_norm: float
    n: int
    dim: int
    cdf: float
    index: float


def _check_dim(dim):
    if dim not in (1, 2, 3):
        raise InvalidArgument(f"dim must be 1, 2 or 3, got {dim}")


def distance_cdf(dim, r):
    """
    CDF of the distance between two uniform points of the unit ball.

    Parameters
    ----------
    dim : {1, 2, 3}
    r : float or array
        distance; values are clamped to [0, 2]

    Returns
    -------
    float or ndarray
    """
    _check_dim(dim)
    a = 0.5 * (dim + 1)

    def one(rv):
        if not rv > 0.0:
            return 0.0
        if rv >= 2.0:
            return 1.0
        q = 0.25 * rv * rv
        return rv ** dim * regularized_inc_beta(1.0 - q, a, 0.5) + regularized_inc_beta(q, a, a)

    if np.ndim(r) == 0:
        return one(float(r))
    r = np.asarray(r, dtype=float)
    return np.array([one(v) for v in r.ravel()]).reshape(r.shape)


def sparsity_index(theta_norm, n, dim):
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    F = distance_cdf(dim, theta_norm)
    return 1.0 - F - (1.0 - F) / n


def equivalent_theta(taper_range, domain):
    """
    Taper range rescaled to the unit ball of equal measure as `domain`.

    2D: d sqrt(pi) / sqrt(a b); 3D: d (4 pi / 3)^(1/3) / (a b c)^(1/3);
    1D: 2 d / l (the unit "ball" is an interval of length 2).
    """
    if not taper_range > 0:
        raise InvalidArgument("taper range must be > 0")
    if not isinstance(domain, BoxDomain):
        domain = BoxDomain(domain)
    unit_ball = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}[domain.dim]
    return float(taper_range) * (unit_ball / domain.measure) ** (1.0 / domain.dim)


def forecast(taper, domain, n):
    if not isinstance(domain, BoxDomain):
        domain = BoxDomain(domain)
    theta = taper.theta if isinstance(taper, Taper) else float(taper)
    t = equivalent_theta(theta, domain)
    F = distance_cdf(domain.dim, t)
    return SparsityForecast(t, int(n), domain.dim, F, 1.0 - F - (1.0 - F) / n)
