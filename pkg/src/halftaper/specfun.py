"""
Special-function kernels used by the covariance, sparsity and statistics
modules.

Everything here is self-contained (``math`` + ``numpy``). The Bessel K
routines are vectorized because the Matérn correlation is evaluated on
full pairwise distance matrices.
"""

import math

import numpy as np

from .errors import InvalidArgument, UnsupportedOrder

EULER_GAMMA = 0.57721566490153286061

__all__ = [
    "regularized_inc_beta",
    "std_normal_cdf",
    "std_normal_quantile",
    "bessel_j_threehalves",
    "bessel_k",
    "kolmogorov_sf",
]


# ----------------------------------------------------------------------------
# Incomplete beta
# ----------------------------------------------------------------------------
def _betacf(z, a, b, eps=1e-16, maxit=500):
    # modified Lentz evaluation of the continued fraction for I_z(a, b)
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * z / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, maxit + 1):
        m2 = 2 * m
        aa = m * (b - m) * z / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * z / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def regularized_inc_beta(z, a, b):
    """
    Regularized incomplete beta function I_z(a, b).

    Parameters
    ----------
    z : float
        upper integration limit, in [0, 1]
    a, b : float
        shape parameters, both > 0

    Returns
    -------
    float in [0, 1]
    """
    z = float(z)
    a = float(a)
    b = float(b)
    if not (0.0 <= z <= 1.0) or not (a > 0.0) or not (b > 0.0):
        raise InvalidArgument(f"regularized_inc_beta needs 0<=z<=1, a>0, b>0; got {z}, {a}, {b}")
    if z == 0.0:
        return 0.0
    if z == 1.0:
        return 1.0
    lbt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
           + a * math.log(z) + b * math.log1p(-z))
    bt = math.exp(lbt)
    if z < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(z, a, b) / a
    return 1.0 - bt * _betacf(1.0 - z, b, a) / b


# ----------------------------------------------------------------------------
# Normal distribution
# ----------------------------------------------------------------------------
def std_normal_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


# Acklam's rational approximation, refined by two Halley steps below
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)


def std_normal_quantile(p):
    """Inverse of the standard normal CDF, accurate to ~1e-15."""
    p = float(p)
    if not (0.0 < p < 1.0):
        raise InvalidArgument(f"std_normal_quantile needs 0 < p < 1, got {p}")
    if p > 0.5:
        # 1 - p is exact here; the lower tail keeps full relative accuracy
        return -std_normal_quantile(1.0 - p)
    plow = 0.02425
    if p < plow:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((( _C[0]*q + _C[1])*q + _C[2])*q + _C[3])*q + _C[4])*q + _C[5]) / \
            ((((_D[0]*q + _D[1])*q + _D[2])*q + _D[3])*q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        x = ((((( _A[0]*r + _A[1])*r + _A[2])*r + _A[3])*r + _A[4])*r + _A[5])*q / \
            (((((_B[0]*r + _B[1])*r + _B[2])*r + _B[3])*r + _B[4])*r + 1.0)
    # Halley refinement; erfc keeps the tails accurate
    for _ in range(2):
        e = std_normal_cdf(x) - p
        u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
        x = x - u / (1.0 + 0.5 * x * u)
    return x


# ----------------------------------------------------------------------------
# Bessel functions
# ----------------------------------------------------------------------------
def bessel_j_threehalves(x):
    """J_{3/2}(x) = sqrt(2/(pi x)) (sin x / x - cos x), for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise InvalidArgument("bessel_j_threehalves needs x > 0")
    small = x < 1e-2
    xs = np.where(small, 1.0, x)
    core = np.sin(xs) / xs - np.cos(xs)
    # series of sin x / x - cos x = x^2/3 - x^4/30 + x^6/840 - ...
    x2 = x * x
    core = np.where(small, x2 / 3.0 - x2 * x2 / 30.0 + x2 ** 3 / 840.0, core)
    out = np.sqrt(2.0 / (np.pi * x)) * core
    return out if out.ndim else float(out)


def _k0_k1_small(x):
    t = 0.25 * x * x
    lg = np.log(0.5 * x)
    i0 = np.zeros_like(x)
    i1s = np.zeros_like(x)
    s0 = np.zeros_like(x)
    s1 = np.zeros_like(x)
    term0 = np.ones_like(x)   # t^k / (k!)^2
    term1 = np.ones_like(x)   # t^k / (k! (k+1)!)
    hk = 0.0
    for k in range(30):
        if k > 0:
            term0 = term0 * t / (k * k)
            term1 = term1 * t / (k * (k + 1))
            hk += 1.0 / k
        hk1 = hk + 1.0 / (k + 1)
        i0 += term0
        i1s += term1
        s0 += term0 * hk
        s1 += term1 * (hk + hk1 - 2.0 * EULER_GAMMA)
    k0 = -(lg + EULER_GAMMA) * i0 + s0
    i1 = 0.5 * x * i1s
    k1 = 1.0 / x + lg * i1 - 0.25 * x * s1
    return k0, k1


def _k0_k1_large(x, chunk=1 << 15):
    # Steed's continued fraction (Temme's CF2) for order 0, x >= 2;
    # cache-sized chunks, iterated until the whole chunk has converged
    k0 = np.empty_like(x)
    k1 = np.empty_like(x)
    a1 = 0.25
    for s0 in range(0, x.size, chunk):
        xc = x[s0:s0 + chunk]
        b = 2.0 * (1.0 + xc)
        d = 1.0 / b
        h = d.copy()
        delh = d.copy()
        q1 = np.zeros_like(xc)
        q2 = np.ones_like(xc)
        q = np.full_like(xc, a1)
        c = a1
        a = -a1
        s = 1.0 + q * delh
        for i in range(1, 2000):
            a -= 2 * i
            c = -a * c / (i + 1.0)
            qnew = (q1 - b * q2) / a
            q1 = q2
            q2 = qnew
            q += c * qnew
            b += 2.0
            d = 1.0 / (b + a * d)
            delh *= b * d - 1.0
            h += delh
            dels = q * delh
            s += dels
            if np.all(np.abs(dels) < 1e-16 * np.abs(s)):
                break
        k0c = np.sqrt(np.pi / (2.0 * xc)) * np.exp(-xc) / s
        k0[s0:s0 + chunk] = k0c
        k1[s0:s0 + chunk] = k0c * (xc + 0.5 - a1 * h) / xc
    return k0, k1


def _k0_k1(x):
    k0 = np.empty_like(x)
    k1 = np.empty_like(x)
    lo = x <= 2.0
    if np.any(lo):
        k0[lo], k1[lo] = _k0_k1_small(x[lo])
    if np.any(~lo):
        k0[~lo], k1[~lo] = _k0_k1_large(x[~lo])
    return k0, k1


def bessel_k(order, x):
    """
    Modified Bessel function of the second kind K_order(x).

    Only integer and half-integer orders are supported. Negative orders are
    folded onto |order| (K is even in its order).

    Parameters
    ----------
    order : float
        0, 1/2, 1, 3/2, ...
    x : float or array of floats
        argument(s), strictly positive

    Returns
    -------
    float or ndarray
    """
    nu = abs(float(order))
    twice = 2.0 * nu
    if abs(twice - round(twice)) > 1e-12:
        raise UnsupportedOrder(f"bessel_k supports integer/half-integer orders only, got {order}")
    xa = np.asarray(x, dtype=float)
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa)
    if np.any(xa <= 0) or np.any(~np.isfinite(xa)):
        raise InvalidArgument("bessel_k needs finite x > 0")
    n2 = int(round(twice))
    with np.errstate(over="ignore", under="ignore"):
        if n2 % 2 == 1:
            k_lo = np.sqrt(np.pi / (2.0 * xa)) * np.exp(-xa)   # K_{1/2}
            k_hi = k_lo * (1.0 + 1.0 / xa)                      # K_{3/2}
            mu = 0.5
        else:
            k_lo, k_hi = _k0_k1(xa)
            mu = 0.0
        while mu + 1.0 <= nu + 1e-12:
            k_lo, k_hi = k_hi, k_lo + (2.0 * (mu + 1.0) / xa) * k_hi
            mu += 1.0
    out = k_lo
    return float(out[0]) if scalar else out.reshape(np.shape(x))


# ----------------------------------------------------------------------------
# Kolmogorov distribution
# ----------------------------------------------------------------------------
def kolmogorov_sf(x):
    """
    Survival function Q(x) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 x^2).

    Below x = 1 the alternating series converges slowly, so the equivalent
    theta-function form 1 - sqrt(2 pi)/x sum exp(-(2k-1)^2 pi^2 / (8 x^2))
    is used there.
    """
    x = float(x)
    if x < 0 or math.isnan(x):
        raise InvalidArgument(f"kolmogorov_sf needs x >= 0, got {x}")
    if x == 0.0:
        return 1.0
    if x < 1.0:
        acc = 0.0
        k = 1
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * math.pi ** 2 / (8.0 * x * x))
            acc += term
            if term < 1e-16 or k > 100:
                break
            k += 1
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / x * acc))
    acc = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * x * x)
        acc += term if k % 2 == 1 else -term
        if term < 1e-12:
            break
        k += 1
    return min(1.0, max(0.0, 2.0 * acc))
