"""
Isotropic covariance and taper families.

Distances are normalized by the model range before evaluation: ``r / a``
for covariances and ``r / theta`` for tapers. The compactly supported
polynomial families (spherical, cubic, penta) can play both roles.

Radial spectral densities are given in R^3, matching the usual tables of
closed forms; :func:`spectral_density_r3` rescales them to the actual
range of the object (``a**3 * f(a * s)``).
"""

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from scipy import integrate

from . import specfun
from .errors import InvalidArgument

__all__ = [
    "COVARIANCE_FAMILIES",
    "TAPER_FAMILIES",
    "CovarianceSpec",
    "Taper",
    "TaperedCovariance",
    "SpectralProfile",
    "TailReport",
    "correlation",
    "taper_value",
    "tapered_value",
    "covariance_value",
    "spectral_density_r3",
    "spectral_profile",
    "effective_range",
    "tail_screen",
    "parse_covariance",
    "parse_taper",
]

COVARIANCE_FAMILIES = ("exponential", "gaussian", "spherical", "cubic", "penta", "matern", "cauchy")
TAPER_FAMILIES = ("spherical", "cubic", "penta", "bohman", "wendland0", "wendland1", "wendland2")

EFFECTIVE_RANGE_LEVEL = 0.05

# polynomial families on [0, 1): {power: coefficient}
_POLY = {
    "spherical": {0: 1.0, 1: -1.5, 3: 0.5},
    "cubic": {0: 1.0, 2: -7.0, 3: 35.0 / 4.0, 5: -7.0 / 2.0, 7: 3.0 / 4.0},
    "penta": {0: 1.0, 2: -22.0 / 3.0, 4: 33.0, 5: -77.0 / 2.0, 7: 33.0 / 2.0,
              9: -11.0 / 2.0, 11: 5.0 / 6.0},
    "wendland0": {0: 1.0, 1: -2.0, 2: 1.0},
    "wendland1": {0: 1.0, 2: -10.0, 3: 20.0, 4: -15.0, 5: 4.0},
    "wendland2": {0: 1.0, 2: -28.0 / 3.0, 4: 70.0, 5: -448.0 / 3.0, 6: 140.0,
                  7: -64.0, 8: 35.0 / 3.0},
}

_ALIASES = {
    "exp": "exponential",
    "gauss": "gaussian",
    "sph": "spherical",
    "bonham": "bohman",
    "wendland_0": "wendland0",
    "wendland_1": "wendland1",
    "wendland_2": "wendland2",
}


def _canonical(name):
    key = str(name).strip().lower()
    return _ALIASES.get(key, key)


def _is_half_integer(v):
    return abs(2.0 * v - round(2.0 * v)) < 1e-12


@dataclass(frozen=True)
class CovarianceSpec:
    """
    Isotropic covariance model ``sill * phi(r / range)``.

    ``nu`` is required for the Matérn family and must be an integer or
    half-integer; ``alpha`` is required for the Cauchy family.
    """

    family: str
    sill: float = 1.0
    range: float = 1.0
    nu: Optional[float] = None
    alpha: Optional[float] = None

    def __post_init__(self):
        fam = _canonical(self.family)
        object.__setattr__(self, "family", fam)
        if fam not in COVARIANCE_FAMILIES:
            raise InvalidArgument(f"unknown covariance family {self.family!r}")
        if not self.sill > 0:
            raise InvalidArgument("sill must be > 0")
        if not self.range > 0:
            raise InvalidArgument("range must be > 0")
        if fam == "matern":
            if self.nu is None or not self.nu > 0:
                raise InvalidArgument("matern needs nu > 0")
            if not _is_half_integer(self.nu):
                raise InvalidArgument("matern nu must be an integer or half-integer")
        if fam == "cauchy" and (self.alpha is None or not self.alpha > 0):
            raise InvalidArgument("cauchy needs alpha > 0")

    def covariance(self, r):
        return self.sill * correlation(self, r)

    def __str__(self):
        extra = ""
        if self.nu is not None:
            extra += f", nu={self.nu:g}"
        if self.alpha is not None:
            extra += f", alpha={self.alpha:g}"
        return f"{self.family}(range={self.range:g}, sill={self.sill:g}{extra})"


@dataclass(frozen=True)
class Taper:
    """Compactly supported correlation with support radius ``theta``."""

    family: str
    theta: float

    def __post_init__(self):
        fam = _canonical(self.family)
        object.__setattr__(self, "family", fam)
        if fam not in TAPER_FAMILIES:
            raise InvalidArgument(f"unknown taper family {self.family!r}")
        if not self.theta > 0:
            raise InvalidArgument("taper theta must be > 0")

    def value(self, r):
        return taper_value(self, r)

    def __str__(self):
        return f"{self.family}(theta={self.theta:g})"


@dataclass(frozen=True)
class TaperedCovariance:
    base: CovarianceSpec
    taper: Taper

    @property
    def sill(self):
        return self.base.sill

    def covariance(self, r):
        return tapered_value(self, r)

    def __str__(self):
        return f"{self.base} x {self.taper}"


Model = Union[CovarianceSpec, TaperedCovariance]


@dataclass(frozen=True)
class SpectralProfile:
    """Large-frequency decay class and mean-square smoothness of a family.

    ``decay_class`` is one of ``"polynomial"`` (f ~ s**-exponent),
    ``"exponential"`` (Cauchy) or ``"gaussian"`` (Gaussian).
    """

    decay_class: str
    exponent: Optional[float] = None
    smoothness: float = 0

    def __str__(self):
        if self.decay_class == "polynomial":
            return f"s^-{self.exponent:g}"
        if self.decay_class == "exponential":
            return "exponential rate"
        return "gaussian rate"


@dataclass(frozen=True)
class TailReport:
    satisfied: str          # "yes" | "no" | "unknown"
    gamma_note: str
    taper_decay: SpectralProfile
    cov_decay: SpectralProfile


# ----------------------------------------------------------------------------
# Evaluation
# ----------------------------------------------------------------------------
def _check_lags(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise InvalidArgument("distances must be >= 0")
    return r


def _poly_compact(family, t):
    coefs = _POLY[family]
    tt = np.minimum(t, 1.0)
    out = np.zeros_like(tt)
    for p in sorted(coefs, reverse=True):
        out = out + coefs[p] * tt ** p
    return np.where(t < 1.0, out, 0.0)


def _bohman(t):
    inside = (t > 0) & (t < 1)
    ts = np.where(inside, t, 0.5)
    w = 2.0 * np.pi * ts
    v = (1.0 - ts) * np.sin(w) / w + (1.0 - np.cos(w)) / (2.0 * np.pi ** 2 * ts)
    v = np.where(inside, v, 0.0)
    return np.where(t == 0, 1.0, v)


def _matern(nu, x):
    if x.size > 4096:
        # lattice geometries repeat distances; evaluate each once
        u, inv = np.unique(x, return_inverse=True)
        if u.size < x.size // 4:
            return _matern(nu, u)[inv].reshape(x.shape)
    out = np.ones_like(x)
    pos = x > 1e-10
    if np.any(pos):
        xp = x[pos]
        with np.errstate(under="ignore"):
            k = specfun.bessel_k(nu, xp)
            out[pos] = np.exp(nu * np.log(xp) - (nu - 1.0) * math.log(2.0) - math.lgamma(nu)) * k
    return out


def correlation(spec, r):
    """
    Correlation phi(r / range) of a covariance model.

    Parameters
    ----------
    spec : CovarianceSpec
    r : float or array of floats
        distance(s) >= 0

    Returns
    -------
    float or ndarray, same shape as `r`
    """
    r = _check_lags(r)
    x = r / spec.range
    fam = spec.family
    if fam == "exponential":
        out = np.exp(-x)
    elif fam == "gaussian":
        out = np.exp(-x * x)
    elif fam in ("spherical", "cubic", "penta"):
        out = _poly_compact(fam, x)
    elif fam == "matern":
        out = _matern(spec.nu, np.atleast_1d(x)).reshape(x.shape)
    else:  # cauchy
        out = (1.0 + x * x) ** (-spec.alpha)
    return out if out.ndim else float(out)


def taper_value(taper, r):
    """Taper correlation at distance(s) `r`; exactly zero for r >= theta."""
    r = _check_lags(r)
    t = r / taper.theta
    if taper.family == "bohman":
        out = _bohman(np.atleast_1d(t)).reshape(t.shape)
    else:
        out = _poly_compact(taper.family, t)
    return out if out.ndim else float(out)


def tapered_value(tc, r):
    r = _check_lags(r)
    out = tc.base.sill * np.asarray(correlation(tc.base, r)) * np.asarray(taper_value(tc.taper, r))
    return out if out.ndim else float(out)


def covariance_value(model, r):
    """Covariance of a plain or tapered model at distance(s) `r`."""
    return model.covariance(r)


def model_range(model):
    """Distance beyond which the model is identically zero (inf if none)."""
    if isinstance(model, TaperedCovariance):
        return model.taper.theta
    if model.family in ("spherical", "cubic", "penta"):
        return model.range
    return math.inf


# ----------------------------------------------------------------------------
# Spectral densities in R^3 (unit range)
# ----------------------------------------------------------------------------
@lru_cache(maxsize=None)
def _moments(family, kmax=40):
    # integral_0^1 phi(r) r^(2k+2) dr for k = 0..kmax
    out = []
    for k in range(kmax + 1):
        m = 2 * k + 2
        if family in _POLY:
            out.append(sum(c / (p + m + 1) for p, c in _POLY[family].items()))
        else:
            val, _ = integrate.quad(lambda t: float(_bohman(np.array([t]))[0]) * t ** m, 0.0, 1.0,
                                    epsabs=1e-15, epsrel=1e-13, limit=200)
            out.append(val)
    return tuple(out)


def _taper_density_series(family, s):
    # f(s) = 1/(2 pi^2) sum_k (-1)^k s^(2k) / (2k+1)! * int phi(r) r^(2k+2) dr
    mom = _moments(family)
    out = np.zeros_like(s)
    fact = 1.0
    s2 = s * s
    pw = np.ones_like(s)
    for k, m in enumerate(mom):
        if k > 0:
            fact *= (2 * k) * (2 * k + 1)
            pw = pw * s2
        out += (-1) ** k * pw * m / fact
    return out / (2.0 * np.pi ** 2)


def _taper_density_closed(family, s):
    pi = np.pi
    if family == "spherical":
        return 3.0 / (4.0 * pi * s ** 3) * specfun.bessel_j_threehalves(s / 2.0) ** 2
    if family == "cubic":
        return 210.0 * ((s ** 2 - 12.0) * np.sin(s / 2) + 6.0 * s * np.cos(s / 2)) ** 2 / (pi ** 2 * s ** 10)
    if family == "penta":
        return 27720.0 * (s * (s ** 2 - 60.0) * np.cos(s / 2)
                          - 12.0 * (s ** 2 - 10.0) * np.sin(s / 2)) ** 2 / (pi ** 2 * s ** 14)
    if family == "bohman":
        return 8.0 * np.sin(s / 2) ** 2 / (s ** 3 - 4.0 * pi ** 2 * s) ** 2
    if family == "wendland0":
        return (2.0 * s - 3.0 * np.sin(s) + s * np.cos(s)) / (pi ** 2 * s ** 5)
    if family == "wendland1":
        return -60.0 * (-4.0 * s ** 2 + (s ** 2 - 24.0) * np.cos(s) - 9.0 * s * np.sin(s) + 24.0) / (pi ** 2 * s ** 8)
    return 6720.0 * (8.0 * s * (s ** 2 - 24.0) + 9.0 * (35.0 - 2.0 * s ** 2) * np.sin(s)
                     + s * (s ** 2 - 123.0) * np.cos(s)) / (pi ** 2 * s ** 11)


def _bohman_density_direct(s):
    def one(sv):
        val, _ = integrate.quad(lambda t: float(_bohman(np.array([t]))[0]) * t * math.sin(sv * t),
                                0.0, 1.0, epsabs=1e-15, limit=200)
        return val / (2.0 * math.pi ** 2 * sv)
    return np.array([one(v) for v in s])


def _compact_density_unit(family, s):
    # series below s = 3 where the closed forms cancel catastrophically
    out = np.empty_like(s)
    small = s < 3.0
    if np.any(small):
        out[small] = _taper_density_series(family, s[small])
    big = ~small
    if np.any(big):
        out[big] = _taper_density_closed(family, s[big])
        if family == "bohman":
            near = big & (np.abs(s - 2.0 * np.pi) < 1e-3)
            if np.any(near):
                out[near] = _bohman_density_direct(s[near])
    return np.maximum(out, 0.0)


def _cov_density_unit(spec, s):
    fam = spec.family
    if fam in ("spherical", "cubic", "penta"):
        return _compact_density_unit(fam, s)
    if fam == "exponential":
        return 1.0 / (np.pi ** 2 * (1.0 + s * s) ** 2)
    if fam == "gaussian":
        return np.exp(-s * s / 4.0) / (8.0 * np.pi ** 1.5)
    if fam == "matern":
        nu = spec.nu
        return (s * s + 1.0) ** (-nu - 1.5) * math.gamma(nu + 1.5) / (np.pi ** 1.5 * math.gamma(nu))
    # cauchy
    a = spec.alpha
    order = 1.5 - a
    pref = 2.0 ** (-a - 0.5) / (np.pi ** 1.5 * math.gamma(a))
    out = np.empty_like(s)
    pos = s > 0
    if np.any(pos):
        sp_ = s[pos]
        with np.errstate(under="ignore"):
            out[pos] = pref * sp_ ** (a - 1.5) * specfun.bessel_k(order, sp_)
    if np.any(~pos):
        if a > 1.5:
            nu = a - 1.5
            out[~pos] = pref * math.gamma(nu) * 2.0 ** (nu - 1.0)
        else:
            out[~pos] = np.inf
    return out


def spectral_density_r3(obj, s):
    """
    Radial spectral density in R^3 of a covariance model or a taper.

    For a covariance the density includes the sill. Values at s = 0 for the
    compact families are obtained from the small-frequency series.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise InvalidArgument("frequency must be >= 0")
    flat = np.atleast_1d(s).astype(float)
    if isinstance(obj, Taper):
        a = obj.theta
        out = a ** 3 * _compact_density_unit(obj.family, a * flat)
    elif isinstance(obj, CovarianceSpec):
        a = obj.range
        out = obj.sill * a ** 3 * _cov_density_unit(obj, a * flat)
    else:
        raise InvalidArgument("spectral density available for CovarianceSpec or Taper only")
    out = out.reshape(s.shape)
    return out if out.ndim else float(out)


_TAPER_PROFILE = {
    "spherical": SpectralProfile("polynomial", 4, 0),
    "cubic": SpectralProfile("polynomial", 6, 2),
    "penta": SpectralProfile("polynomial", 8, 4),
    "bohman": SpectralProfile("polynomial", 6, 2),
    "wendland0": SpectralProfile("polynomial", 4, 0),
    "wendland1": SpectralProfile("polynomial", 6, 2),
    "wendland2": SpectralProfile("polynomial", 8, 4),
}


def spectral_profile(obj):
    """Decay class and smoothness as listed in the taper / covariance tables."""
    if isinstance(obj, Taper):
        return _TAPER_PROFILE[obj.family]
    fam = obj.family
    if fam in _TAPER_PROFILE:
        return _TAPER_PROFILE[fam]
    if fam == "exponential":
        return SpectralProfile("polynomial", 4, 0)
    if fam == "gaussian":
        return SpectralProfile("gaussian", None, math.inf)
    if fam == "cauchy":
        return SpectralProfile("exponential", None, math.inf)
    # matern: smoothness stored as printed, 2*ceil(nu - 1)
    return SpectralProfile("polynomial", 2.0 * obj.nu + 3.0, max(0, 2 * math.ceil(obj.nu - 1)))


# ----------------------------------------------------------------------------
# Derived quantities
# ----------------------------------------------------------------------------
def effective_range(spec, level=EFFECTIVE_RANGE_LEVEL):
    """Smallest distance where the correlation drops to `level` (0.05)."""
    f = lambda r: correlation(spec, r) - level
    lo, hi = 0.0, spec.range
    while f(hi) > 0:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    return hi


def tail_screen(cov, taper):
    """
    Qualitative check of the spectral tail condition for a covariance/taper
    pair, from decay classes only.
    """
    cp = spectral_profile(cov)
    tp = spectral_profile(taper)
    if cp.decay_class in ("exponential", "gaussian"):
        return TailReport("no", "covariance spectrum decays faster than any polynomial; "
                          "no compactly supported taper matches it", tp, cp)
    if cp.decay_class == "polynomial" and tp.decay_class == "polynomial":
        if tp.exponent >= cp.exponent - 1e-12:
            note = ("same decay rate; gamma finite and positive" if tp.exponent == cp.exponent
                    else "taper decays faster than the covariance")
            return TailReport("yes", note, tp, cp)
        return TailReport("no", f"taper decays slower ({tp}) than the covariance ({cp})", tp, cp)
    return TailReport("unknown", "decay classes not comparable", tp, cp)


# ----------------------------------------------------------------------------
# Model grammar, e.g. "matern(nu=1, range=0.5, sill=1)" or "wendland1(theta=0.3)"
# ----------------------------------------------------------------------------
_MODEL_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?\s*$")


def _parse(text):
    m = _MODEL_RE.match(str(text))
    if not m:
        raise InvalidArgument(f"cannot parse model {text!r}")
    name, body = m.group(1), m.group(2)
    kw = {}
    if body and body.strip():
        for part in body.split(","):
            if "=" not in part:
                raise InvalidArgument(f"expected key=value in {text!r}")
            k, v = part.split("=", 1)
            try:
                kw[k.strip().lower()] = float(v)
            except ValueError:
                raise InvalidArgument(f"non-numeric value in {text!r}") from None
    return _canonical(name), kw


def parse_covariance(text):
    name, kw = _parse(text)
    allowed = {"sill", "range", "nu", "alpha"}
    bad = set(kw) - allowed
    if bad:
        raise InvalidArgument(f"unknown covariance parameter(s) {sorted(bad)} in {text!r}")
    return CovarianceSpec(name, **kw)


def parse_taper(text):
    name, kw = _parse(text)
    bad = set(kw) - {"theta"}
    if bad:
        raise InvalidArgument(f"unknown taper parameter(s) {sorted(bad)} in {text!r}")
    return Taper(name, kw.get("theta", 1.0))
