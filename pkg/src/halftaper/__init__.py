"""
Conditional Gaussian simulation with tapered covariances: full (F),
tapered (T) and half-tapered (HT) post-conditioning, MSE diagnostics and
sparsity forecasts.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, HalfTaperError, InvalidArgument, NotPositiveDefinite,
                     NumericalFailure, UnsupportedOrder)
from .covmodel import CovarianceSpec, Taper, TaperedCovariance, parse_covariance, parse_taper
from .field import BoxDomain, GridSpec, PointSet, SamplingDesign
from .simulate import ConditioningMode
