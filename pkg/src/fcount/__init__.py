"""Poisson and Polya-Aeppli counting processes of order k.

Homogeneous, non-homogeneous, fractional and fractional non-homogeneous variants,
with exact marginals, path simulators, analytic moments, long-range-dependence
diagnostics and solvers for the fractional master equations.
"""

from importlib.metadata import PackageNotFoundError, version

from . import analytics, distributions, governing, processes, rates, sampling, specfun
from .analytics import LrdReport, MomentReport, correlation_curve, lrd_constant, lrd_fit, moments
from .distributions import PmfVector, pmf_fppk, pmf_poisson_order_k, pmf_polya_aeppli_order_k
from .errors import (
    AmbiguityError,
    DomainError,
    FcountError,
    QuadratureError,
    RangeError,
    RefinementError,
    SeriesError,
    ShapeError,
    UnreachableMassError,
)
from .governing import GeneratorSpec, residual_homogeneous, residual_nonhomogeneous, solve_fractional_master
from .processes import FAMILIES, Ensemble, ProcessSpec, ensemble, simulate
from .rates import Constant, Makeham, Table, Weibull, parse_rate
from .sampling import RngStream

try:
    __version__ = version("fcount")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0+unknown"

__all__ = [
    "__version__",
    "analytics",
    "distributions",
    "governing",
    "processes",
    "rates",
    "sampling",
    "specfun",
    "FAMILIES",
    "ProcessSpec",
    "Ensemble",
    "RngStream",
    "simulate",
    "ensemble",
    "PmfVector",
    "pmf_fppk",
    "pmf_poisson_order_k",
    "pmf_polya_aeppli_order_k",
    "MomentReport",
    "LrdReport",
    "moments",
    "lrd_constant",
    "correlation_curve",
    "lrd_fit",
    "GeneratorSpec",
    "solve_fractional_master",
    "residual_homogeneous",
    "residual_nonhomogeneous",
    "Constant",
    "Weibull",
    "Makeham",
    "Table",
    "parse_rate",
    "FcountError",
    "DomainError",
    "RangeError",
    "SeriesError",
    "ShapeError",
    "QuadratureError",
    "UnreachableMassError",
    "AmbiguityError",
    "RefinementError",
]
