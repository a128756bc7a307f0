"""Forward-starting implied volatility and the exact representation of implied
variance as a time-average of reweighted local variance."""

__version__ = "0.1.0"

from .bs import BsQuote, CallSpec, bs_gamma, bs_price, bs_theta_identity_residual, bs_vega, implied_vol
from .density import (DensitySurface, SpaceTimeGrid, call_price_from_density,
                      partial_expectation, solve_forward_density)
from .errors import (BracketError, ConfigError, ConvergenceError, DegenerateWeightError,
                     GridTooNarrowError, ImpliedVolDomainError, NumericalError)
from .forward_vol import ForwardVolCurve, build_curve, solve_sigma_bar
from .mlp import MlpReport, MostLikelyPath, extract_path, mlp_implied_variance
from .representation import (ForwardVarianceCurve, GtWeight, RepresentationReport,
                             forward_variance, gt_expected_variance, gt_weight,
                             verify_representation)
from .surfaces import CevVol, ConstantVol, LocalVolSurface, TabulatedVol, TimeDependentVol
from .switching import SwitchSpec, forward_implied_vol_mc, price_switched_call

__all__ = [
    "BsQuote", "CallSpec", "bs_gamma", "bs_price", "bs_theta_identity_residual", "bs_vega",
    "implied_vol", "DensitySurface", "SpaceTimeGrid", "call_price_from_density",
    "partial_expectation", "solve_forward_density", "BracketError", "ConfigError",
    "ConvergenceError", "DegenerateWeightError", "GridTooNarrowError", "ImpliedVolDomainError",
    "NumericalError", "ForwardVolCurve", "build_curve", "solve_sigma_bar", "MlpReport",
    "MostLikelyPath", "extract_path", "mlp_implied_variance", "ForwardVarianceCurve",
    "GtWeight", "RepresentationReport", "forward_variance", "gt_expected_variance", "gt_weight",
    "verify_representation", "CevVol", "ConstantVol", "LocalVolSurface", "TabulatedVol",
    "TimeDependentVol", "SwitchSpec", "forward_implied_vol_mc", "price_switched_call",
]
