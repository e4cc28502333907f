"""Multi-curve pricing with curve-conversion factors between pricing kernels."""
from .bootstrap import BootstrapError, BootstrapResult, bootstrap
from .config import load_curve, load_economy
from .conversion import q_forward, q_spot, quanto_bond
from .instruments import ConventionError, FraSpec, PriceResult, SwapSpec
from .kernels import Economy
from .mc import ScenarioSet, simulate
from .term import Curve, QuoteSet, Schedule

__version__ = "0.1.0"

__all__ = ["BootstrapError", "BootstrapResult", "ConventionError", "Curve", "Economy", "FraSpec",
           "PriceResult", "QuoteSet", "ScenarioSet", "Schedule", "SwapSpec", "bootstrap", "load_curve",
           "load_economy", "q_forward", "q_spot", "quanto_bond", "simulate"]
