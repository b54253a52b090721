"""Moments of characteristic polynomials of Gaussian ensembles: exact finite-N
identities, orthogonal-polynomial asymptotics, Monte Carlo checks and the
chaos-measure coupling experiment."""

from .mpx import Precision
from .weights import WeightSpec, make_spec, weight_eval
from .skew import moment_ratio, phi_moment, z_const

__all__ = ["Precision", "WeightSpec", "make_spec", "weight_eval", "moment_ratio", "phi_moment", "z_const"]
__version__ = "0.1.0"
