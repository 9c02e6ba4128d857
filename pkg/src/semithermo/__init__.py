"""Numerical thermodynamic formalism for finitely generated rational semigroups.

Pressure of symbol-local potentials through the transfer operator, Ulam
approximations of conformal and equilibrium measures, and inverse-branch
families with distortion checks.
"""

__version__ = "0.1.0"

from .branches import Ball, BranchFamily, InverseBranch, build_family, continue_branch, distortion_ratio
from .measures import (
    build_grid,
    build_ulam,
    equilibrium_from,
    invariance_residual,
    jacobian_residual,
    leading_triple,
    total_variation,
)
from .potential import Potential, gap_check, sup_inf_estimate
from .rational import RationalMap, critical_points, critical_values, preimages, spherical_derivative
from .semigroup import GeneratorSet, JuliaCloud, birkhoff_sum, check_conditions, julia_backward_sample, word_apply
from .sphere import INFINITY, chordal_distance
from .transfer import apply_operator, iterate_indicator_exact, iterate_indicator_mc, pressure_global, pressure_pointwise

__all__ = [
    "INFINITY",
    "Ball",
    "BranchFamily",
    "GeneratorSet",
    "InverseBranch",
    "JuliaCloud",
    "Potential",
    "RationalMap",
    "apply_operator",
    "birkhoff_sum",
    "build_family",
    "build_grid",
    "build_ulam",
    "check_conditions",
    "chordal_distance",
    "continue_branch",
    "critical_points",
    "critical_values",
    "distortion_ratio",
    "equilibrium_from",
    "gap_check",
    "invariance_residual",
    "iterate_indicator_exact",
    "iterate_indicator_mc",
    "jacobian_residual",
    "julia_backward_sample",
    "leading_triple",
    "preimages",
    "pressure_global",
    "pressure_pointwise",
    "spherical_derivative",
    "sup_inf_estimate",
    "total_variation",
    "word_apply",
]
