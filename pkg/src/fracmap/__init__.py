"""Numerical laboratory for fractional p-energy minimization on manifolds.

Discretizes the Gagliardo p-energy of maps into a target manifold on a
uniform lattice with an exterior Dirichlet collar, minimizes it by
projected gradient descent, and probes the resulting fields with the
standard regularity diagnostics: Caccioppoli ratios, normalized-energy
decay, blow-up normalization, singular-set detection, Campanato-based
Hölder exponent fits, reverse-Hölder probes, and hole-filling checks.
"""

__version__ = "0.1.0"

from .diagnostics import (CaccioppoliReport, DecayReport, GehringProbe,
                          HolderReport, HolefillFit, SingularSetReport,
                          blowup_normalize, caccioppoli_sweep,
                          cellwise_energy, decay_probe, gehring_probe,
                          holder_fit, holefill_convergence_check,
                          singular_detect)
from .energy import (EnergyReport, FieldMap, KernelTable, analytic_tail,
                     build_kernel, campanato_quotient, energy_report,
                     fractional_p_laplacian, gagliardo_energy,
                     localized_energy, localized_energy_info, mean_value,
                     normalized_energy, normalized_energy_info,
                     operator_field, tail_integral, weak_residual)
from .grid import (BallSpec, Grid, annulus_indices, ball_indices, build_grid)
from .manifold import (ComparisonResult, DegenerateInputError, ManifoldSpec,
                       comparison_map, taylor_remainder)
from .minimize import (MinimizeOptions, MinimizerResult, energy_gradient,
                       minimize, solve_linear_p2, tangential_residual)
from .params import FractionalParams

__all__ = [
    "BallSpec", "CaccioppoliReport", "ComparisonResult", "DecayReport",
    "DegenerateInputError", "EnergyReport", "FieldMap", "FractionalParams",
    "GehringProbe", "Grid", "HolderReport", "HolefillFit", "KernelTable",
    "ManifoldSpec", "MinimizeOptions", "MinimizerResult",
    "SingularSetReport", "analytic_tail", "annulus_indices", "ball_indices",
    "blowup_normalize", "build_grid", "build_kernel", "caccioppoli_sweep",
    "campanato_quotient", "cellwise_energy", "comparison_map", "decay_probe",
    "energy_gradient", "energy_report", "fractional_p_laplacian",
    "gagliardo_energy", "gehring_probe", "holder_fit",
    "holefill_convergence_check", "localized_energy",
    "localized_energy_info", "mean_value", "minimize", "normalized_energy",
    "normalized_energy_info", "operator_field", "singular_detect",
    "solve_linear_p2", "tail_integral", "tangential_residual",
    "taylor_remainder", "weak_residual",
]
