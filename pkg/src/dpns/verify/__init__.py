"""Numerical audits of the coupled model's theory."""

from .convergence import ConvergenceTable, convergence_study, level_size
from .dualnorm import dual_norm
from .energy import (EnergyIdentity, EnergyReport, UnconvergedStateError, energy_audit,
                     energy_identity)
from .infsup import EigenNonConvergenceError, InfSupReport, infsup_estimate, infsup_from_blocks
from .interface import InterfaceResiduals, interface_residuals
from .manufactured import ExactSolution, case, polynomial_case, trig_case
from .uniqueness import (TrilinearEstimate, UniquenessReport, estimate_trilinear_constant,
                         korn_constant, uniqueness_probe)

__all__ = [
    "ConvergenceTable", "EigenNonConvergenceError", "EnergyIdentity", "EnergyReport",
    "ExactSolution", "InfSupReport", "InterfaceResiduals", "TrilinearEstimate",
    "UnconvergedStateError", "UniquenessReport", "case", "convergence_study", "dual_norm",
    "energy_audit", "energy_identity", "estimate_trilinear_constant", "infsup_estimate",
    "infsup_from_blocks", "interface_residuals", "korn_constant", "level_size",
    "polynomial_case", "trig_case", "uniqueness_probe",
]
