"""Periodic homogenization of an elastic matrix with incompressible viscous inclusions."""
from .cell import CellCorrectorSet, solve_cell_problems
from .eps_problem import NeumannData, solve_eps, solve_homogenized
from .fem import MaterialParams
from .geometry import DomainShape, InclusionShape, build_domain_mesh, build_unit_cell_mesh
from .homogenize import HomogenizedTensor, tensor_from_energy, tensor_from_formula
from .study import StudyConfig, fit_rate, run_study, verify_suite

__all__ = [
    "CellCorrectorSet", "DomainShape", "HomogenizedTensor", "InclusionShape",
    "MaterialParams", "NeumannData", "StudyConfig", "build_domain_mesh",
    "build_unit_cell_mesh", "fit_rate", "run_study", "solve_cell_problems", "solve_eps",
    "solve_homogenized", "tensor_from_energy", "tensor_from_formula", "verify_suite",
]
