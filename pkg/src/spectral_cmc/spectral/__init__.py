"""Spectral curves, initial torus data and the generalized Whitham flow."""

from .data import (CheckpointError, InfeasibleError, SpectralCurveG0, SpectralCurveG1, SpectralData,
                   SpectralDomainError, from_dict, load, save, to_dict, validate_dict)
from .flow import (FlowTermination, SolverConfig, Trajectory, closing_residuals, flow, lawson_direction,
                   refinement_certificate, whitham_step)
from .models import (delaunay_coefficients, delaunay_data, delaunay_periods_by_quadrature, homogeneous_data,
                     model_for, scan_spin_points, solve_tau_spec)

__all__ = [
    "CheckpointError", "InfeasibleError", "SpectralCurveG0", "SpectralCurveG1", "SpectralData",
    "SpectralDomainError", "from_dict", "load", "save", "to_dict", "validate_dict",
    "FlowTermination", "SolverConfig", "Trajectory", "closing_residuals", "flow", "lawson_direction",
    "refinement_certificate", "whitham_step",
    "delaunay_coefficients", "delaunay_data", "delaunay_periods_by_quadrature", "homogeneous_data",
    "model_for", "scan_spin_points", "solve_tau_spec",
]
