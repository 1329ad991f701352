"""Two-phase Stefan solver on a cut-cell grid with level-set interface
capture, continuous adjoint, and L-BFGS boundary control."""

from .grid import Grid
from .geometry import classify_and_capacities, interpolate_biquadratic
from .thermal import (Anisotropy, BoundaryCondition, BoundarySide,
                      MaterialParams, gibbs_thomson, step_crank_nicolson)
from .coupling import ForwardTrajectory, forward_solve, stefan_velocity
from .optimize import ControlVector, cost, evaluate_actuator, lbfgs_run
from .adjoint import backward_sweep
from .control import gradient_check, make_targets, optimize_case

__all__ = [
    "Grid", "classify_and_capacities", "interpolate_biquadratic",
    "Anisotropy", "BoundaryCondition", "BoundarySide", "MaterialParams",
    "gibbs_thomson", "step_crank_nicolson", "ForwardTrajectory",
    "forward_solve", "stefan_velocity", "ControlVector", "cost",
    "evaluate_actuator", "lbfgs_run", "backward_sweep", "gradient_check",
    "make_targets", "optimize_case",
]

__version__ = "0.1.0"
