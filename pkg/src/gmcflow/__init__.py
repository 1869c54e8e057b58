"""Minimizing-movement engine for generalized mean-curvature flow.

Each time step dissolves the geometric problem

    minimize  P_phi(E) + integral over E of (f(sd_F / tau) + g)

into a convex level-function relaxation, solves it with a certified
primal-dual method, and recovers the new set from the zero sublevel.
Analytic ball dynamics, comparison principles, and continuity moduli
serve as oracles for the verification suites.
"""

from .profiles import MonotoneProfile, ForcingSpec, DensityConstants
from .anisotropy import Anisotropy, WulffSpec
from .grid import GridSpec
from .step import StepConfig, StepReport, atw_step, tv_minimize
from .flow import FlowConfig, FlowTrace, run_flow

__version__ = "0.1.0"

__all__ = [
    "MonotoneProfile",
    "ForcingSpec",
    "DensityConstants",
    "Anisotropy",
    "WulffSpec",
    "GridSpec",
    "StepConfig",
    "StepReport",
    "atw_step",
    "tv_minimize",
    "FlowConfig",
    "FlowTrace",
    "run_flow",
]
