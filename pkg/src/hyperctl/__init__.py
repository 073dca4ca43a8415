"""Constructive boundary control of 1-D linear hyperbolic systems

    dw/dt = Sigma(x) dw/dx + gamma C(x) w,   w_-(t, 0) = B w_+(t, 0),

with the positive components w_+(t, 1) as controls.
"""
from .broad_solver import GeneralSystem, Trajectory, simulate, trace_at_boundary
from .errors import (DeltaTooLargeError, ExceptionalGammaError, HyperCtlError, InfeasibleError,
                     InvalidSpecError, NonConvergenceError, NotAdmissibleError)
from .kernel import KernelField, assemble_S, kernel_residual, solve_kernel
from .model import Coupling, SpeedProfile, SystemSpec, check_B, compute_tau, compute_times
from .synthesis.counterexample import counterexample_build, obstruction_value
from .synthesis.feedback import FeedbackLaw, feedback_zero_C
from .synthesis.fredholm import synthesize_m1, synthesize_T2delta, synthesize_Topt
from .synthesis.shooting import shooting_solve
from .synthesis.signal import ControlSignal
from .transform import forward, inverse, target_residual

__all__ = [
    "ControlSignal", "Coupling", "DeltaTooLargeError", "ExceptionalGammaError", "FeedbackLaw",
    "GeneralSystem", "HyperCtlError", "InfeasibleError", "InvalidSpecError", "KernelField",
    "NonConvergenceError", "NotAdmissibleError", "SpeedProfile", "SystemSpec", "Trajectory",
    "assemble_S", "check_B", "compute_tau", "compute_times", "counterexample_build", "feedback_zero_C",
    "forward", "inverse", "kernel_residual", "obstruction_value", "shooting_solve", "simulate",
    "solve_kernel", "synthesize_T2delta", "synthesize_Topt", "synthesize_m1", "target_residual",
    "trace_at_boundary",
]
