"""Delay-dependent Lyapunov-Krasovskii conditions as LMIs on the disagreement subspace."""

from .assembly import VariableSpace, assemble, constraint_blocks, full_order_assemble, lift
from .feasibility import (
    FeasibilityReport,
    LmiMargin,
    LmiSweep,
    check_feasible,
    equal_delay_margin_lmi,
    lmi_margin,
    max_tau2_lmi,
    sweep_lmi,
    verify_certificate,
)
from .reduction import ReducedSystem, ReductionBasis, admitted, reduce, reduction_basis

__all__ = [
    "VariableSpace",
    "assemble",
    "constraint_blocks",
    "full_order_assemble",
    "lift",
    "FeasibilityReport",
    "LmiMargin",
    "LmiSweep",
    "check_feasible",
    "equal_delay_margin_lmi",
    "lmi_margin",
    "max_tau2_lmi",
    "sweep_lmi",
    "verify_certificate",
    "ReducedSystem",
    "ReductionBasis",
    "admitted",
    "reduce",
    "reduction_basis",
]
