"""Data-driven synthesis of integrator-plus-FIR (iFIR) and two-degree-of-
freedom controllers from input-output records, with closed-loop stability
enforced through frequency-domain dissipativity constraints solved as
inequality-constrained least squares."""

__version__ = "0.1.0"

from . import clsq, dissipativity, gripper, lti, vrft  # noqa: F401
from .clsq import ClsProblem, ClsSolution, InfeasibleError, solve
from .dissipativity import (CertificateReport, DissipativitySpec,
                            EmptyBoxError, certify_nyquist,
                            generate_constraints, supply_rate_check)
from .lti import SignalRecord, StateSpace, TransferFunction
from .vrft import TwoDofController, assemble_regression

__all__ = [
    "__version__",
    "ClsProblem",
    "ClsSolution",
    "InfeasibleError",
    "solve",
    "CertificateReport",
    "DissipativitySpec",
    "EmptyBoxError",
    "certify_nyquist",
    "generate_constraints",
    "supply_rate_check",
    "SignalRecord",
    "StateSpace",
    "TransferFunction",
    "TwoDofController",
    "assemble_regression",
]
