"""Noise and error mitigation for variational quantum PDE solvers.

Density-matrix simulation of a hardware-efficient circuit that approximates
the solution of a PDE, the three standard single-qubit noise channels, and
zero-noise extrapolation, probabilistic error cancellation and readout
correction on top.
"""

from __future__ import annotations

from .ansatz import AnsatzSpec, InputPoint, evaluate_u, mean_fidelity, output_state
from .errors import (ConfigurationError, FitError, InfeasibleError, QempdeError, SingularChannelError,
                     TrainingAborted, ValidationError)
from .mitigation import (ZneConfig, accuracy_recovery, pec_estimate, pec_inverse_coefficients, pec_overhead,
                         readout_correct, richardson_weights, zne_estimate)
from .noise import NoiseConfig, ReadoutModel, kraus_for
from .pde import PdeProblem, make_problem, physics_loss, total_loss
from .qstate import DensityMatrix, GateOp, PauliObservable, apply_gate, apply_kraus, expectation, zero_state
from .training import TrainConfig, TrainTrace, init_parameters, train

__version__ = "0.1.0"

__all__ = [
    "AnsatzSpec", "ConfigurationError", "DensityMatrix", "FitError", "GateOp", "InfeasibleError", "InputPoint",
    "NoiseConfig", "PauliObservable", "PdeProblem", "QempdeError", "ReadoutModel", "SingularChannelError",
    "TrainConfig", "TrainTrace", "TrainingAborted", "ValidationError", "ZneConfig", "accuracy_recovery",
    "apply_gate", "apply_kraus", "evaluate_u", "expectation", "init_parameters", "kraus_for", "make_problem",
    "mean_fidelity", "output_state", "pec_estimate", "pec_inverse_coefficients", "pec_overhead",
    "physics_loss", "readout_correct", "richardson_weights", "total_loss", "train", "zero_state",
    "zne_estimate",
]
