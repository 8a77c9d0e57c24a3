"""Fidelity estimation and learning for matchgate (free-fermion) circuits."""

from .clifford import CliffordMonomial, PauliString, jw_generator, monomial_to_pauli
from .estimator import (
    EstimationPlan,
    EstimationResult,
    clifford_sandwich_estimate,
    estimate_fidelity,
    plan_runtime,
)
from .euler import EulerAngles, assemble_superop_via_euler, euler_angles, rotation_from_angles
from .matchgate import MatchgateCircuit, QuadraticHamiltonian, Rotation, circuit_to_rotation, fsim
from .simulator import NoisyChannel, ShotSimulator, parse_noise
from .superop import (
    SparseSuperOp,
    brute_force_superop,
    channel_fidelity,
    entanglement_fidelity,
    matchgate_superop,
)
from .tomography import TomographyConfig, run_tomography

__version__ = "0.1.0"

__all__ = [
    "CliffordMonomial",
    "PauliString",
    "jw_generator",
    "monomial_to_pauli",
    "EstimationPlan",
    "EstimationResult",
    "clifford_sandwich_estimate",
    "estimate_fidelity",
    "plan_runtime",
    "EulerAngles",
    "assemble_superop_via_euler",
    "euler_angles",
    "rotation_from_angles",
    "MatchgateCircuit",
    "QuadraticHamiltonian",
    "Rotation",
    "circuit_to_rotation",
    "fsim",
    "NoisyChannel",
    "ShotSimulator",
    "parse_noise",
    "SparseSuperOp",
    "brute_force_superop",
    "channel_fidelity",
    "entanglement_fidelity",
    "matchgate_superop",
    "TomographyConfig",
    "run_tomography",
]
