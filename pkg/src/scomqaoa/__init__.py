"""Symmetry-conserving layered circuits optimized by quantum natural gradient.

Builds spin-chain Hamiltonians from Pauli-string term groups, compiles a
layered ansatz that preserves their symmetries, and optimizes its angles
against exact-diagonalization targets on a dense state-vector simulator.
"""

from scomqaoa.circuit import Ansatz, apply_circuit, build_ansatz, layer_profile
from scomqaoa.eigensolver import TargetState, correlation_length, eigenstates
from scomqaoa.model import HamiltonianSpec, build_ising, build_tci, build_xxz
from scomqaoa.operators import PauliString, SymmetryCharge
from scomqaoa.qng import CostKind, OptimizationTrace, OptimizerConfig, optimize
from scomqaoa.statevector import State, product_state

__version__ = "0.1.0"

__all__ = [
    "Ansatz",
    "CostKind",
    "HamiltonianSpec",
    "OptimizationTrace",
    "OptimizerConfig",
    "PauliString",
    "State",
    "SymmetryCharge",
    "TargetState",
    "apply_circuit",
    "build_ansatz",
    "build_ising",
    "build_tci",
    "build_xxz",
    "correlation_length",
    "eigenstates",
    "layer_profile",
    "optimize",
    "product_state",
]
