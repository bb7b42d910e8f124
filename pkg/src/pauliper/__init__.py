"""Pauli noise tomography and probabilistic error reduction."""
from .circuit import Circuit, Gate, parse_dressed, distinct_clifford_layers
from .noise import SparseNoiseModel, ptm_diagonal, apply_pauli_channel
from .pauli import (
    CliffordLayerSpec,
    PauliString,
    conjugate_by_layer,
    dense_matrix,
    enumerate_model_terms,
    symplectic_product,
)
from .per import PERMitigator, partial_inverse, plan_measurements, vzne_fit
from .qpd import optimal_representation, noise_scaled_rep, sample_qpd
from .simulator import NoiseSpec, SimulatorExecutor, FileExecutor, execute, noiseless_expectation
from .tomography import NoiseDataFrame, SparsePauliTomography

__version__ = "0.1.0"

__all__ = [
    "Circuit",
    "CliffordLayerSpec",
    "FileExecutor",
    "Gate",
    "NoiseDataFrame",
    "NoiseSpec",
    "PERMitigator",
    "PauliString",
    "SimulatorExecutor",
    "SparseNoiseModel",
    "SparsePauliTomography",
    "apply_pauli_channel",
    "conjugate_by_layer",
    "dense_matrix",
    "distinct_clifford_layers",
    "enumerate_model_terms",
    "execute",
    "noise_scaled_rep",
    "noiseless_expectation",
    "optimal_representation",
    "parse_dressed",
    "partial_inverse",
    "plan_measurements",
    "ptm_diagonal",
    "sample_qpd",
    "symplectic_product",
    "vzne_fit",
]
