"""
Trotterized transverse-field Ising chain and its planted demo noise.

    H = J sum_i Z_i Z_{i+1} - h sum_i X_i

One Trotter step applies ``RX(-2 h dt)`` on every qubit and then
``exp(-i J dt Z_i Z_{i+1})`` on each bond as ``CX . RZ(2 J dt) . CX`` with the
rotation on the target. Even bonds are done in parallel first, odd bonds after.
The magnetization dynamics do not depend on the sign of ``J``.
"""
import numpy as np

from .circuit import Circuit, Gate, distinct_clifford_layers, parse_dressed
from .noise import SparseNoiseModel
from .pauli import PauliString, enumerate_model_terms, path_edges
from .simulator import NoiseSpec, noiseless_expectation

J_COUPLING = 0.15
H_FIELD = 1.0
TIME_STEP = 0.2
# total overhead of the demo circuit at the deepest step and xi = 0
TARGET_GAMMA = 7.25
DEMO_STEPS = 15


def trotter_step_gates(n_qubits, coupling=J_COUPLING, field=H_FIELD, dt=TIME_STEP):
    gates = [Gate("RX", (q,), -2 * field * dt) for q in range(n_qubits)]
    for parity in (0, 1):
        bonds = [(q, q + 1) for q in range(parity, n_qubits - 1, 2)]
        if not bonds:
            continue
        gates += [Gate("CX", b) for b in bonds]
        gates += [Gate("RZ", (b[1],), 2 * coupling * dt) for b in bonds]
        gates += [Gate("CX", b) for b in bonds]
    return gates


def trotter_circuit(n_qubits=4, steps=1, coupling=J_COUPLING, field=H_FIELD, dt=TIME_STEP):
    """``steps`` Trotter steps starting from ``|0...0>``."""
    gates = []
    for _ in range(steps):
        gates += trotter_step_gates(n_qubits, coupling, field, dt)
    return Circuit(n_qubits, tuple(gates))


def magnetization_observables(n_qubits):
    return [PauliString.from_sparse({q: "Z"}, n_qubits) for q in range(n_qubits)]


def exact_magnetization(circuit):
    """Average ``<Z_i>`` of the noiseless circuit."""
    n = circuit.n_qubits
    return float(
        np.mean([noiseless_expectation(circuit, o) for o in magnetization_observables(n)])
    )


def demo_noise_spec(
    n_qubits=4,
    steps=DEMO_STEPS,
    gamma=TARGET_GAMMA,
    readout=0.01,
    seed=7,
):
    """Planted layer noise whose ``steps``-step circuit has overhead ``gamma``.

    Rates are drawn uniformly over the nearest-neighbour model terms of each
    distinct layer and rescaled so that the rates summed over every layer
    application of the deepest circuit equal ``ln(gamma) / 2``. Every qubit
    gets a symmetric readout flip probability ``readout``.
    """
    circuit = trotter_circuit(n_qubits, steps)
    dressed = parse_dressed(circuit)
    layers = distinct_clifford_layers([dressed])
    uses = {layer.layer_id: 0 for layer in layers}
    for layer in dressed.clifford_layers():
        uses[layer.layer_id] += 1
    terms = enumerate_model_terms(path_edges(n_qubits), n_qubits)
    rng = np.random.default_rng(seed)
    raw = {layer.layer_id: rng.uniform(0.0, 1.0, len(terms)) for layer in layers}
    total = sum(uses[lid] * r.sum() for lid, r in raw.items())
    scale = 0.5 * np.log(gamma) / total
    spec = NoiseSpec(readout={q: (readout, readout) for q in range(n_qubits)})
    for layer in layers:
        model = SparseNoiseModel(n_qubits, tuple(zip(terms, scale * raw[layer.layer_id])))
        spec.add_model(layer, model)
    return spec
