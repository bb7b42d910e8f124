"""
Noisy density-matrix simulator implementing the executor contract.

Circuits are parsed into dressed layers. Single-qubit blocks are ideal; after
each Clifford layer the simulator applies that layer's sparse Pauli channel
and optional per-qubit amplitude damping. At the end a per-qubit readout
confusion acts on the outcome distribution, which is then sampled.
"""
from dataclasses import dataclass, field
import hashlib
import json
import logging
import os

import numpy as np

from .circuit import Circuit, Gate, apply_matrix, gate_matrix_on_register, parse_dressed
from .exceptions import ExecutorError, ResourceError
from .noise import SparseNoiseModel, apply_pauli_channel
from .pauli import CliffordLayerSpec, all_paulis, dense_matrix

logger = logging.getLogger(__name__)

SIMULATOR_CAP = 10
# Above this many qubits layer channels are applied factor by factor instead
# of through a cached dense superoperator.
SUPEROPERATOR_CAP = 5


@dataclass
class NoiseSpec:
    """Ground-truth noise for the simulator.

    Attributes
    ----------
    models : dict
        ``layer_id -> SparseNoiseModel``. Layers without an entry are noiseless.
    damping : dict
        ``qubit -> p``; amplitude damping applied after every Clifford layer.
    readout : dict
        ``qubit -> (p01, p10)`` where ``p01`` is P(read 1 | prepared 0) and
        ``p10`` is P(read 0 | prepared 1).
    """

    models: dict = field(default_factory=dict)
    damping: dict = field(default_factory=dict)
    readout: dict = field(default_factory=dict)

    def __post_init__(self):
        for q, p in self.damping.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"damping probability {p} on qubit {q} outside [0, 1]")
        for q, pair in self.readout.items():
            if len(pair) != 2 or not all(0.0 <= v <= 1.0 for v in pair):
                raise ValueError(f"readout flips {pair} on qubit {q} outside [0, 1]")

    @classmethod
    def noiseless(cls):
        return cls()

    def add_model(self, layer, model):
        model = SparseNoiseModel(model.n_qubits, model.terms, layer.layer_id, layer.description)
        self.models[layer.layer_id] = model
        return model

    def to_dict(self):
        return {
            "layers": [m.to_dict() for _, m in sorted(self.models.items())],
            "damping": {str(q): p for q, p in sorted(self.damping.items())},
            "readout": {str(q): list(v) for q, v in sorted(self.readout.items())},
        }

    @classmethod
    def from_dict(cls, data):
        spec = cls(
            damping={int(q): float(p) for q, p in data.get("damping", {}).items()},
            readout={int(q): tuple(v) for q, v in data.get("readout", {}).items()},
        )
        for entry in data.get("layers", []):
            model = SparseNoiseModel.from_dict(entry)
            layer = CliffordLayerSpec.from_description(entry["layer"], model.n_qubits)
            spec.add_model(layer, model)
        return spec

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)


def _damping_kraus(p):
    return (
        np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex),
        np.array([[0, np.sqrt(p)], [0, 0]], dtype=complex),
    )


def _left_right(rho, mat, qubits, n):
    """``M rho M^dagger`` for ``mat`` acting on ``qubits``."""
    dim = rho.shape[0]
    shape = (2,) * n + (dim,)
    half = apply_matrix(rho.reshape(shape), mat, qubits, n).reshape(dim, dim)
    return apply_matrix(half.conj().T.reshape(shape), mat, qubits, n).reshape(dim, dim).conj().T


def apply_damping(rho, damping, n):
    for q, p in sorted(damping.items()):
        if p <= 0 or q >= n:
            continue
        rho = sum(_left_right(rho, k, [q], n) for k in _damping_kraus(p))
    return rho


def _pauli_basis(n):
    """Row-major vectorization helpers: ``coeffs = T @ vec(rho)``, ``vec(rho) = B @ coeffs``."""
    paulis = all_paulis(n)
    mats = [dense_matrix(p) for p in paulis]
    dim = 2**n
    basis = np.stack([m.reshape(-1) for m in mats], axis=1)
    to_coeffs = np.stack([m.T.reshape(-1) for m in mats], axis=0) / dim
    return paulis, basis, to_coeffs


_I2 = np.eye(2, dtype=complex)


def _kron(a, b):
    # np.kron has noticeable overhead for the tiny matrices used here
    ra, ca = a.shape
    rb, cb = b.shape
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(ra * rb, ca * cb)


class DensityMatrixSimulator:
    """Exact density-matrix backend for a :class:`NoiseSpec`.

    Parameters
    ----------
    noise : NoiseSpec, optional
    cap : int
        Largest register the simulator accepts.
    """

    def __init__(self, noise=None, cap=SIMULATOR_CAP):
        self.noise = noise if noise is not None else NoiseSpec()
        self.cap = cap
        self._superops = {}
        self._bases = {}

    # -- state evolution ------------------------------------------------------

    def _check(self, circuit):
        if circuit.n_qubits > self.cap:
            raise ResourceError(
                f"circuit on {circuit.n_qubits} qubits exceeds simulator cap of {self.cap}"
            )

    def _layer_superop(self, layer, n):
        key = (layer.layer_id, n)
        if key in self._superops:
            return self._superops[key]
        dim = 2**n
        cliff = np.eye(dim, dtype=complex)
        for kind, qubits in layer.gates:
            cliff = gate_matrix_on_register(Gate(kind, qubits), n) @ cliff
        superop = np.kron(cliff, cliff.conj())
        model = self.noise.models.get(layer.layer_id)
        if model is not None and model.total_rate > 0:
            if n not in self._bases:
                self._bases[n] = _pauli_basis(n)
            paulis, basis, to_coeffs = self._bases[n]
            fid = np.array([model.fidelity(p) for p in paulis])
            superop = basis @ (fid[:, None] * to_coeffs) @ superop
        if any(p > 0 for q, p in self.noise.damping.items() if q < n):
            damp = np.eye(dim * dim, dtype=complex)
            for q, p in sorted(self.noise.damping.items()):
                if p <= 0 or q >= n:
                    continue
                local = sum(
                    np.kron(m, m.conj())
                    for m in (
                        _embed(k, q, n) for k in _damping_kraus(p)
                    )
                )
                damp = local @ damp
            superop = damp @ superop
        self._superops[key] = superop
        return superop

    def _apply_block(self, rho, block, n):
        if not block:
            return rho
        per_qubit = {}
        for gate in block:
            (q,) = gate.qubits
            m = gate.matrix()
            per_qubit[q] = m @ per_qubit[q] if q in per_qubit else m
        if n <= 6:
            u = per_qubit.get(0, _I2)
            for q in range(1, n):
                u = _kron(u, per_qubit.get(q, _I2))
            return u @ rho @ u.conj().T
        for q, m in per_qubit.items():
            rho = _left_right(rho, m, [q], n)
        return rho

    def _apply_layer(self, rho, layer, n):
        if n <= SUPEROPERATOR_CAP:
            superop = self._layer_superop(layer, n)
            return (superop @ rho.reshape(-1)).reshape(rho.shape)
        for kind, qubits in layer.gates:
            rho = _left_right(rho, Gate(kind, qubits).matrix(), list(qubits), n)
        model = self.noise.models.get(layer.layer_id)
        if model is not None:
            rho = apply_pauli_channel(rho, model)
        return apply_damping(rho, self.noise.damping, n)

    def final_state(self, circuit, noisy=True):
        """Density matrix after the circuit (before readout)."""
        self._check(circuit)
        n = circuit.n_qubits
        dim = 2**n
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        for layer in parse_dressed(circuit).layers:
            rho = self._apply_block(rho, layer.single_qubit_block, n)
            if not layer.has_clifford:
                continue
            if noisy:
                rho = self._apply_layer(rho, layer.clifford_layer, n)
            else:
                for gate in layer.clifford_gates():
                    rho = _left_right(rho, gate.matrix(), list(gate.qubits), n)
        return rho

    def probabilities(self, circuit):
        """Outcome distribution including readout confusion, indexed with
        qubit 0 as the most significant bit."""
        rho = self.final_state(circuit)
        n = circuit.n_qubits
        probs = np.clip(np.real(np.diag(rho)), 0.0, None).reshape((2,) * n)
        for q, (p01, p10) in sorted(self.noise.readout.items()):
            if q >= n:
                continue
            confusion = np.array([[1 - p01, p10], [p01, 1 - p10]])
            probs = np.moveaxis(np.tensordot(confusion, probs, axes=([1], [q])), 0, q)
        probs = probs.reshape(-1)
        return probs / probs.sum()

    def run(self, circuits, shots, seed=0):
        """Counts for each circuit; reproducible for a given ``seed``.

        The generator for circuit ``i`` is derived from ``(seed, i)`` only.
        ``shots=None`` returns exact outcome probabilities instead of counts.
        """
        results = []
        for i, circuit in enumerate(circuits):
            probs = self.probabilities(circuit)
            n = circuit.n_qubits
            if shots is None:
                results.append(
                    {_bitstring(k, n): float(v) for k, v in enumerate(probs) if v > 1e-15}
                )
                continue
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
            draws = rng.multinomial(int(shots), probs)
            results.append({_bitstring(k, n): int(c) for k, c in enumerate(draws) if c})
        return results


def _embed(mat, q, n):
    out = np.ones((1, 1), dtype=complex)
    for k in range(n):
        out = np.kron(out, mat if k == q else np.eye(2, dtype=complex))
    return out


def _bitstring(index, n):
    return format(index, f"0{n}b")


def execute(circuits, shots, noise=None, seed=0):
    """Run ``circuits`` on the built-in simulator and return counts tables."""
    if shots is not None and shots < 1:
        raise ValueError("shots must be positive")
    return DensityMatrixSimulator(noise).run(circuits, shots, seed)


def noiseless_expectation(circuit, observable):
    """Exact ``Tr(P rho)`` for the ideal circuit."""
    if observable.n_qubits != circuit.n_qubits:
        raise ValueError("observable and circuit sizes differ")
    sim = DensityMatrixSimulator(NoiseSpec())
    rho = sim.final_state(circuit, noisy=False)
    return float(np.real(np.trace(dense_matrix(observable, cap=sim.cap) @ rho)))


class SimulatorExecutor:
    """Executor callable backed by :class:`DensityMatrixSimulator`.

    Each call draws a fresh batch seed from ``seed`` and a call counter, so a
    sequence of batches is reproducible.
    """

    def __init__(self, noise=None, shots=1024, seed=0):
        self.simulator = DensityMatrixSimulator(noise)
        self.shots = shots
        self.seed = seed
        self._calls = 0

    def __call__(self, circuits):
        batch_seed = int(
            np.random.SeedSequence(self.seed, spawn_key=(self._calls,)).generate_state(1)[0]
        )
        self._calls += 1
        return self.simulator.run(circuits, self.shots, batch_seed)


class FileExecutor:
    """Routes batches through files so any external backend can run them.

    A batch is written to ``<dir>/batch-<hash>.json`` as
    ``{"shots": int, "circuits": [...]}``. Results are read from
    ``<dir>/batch-<hash>.counts.json``, a JSON array of ``{bitstring: count}``
    maps in circuit order. Missing results raise :class:`ExecutorError`.
    """

    def __init__(self, directory, shots=1024):
        self.directory = directory
        self.shots = shots
        os.makedirs(directory, exist_ok=True)

    def __call__(self, circuits):
        payload = {"shots": self.shots, "circuits": [c.to_dict() for c in circuits]}
        text = json.dumps(payload, sort_keys=True)
        digest = hashlib.sha1(text.encode()).hexdigest()[:16]
        batch = os.path.join(self.directory, f"batch-{digest}.json")
        results = os.path.join(self.directory, f"batch-{digest}.counts.json")
        if not os.path.exists(batch):
            with open(batch, "w") as fh:
                fh.write(text)
        if not os.path.exists(results):
            raise ExecutorError(f"waiting for results: {results} (batch {batch})")
        with open(results) as fh:
            counts = json.load(fh)
        if len(counts) != len(circuits):
            raise ExecutorError(
                f"{results} holds {len(counts)} results for {len(circuits)} circuits"
            )
        return [{str(k): v for k, v in c.items()} for c in counts]


def load_batch(path):
    """Read a batch written by :class:`FileExecutor`: ``(circuits, shots)``."""
    with open(path) as fh:
        data = json.load(fh)
    return [Circuit.from_dict(c) for c in data["circuits"]], data["shots"]


__all__ = [
    "NoiseSpec",
    "DensityMatrixSimulator",
    "SimulatorExecutor",
    "FileExecutor",
    "execute",
    "noiseless_expectation",
    "load_batch",
]
