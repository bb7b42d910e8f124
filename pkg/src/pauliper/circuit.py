"""
Circuit representation and the dressed-layer parser.

A dressed layer is a block of single-qubit gates followed by a layer of
self-adjoint two-qubit Cliffords with disjoint supports. Noise models are
attached to the Clifford part; single-qubit blocks are treated as ideal.
"""
from dataclasses import dataclass, field
import json
import math

import numpy as np

from .exceptions import ParseError, ResourceError, UnsupportedGateError
from .pauli import BRUTE_FORCE_CAP, CliffordLayerSpec, TWO_QUBIT_CLIFFORDS

ROTATIONS = ("RX", "RY", "RZ")
FIXED_SINGLE = ("I", "H", "S", "SDG", "X", "Y", "Z")
SINGLE_QUBIT_KINDS = ROTATIONS + FIXED_SINGLE
TWO_QUBIT_KINDS = TWO_QUBIT_CLIFFORDS

_SQ2 = 1 / math.sqrt(2)
_FIXED_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "H": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "S": np.diag([1, 1j]),
    "SDG": np.diag([1, -1j]),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1, -1]).astype(complex),
    "CX": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "SWAP": np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
    ),
}


@dataclass(frozen=True, slots=True)
class Gate:
    kind: str
    qubits: tuple
    angle: float = None

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if kind in ROTATIONS:
            if self.angle is None or not math.isfinite(self.angle):
                raise ValueError(f"{kind} needs a finite angle")
            object.__setattr__(self, "angle", float(self.angle))
        elif kind in FIXED_SINGLE or kind in TWO_QUBIT_KINDS:
            if self.angle is not None:
                raise ValueError(f"{kind} takes no angle")
        else:
            raise UnsupportedGateError(f"unsupported gate {self.kind!r}")
        arity = 2 if kind in TWO_QUBIT_KINDS else 1
        if len(self.qubits) != arity:
            raise ValueError(f"{kind} acts on {arity} qubit(s), got {self.qubits}")
        if arity == 2 and self.qubits[0] == self.qubits[1]:
            raise ValueError(f"{kind} needs distinct qubits")

    @property
    def is_two_qubit(self):
        return self.kind in TWO_QUBIT_KINDS

    def matrix(self):
        if self.kind == "RX":
            c, s = math.cos(self.angle / 2), math.sin(self.angle / 2)
            return np.array([[c, -1j * s], [-1j * s, c]])
        if self.kind == "RY":
            c, s = math.cos(self.angle / 2), math.sin(self.angle / 2)
            return np.array([[c, -s], [s, c]], dtype=complex)
        if self.kind == "RZ":
            phase = np.exp(-0.5j * self.angle)
            return np.diag([phase, phase.conjugate()])
        return _FIXED_MATRICES[self.kind]

    def to_dict(self):
        out = {"kind": self.kind, "qubits": list(self.qubits)}
        if self.angle is not None:
            out["angle"] = self.angle
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(data["kind"], tuple(data["qubits"]), data.get("angle"))


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple = ()
    measured: tuple = None

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        gates = tuple(g if isinstance(g, Gate) else Gate(*g) for g in self.gates)
        for g in gates:
            for q in g.qubits:
                if not 0 <= q < self.n_qubits:
                    raise ValueError(
                        f"{g.kind} on qubit {q} outside register of {self.n_qubits}"
                    )
        object.__setattr__(self, "gates", gates)
        if self.measured is not None:
            measured = tuple(bool(m) for m in self.measured)
            if len(measured) != self.n_qubits:
                raise ValueError("measured flags must cover every qubit")
            object.__setattr__(self, "measured", measured)

    def to_dict(self):
        out = {"n_qubits": self.n_qubits, "gates": [g.to_dict() for g in self.gates]}
        if self.measured is not None:
            out["measured"] = list(self.measured)
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(
            int(data["n_qubits"]),
            tuple(Gate.from_dict(g) for g in data.get("gates", ())),
            data.get("measured"),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def __add__(self, other):
        if other.n_qubits != self.n_qubits:
            raise ValueError("cannot concatenate circuits of different width")
        return Circuit(self.n_qubits, self.gates + other.gates, self.measured)


def load_circuits(path):
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("circuits", [data])
    return [Circuit.from_dict(d) for d in data]


def dump_circuits(circuits, path):
    with open(path, "w") as fh:
        json.dump([c.to_dict() for c in circuits], fh, indent=1, sort_keys=True)


# -- dense oracles -----------------------------------------------------------


def apply_matrix(tensor, matrix, qubits, n_qubits):
    """Apply a ``2^k x 2^k`` matrix to the leading ``n_qubits`` axes of ``tensor``.

    ``tensor`` has shape ``(2,) * n_qubits + rest``; the first listed qubit is
    the most significant factor of ``matrix``.
    """
    k = len(qubits)
    m = matrix.reshape((2,) * (2 * k))
    out = np.tensordot(m, tensor, axes=(list(range(k, 2 * k)), list(qubits)))
    # tensordot puts the new axes first; move them back into place
    order = list(range(k, n_qubits))
    perm = []
    it = iter(order)
    for axis in range(n_qubits):
        if axis in qubits:
            perm.append(qubits.index(axis))
        else:
            perm.append(next(it))
    perm += list(range(n_qubits, out.ndim))
    return np.transpose(out, perm)


def gate_matrix_on_register(gate, n_qubits):
    dim = 2**n_qubits
    eye = np.eye(dim, dtype=complex).reshape((2,) * n_qubits + (dim,))
    return apply_matrix(eye, gate.matrix(), list(gate.qubits), n_qubits).reshape(
        dim, dim
    )


def circuit_unitary(circuit, cap=BRUTE_FORCE_CAP):
    """Dense unitary of a gate sequence (qubit 0 is the leftmost factor)."""
    n = circuit.n_qubits
    if n > cap:
        raise ResourceError(f"{n} qubits exceeds dense cap of {cap}")
    dim = 2**n
    u = np.eye(dim, dtype=complex).reshape((2,) * n + (dim,))
    for g in circuit.gates:
        u = apply_matrix(u, g.matrix(), list(g.qubits), n)
    return u.reshape(dim, dim)


# -- dressed layers ----------------------------------------------------------


@dataclass(frozen=True)
class DressedLayer:
    single_qubit_block: tuple
    clifford_layer: CliffordLayerSpec

    @property
    def layer_id(self):
        return self.clifford_layer.layer_id

    @property
    def has_clifford(self):
        return not self.clifford_layer.is_empty

    def clifford_gates(self):
        return tuple(Gate(kind, qubits) for kind, qubits in self.clifford_layer.gates)


@dataclass(frozen=True)
class DressedCircuit:
    n_qubits: int
    layers: tuple = field(default_factory=tuple)

    def to_circuit(self, measured=None):
        gates = []
        for layer in self.layers:
            gates.extend(layer.single_qubit_block)
            gates.extend(layer.clifford_gates())
        return Circuit(self.n_qubits, tuple(gates), measured)

    def clifford_layers(self):
        return [layer.clifford_layer for layer in self.layers if layer.has_clifford]


def parse_dressed(circuit):
    """Split a circuit into dressed layers by a greedy left-to-right scan.

    Single-qubit gates accumulate into the current block. A two-qubit gate
    opens a Clifford layer, which keeps absorbing two-qubit gates until one
    overlaps a qubit already in the layer or a single-qubit gate lands on a
    touched qubit. Single-qubit gates on untouched qubits commute with the open
    layer and are deferred to the next block. Gates left over at the end form a
    final layer whose Clifford part is empty.
    """
    n = circuit.n_qubits
    layers = []
    block = []
    pending = []
    open_gates = []
    touched = set()
    pending_qubits = set()

    def close():
        nonlocal block, pending, open_gates, touched, pending_qubits
        spec = CliffordLayerSpec(n, tuple((g.kind, g.qubits) for g in open_gates))
        layers.append(DressedLayer(tuple(block), spec))
        block, pending, open_gates = pending, [], []
        touched, pending_qubits = set(), set()

    for gate in circuit.gates:
        if gate.kind not in SINGLE_QUBIT_KINDS and gate.kind not in TWO_QUBIT_KINDS:
            raise ParseError(f"cannot parse gate {gate.kind!r}")
        if not gate.is_two_qubit:
            (q,) = gate.qubits
            if not open_gates:
                block.append(gate)
            elif q in touched:
                pending.append(gate)
                close()
            else:
                pending.append(gate)
                pending_qubits.add(q)
            continue
        qs = set(gate.qubits)
        if open_gates and (qs & touched or qs & pending_qubits):
            close()
        open_gates.append(gate)
        touched |= qs
    if open_gates:
        close()
    if block:
        layers.append(DressedLayer(tuple(block), CliffordLayerSpec(n, ())))
    return DressedCircuit(n, tuple(layers))


def distinct_clifford_layers(dressed_circuits):
    """Non-empty Clifford layers across circuits, deduplicated by ``layer_id``
    in order of first appearance."""
    seen = {}
    for dressed in dressed_circuits:
        for spec in dressed.clifford_layers():
            seen.setdefault(spec.layer_id, spec)
    return list(seen.values())
