"""
Pauli operators in symplectic form and their conjugation by Clifford layers.

An n-qubit Pauli is stored as two integer bitmasks ``x`` and ``z`` where bit
``q`` refers to qubit ``q``. The single-qubit letters are

    (x, z) = (0, 0) -> I,  (1, 0) -> X,  (1, 1) -> Y,  (0, 1) -> Z.

Text labels are written with qubit 0 as the leftmost character, so ``"ZIII"``
is Z on qubit 0. Dense matrices use the same orientation: qubit 0 is the
leftmost Kronecker factor (the most significant bit of a basis index).

Global phases are not tracked. Pauli noise channels and Pauli twirls only
depend on the label because ``P rho P`` does not see the phase of ``P``.
Where a sign matters (single-depth benchmark readout) use
:func:`conjugation_sign`.
"""
from dataclasses import dataclass
from functools import lru_cache
import hashlib
import itertools

import numpy as np

from .exceptions import DimensionError, ResourceError, UnsupportedGateError

BRUTE_FORCE_CAP = 6

LETTERS = "IXYZ"
_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LETTER = {bits: letter for letter, bits in _LETTER_BITS.items()}

_PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True, slots=True)
class PauliString:
    """Phase-free n-qubit Pauli operator.

    Parameters
    ----------
    n_qubits : int
        Register size.
    x, z : int
        Bitmasks of the X and Z components; bit ``q`` is qubit ``q``.
    """

    n_qubits: int
    x: int = 0
    z: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        limit = 1 << self.n_qubits
        if not (0 <= self.x < limit and 0 <= self.z < limit):
            raise ValueError(f"bitmask does not fit in {self.n_qubits} qubits")

    @classmethod
    def from_label(cls, label):
        label = label.strip().upper()
        if not label or any(ch not in _LETTER_BITS for ch in label):
            raise ValueError(f"invalid Pauli label {label!r}")
        x = z = 0
        for q, ch in enumerate(label):
            bx, bz = _LETTER_BITS[ch]
            x |= bx << q
            z |= bz << q
        return cls(len(label), x, z)

    @classmethod
    def from_sparse(cls, letters, n_qubits):
        """Build from a mapping ``{qubit: letter}``."""
        x = z = 0
        for q, ch in letters.items():
            if not 0 <= q < n_qubits:
                raise ValueError(f"qubit {q} outside register of {n_qubits}")
            bx, bz = _LETTER_BITS[ch.upper()]
            x |= bx << q
            z |= bz << q
        return cls(n_qubits, x, z)

    @classmethod
    def identity(cls, n_qubits):
        return cls(n_qubits, 0, 0)

    @property
    def label(self):
        return "".join(self.letter(q) for q in range(self.n_qubits))

    def __str__(self):
        return self.label

    def __repr__(self):
        return f"PauliString({self.label!r})"

    def letter(self, qubit):
        return _BITS_LETTER[((self.x >> qubit) & 1, (self.z >> qubit) & 1)]

    @property
    def is_identity(self):
        return self.x == 0 and self.z == 0

    @property
    def weight(self):
        return bin(self.x | self.z).count("1")

    @property
    def support(self):
        mask = self.x | self.z
        return tuple(q for q in range(self.n_qubits) if (mask >> q) & 1)

    def letters(self):
        """Mapping ``{qubit: letter}`` over the support."""
        return {q: self.letter(q) for q in self.support}

    def compose(self, other):
        """Product label ``self * other`` with the phase dropped."""
        _check_same_size(self, other)
        return PauliString(self.n_qubits, self.x ^ other.x, self.z ^ other.z)

    def commutes(self, other):
        return symplectic_product(self, other) == 0

    def sort_key(self):
        """Order by weight, then qubit indices, then letters (X < Y < Z)."""
        return (
            self.weight,
            self.support,
            tuple(LETTERS.index(self.letter(q)) for q in self.support),
        )


def _check_same_size(a, b):
    if a.n_qubits != b.n_qubits:
        raise DimensionError(
            f"Pauli sizes differ: {a.n_qubits} vs {b.n_qubits} qubits"
        )


def symplectic_product(a, b):
    """Return 1 if ``a`` and ``b`` anticommute and 0 if they commute."""
    _check_same_size(a, b)
    return bin((a.x & b.z) ^ (a.z & b.x)).count("1") & 1


def dense_matrix(p, cap=BRUTE_FORCE_CAP):
    """Kronecker-product matrix of ``p`` with qubit 0 as the leftmost factor."""
    if p.n_qubits > cap:
        raise ResourceError(
            f"dense matrix of {p.n_qubits} qubits exceeds cap of {cap}"
        )
    out = np.ones((1, 1), dtype=complex)
    for q in range(p.n_qubits):
        out = np.kron(out, _PAULI_MATRICES[p.letter(q)])
    return out


def all_paulis(n_qubits):
    """All 4**n Paulis, indexed so that qubit 0 is the most significant digit.

    The index of a Pauli is ``sum(LETTERS.index(letter_q) * 4**(n-1-q))``,
    matching the Pauli transfer matrix ordering used in :mod:`pauliper.qpd`.
    """
    return [
        PauliString.from_label("".join(letters))
        for letters in itertools.product(LETTERS, repeat=n_qubits)
    ]


def pauli_index(p):
    index = 0
    for q in range(p.n_qubits):
        index = 4 * index + LETTERS.index(p.letter(q))
    return index


def enumerate_model_terms(connectivity, n_qubits):
    """Sparse model generators: every weight-1 Pauli and every weight-2 Pauli
    supported on a connected pair.

    Returns ``3 * n + 9 * |E|`` terms for ``|E|`` distinct edges, sorted by
    :meth:`PauliString.sort_key`.
    """
    terms = set()
    for q in range(n_qubits):
        for ch in "XYZ":
            terms.add(PauliString.from_sparse({q: ch}, n_qubits))
    for edge in normalize_edges(connectivity, n_qubits):
        a, b = edge
        for ca, cb in itertools.product("XYZ", repeat=2):
            terms.add(PauliString.from_sparse({a: ca, b: cb}, n_qubits))
    return sorted(terms, key=PauliString.sort_key)


def normalize_edges(connectivity, n_qubits):
    edges = set()
    for edge in connectivity:
        a, b = (int(v) for v in edge)
        if a == b or not (0 <= a < n_qubits and 0 <= b < n_qubits):
            raise ValueError(f"invalid edge {edge!r} for {n_qubits} qubits")
        edges.add((min(a, b), max(a, b)))
    return sorted(edges)


def path_edges(n_qubits):
    return [(q, q + 1) for q in range(n_qubits - 1)]


# -- Clifford layers ---------------------------------------------------------

TWO_QUBIT_CLIFFORDS = ("CX", "CZ", "SWAP")
SELF_ADJOINT_SINGLE = ("I", "H", "X", "Y", "Z")

_CLIFFORD_UNITARIES = {
    "I": np.eye(2, dtype=complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "X": _PAULI_MATRICES["X"],
    "Y": _PAULI_MATRICES["Y"],
    "Z": _PAULI_MATRICES["Z"],
    # two-qubit matrices: first listed qubit is the left factor
    "CX": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "SWAP": np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
    ),
}


def gate_unitary(kind):
    try:
        return _CLIFFORD_UNITARIES[kind]
    except KeyError:
        raise UnsupportedGateError(f"unsupported Clifford gate {kind!r}") from None


@dataclass(frozen=True)
class CliffordLayerSpec:
    """Self-adjoint layer of Clifford gates with pairwise disjoint supports.

    ``gates`` is a tuple of ``(kind, qubits)`` pairs. The constructor stores
    them in canonical sorted order, so two layers listing the same gates in a
    different order compare (and hash) equal.
    """

    n_qubits: int
    gates: tuple

    def __post_init__(self):
        canonical = []
        seen = set()
        for kind, qubits in self.gates:
            kind = kind.upper()
            qubits = tuple(int(q) for q in qubits)
            if kind in TWO_QUBIT_CLIFFORDS:
                if len(qubits) != 2 or qubits[0] == qubits[1]:
                    raise ValueError(f"{kind} needs two distinct qubits, got {qubits}")
                if kind in ("CZ", "SWAP"):
                    qubits = tuple(sorted(qubits))
            elif kind in SELF_ADJOINT_SINGLE:
                if len(qubits) != 1:
                    raise ValueError(f"{kind} acts on one qubit, got {qubits}")
            else:
                raise UnsupportedGateError(
                    f"gate {kind!r} is not a self-adjoint Clifford"
                )
            for q in qubits:
                if not 0 <= q < self.n_qubits:
                    raise ValueError(f"qubit {q} outside register of {self.n_qubits}")
                if q in seen:
                    raise ValueError(f"qubit {q} appears in two gates of the layer")
                seen.add(q)
            canonical.append((kind, qubits))
        canonical.sort(key=lambda g: (g[1], g[0]))
        object.__setattr__(self, "gates", tuple(canonical))

    @property
    def support(self):
        return tuple(sorted(q for _, qs in self.gates for q in qs))

    @property
    def is_empty(self):
        return not self.gates

    @property
    def description(self):
        """Text form such as ``"CX(0,1) CX(2,3)"``; parsed by :meth:`from_description`."""
        return " ".join(f"{k}({','.join(map(str, qs))})" for k, qs in self.gates)

    @classmethod
    def from_description(cls, text, n_qubits):
        gates = []
        for token in text.split():
            kind, _, rest = token.partition("(")
            qubits = tuple(int(v) for v in rest.rstrip(")").split(",") if v)
            gates.append((kind, qubits))
        return cls(n_qubits, tuple(gates))

    @property
    def layer_id(self):
        text = f"{self.n_qubits}:{self.description}"
        return hashlib.sha1(text.encode()).hexdigest()[:12]

    def __str__(self):
        return self.description or "<empty layer>"


def _conjugate_bits(kind, qubits, x, z):
    if kind == "CX":
        c, t = qubits
        if (x >> c) & 1:
            x ^= 1 << t
        if (z >> t) & 1:
            z ^= 1 << c
    elif kind == "CZ":
        a, b = qubits
        xa, xb = (x >> a) & 1, (x >> b) & 1
        z ^= (xb << a) | (xa << b)
    elif kind == "SWAP":
        a, b = qubits
        for bits in ("x", "z"):
            v = x if bits == "x" else z
            va, vb = (v >> a) & 1, (v >> b) & 1
            if va != vb:
                v ^= (1 << a) | (1 << b)
            if bits == "x":
                x = v
            else:
                z = v
    elif kind == "H":
        (q,) = qubits
        xq, zq = (x >> q) & 1, (z >> q) & 1
        if xq != zq:
            x ^= 1 << q
            z ^= 1 << q
    elif kind in ("I", "X", "Y", "Z"):
        pass
    else:
        raise UnsupportedGateError(f"unsupported Clifford gate {kind!r}")
    return x, z


def conjugate_by_layer(p, layer):
    """Label of ``C p C^dagger`` for the layer unitary ``C``; sign dropped."""
    if p.n_qubits != layer.n_qubits:
        raise DimensionError(
            f"Pauli on {p.n_qubits} qubits, layer on {layer.n_qubits}"
        )
    x, z = p.x, p.z
    for kind, qubits in layer.gates:
        x, z = _conjugate_bits(kind, qubits, x, z)
    return PauliString(p.n_qubits, x, z)


@lru_cache(maxsize=None)
def _local_sign(kind, local_label):
    u = gate_unitary(kind)
    p = dense_matrix(PauliString.from_label(local_label))
    image = u @ p @ u.conj().T
    for letters in itertools.product(LETTERS, repeat=len(local_label)):
        q = dense_matrix(PauliString.from_label("".join(letters)))
        overlap = np.trace(q @ image).real / q.shape[0]
        if abs(abs(overlap) - 1) < 1e-9:
            return 1 if overlap > 0 else -1
    raise AssertionError("Clifford image is not a Pauli")  # pragma: no cover


def conjugation_sign(p, layer):
    """Sign ``s`` in ``C p C^dagger = s * conjugate_by_layer(p, layer)``."""
    sign = 1
    for kind, qubits in layer.gates:
        local = "".join(p.letter(q) for q in qubits)
        if local.strip("I"):
            sign *= _local_sign(kind, local)
    return sign


def layer_unitary(layer, cap=BRUTE_FORCE_CAP):
    """Dense unitary of a Clifford layer (oracle support)."""
    from .circuit import Gate, gate_matrix_on_register

    if layer.n_qubits > cap:
        raise ResourceError(f"{layer.n_qubits} qubits exceeds cap of {cap}")
    u = np.eye(2**layer.n_qubits, dtype=complex)
    for kind, qubits in layer.gates:
        u = gate_matrix_on_register(Gate(kind, qubits), layer.n_qubits) @ u
    return u
