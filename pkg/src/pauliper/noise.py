"""
Sparse Pauli-Lindblad noise models.

The channel attached to a Clifford layer is

    Lambda = prod_k (w_k * Id + (1 - w_k) * P_k . P_k),   w_k = (1 + exp(-2 lambda_k)) / 2

and its Pauli fidelities are ``f_a = exp(-2 * sum of lambda_k over P_k that
anticommute with P_a)``.
"""
from dataclasses import dataclass
import math

import numpy as np

from .exceptions import DimensionError
from .pauli import PauliString, all_paulis, symplectic_product


@dataclass(frozen=True)
class SparseNoiseModel:
    """Jump rates ``lambda_k >= 0`` over generator Paulis ``P_k`` for one layer.

    Parameters
    ----------
    n_qubits : int
    terms : tuple of (PauliString, float)
    layer_id : str, optional
    layer : str, optional
        Text description of the Clifford layer the model belongs to.
    """

    n_qubits: int
    terms: tuple
    layer_id: str = None
    layer: str = None

    def __post_init__(self):
        terms = []
        for pauli, rate in self.terms:
            if isinstance(pauli, str):
                pauli = PauliString.from_label(pauli)
            if pauli.n_qubits != self.n_qubits:
                raise DimensionError(f"term {pauli} does not fit {self.n_qubits} qubits")
            rate = float(rate)
            if not rate >= 0 or not math.isfinite(rate):
                raise ValueError(f"rate for {pauli} must be finite and >= 0, got {rate}")
            terms.append((pauli, rate))
        object.__setattr__(self, "terms", tuple(terms))

    @classmethod
    def from_rates(cls, paulis, rates, layer_id=None, layer=None):
        paulis = list(paulis)
        n = paulis[0].n_qubits if paulis else 1
        return cls(n, tuple(zip(paulis, rates)), layer_id, layer)

    @property
    def paulis(self):
        return [p for p, _ in self.terms]

    @property
    def rates(self):
        return np.array([r for _, r in self.terms], dtype=float)

    @property
    def weights(self):
        """``w_k = (1 + exp(-2 lambda_k)) / 2``, each in (1/2, 1]."""
        return 0.5 * (1.0 + np.exp(-2.0 * self.rates))

    @property
    def total_rate(self):
        return float(self.rates.sum())

    def fidelity(self, pauli):
        rate = sum(r for p, r in self.terms if symplectic_product(p, pauli))
        return math.exp(-2.0 * rate)

    def scaled(self, factor):
        return SparseNoiseModel(
            self.n_qubits,
            tuple((p, factor * r) for p, r in self.terms),
            self.layer_id,
            self.layer,
        )

    def to_dict(self):
        out = {"terms": [{"pauli": p.label, "lambda": r} for p, r in self.terms]}
        out["n_qubits"] = self.n_qubits
        if self.layer is not None:
            out["layer"] = self.layer
        return out

    @classmethod
    def from_dict(cls, data, layer_id=None):
        terms = tuple(
            (PauliString.from_label(t["pauli"]), t["lambda"]) for t in data["terms"]
        )
        n = data.get("n_qubits")
        if n is None:
            n = terms[0][0].n_qubits if terms else 1
        return cls(int(n), terms, layer_id, data.get("layer"))


def ptm_diagonal(model, paulis=None):
    """Pauli fidelities of ``model``.

    Evaluated analytically from the anticommuting rates, so there is no size
    cap when ``paulis`` is given explicitly. The default enumerates all
    ``4**n`` Paulis in :func:`pauliper.pauli.all_paulis` order.
    """
    if paulis is None:
        paulis = all_paulis(model.n_qubits)
    return np.array([model.fidelity(p) for p in paulis])


def _index_masks(pauli):
    n = pauli.n_qubits
    xm = zm = 0
    for q in range(n):
        bit = 1 << (n - 1 - q)
        if (pauli.x >> q) & 1:
            xm |= bit
        if (pauli.z >> q) & 1:
            zm |= bit
    return xm, zm


def pauli_conjugate(rho, pauli):
    """``P rho P`` using index permutation and signs instead of matrix products."""
    dim = rho.shape[0]
    xm, zm = _index_masks(pauli)
    idx = np.arange(dim) ^ xm
    parity = np.array([bin(i & zm).count("1") & 1 for i in range(dim)])
    signs = 1 - 2 * parity[idx]
    return rho[np.ix_(idx, idx)] * np.outer(signs, signs)


def apply_pauli_channel(rho, model):
    """Apply every factor ``rho <- w rho + (1 - w) P rho P`` of the model."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2**model.n_qubits,) * 2:
        raise DimensionError(
            f"density matrix of shape {rho.shape} does not match {model.n_qubits} qubits"
        )
    for (pauli, _), w in zip(model.terms, model.weights):
        if w < 1.0:
            rho = w * rho + (1.0 - w) * pauli_conjugate(rho, pauli)
    return rho
