"""
Quasiprobability decompositions over noisy basis channels.

An ideal channel ``G`` is written as ``sum_alpha eta_alpha O_alpha`` over
implementable noisy channels with minimal one-norm ``gamma``. Splitting the
coefficients by sign gives ``G = gamma+ Phi+ - gamma- Phi-``; the
noise-scaled map

    G(xi) = (gamma+ - xi gamma-) Phi+ - (1 - xi) gamma- Phi-

interpolates between ``G`` at ``xi = 0`` and the plain noisy operation ``Phi+``
at ``xi = 1``, with sampling overhead ``gamma - xi (gamma - 1)``.

Channels are Pauli transfer matrices in ``(I, X, Y, Z)`` order with qubit 0
as the most significant digit.
"""
from dataclasses import dataclass
import json
import math

import numpy as np
from scipy.optimize import linprog

from .exceptions import DecompositionError
from .pauli import BRUTE_FORCE_CAP, all_paulis, dense_matrix

# constraint slack for numerically estimated PTMs
EQUALITY_TOLERANCE = 1e-8


@dataclass(frozen=True)
class Superoperator:
    """Pauli transfer matrix of an ``n_qubits`` channel."""

    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        dim = 4**self.n_qubits
        if mat.shape != (dim, dim):
            raise ValueError(f"PTM of shape {mat.shape} does not fit {self.n_qubits} qubits")
        object.__setattr__(self, "matrix", mat)

    def __matmul__(self, other):
        """Composition: ``(self @ other)`` applies ``other`` first."""
        return Superoperator(self.n_qubits, self.matrix @ other.matrix)

    def is_trace_preserving(self, atol=1e-10):
        first = np.zeros(4**self.n_qubits)
        first[0] = 1.0
        return bool(np.allclose(self.matrix[0], first, atol=atol))

    def apply(self, vector):
        """Act on a Pauli-basis state vector ``r_a = Tr(P_a rho)``."""
        return self.matrix @ np.asarray(vector, dtype=float)

    def to_list(self):
        return self.matrix.tolist()


def _pauli_mats(n):
    if n > BRUTE_FORCE_CAP:
        raise ValueError(f"{n} qubits exceeds dense cap of {BRUTE_FORCE_CAP}")
    return [dense_matrix(p) for p in all_paulis(n)]


def ptm_from_kraus(kraus, atol=1e-10):
    """PTM ``S_ab = Tr(P_a sum_K K P_b K^dag) / 2^n`` of a Kraus set.

    Raises
    ------
    ValueError
        If ``sum K^dag K`` differs from the identity by more than ``atol``.
    """
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    dim = kraus[0].shape[0]
    n = int(round(math.log2(dim)))
    if 2**n != dim or any(k.shape != (dim, dim) for k in kraus):
        raise ValueError("Kraus operators must be square with a power-of-two size")
    completeness = sum(k.conj().T @ k for k in kraus)
    if not np.allclose(completeness, np.eye(dim), atol=atol):
        raise ValueError("Kraus operators are not trace preserving")
    paulis = _pauli_mats(n)
    images = [sum(k @ p @ k.conj().T for k in kraus) for p in paulis]
    mat = np.array([[np.trace(pa @ img).real for img in images] for pa in paulis]) / dim
    return Superoperator(n, mat)


def ptm_from_unitary(unitary, atol=1e-10):
    u = np.asarray(unitary, dtype=complex)
    if not np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=atol):
        raise ValueError("matrix is not unitary")
    return ptm_from_kraus([u], atol=atol)


def depolarizing_kraus(p):
    """Kraus set whose PTM is ``diag(1, 1-p, 1-p, 1-p)``."""
    if not 0 <= p <= 4 / 3:
        raise ValueError(f"depolarizing parameter must lie in [0, 4/3], got {p}")
    mats = _pauli_mats(1)
    return [math.sqrt(1 - 3 * p / 4) * mats[0]] + [math.sqrt(p / 4) * m for m in mats[1:]]


def depolarizing_gamma(p):
    """Closed-form one-norm of the inverse of single-qubit depolarizing noise
    over Pauli-corrected noisy gates: ``(1 + p/2) / (1 - p)``."""
    return (1 + p / 2) / (1 - p)


def depolarizing_for_gamma(gamma):
    """Inverse of :func:`depolarizing_gamma`."""
    if gamma < 1:
        raise ValueError("gamma must be at least 1")
    return (gamma - 1) / (gamma + 0.5)


def noisy_pauli_basis(p, labels="IXYZ"):
    """Pauli gates followed by depolarizing noise of strength ``p``."""
    noise = ptm_from_kraus(depolarizing_kraus(p))
    mats = dict(zip("IXYZ", _pauli_mats(1)))
    return {f"noisy {ch}": noise @ ptm_from_unitary(mats[ch]) for ch in labels}


# -- decomposition ------------------------------------------------------------------


@dataclass(frozen=True)
class QpdRepresentation:
    """Signed combination ``sum eta_alpha O_alpha`` of basis channels."""

    coefficients: np.ndarray
    basis: tuple
    names: tuple = None
    target: Superoperator = None

    @property
    def gamma_plus(self):
        return float(self.coefficients[self.coefficients > 0].sum())

    @property
    def gamma_minus(self):
        return float(-self.coefficients[self.coefficients < 0].sum())

    @property
    def gamma(self):
        return float(np.abs(self.coefficients).sum())

    def _mixture(self, positive):
        mask = self.coefficients > 0 if positive else self.coefficients < 0
        weight = self.gamma_plus if positive else self.gamma_minus
        n = self.basis[0].n_qubits
        if weight == 0:
            return Superoperator(n, np.zeros((4**n, 4**n)))
        mat = sum(
            abs(c) / weight * b.matrix
            for c, b, m in zip(self.coefficients, self.basis, mask)
            if m
        )
        return Superoperator(n, mat)

    @property
    def phi_plus(self):
        return self._mixture(True)

    @property
    def phi_minus(self):
        return self._mixture(False)

    def reconstruct(self):
        n = self.basis[0].n_qubits
        mat = sum(c * b.matrix for c, b in zip(self.coefficients, self.basis))
        return Superoperator(n, mat)

    def residual(self):
        if self.target is None:
            return None
        return float(np.abs(self.reconstruct().matrix - self.target.matrix).max())


def optimal_representation(target, basis, names=None, tol=EQUALITY_TOLERANCE):
    """Minimal one-norm decomposition of ``target`` over ``basis``.

    Solves ``min sum(eta+ + eta-)`` subject to
    ``|sum (eta+ - eta-) O - target| <= tol`` entrywise with ``eta+-`` >= 0,
    then removes the remaining slack with a least-squares correction.

    Parameters
    ----------
    target : Superoperator
    basis : sequence of Superoperator
    names : sequence of str, optional
    tol : float

    Returns
    -------
    QpdRepresentation

    Raises
    ------
    DecompositionError
        If the target is outside the span of the basis; ``residual`` holds
        the least-squares residual norm.
    """
    basis = tuple(basis)
    if not basis:
        raise ValueError("empty basis")
    for b in basis:
        if b.n_qubits != target.n_qubits:
            raise ValueError("basis and target act on different registers")
    a = np.column_stack([b.matrix.reshape(-1) for b in basis])
    g = target.matrix.reshape(-1)
    k = a.shape[1]
    a_split = np.hstack([a, -a])
    res = linprog(
        np.ones(2 * k),
        A_ub=np.vstack([a_split, -a_split]),
        b_ub=np.concatenate([g + tol, -(g - tol)]),
        bounds=[(0, None)] * (2 * k),
        method="highs",
    )
    if res.status != 0:
        sol, *_ = np.linalg.lstsq(a, g, rcond=None)
        residual = float(np.linalg.norm(a @ sol - g))
        raise DecompositionError(
            f"target is outside the span of the basis (residual {residual:.3e})",
            residual,
        )
    eta = res.x[:k] - res.x[k:]
    # the LP sits on the edge of the tolerance box; a minimum-norm correction
    # restores exact equality whenever the target lies in the span
    correction, *_ = np.linalg.lstsq(a, g - a @ eta, rcond=None)
    if np.linalg.norm(a @ (eta + correction) - g) < np.linalg.norm(a @ eta - g):
        eta = eta + correction
    names = tuple(names) if names is not None else tuple(f"O{i}" for i in range(k))
    return QpdRepresentation(eta, basis, names, target)


# -- noise scaling and sampling -------------------------------------------------


def scaled_overhead(gamma, xi):
    """``gamma - xi (gamma - 1)`` for ``xi <= 1`` and 1 beyond."""
    if gamma < 1:
        raise ValueError(f"gamma must be at least 1, got {gamma}")
    if xi < 0:
        raise ValueError(f"xi must be non-negative, got {xi}")
    return gamma - min(xi, 1.0) * (gamma - 1)


def overhead_table(gamma, xis, depths):
    """Rows ``(xi, depth, scaled_overhead(gamma, xi) ** depth)``."""
    return [(xi, l, scaled_overhead(gamma, xi) ** l) for xi in xis for l in depths]


@dataclass(frozen=True)
class ScaledQpd:
    """Two-component representation of the noise-scaled map at ``xi``."""

    rep: QpdRepresentation
    xi: float

    @property
    def weight_plus(self):
        return self.rep.gamma_plus - self.xi * self.rep.gamma_minus

    @property
    def weight_minus(self):
        return -(1.0 - self.xi) * self.rep.gamma_minus

    @property
    def gamma(self):
        return abs(self.weight_plus) + abs(self.weight_minus)

    def superoperator(self):
        mat = self.weight_plus * self.rep.phi_plus.matrix + self.weight_minus * self.rep.phi_minus.matrix
        return Superoperator(self.rep.basis[0].n_qubits, mat)


def noise_scaled_rep(rep, xi):
    """Scale ``rep`` to noise strength ``xi`` in ``[0, (gamma+1)/(gamma-1)]``."""
    xi = float(xi)
    upper = math.inf if rep.gamma_minus == 0 else rep.gamma_plus / rep.gamma_minus
    if not 0 <= xi <= upper + 1e-12:
        raise ValueError(f"xi must lie in [0, {upper:.6g}], got {xi}")
    return ScaledQpd(rep, xi)


def sample_qpd(scaled, rng):
    """Draw one basis channel.

    Returns
    -------
    index : int
        Position in ``scaled.rep.basis``.
    sign : int
    weight : float
        ``gamma^(xi)``; the estimator is ``sign * weight * measured value``.
    """
    coeffs = scaled.rep.coefficients
    gamma = scaled.gamma
    plus = rng.random() * gamma < abs(scaled.weight_plus)
    if plus:
        sign = 1 if scaled.weight_plus >= 0 else -1
        mask = coeffs > 0
    else:
        sign = -1 if scaled.weight_minus < 0 else 1
        mask = coeffs < 0
    probs = np.where(mask, np.abs(coeffs), 0.0)
    index = int(rng.choice(len(coeffs), p=probs / probs.sum()))
    return index, sign, gamma


def sample_estimates(scaled, state, observable, samples, rng):
    """Single-shot QPD estimates of ``<observable>`` on Pauli-basis ``state``.

    Each sample draws a channel, propagates ``state`` exactly, draws a
    ``+-1`` outcome and rescales it by ``sign * gamma``.
    """
    basis = scaled.rep.basis
    expectations = np.array([b.apply(state)[observable] / state[0] for b in basis])
    out = np.empty(samples)
    for i in range(samples):
        index, sign, gamma = sample_qpd(scaled, rng)
        p_up = 0.5 * (1.0 + expectations[index])
        outcome = 1.0 if rng.random() < p_up else -1.0
        out[i] = sign * gamma * outcome
    return out


def load_ptm_file(path):
    """Read ``{"n_qubits", "basis": [{"name", "ptm"}], "target"}``.

    Returns
    -------
    target : Superoperator
    basis : list of Superoperator
    names : list of str
    """
    with open(path) as fh:
        data = json.load(fh)
    n = int(data["n_qubits"])
    basis = [Superoperator(n, np.array(b["ptm"])) for b in data["basis"]]
    names = [b.get("name", f"O{i}") for i, b in enumerate(data["basis"])]
    return Superoperator(n, np.array(data["target"])), basis, names
