"""
Probabilistic error reduction (PER) with virtual zero-noise extrapolation.

Each noise factor ``w Id + (1 - w) P.P`` of a layer model is replaced by the
partial inverse at noise strength ``xi``: rates ``(1 - xi) * lambda`` are
removed for ``xi < 1`` with a quasiprobability sign and overhead, and rates
``(xi - 1) * lambda`` are added for ``xi > 1`` at no cost. Expectation values
measured at several ``xi`` are then extrapolated to ``xi = 0`` with the ansatz
``a * exp(-b xi)``.
"""
from dataclasses import dataclass, field, replace
import itertools
import logging
import math
import warnings

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_circuits,
    check_noise_strengths,
    check_observables,
    check_positive_int,
)
from .circuit import Circuit, Gate, parse_dressed
from .exceptions import CoverageError, MitigationError
from .noise import SparseNoiseModel
from .pauli import PauliString, conjugate_by_layer, dense_matrix
from .tomography import (
    MEASURE_GATES,
    NoiseDataFrame,
    parity_expectation,
    random_pauli,
)

logger = logging.getLogger(__name__)


# -- partial inverse -----------------------------------------------------------


@dataclass(frozen=True)
class PartialInverseParams:
    """Sampling parameters of the partial noise inverse of one layer.

    Attributes
    ----------
    xi : float
    paulis : tuple of PauliString
    weights : ndarray
        Probability ``w_k`` of inserting the identity for term ``k``.
    sign : int
        ``sgn(xi - 1)``; a non-identity insertion flips the estimator sign
        only when this is negative.
    gamma : float
        Layer overhead, ``exp(2 (1 - xi) sum(lambda))`` below ``xi = 1``.
    factors : ndarray
        Per-term share of ``gamma``; their product is ``gamma``.
    """

    xi: float
    paulis: tuple
    weights: np.ndarray
    sign: int
    gamma: float
    factors: np.ndarray

    @property
    def n_qubits(self):
        return self.paulis[0].n_qubits if self.paulis else 0


def partial_inverse(model, xi):
    """Partial inverse of a sparse Pauli-Lindblad model at noise strength ``xi``.

    Parameters
    ----------
    model : SparseNoiseModel
    xi : float
        Target noise strength; 0 cancels the noise, 1 leaves it unchanged and
        values above 1 amplify it.

    Returns
    -------
    PartialInverseParams
    """
    xi = float(xi)
    if not xi >= 0 or not math.isfinite(xi):
        raise ValueError(f"noise strength must be finite and >= 0, got {xi}")
    rates = model.rates
    weights = 0.5 * (1.0 + np.exp(-2.0 * abs(1.0 - xi) * rates))
    if xi < 1:
        factors = np.exp(2.0 * (1.0 - xi) * rates)
    else:
        factors = np.ones_like(rates)
    sign = int(np.sign(xi - 1.0))
    gamma = float(np.prod(factors)) if len(factors) else 1.0
    return PartialInverseParams(xi, tuple(model.paulis), weights, sign, gamma, factors)


def overhead(models, xi):
    """Total overhead ``prod_l gamma_l^(xi)`` of a sequence of layer models."""
    return float(np.prod([partial_inverse(m, xi).gamma for m in models]))


def _pauli_superop(pauli):
    mat = dense_matrix(pauli)
    return np.kron(mat, mat.conj())


def channel_superoperator(params):
    """Dense superoperator of the (quasi-)channel described by ``params``.

    Uses row-major vectorization, ``vec(A rho B) = (A kron B^T) vec(rho)``.
    Intended for small registers.
    """
    dim = 4**params.n_qubits
    out = np.eye(dim, dtype=complex)
    for pauli, w, f in zip(params.paulis, params.weights, params.factors):
        sign = -1.0 if params.sign < 0 else 1.0
        factor = f * (w * np.eye(dim) + sign * (1.0 - w) * _pauli_superop(pauli))
        out = factor @ out
    return out


def model_superoperator(model):
    """Dense superoperator of ``model`` (same convention as above)."""
    return channel_superoperator(partial_inverse(model, 2.0))


# -- measurement planning --------------------------------------------------------


def plan_measurements(observables):
    """Group qubit-wise compatible observables into shared measurement bases.

    Observables are visited in input order and placed in the first group they
    are compatible with; free qubits of a basis are measured in Z.

    Returns
    -------
    dict
        ``basis string -> list of PauliString`` in order of creation.
    """
    observables = list(observables)
    if not observables:
        return {}
    n = observables[0].n_qubits
    groups = []
    for obs in observables:
        letters = obs.letters()
        for basis, members in groups:
            if all(basis.get(q, ch) == ch for q, ch in letters.items()):
                basis.update(letters)
                members.append(obs)
                break
        else:
            groups.append((dict(letters), [obs]))
    return {
        "".join(basis.get(q, "Z") for q in range(n)): members for basis, members in groups
    }


# -- PER circuits ----------------------------------------------------------------


@dataclass(frozen=True)
class PERInstance:
    """One sampled PER circuit with its bookkeeping."""

    circuit_index: int
    xi: float
    insertions: tuple
    twirls: tuple
    readout_twirl: str
    sign: int
    alpha: float
    basis: str
    circuit: Circuit
    n_insertions: int = 0

    def summary(self):
        """Copy without the circuit and per-layer Paulis, for bookkeeping."""
        return replace(self, insertions=(), twirls=(), circuit=None)


def _merged_pauli_gates(pauli):
    return [Gate(ch, (q,)) for q, ch in sorted(pauli.letters().items())]


def sample_per_circuit(dressed, params, basis, rng, circuit_index=0, xi=None):
    """Sample one PER circuit.

    Parameters
    ----------
    dressed : DressedCircuit
    params : dict
        ``layer_id -> PartialInverseParams``, all at the same ``xi``.
    basis : str
        Measurement basis, one letter per qubit.
    rng : numpy.random.Generator
    circuit_index : int
    xi : float, optional
        Recorded strength; defaults to the strength of ``params``.

    Returns
    -------
    PERInstance
    """
    n = dressed.n_qubits
    if xi is None:
        xi = next(iter(params.values())).xi if params else 1.0
    gates = []
    insertions, twirls = [], []
    sign, alpha = 1, 1.0
    identity = PauliString.identity(n)
    for layer in dressed.layers:
        gates.extend(layer.single_qubit_block)
        if not layer.has_clifford:
            continue
        try:
            p = params[layer.layer_id]
        except KeyError:
            raise CoverageError(
                f"no noise model for layer {layer.clifford_layer}"
            ) from None
        twirl = random_pauli(n, rng)
        after = conjugate_by_layer(twirl, layer.clifford_layer)
        draws = rng.random(len(p.paulis))
        inserted = []
        for pauli, w, u in zip(p.paulis, p.weights, draws):
            if u < w:
                inserted.append(identity)
            else:
                inserted.append(pauli)
                after = after.compose(pauli)
                if p.sign < 0:
                    sign = -sign
        if xi < 1:
            alpha *= p.gamma
        gates.extend(_merged_pauli_gates(twirl))
        gates.extend(layer.clifford_gates())
        gates.extend(_merged_pauli_gates(after))
        insertions.append(tuple(inserted))
        twirls.append(twirl)
    for q, ch in enumerate(basis):
        gates.extend(Gate(kind, (q,)) for kind in MEASURE_GATES[ch])
    readout = "".join("X" if b else "I" for b in rng.integers(0, 2, n))
    gates.extend(Gate("X", (q,)) for q, ch in enumerate(readout) if ch == "X")
    return PERInstance(
        circuit_index,
        xi,
        tuple(insertions),
        tuple(twirls),
        readout,
        sign,
        sign * alpha if xi < 1 else 1.0,
        basis,
        Circuit(n, tuple(gates)),
        sum(not p.is_identity for layer in insertions for p in layer),
    )


def adjusted_expectation(instance, counts, observable, spam=None):
    """Readout-mitigated, sign- and overhead-corrected estimate of ``observable``.

    The raw parity is untwirled, divided by the product of the per-qubit
    readout coefficients over the observable's support and multiplied by the
    instance's ``alpha`` (which is 1 for ``xi >= 1``). Qubits missing from
    ``spam`` are not mitigated.
    """
    letters = observable.letters()
    for q, ch in letters.items():
        if instance.basis[q] != ch:
            raise MitigationError(
                f"{observable} is not measurable in basis {instance.basis}"
            )
    raw = parity_expectation(counts, observable.support, instance.readout_twirl)
    coeff = 1.0
    for q in observable.support:
        c = (spam or {}).get(q, 1.0)
        if not c > 0:
            raise MitigationError(f"readout coefficient of qubit {q} is {c}")
        coeff *= c
    return raw / coeff * instance.alpha


# -- extrapolation ---------------------------------------------------------------


@dataclass
class VZNEFit:
    """Result of fitting ``a * exp(-b xi)`` to per-strength means.

    ``stderr`` is the standard error of ``a`` propagated from the per-strength
    errors (zero for an unweighted fit).
    """

    a: float
    b: float
    residual: float
    method: str
    flagged: bool = False
    stderr: float = 0.0

    @property
    def zero_noise(self):
        return self.a


def _exp_model(xi, a, b):
    return a * np.exp(-b * xi)


def vzne_fit(points):
    """Weighted fit of ``mean(xi) = a * exp(-b xi)`` with ``b >= 0``.

    Parameters
    ----------
    points : sequence of (xi, mean, stderr)
        Standard errors act as inverse-variance weights; if any is (numerically)
        zero the fit is unweighted.

    Returns
    -------
    VZNEFit
        ``method`` is ``"loglinear"`` when all means share a sign,
        ``"nonlinear"`` otherwise, ``"linear"`` for the fallback used when the
        nonlinear solve fails and ``"none"`` for a single strength. The last
        two set ``flagged``.
    """
    pts = sorted((float(x), float(m), float(s)) for x, m, s in points)
    xs = np.array([p[0] for p in pts])
    means = np.array([p[1] for p in pts])
    se = np.array([p[2] for p in pts])
    if len(set(xs)) < 2:
        if len(xs) == 0:
            raise ValueError("no points to extrapolate")
        return VZNEFit(float(np.mean(means)), 0.0, 0.0, "none", True, float(se.max()))
    weighted = bool(np.all(se > 1e-12))
    w = 1.0 / se**2 if weighted else np.ones_like(means)

    def residual(a, b):
        return float(np.sum(w * (means - _exp_model(xs, a, b)) ** 2))

    if np.all(means > 0) or np.all(means < 0):
        sgn = 1.0 if means[0] > 0 else -1.0
        y = np.log(np.abs(means))
        lw = w * means**2
        (slope, intercept), cov = np.polyfit(xs, y, 1, w=np.sqrt(lw), cov="unscaled")
        b = -slope
        if b < 0:
            b = 0.0
            a = float(np.average(means, weights=w))
            err = math.sqrt(1.0 / w.sum())
        else:
            a = sgn * math.exp(intercept)
            err = abs(a) * math.sqrt(cov[1, 1])
        return VZNEFit(
            float(a), float(b), residual(a, b), "loglinear", stderr=err if weighted else 0.0
        )
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            (a, b), cov = curve_fit(
                _exp_model,
                xs,
                means,
                p0=(means[0], 0.1),
                sigma=se if weighted else None,
                absolute_sigma=weighted,
                bounds=([-np.inf, 0.0], [np.inf, np.inf]),
            )
        if not (math.isfinite(a) and math.isfinite(b)):
            raise RuntimeError("non-finite fit")
        err = math.sqrt(cov[0, 0]) if weighted and math.isfinite(cov[0, 0]) else 0.0
        return VZNEFit(float(a), float(b), residual(a, b), "nonlinear", stderr=err)
    except (RuntimeError, ValueError) as exc:
        logger.warning("nonlinear vZNE fit failed (%s); using linear extrapolation", exc)
        (slope, intercept), cov = np.polyfit(xs, means, 1, w=np.sqrt(w), cov="unscaled")
        a = float(intercept)
        lin = float(np.sum(w * (means - (intercept + slope * xs)) ** 2))
        err = math.sqrt(cov[1, 1]) if weighted else 0.0
        return VZNEFit(a, 0.0, lin, "linear", True, err)


# -- results and estimator -----------------------------------------------------------


@dataclass
class PERResult:
    """Adjusted estimates of one observable on one circuit."""

    observable: PauliString
    estimates: dict = field(default_factory=dict)
    fit: VZNEFit = None

    @property
    def strengths(self):
        return sorted(self.estimates)

    def mean(self, xi):
        return float(np.mean(self.estimates[xi]))

    def stderr(self, xi):
        v = self.estimates[xi]
        return float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0

    def points(self):
        return [(xi, self.mean(xi), self.stderr(xi)) for xi in self.strengths]

    @property
    def zero_noise(self):
        return self.fit.a

    def extrapolate(self):
        self.fit = vzne_fit(self.points())
        return self

    def to_dict(self):
        return {
            "observable": self.observable.label,
            "strengths": [
                {"xi": xi, "mean": m, "stderr": s, "samples": len(self.estimates[xi])}
                for xi, m, s in self.points()
            ],
            "fit": {
                "a": self.fit.a,
                "b": self.fit.b,
                "residual": self.fit.residual,
                "method": self.fit.method,
                "flagged": self.fit.flagged,
                "stderr": self.fit.stderr,
            },
            "zero_noise": self.zero_noise,
        }


class PERMitigator(BaseEstimator):
    """Error-reduced expectation values with virtual zero-noise extrapolation.

    Parameters
    ----------
    noise_data : NoiseDataFrame or dict
        Learned layer models (``layer_id -> SparseNoiseModel``) and, for a
        :class:`NoiseDataFrame`, per-qubit readout coefficients.
    executor : callable
        ``executor(list_of_circuits) -> list_of_counts``.
    observables : sequence of str or PauliString
    noise_strengths : sequence of float
    samples : int
        PER circuits per noise strength, circuit and measurement basis.
    readout_mitigation : bool
    seed : int
    batch_size : int or None
        Circuits handed to the executor per call. ``None`` sends every
        instance in one batch, which file-based executors need.

    Attributes
    ----------
    circuits_ : list of Circuit
    bases_ : dict
        Output of :func:`plan_measurements`.
    params_ : dict
        ``xi -> {layer_id -> PartialInverseParams}``.
    instances_ : list of PERInstance
        After :meth:`predict`, circuit-free summaries of the executed instances.
    instance_estimates_ : list of dict
        Adjusted estimates of each instance, ``observable label -> value``.
    results_ : list of dict
        Per circuit, ``observable label -> PERResult``.
    """

    def __init__(
        self,
        noise_data=None,
        executor=None,
        observables=None,
        noise_strengths=(0.5, 1.0, 2.0),
        samples=1000,
        readout_mitigation=True,
        seed=0,
        batch_size=500,
    ):
        self.noise_data = noise_data
        self.executor = executor
        self.observables = observables
        self.noise_strengths = noise_strengths
        self.samples = samples
        self.readout_mitigation = readout_mitigation
        self.seed = seed
        self.batch_size = batch_size

    def _models(self):
        if isinstance(self.noise_data, NoiseDataFrame):
            return self.noise_data.models
        if self.noise_data is None:
            raise ValueError("noise_data is required")
        return {
            lid: m if isinstance(m, SparseNoiseModel) else SparseNoiseModel.from_dict(m, lid)
            for lid, m in self.noise_data.items()
        }

    def _spam(self):
        if self.readout_mitigation and isinstance(self.noise_data, NoiseDataFrame):
            return self.noise_data.spam
        return {}

    def fit(self, circuits, y=None):
        """Validate model coverage and prepare the partial inverses."""
        circuits = check_circuits(circuits)
        check_positive_int(self.samples, "samples")
        strengths = check_noise_strengths(self.noise_strengths)
        n = circuits[0].n_qubits
        if self.observables is None:
            raise ValueError("observables are required")
        observables = check_observables(self.observables, n)
        models = self._models()
        dressed = [parse_dressed(c) for c in circuits]
        for d in dressed:
            for layer in d.clifford_layers():
                if layer.layer_id not in models:
                    raise CoverageError(
                        f"no noise model for layer {layer.description} ({layer.layer_id})"
                    )
        self.circuits_ = circuits
        self.dressed_ = dressed
        self.observables_ = observables
        self.strengths_ = sorted(set(strengths))
        self.bases_ = plan_measurements(observables)
        used = {layer.layer_id for d in dressed for layer in d.clifford_layers()}
        self.params_ = {
            xi: {lid: partial_inverse(models[lid], xi) for lid in sorted(used)}
            for xi in self.strengths_
        }
        return self

    def overheads(self):
        """``xi -> total overhead`` for each fitted circuit."""
        check_is_fitted(self, "params_")
        out = []
        for d in self.dressed_:
            ids = [layer.layer_id for layer in d.clifford_layers()]
            out.append(
                {
                    xi: float(np.prod([self.params_[xi][lid].gamma for lid in ids]))
                    for xi in self.strengths_
                }
            )
        return out

    def _iter_instances(self):
        bases = list(self.bases_)
        for (ci, d), (xi_i, xi), (bi, basis) in itertools.product(
            enumerate(self.dressed_), enumerate(self.strengths_), enumerate(bases)
        ):
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, ci, xi_i, bi]))
            for _ in range(self.samples):
                yield sample_per_circuit(
                    d, self.params_[xi], basis, rng, circuit_index=ci, xi=xi
                )

    def generate(self):
        """All PER instances, ordered by circuit, strength, basis and sample."""
        check_is_fitted(self, "params_")
        self.instances_ = list(self._iter_instances())
        return self.instances_

    def predict(self, circuits=None, results=None):
        """Zero-noise estimates, shape ``(n_circuits, n_observables)``.

        Runs the fitted circuits (or fits ``circuits`` first). ``results`` may
        hold precomputed counts for :meth:`generate`'s instances.
        """
        if circuits is not None:
            self.fit(circuits)
        check_is_fitted(self, "params_")
        if results is None and self.executor is None:
            raise ValueError("an executor is required when results are not given")
        if self.batch_size is not None:
            check_positive_int(self.batch_size, "batch_size")
        spam = self._spam()
        per_circuit = [
            {o.label: PERResult(o) for o in self.observables_} for _ in self.circuits_
        ]
        self.instances_ = []
        self.instance_estimates_ = []
        stream = self._iter_instances()
        offset = 0
        while True:
            batch = list(itertools.islice(stream, self.batch_size))
            if not batch:
                break
            if results is None:
                counts = self.executor([inst.circuit for inst in batch])
            else:
                counts = results[offset : offset + len(batch)]
            if len(counts) != len(batch):
                raise ValueError(f"{len(counts)} results for {len(batch)} circuits")
            offset += len(batch)
            for inst, c in zip(batch, counts):
                values = {}
                for obs in self.bases_[inst.basis]:
                    value = adjusted_expectation(inst, c, obs, spam)
                    values[obs.label] = value
                    per_circuit[inst.circuit_index][obs.label].estimates.setdefault(
                        inst.xi, []
                    ).append(value)
                self.instances_.append(inst.summary())
                self.instance_estimates_.append(values)
        if results is not None and offset != len(results):
            raise ValueError(f"{len(results)} results for {offset} circuits")
        for res in per_circuit:
            for r in res.values():
                r.extrapolate()
        self.results_ = per_circuit
        return np.array(
            [[res[o.label].zero_noise for o in self.observables_] for res in per_circuit]
        )
