"""
Pauli noise tomography of Clifford layers.

For each distinct Clifford layer two kinds of twirled benchmark circuits are
generated. Pair circuits repeat the layer an even number of times and decay
as ``a * exp(-b * depth)`` with ``exp(-2b) = f_a * f_a'``, where ``P_a'`` is
the conjugate of ``P_a`` through the layer. Single-depth circuits apply the
layer once and separate ``f_a`` from ``f_a'``. The fidelities are then
inverted into sparse Pauli-Lindblad rates by non-negative least squares.
"""
from dataclasses import dataclass, field
import itertools
import json
import logging
import math

import numpy as np
from scipy.optimize import nnls
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_circuits, check_depths, check_positive_int
from .circuit import Circuit, Gate, distinct_clifford_layers, parse_dressed
from .exceptions import BasisError, CoverageError, FitError, NumericError
from .noise import SparseNoiseModel
from .pauli import (
    PauliString,
    conjugate_by_layer,
    conjugation_sign,
    enumerate_model_terms,
    normalize_edges,
    symplectic_product,
)

logger = logging.getLogger(__name__)

PREP_GATES = {"X": ("H",), "Y": ("H", "S"), "Z": ()}
MEASURE_GATES = {"X": ("H",), "Y": ("SDG", "H"), "Z": ()}


# -- basis selection -----------------------------------------------------------


def diagonal_in(pauli, basis):
    """True when every non-identity letter of ``pauli`` matches ``basis``."""
    return all(basis[q] == ch for q, ch in pauli.letters().items())


def _greedy_coloring(n_qubits, edges):
    neighbours = {q: set() for q in range(n_qubits)}
    for a, b in edges:
        neighbours[a].add(b)
        neighbours[b].add(a)
    colors = {}
    for q in range(n_qubits):
        used = {colors[v] for v in neighbours[q] if v in colors}
        colors[q] = next(c for c in itertools.count() if c not in used)
    return [colors[q] for q in range(n_qubits)]


def select_pair_bases(terms, connectivity=None):
    """Global measurement bases in which every model term is diagonal.

    Qubits are coloured so that connected qubits differ, then each candidate
    basis assigns one letter per colour. A greedy set cover picks the
    candidate covering the most uncovered terms, breaking ties by the
    lexicographically smallest basis string. Bipartite connectivity (paths,
    even rings) yields nine bases.
    """
    terms = list(terms)
    if not terms:
        return []
    n = terms[0].n_qubits
    if connectivity is None:
        connectivity = [t.support for t in terms if t.weight == 2]
    colors = _greedy_coloring(n, normalize_edges(connectivity, n))
    n_colors = max(colors) + 1
    candidates = sorted(
        "".join(assign[c] for c in colors)
        for assign in itertools.product("XYZ", repeat=n_colors)
    )
    candidates = sorted(set(candidates))
    uncovered = set(terms)
    chosen = []
    while uncovered:
        best, best_cover = None, set()
        for basis in candidates:
            cover = {t for t in uncovered if diagonal_in(t, basis)}
            if len(cover) > len(best_cover):
                best, best_cover = basis, cover
        if best is None:
            raise CoverageError(
                "no candidate basis covers " + ", ".join(sorted(map(str, uncovered)))
            )
        chosen.append(best)
        uncovered -= best_cover
    return chosen


def degenerate_targets(layer, terms):
    """Pairs of model terms mapped onto each other by the layer.

    The pair decay only fixes the product ``f_a f_a'``, and when both Paulis are
    model terms nothing else separates them. One member of each such pair (the
    first in sort order) is measured at depth one; the returned list holds
    ``(target, partner)``. Terms whose conjugate lies outside the model need no
    lifting: their pair row is already independent.
    """
    term_set = set(terms)
    out = []
    done = set()
    for term in terms:
        partner = conjugate_by_layer(term, layer)
        if partner == term or partner not in term_set or term in done:
            continue
        done.update((term, partner))
        out.append((term, partner))
    return out


def select_single_bases(layer, terms):
    """``(prep_basis, meas_basis)`` pairs for the degeneracy-lifting circuits.

    A target ``P`` is read out by preparing an eigenstate of its conjugate
    ``P'`` and measuring ``P`` after one layer, so the prep basis must
    diagonalize ``P'`` and the measurement basis ``P``. Requirements are merged
    first-fit into compatible groups; free letters default to Z.
    """
    n = layer.n_qubits
    groups = []
    for target, partner in degenerate_targets(layer, terms):
        need_prep = partner.letters()
        need_meas = target.letters()
        for prep, meas in groups:
            if all(prep.get(q, ch) == ch for q, ch in need_prep.items()) and all(
                meas.get(q, ch) == ch for q, ch in need_meas.items()
            ):
                prep.update(need_prep)
                meas.update(need_meas)
                break
        else:
            groups.append((dict(need_prep), dict(need_meas)))
    return [
        (
            "".join(prep.get(q, "Z") for q in range(n)),
            "".join(meas.get(q, "Z") for q in range(n)),
        )
        for prep, meas in groups
    ]


# -- benchmark circuits ----------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkInstance:
    """One twirled benchmark circuit plus the metadata needed to untwirl it."""

    layer: object
    kind: str
    depth: int
    prep_basis: str
    meas_basis: str
    twirls: tuple
    readout_twirl: str
    circuit: Circuit

    @property
    def layer_id(self):
        return self.layer.layer_id


def random_pauli(n_qubits, rng):
    return PauliString(n_qubits, int(rng.integers(0, 2**n_qubits)), int(rng.integers(0, 2**n_qubits)))


def pauli_gates(pauli):
    return [Gate(ch, (q,)) for q, ch in sorted(pauli.letters().items())]


def basis_gates(basis, table):
    gates = []
    for q, ch in enumerate(basis):
        gates.extend(Gate(kind, (q,)) for kind in table[ch])
    return gates


def readout_gates(readout_twirl):
    return [Gate("X", (q,)) for q, bit in enumerate(readout_twirl) if bit == "X"]


def build_benchmark_circuit(layer, depth, prep_basis, meas_basis, twirls, readout_twirl):
    gates = basis_gates(prep_basis, PREP_GATES)
    layer_gates = [Gate(kind, qubits) for kind, qubits in layer.gates]
    for twirl in twirls:
        gates += pauli_gates(twirl)
        gates += layer_gates
        gates += pauli_gates(conjugate_by_layer(twirl, layer))
    gates += basis_gates(meas_basis, MEASURE_GATES)
    gates += readout_gates(readout_twirl)
    return Circuit(layer.n_qubits, tuple(gates))


def _instance(layer, kind, depth, prep, meas, rng):
    n = layer.n_qubits
    twirls = tuple(random_pauli(n, rng) for _ in range(depth))
    readout = "".join("X" if bit else "I" for bit in rng.integers(0, 2, n))
    circuit = build_benchmark_circuit(layer, depth, prep, meas, twirls, readout)
    return BenchmarkInstance(layer, kind, depth, prep, meas, twirls, readout, circuit)


def generate_benchmarks(
    layer,
    pair_bases,
    single_bases,
    depths=(2, 4, 8, 16),
    twirl_samples=32,
    single_samples=200,
    seed=0,
):
    """Pair instances for every basis, depth and twirl sample, followed by
    single-depth instances for every ``(prep, meas)`` basis pair."""
    depths = check_depths(depths)
    rng = np.random.default_rng(seed)
    out = []
    for basis in pair_bases:
        for depth in depths:
            for _ in range(twirl_samples):
                out.append(_instance(layer, "pair", depth, basis, basis, rng))
    for prep, meas in single_bases:
        for _ in range(single_samples):
            out.append(_instance(layer, "single", 1, prep, meas, rng))
    return out


def estimate_expectation(instance, counts, term):
    """Untwirled expectation of ``term`` from the counts of ``instance``.

    Works for integer counts as well as exact probability maps.
    """
    if not diagonal_in(term, instance.meas_basis):
        raise BasisError(f"{term} is not diagonal in basis {instance.meas_basis}")
    return parity_expectation(counts, term.support, instance.readout_twirl)


def parity_expectation(counts, support, readout_twirl):
    flip = sum(readout_twirl[q] == "X" for q in support) & 1
    total = signed = 0.0
    for bits, count in counts.items():
        parity = (sum(bits[q] == "1" for q in support) + flip) & 1
        total += count
        signed += -count if parity else count
    if total <= 0:
        raise ValueError("empty counts table")
    return signed / total


# -- fitting -----------------------------------------------------------------------


def fit_pair_decay(points, stderrs=None):
    """Fit ``mean(d) = a * exp(-b d)`` by least squares on ``log(mean)``.

    Non-positive means are dropped first. With ``stderrs`` the log-points are
    weighted by ``(mean / stderr)**2``; points with zero error fall back to an
    unweighted fit. ``b`` is clamped at zero (``a`` is then the weighted
    geometric mean) and ``a`` is capped at 1.05.

    Returns
    -------
    a, b : float
    """
    usable = sorted((d, m) for d, m in points.items() if m > 0)
    if len({d for d, _ in usable}) < 2:
        raise FitError(f"need two positive depths, got {dict(points)}")
    d = np.array([p[0] for p in usable], dtype=float)
    means = np.array([p[1] for p in usable])
    y = np.log(means)
    weights = np.ones_like(y)
    if stderrs is not None:
        se = np.array([stderrs[int(k)] for k in d])
        if np.all(se > 1e-12):
            weights = (means / se) ** 2
    slope, intercept = np.polyfit(d, y, 1, w=np.sqrt(weights))
    b = -slope
    if b < 0:
        b = 0.0
        intercept = np.average(y, weights=weights)
    a = min(math.exp(intercept), 1.05)
    return a, float(b)


def decay_r_squared(points):
    """Coefficient of determination of ``log(mean)`` against depth."""
    usable = sorted((d, m) for d, m in points.items() if m > 0)
    d = np.array([p[0] for p in usable], dtype=float)
    y = np.log([p[1] for p in usable])
    slope, intercept = np.polyfit(d, y, 1)
    resid = y - (slope * d + intercept)
    total = ((y - y.mean()) ** 2).sum()
    return 1.0 - (resid**2).sum() / total if total > 0 else 1.0


@dataclass
class TermRecord:
    """Benchmark data and fit results for one model term of one layer."""

    term: PauliString
    partner: PauliString
    pair_estimates: dict = field(default_factory=dict)
    single_estimates: list = field(default_factory=list)
    single_sign: int = 1
    spam: float = None
    decay: float = None
    fidelity: float = None

    @property
    def degenerate(self):
        return self.partner != self.term

    def pair_means(self):
        return {d: float(np.mean(v)) for d, v in sorted(self.pair_estimates.items())}

    def pair_stderrs(self):
        return {
            d: float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
            for d, v in sorted(self.pair_estimates.items())
        }

    @property
    def pair_fidelity(self):
        """``sqrt(f_a f_a') = exp(-b)``."""
        return math.exp(-self.decay)

    def fit(self):
        try:
            self.spam, self.decay = fit_pair_decay(self.pair_means(), self.pair_stderrs())
        except FitError as exc:
            raise FitError(f"term {self.term}: {exc}") from None
        return self


def resolve_fidelities(records, spam=None):
    """Individual fidelities from fitted pair decays and single-depth data.

    ``records`` maps term -> fitted :class:`TermRecord`. A term that is its own
    conjugate gets ``f = exp(-b)``. For a pair of model terms mapped onto each
    other, the measured member gets ``f_a = estimate / spam`` and its partner
    ``f_a' = exp(-2b) / f_a``. ``f_a`` is kept within ``[exp(-2b), 1]`` so that
    neither member exceeds one; clamping is logged. ``spam`` maps term -> SPAM
    coefficient and defaults to the record's own pair-fit amplitude.

    Terms whose conjugate lies outside the model are not resolved.
    """
    out = {}
    for term, rec in records.items():
        if not rec.degenerate:
            out[term] = rec.pair_fidelity
    for term, rec in records.items():
        if not rec.degenerate or rec.partner not in records or term in out:
            continue
        if not rec.single_estimates:
            if records[rec.partner].single_estimates:
                continue
            raise CoverageError(
                f"no single-depth data for degenerate pair {term} / {rec.partner}"
            )
        coeff = (spam or {}).get(term, rec.spam)
        if coeff is None or coeff <= 0:
            raise CoverageError(f"no SPAM coefficient for term {term}")
        raw = rec.single_sign * float(np.mean(rec.single_estimates)) / coeff
        product = rec.pair_fidelity**2
        value = min(max(raw, product), 1.0)
        if value != raw:
            logger.warning(
                "fidelity of %s clamped from %.5f to %.5f (pair product %.5f)",
                term, raw, value, product,
            )
        out[term] = value
        out[rec.partner] = records[rec.partner].pair_fidelity ** 2 / value
    return out


def assemble_rows(records, fidelities):
    """Rows ``(F1, F2, value)`` of the fidelity system.

    Every term whose conjugate differs contributes a pair row
    ``(P_a, P_a', sqrt(f_a f_a'))``; every resolved fidelity a single row
    ``(P_a, P_a, f_a)``.
    """
    rows = []
    for term, rec in records.items():
        if rec.degenerate:
            rows.append((term, rec.partner, rec.pair_fidelity))
    for term in records:
        if term in fidelities:
            rows.append((term, term, fidelities[term]))
    return rows


def solve_noise_model(rows, terms, maxiter=None):
    """Non-negative least squares for ``(M1 + M2) lambda = -ln(b)``.

    ``[M1]_rk = <F1_r, P_k>_sp`` and ``[M2]_rk = <F2_r, P_k>_sp``.

    Returns
    -------
    model : SparseNoiseModel
    residual : float
        Euclidean norm of the solved system's residual.
    """
    terms = list(terms)
    if not terms:
        return SparseNoiseModel(1, ()), 0.0
    values = np.array([v for _, _, v in rows], dtype=float)
    if np.any(values <= 0):
        raise NumericError("fidelity entries must be positive to take logarithms")
    m1 = np.array([[symplectic_product(f1, p) for p in terms] for f1, _, _ in rows])
    m2 = np.array([[symplectic_product(f2, p) for p in terms] for _, f2, _ in rows])
    matrix = (m1 + m2).astype(float)
    rhs = -np.log(values)
    try:
        rates, residual = nnls(matrix, rhs, maxiter=maxiter or 50 * len(terms))
    except RuntimeError as exc:
        rates, *_ = np.linalg.lstsq(matrix, rhs, rcond=None)
        residual = float(np.linalg.norm(matrix @ np.clip(rates, 0, None) - rhs))
        raise NumericError(f"NNLS did not converge (residual {residual:.3e}): {exc}") from None
    model = SparseNoiseModel(terms[0].n_qubits, tuple(zip(terms, rates)))
    return model, float(residual)


# -- noise data ---------------------------------------------------------------------


@dataclass
class NoiseDataFrame:
    """Learned noise models keyed by layer id plus per-qubit readout coefficients."""

    models: dict = field(default_factory=dict)
    spam: dict = field(default_factory=dict)

    def model_for(self, layer):
        try:
            return self.models[layer.layer_id]
        except KeyError:
            raise CoverageError(f"no noise model for layer {layer}") from None

    def to_dict(self):
        out = {lid: m.to_dict() for lid, m in sorted(self.models.items())}
        out["spam"] = {str(q): v for q, v in sorted(self.spam.items())}
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        spam = {int(q): float(v) for q, v in data.pop("spam", {}).items()}
        models = {lid: SparseNoiseModel.from_dict(m, lid) for lid, m in data.items()}
        return cls(models, spam)

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class LayerLearning:
    """Benchmark design and analysis for one Clifford layer."""

    def __init__(self, layer, connectivity):
        self.layer = layer
        self.terms = enumerate_model_terms(connectivity, layer.n_qubits)
        self.pair_bases = select_pair_bases(self.terms, connectivity)
        self.single_bases = select_single_bases(layer, self.terms)
        self.targets = degenerate_targets(layer, self.terms)

    def generate(self, depths, samples, single_samples, seed):
        return generate_benchmarks(
            self.layer, self.pair_bases, self.single_bases,
            depths, samples, single_samples, seed,
        )

    def analyze(self, instances, results):
        records = {
            t: TermRecord(t, conjugate_by_layer(t, self.layer)) for t in self.terms
        }
        targets = {t: p for t, p in self.targets}
        for rec in records.values():
            if rec.term in targets:
                rec.single_sign = conjugation_sign(rec.partner, self.layer)
        for inst, counts in zip(instances, results):
            if inst.kind == "pair":
                for term, rec in records.items():
                    if diagonal_in(term, inst.meas_basis):
                        value = estimate_expectation(inst, counts, term)
                        rec.pair_estimates.setdefault(inst.depth, []).append(value)
            else:
                for term, partner in targets.items():
                    if diagonal_in(term, inst.meas_basis) and diagonal_in(
                        partner, inst.prep_basis
                    ):
                        value = estimate_expectation(inst, counts, term)
                        records[term].single_estimates.append(value)
        for rec in records.values():
            rec.fit()
        fidelities = resolve_fidelities(records, term_spam(records))
        model, residual = solve_noise_model(assemble_rows(records, fidelities), self.terms)
        for term, rec in records.items():
            rec.fidelity = fidelities.get(term, model.fidelity(term))
        model = SparseNoiseModel(
            model.n_qubits, model.terms, self.layer.layer_id, self.layer.description
        )
        return records, model, residual


def readout_coefficients(records_by_layer, n_qubits):
    """Per-qubit average of the pair-fit amplitudes of weight-one terms."""
    spam = {}
    for q in range(n_qubits):
        values = [
            rec.spam
            for records in records_by_layer.values()
            for term, rec in records.items()
            if term.weight == 1 and term.support == (q,)
        ]
        if values:
            spam[q] = float(np.mean(values))
    return spam


def term_spam(records):
    """SPAM coefficient of each term as a product of per-qubit coefficients.

    Pooling the weight-one amplitudes of a layer gives a far less noisy
    divisor for single-depth estimates than any one fitted amplitude.
    """
    n = max(t.n_qubits for t in records)
    per_qubit = readout_coefficients({None: records}, n)
    out = {}
    for term, rec in records.items():
        if all(q in per_qubit for q in term.support):
            out[term] = float(np.prod([per_qubit[q] for q in term.support]))
    return out


class SparsePauliTomography(BaseEstimator):
    """Learn a sparse Pauli-Lindblad model for every Clifford layer of a
    circuit set.

    Parameters
    ----------
    executor : callable
        ``executor(list_of_circuits) -> list_of_counts``.
    connectivity : list of (int, int), optional
        Qubit pairs that carry weight-two model terms. Defaults to the pairs
        touched by two-qubit gates in the fitted circuits.
    depths : sequence of even int
    samples : int
        Pauli twirl samples per basis and depth.
    single_samples : int
        Twirl samples per single-depth basis.
    seed : int

    Attributes
    ----------
    layers_ : list of CliffordLayerSpec
    learners_ : dict
        ``layer_id -> LayerLearning``.
    records_ : dict
        ``layer_id -> {term: TermRecord}``.
    noise_data_ : NoiseDataFrame
    residuals_ : dict
        ``layer_id -> NNLS residual``.
    """

    def __init__(
        self,
        executor=None,
        connectivity=None,
        depths=(2, 4, 8, 16),
        samples=32,
        single_samples=200,
        seed=0,
    ):
        self.executor = executor
        self.connectivity = connectivity
        self.depths = depths
        self.samples = samples
        self.single_samples = single_samples
        self.seed = seed

    def _connectivity(self, circuits, n_qubits):
        if self.connectivity is not None:
            return normalize_edges(self.connectivity, n_qubits)
        edges = {tuple(sorted(g.qubits)) for c in circuits for g in c.gates if g.is_two_qubit}
        return sorted(edges)

    def generate(self, circuits):
        """Benchmark instances for every distinct Clifford layer in ``circuits``."""
        circuits = check_circuits(circuits)
        check_positive_int(self.samples, "samples")
        check_positive_int(self.single_samples, "single_samples")
        n = circuits[0].n_qubits
        self.n_qubits_ = n
        edges = self._connectivity(circuits, n)
        self.layers_ = distinct_clifford_layers(parse_dressed(c) for c in circuits)
        self.learners_ = {}
        self.instances_ = {}
        seeds = np.random.SeedSequence(self.seed).spawn(max(len(self.layers_), 1))
        for layer, ss in zip(self.layers_, seeds):
            learner = LayerLearning(layer, edges)
            self.learners_[layer.layer_id] = learner
            self.instances_[layer.layer_id] = learner.generate(
                self.depths, self.samples, self.single_samples,
                int(ss.generate_state(1)[0]),
            )
        return [inst for insts in self.instances_.values() for inst in insts]

    def fit(self, circuits, y=None, results=None):
        """Generate, execute and analyze the benchmarks.

        ``results`` may hold precomputed counts for :meth:`generate`'s
        instances, in which case the executor is not called.
        """
        instances = self.generate(circuits)
        if results is None:
            if self.executor is None:
                raise ValueError("an executor is required when results are not given")
            results = self.executor([inst.circuit for inst in instances])
        if len(results) != len(instances):
            raise ValueError(f"{len(results)} results for {len(instances)} circuits")
        self.records_ = {}
        self.residuals_ = {}
        models = {}
        start = 0
        for layer in self.layers_:
            insts = self.instances_[layer.layer_id]
            chunk = results[start : start + len(insts)]
            start += len(insts)
            records, model, residual = self.learners_[layer.layer_id].analyze(insts, chunk)
            self.records_[layer.layer_id] = records
            self.residuals_[layer.layer_id] = residual
            models[layer.layer_id] = model
        spam = readout_coefficients(self.records_, self.n_qubits_)
        self.noise_data_ = NoiseDataFrame(models, spam)
        return self

    def decay_table(self):
        """Rows ``(layer_id, term, depth, mean, stderr, a, b)`` for plotting decays."""
        check_is_fitted(self, "records_")
        rows = []
        for lid, records in self.records_.items():
            for term, rec in records.items():
                stderrs = rec.pair_stderrs()
                for depth, mean in rec.pair_means().items():
                    rows.append((lid, term.label, depth, mean, stderrs[depth], rec.spam, rec.decay))
        return rows
