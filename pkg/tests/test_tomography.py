import math

import numpy as np
import pytest

from pauliper.circuit import Circuit, Gate, circuit_unitary
from pauliper.exceptions import BasisError, CoverageError, FitError
from pauliper.noise import SparseNoiseModel
from pauliper.pauli import (
    CliffordLayerSpec,
    PauliString,
    all_paulis,
    conjugate_by_layer,
    enumerate_model_terms,
    path_edges,
)
from pauliper.simulator import NoiseSpec, SimulatorExecutor, execute
from pauliper.tomography import (
    BenchmarkInstance,
    NoiseDataFrame,
    SparsePauliTomography,
    TermRecord,
    assemble_rows,
    build_benchmark_circuit,
    degenerate_targets,
    diagonal_in,
    estimate_expectation,
    fit_pair_decay,
    generate_benchmarks,
    resolve_fidelities,
    select_pair_bases,
    select_single_bases,
    solve_noise_model,
)

CX = CliffordLayerSpec(2, (("CX", (0, 1)),))


def P(label):
    return PauliString.from_label(label)


def planted(layer, edges, seed, high=0.02):
    rng = np.random.default_rng(seed)
    terms = enumerate_model_terms(edges, layer.n_qubits)
    return SparseNoiseModel(layer.n_qubits, tuple((t, rng.uniform(0, high)) for t in terms))


def fake_instance(meas, readout):
    layer = CliffordLayerSpec(len(meas), ())
    return BenchmarkInstance(layer, "pair", 2, meas, meas, (), readout, Circuit(len(meas)))


class TestPairBases:
    def test_single_qubit(self):
        assert select_pair_bases(enumerate_model_terms([], 1)) == ["X", "Y", "Z"]

    def test_one_edge(self):
        bases = select_pair_bases(enumerate_model_terms([(0, 1)], 2))
        assert sorted(bases) == sorted(a + b for a in "XYZ" for b in "XYZ")

    @pytest.mark.parametrize("n", [3, 4, 5, 6])
    def test_path_gives_nine(self, n):
        edges = path_edges(n)
        terms = enumerate_model_terms(edges, n)
        bases = select_pair_bases(terms, edges)
        assert len(bases) == 9
        assert all(any(diagonal_in(t, b) for b in bases) for t in terms)

    def test_even_ring_gives_nine(self):
        edges = path_edges(4) + [(3, 0)]
        assert len(select_pair_bases(enumerate_model_terms(edges, 4), edges)) == 9


class TestSingleBases:
    def test_identity_layer(self):
        layer = CliffordLayerSpec(2, ())
        assert select_single_bases(layer, enumerate_model_terms([(0, 1)], 2)) == []

    @pytest.mark.parametrize(
        "layer",
        [
            CX,
            CliffordLayerSpec(2, (("CZ", (0, 1)),)),
            CliffordLayerSpec(4, (("CX", (0, 1)), ("CX", (2, 3)))),
            CliffordLayerSpec(4, (("CX", (1, 2)),)),
            CliffordLayerSpec(6, (("CX", (0, 1)), ("CZ", (2, 3)), ("SWAP", (4, 5)))),
        ],
    )
    def test_coverage_and_count(self, layer):
        terms = enumerate_model_terms(path_edges(layer.n_qubits), layer.n_qubits)
        bases = select_single_bases(layer, terms)
        assert len(bases) <= 6
        for target, partner in degenerate_targets(layer, terms):
            assert any(
                diagonal_in(partner, prep) and diagonal_in(target, meas) for prep, meas in bases
            )

    def test_cx_pairs(self):
        pairs = {(a.label, b.label) for a, b in degenerate_targets(CX, enumerate_model_terms([(0, 1)], 2))}
        assert ("XI", "XX") in pairs or ("XX", "XI") in pairs
        assert ("IZ", "ZZ") in pairs or ("ZZ", "IZ") in pairs


class TestGenerate:
    def test_counting(self):
        out = generate_benchmarks(CX, ["ZZ"], [], depths=[2], twirl_samples=1)
        assert len(out) == 1 and out[0].depth == 2 and out[0].kind == "pair"

    def test_default_cx_count(self):
        bases = select_pair_bases(enumerate_model_terms([(0, 1)], 2))
        out = generate_benchmarks(CX, bases, [])
        assert len(out) == 9 * 4 * 32 == 1152

    def test_odd_depth(self):
        with pytest.raises(ValueError):
            generate_benchmarks(CX, ["ZZ"], [], depths=[3])

    def test_seeded(self):
        a = generate_benchmarks(CX, ["XY"], [("ZZ", "XZ")], depths=[2, 4], twirl_samples=3, single_samples=2, seed=5)
        b = generate_benchmarks(CX, ["XY"], [("ZZ", "XZ")], depths=[2, 4], twirl_samples=3, single_samples=2, seed=5)
        assert [i.circuit for i in a] == [i.circuit for i in b]
        assert [i.kind for i in a].count("single") == 2

    @pytest.mark.parametrize(
        "layer",
        [CX, CliffordLayerSpec(3, (("CZ", (0, 2)), ("H", (1,)))), CliffordLayerSpec(3, (("SWAP", (1, 2)),))],
    )
    def test_twirls_cancel(self, layer):
        n = layer.n_qubits
        basis = "XYZ"[:n]
        for inst in generate_benchmarks(layer, [basis], [], depths=[2, 4], twirl_samples=3, seed=1):
            plain = build_benchmark_circuit(
                layer, inst.depth, basis, basis, [PauliString.identity(n)] * inst.depth, "I" * n
            )
            u = circuit_unitary(inst.circuit)
            v = circuit_unitary(plain)
            # undo the readout X gates before comparing
            flips = Circuit(n, tuple(Gate("X", (q,)) for q, c in enumerate(inst.readout_twirl) if c == "X"))
            u = circuit_unitary(flips) @ u
            k = np.argmax(np.abs(v))
            assert np.allclose(u, u.flat[k] / v.flat[k] * v, atol=1e-10)


class TestEstimateExpectation:
    def test_ground(self):
        assert estimate_expectation(fake_instance("ZZ", "II"), {"00": 100}, P("ZI")) == 1.0

    def test_set_bit(self):
        assert estimate_expectation(fake_instance("ZZ", "II"), {"10": 100}, P("ZI")) == -1.0

    def test_untwirl(self):
        assert estimate_expectation(fake_instance("ZZ", "XI"), {"10": 100}, P("ZI")) == 1.0

    def test_mixed(self):
        value = estimate_expectation(fake_instance("ZZ", "II"), {"00": 30, "11": 10, "01": 60}, P("ZZ"))
        assert value == pytest.approx(-0.2)

    def test_wrong_basis(self):
        with pytest.raises(BasisError):
            estimate_expectation(fake_instance("XZ", "II"), {"00": 1}, P("ZI"))


class TestFitPairDecay:
    def test_exact_recovery(self):
        points = {d: 0.98 * math.exp(-0.05 * d) for d in (2, 4, 8, 16)}
        a, b = fit_pair_decay(points)
        assert a == pytest.approx(0.98, abs=1e-9)
        assert b == pytest.approx(0.05, abs=1e-9)

    def test_flat(self):
        assert fit_pair_decay({2: 1.0, 4: 1.0, 8: 1.0}) == (pytest.approx(1.0), 0.0)

    def test_rising_data_clamps_b(self):
        a, b = fit_pair_decay({2: 0.9, 4: 0.95})
        assert b == 0.0 and 0.9 < a < 0.95

    def test_drops_non_positive(self):
        a, b = fit_pair_decay({2: 0.9 * math.exp(-0.2), 4: 0.9 * math.exp(-0.4), 16: -0.01})
        assert (a, b) == (pytest.approx(0.9), pytest.approx(0.1))

    def test_too_few_points(self):
        with pytest.raises(FitError):
            fit_pair_decay({2: 0.5, 4: -0.1})
        with pytest.raises(FitError):
            fit_pair_decay({2: -0.5, 4: -0.1})

    def test_weighted_still_exact(self):
        points = {d: 0.9 * math.exp(-0.03 * d) for d in (2, 4, 8)}
        a, b = fit_pair_decay(points, {2: 0.01, 4: 0.02, 8: 0.05})
        assert (a, b) == (pytest.approx(0.9), pytest.approx(0.03))


def exact_records(layer, model, spam=1.0, terms=None):
    """Fitted records built from the exact pair products of ``model``."""
    records = {}
    for term in terms or model.paulis:
        partner = conjugate_by_layer(term, layer)
        rec = TermRecord(term, partner)
        product = model.fidelity(term) * model.fidelity(partner)
        rec.pair_estimates = {d: [spam * product ** (d / 2)] for d in (2, 4, 8)}
        rec.fit()
        records[term] = rec
    return records


class TestResolve:
    def test_noiseless(self):
        model = SparseNoiseModel(2, tuple((t, 0.0) for t in enumerate_model_terms([(0, 1)], 2)))
        records = exact_records(CX, model)
        for term, partner in degenerate_targets(CX, model.paulis):
            records[term].single_estimates = [1.0]
        assert all(f == pytest.approx(1.0) for f in resolve_fidelities(records).values())

    def test_self_conjugate(self):
        layer = CliffordLayerSpec(1, ())
        model = SparseNoiseModel(1, ((P("Z"), 0.05),))
        records = exact_records(layer, model, terms=enumerate_model_terms([], 1))
        f = resolve_fidelities(records)
        assert f[P("Z")] == pytest.approx(1.0)
        assert f[P("X")] == pytest.approx(math.exp(-0.1))

    def test_degenerate_pair_split(self):
        records = {P("XI"): TermRecord(P("XI"), P("XX")), P("XX"): TermRecord(P("XX"), P("XI"))}
        for rec in records.values():
            rec.spam, rec.decay = 0.9, -0.5 * math.log(0.95 * 0.99)
        records[P("XI")].single_estimates = [0.9 * 0.95]
        f = resolve_fidelities(records)
        assert f[P("XI")] == pytest.approx(0.95)
        assert f[P("XX")] == pytest.approx(0.99)

    def test_clamps_product(self, caplog):
        records = {P("XI"): TermRecord(P("XI"), P("XX")), P("XX"): TermRecord(P("XX"), P("XI"))}
        for rec in records.values():
            rec.spam, rec.decay = 1.0, 0.1
        records[P("XI")].single_estimates = [0.5]
        f = resolve_fidelities(records)
        assert f[P("XI")] * f[P("XX")] <= 1 + 1e-12
        assert f[P("XX")] <= 1 + 1e-12
        assert "clamped" in caplog.text

    def test_missing_single_data(self):
        records = {P("XI"): TermRecord(P("XI"), P("XX")), P("XX"): TermRecord(P("XX"), P("XI"))}
        for rec in records.values():
            rec.spam, rec.decay = 1.0, 0.01
        with pytest.raises(CoverageError):
            resolve_fidelities(records)


class TestSolve:
    def test_all_ones(self):
        terms = enumerate_model_terms([(0, 1)], 2)
        model, residual = solve_noise_model([(t, t, 1.0) for t in terms], terms)
        assert np.allclose(model.rates, 0.0) and residual == pytest.approx(0.0)

    def test_single_qubit_round_trip(self):
        truth = SparseNoiseModel(1, ((P("Z"), 0.05),))
        terms = enumerate_model_terms([], 1)
        rows = [(t, t, truth.fidelity(t)) for t in terms]
        model, residual = solve_noise_model(rows, terms)
        assert dict(zip([t.label for t in model.paulis], model.rates)) == {
            "X": pytest.approx(0.0, abs=1e-9),
            "Y": pytest.approx(0.0, abs=1e-9),
            "Z": pytest.approx(0.05, abs=1e-9),
        }
        assert residual < 1e-9

    def test_cx_exact_records(self):
        truth = planted(CX, [(0, 1)], seed=3)
        records = exact_records(CX, truth)
        for term, partner in degenerate_targets(CX, truth.paulis):
            records[term].single_estimates = [truth.fidelity(term)]
            records[term].single_sign = 1
        fidelities = resolve_fidelities(records)
        model, residual = solve_noise_model(assemble_rows(records, fidelities), truth.paulis)
        assert residual < 1e-8
        assert np.allclose(model.rates, truth.rates, atol=1e-9)


def tomography_on(layer_gates, spec, shots, seed=0, **kw):
    n = 2
    circuit = Circuit(n, tuple(Gate(k, q) for k, q in layer_gates))
    ex = SimulatorExecutor(noise=spec, shots=shots, seed=seed)
    return SparsePauliTomography(ex, seed=seed, **kw).fit([circuit])


class TestEndToEnd:
    def test_exact_round_trip(self):
        truth = planted(CX, [(0, 1)], seed=11)
        spec = NoiseSpec()
        spec.add_model(CX, truth)
        tomo = tomography_on([("CX", (0, 1))], spec, None, samples=2, single_samples=2)
        learned = tomo.noise_data_.models[CX.layer_id]
        assert tomo.residuals_[CX.layer_id] <= 1e-8
        for p in all_paulis(2):
            assert learned.fidelity(p) == pytest.approx(truth.fidelity(p), abs=1e-9)
        assert tomo.noise_data_.spam == {0: pytest.approx(1.0), 1: pytest.approx(1.0)}

    def test_zero_noise(self):
        tomo = tomography_on([("CZ", (0, 1))], NoiseSpec(), None, samples=1, single_samples=1)
        (model,) = tomo.noise_data_.models.values()
        assert np.allclose(model.rates, 0.0, atol=1e-12)

    def test_readout_error_goes_to_spam(self):
        spec = NoiseSpec(readout={0: (0.05, 0.05)})
        tomo = tomography_on([("CX", (0, 1))], spec, None, samples=4, single_samples=4)
        assert tomo.noise_data_.spam[0] == pytest.approx(0.9, abs=1e-9)
        (model,) = tomo.noise_data_.models.values()
        assert np.allclose(model.rates, 0.0, atol=1e-9)

    def test_shot_noise_recovers_fidelities(self):
        truth = planted(CX, [(0, 1)], seed=2, high=0.03)
        spec = NoiseSpec()
        spec.add_model(CX, truth)
        tomo = tomography_on([("CX", (0, 1))], spec, 1000, seed=3, samples=8, single_samples=40)
        learned = tomo.noise_data_.models[CX.layer_id]
        for p in all_paulis(2):
            assert learned.fidelity(p) == pytest.approx(truth.fidelity(p), abs=0.02)
        for records in tomo.records_.values():
            for rec in records.values():
                assert 0 < rec.spam <= 1.05 and rec.decay >= 0

    def test_decay_table(self):
        tomo = tomography_on([("CX", (0, 1))], NoiseSpec(), None, samples=1, single_samples=1, depths=(2, 4))
        rows = tomo.decay_table()
        assert len(rows) == 15 * 2
        assert {r[2] for r in rows} == {2, 4}

    def test_results_length_checked(self):
        circuit = Circuit(2, (Gate("CX", (0, 1)),))
        with pytest.raises(ValueError):
            SparsePauliTomography(samples=1, single_samples=1).fit([circuit], results=[{"00": 1}])


def test_noise_data_round_trip(tmp_path):
    truth = planted(CX, [(0, 1)], seed=1)
    model = SparseNoiseModel(2, truth.terms, CX.layer_id, CX.description)
    frame = NoiseDataFrame({CX.layer_id: model}, {0: 0.97, 1: 0.95})
    frame.dump(tmp_path / "n.json")
    again = NoiseDataFrame.load(tmp_path / "n.json")
    assert again.to_dict() == frame.to_dict()
    assert again.model_for(CX).rates == pytest.approx(model.rates)
    with pytest.raises(CoverageError):
        again.model_for(CliffordLayerSpec(2, (("CZ", (0, 1)),)))


def test_execute_probability_maps_feed_estimates():
    layer = CliffordLayerSpec(1, ())
    inst = generate_benchmarks(layer, ["Z"], [], depths=[2], twirl_samples=1, seed=0)[0]
    (probs,) = execute([inst.circuit], None)
    assert estimate_expectation(inst, probs, P("Z")) == pytest.approx(1.0)
