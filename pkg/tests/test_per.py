import math

import numpy as np
import pytest
from sklearn.base import clone

from pauliper.circuit import Circuit, Gate, parse_dressed
from pauliper.exceptions import CoverageError, MitigationError
from pauliper.noise import SparseNoiseModel, apply_pauli_channel
from pauliper.pauli import CliffordLayerSpec, PauliString, dense_matrix, enumerate_model_terms
from pauliper.per import (
    PERInstance,
    PERMitigator,
    PERResult,
    adjusted_expectation,
    channel_superoperator,
    model_superoperator,
    overhead,
    partial_inverse,
    plan_measurements,
    sample_per_circuit,
    vzne_fit,
)
from pauliper.simulator import DensityMatrixSimulator, NoiseSpec, SimulatorExecutor, noiseless_expectation
from pauliper.tomography import NoiseDataFrame

CX = CliffordLayerSpec(2, (("CX", (0, 1)),))


def P(label):
    return PauliString.from_label(label)


def random_model(layer, seed, high=0.05):
    rng = np.random.default_rng(seed)
    terms = enumerate_model_terms([(0, 1)] if layer.n_qubits > 1 else [], layer.n_qubits)
    return SparseNoiseModel(
        layer.n_qubits,
        tuple((t, rng.uniform(0, high)) for t in terms),
        layer.layer_id,
        layer.description,
    )


def sample_circuit():
    return Circuit(
        2,
        (
            Gate("RY", (0,), 0.7),
            Gate("H", (1,)),
            Gate("CX", (0, 1)),
            Gate("RZ", (1,), 0.4),
            Gate("RX", (0,), -0.3),
            Gate("CX", (0, 1)),
            Gate("RY", (1,), 0.9),
        ),
    )


def exact_expectation(circuit, spec, observable):
    rho = DensityMatrixSimulator(spec).final_state(circuit)
    return float(np.trace(dense_matrix(observable) @ rho).real)


class TestPartialInverse:
    def test_xi_one_is_identity(self):
        params = partial_inverse(random_model(CX, 0), 1.0)
        assert np.all(params.weights == 1.0) and params.gamma == 1.0

    def test_overhead_example(self):
        total = 0.9907
        model = SparseNoiseModel(1, ((P("X"), total / 3), (P("Y"), total / 3), (P("Z"), total / 3)))
        assert partial_inverse(model, 0.0).gamma == pytest.approx(math.exp(1.9814), rel=1e-9)
        assert partial_inverse(model, 0.0).gamma == pytest.approx(7.25, abs=5e-3)
        assert partial_inverse(model, 0.5).gamma == pytest.approx(2.69, abs=5e-3)

    @pytest.mark.parametrize("xi", [0.0, 0.25, 0.5, 0.9])
    def test_overhead_law(self, xi):
        model = random_model(CX, 1)
        g0 = partial_inverse(model, 0.0).gamma
        assert partial_inverse(model, xi).gamma == pytest.approx(g0 ** (1 - xi))

    @pytest.mark.parametrize("xi", [0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    def test_invariants(self, xi):
        params = partial_inverse(random_model(CX, 2), xi)
        assert np.all((params.weights > 0.5) & (params.weights <= 1.0))
        assert params.gamma >= 1.0
        if xi >= 1:
            assert params.gamma == 1.0
        assert params.sign == (-1 if xi < 1 else (0 if xi == 1 else 1))

    def test_negative(self):
        with pytest.raises(ValueError):
            partial_inverse(random_model(CX, 0), -0.1)

    def test_overhead_multiplies_layers(self):
        a, b = random_model(CX, 3), random_model(CX, 4)
        assert overhead([a, b], 0.0) == pytest.approx(
            partial_inverse(a, 0.0).gamma * partial_inverse(b, 0.0).gamma
        )


class TestChannelIdentities:
    model = random_model(CX, 5, high=0.1)

    def test_model_superoperator_matches_channel(self):
        # compare against the density-matrix implementation on a basis of matrix units
        lam = model_superoperator(self.model)
        for k in range(16):
            e = np.zeros(16, dtype=complex)
            e[k] = 1
            rho = e.reshape(4, 4)
            assert np.allclose(lam @ e, apply_pauli_channel(rho, self.model).reshape(-1), atol=1e-12)

    def test_inverse_at_zero(self):
        inv = channel_superoperator(partial_inverse(self.model, 0.0))
        assert np.allclose(inv @ model_superoperator(self.model), np.eye(16), atol=1e-10)

    def test_identity_at_one(self):
        assert np.allclose(channel_superoperator(partial_inverse(self.model, 1.0)), np.eye(16))

    def test_amplify_at_two(self):
        lam = model_superoperator(self.model)
        amp = channel_superoperator(partial_inverse(self.model, 2.0))
        assert np.allclose(amp, lam, atol=1e-12)

    @pytest.mark.parametrize("xi", [0.25, 0.5, 1.5])
    def test_scales_rates(self, xi):
        composed = channel_superoperator(partial_inverse(self.model, xi)) @ model_superoperator(self.model)
        assert np.allclose(composed, model_superoperator(self.model.scaled(xi)), atol=1e-10)


class TestSampling:
    def dressed(self):
        return parse_dressed(Circuit(2, (Gate("H", (0,)), Gate("CX", (0, 1)))))

    def test_zero_rates(self):
        model = SparseNoiseModel(2, tuple((t, 0.0) for t in enumerate_model_terms([(0, 1)], 2)))
        params = {CX.layer_id: partial_inverse(model, 0.0)}
        rng = np.random.default_rng(0)
        for _ in range(20):
            inst = sample_per_circuit(self.dressed(), params, "ZZ", rng)
            assert inst.n_insertions == 0 and inst.alpha == 1.0

    def test_xi_one(self):
        params = {CX.layer_id: partial_inverse(random_model(CX, 0, high=0.5), 1.0)}
        rng = np.random.default_rng(1)
        for _ in range(20):
            inst = sample_per_circuit(self.dressed(), params, "ZZ", rng)
            assert inst.n_insertions == 0 and inst.alpha == 1.0 and inst.sign == 1

    def test_insertion_frequency(self):
        model = SparseNoiseModel(2, ((P("ZI"), 0.2),))
        params = {CX.layer_id: partial_inverse(model, 0.0)}
        dressed = parse_dressed(Circuit(2, (Gate("CX", (0, 1)),)))
        rng = np.random.default_rng(2)
        trials = 100_000
        hits = sum(
            sample_per_circuit(dressed, params, "ZZ", rng).n_insertions for _ in range(trials)
        )
        p = (1 - math.exp(-0.4)) / 2
        assert p == pytest.approx(0.1648, abs=1e-4)
        assert abs(hits / trials - p) <= 3 * math.sqrt(p * (1 - p) / trials)

    def test_sign_bookkeeping(self):
        model = random_model(CX, 6, high=0.3)
        params = {CX.layer_id: partial_inverse(model, 0.0)}
        d = parse_dressed(sample_circuit())
        rng = np.random.default_rng(3)
        gamma = partial_inverse(model, 0.0).gamma ** 2
        for _ in range(200):
            inst = sample_per_circuit(d, params, "ZZ", rng)
            assert inst.sign == (-1) ** inst.n_insertions
            assert inst.alpha == pytest.approx(inst.sign * gamma)

    def test_amplification_has_no_signs(self):
        params = {CX.layer_id: partial_inverse(random_model(CX, 7, high=0.3), 2.0)}
        rng = np.random.default_rng(4)
        insts = [sample_per_circuit(self.dressed(), params, "ZZ", rng) for _ in range(200)]
        assert all(i.sign == 1 and i.alpha == 1.0 for i in insts)
        assert any(i.n_insertions for i in insts)

    def test_seeded(self):
        params = {CX.layer_id: partial_inverse(random_model(CX, 0), 0.0)}
        a = sample_per_circuit(self.dressed(), params, "ZX", np.random.default_rng(9))
        b = sample_per_circuit(self.dressed(), params, "ZX", np.random.default_rng(9))
        assert a == b

    def test_missing_layer(self):
        with pytest.raises(CoverageError):
            sample_per_circuit(self.dressed(), {}, "ZZ", np.random.default_rng(0))

    def test_logical_circuit_unchanged_without_insertions(self):
        # with all weights at one the sampled circuit is the twirled original
        params = {CX.layer_id: partial_inverse(random_model(CX, 0), 1.0)}
        rng = np.random.default_rng(5)
        c = sample_circuit()
        for _ in range(10):
            inst = sample_per_circuit(parse_dressed(c), params, "ZZ", rng)
            (counts,) = SimulatorExecutor(shots=None)([inst.circuit])
            value = adjusted_expectation(inst, counts, P("ZZ"))
            assert value == pytest.approx(noiseless_expectation(c, P("ZZ")), abs=1e-10)


def bare_instance(basis="Z", alpha=1.0, readout="I", xi=1.0):
    n = len(basis)
    return PERInstance(0, xi, (), (), readout, 1, alpha, basis, Circuit(n))


class TestAdjusted:
    def test_raw(self):
        assert adjusted_expectation(bare_instance(), {"0": 10}, P("Z")) == 1.0

    def test_mitigation(self):
        value = adjusted_expectation(bare_instance(), {"0": 75, "1": 25}, P("Z"), {0: 0.8})
        assert value == pytest.approx(0.625)

    def test_alpha(self):
        value = adjusted_expectation(bare_instance(alpha=-3.0, xi=0.0), {"0": 75, "1": 25}, P("Z"))
        assert value == pytest.approx(-1.5)

    def test_readout_untwirl(self):
        assert adjusted_expectation(bare_instance(readout="X"), {"1": 10}, P("Z")) == 1.0

    def test_bad_spam(self):
        with pytest.raises(MitigationError):
            adjusted_expectation(bare_instance(), {"0": 1}, P("Z"), {0: 0.0})

    def test_wrong_basis(self):
        with pytest.raises(MitigationError):
            adjusted_expectation(bare_instance("X"), {"0": 1}, P("Z"))


class TestVzne:
    def test_exact(self):
        fit = vzne_fit([(x, 0.8 * math.exp(-0.3 * x), 0.01) for x in (0.5, 1, 2)])
        assert fit.a == pytest.approx(0.8, abs=1e-9) and fit.b == pytest.approx(0.3, abs=1e-9)
        assert fit.method == "loglinear" and not fit.flagged

    def test_negative_means(self):
        fit = vzne_fit([(x, -0.6 * math.exp(-0.2 * x), 0.0) for x in (0.5, 1, 2)])
        assert fit.a == pytest.approx(-0.6, abs=1e-9)

    def test_constant(self):
        fit = vzne_fit([(x, 0.4, 0.02) for x in (0.5, 1, 2)])
        assert (fit.a, fit.b) == (pytest.approx(0.4), pytest.approx(0.0, abs=1e-12))

    def test_rising_clamps(self):
        fit = vzne_fit([(0.5, 0.3, 0.01), (1, 0.32, 0.01), (2, 0.35, 0.01)])
        assert fit.b == 0.0

    def test_mixed_signs(self):
        fit = vzne_fit([(0.5, 0.05, 0.01), (1.0, 0.02, 0.01), (2.0, -0.01, 0.01)])
        assert fit.method in ("nonlinear", "linear")
        assert fit.b >= 0 and math.isfinite(fit.a)

    def test_single_strength(self):
        fit = vzne_fit([(1.0, 0.5, 0.1)])
        assert fit.method == "none" and fit.flagged and fit.a == 0.5

    def test_stderr_propagation(self):
        # Monte Carlo spread of the intercept matches the reported error
        rng = np.random.default_rng(0)
        xs, se = (0.5, 1.0, 2.0), 0.01
        fits = [
            vzne_fit([(x, 0.7 * math.exp(-0.4 * x) + rng.normal(0, se), se) for x in xs])
            for _ in range(400)
        ]
        spread = np.std([f.a for f in fits])
        assert np.mean([f.stderr for f in fits]) == pytest.approx(spread, rel=0.2)


class TestPlanMeasurements:
    def test_magnetization(self):
        obs = [P(lbl) for lbl in ("ZIII", "IZII", "IIZI", "IIIZ")]
        assert list(plan_measurements(obs)) == ["ZZZZ"]

    def test_incompatible(self):
        assert len(plan_measurements([P("X"), P("Z")])) == 2

    def test_compatible(self):
        groups = plan_measurements([P("XX"), P("XI"), P("IX")])
        assert list(groups) == ["XX"] and len(groups["XX"]) == 3

    def test_partition(self):
        obs = [P(lbl) for lbl in ("XZ", "ZZ", "IY", "XI", "ZI")]
        groups = plan_measurements(obs)
        members = [o for g in groups.values() for o in g]
        assert sorted(o.label for o in members) == sorted(o.label for o in obs)


def mitigator(model, samples, strengths, seed=0, **kw):
    return PERMitigator(
        noise_data={CX.layer_id: model},
        executor=None,
        observables=["ZI", "IZ", "XX"],
        noise_strengths=strengths,
        samples=samples,
        seed=seed,
        **kw,
    )


class TestMitigator:
    model = random_model(CX, 8, high=0.04)

    def spec(self):
        spec = NoiseSpec()
        spec.add_model(CX, self.model)
        return spec

    def test_sklearn_params(self):
        mit = mitigator(self.model, 10, (0.5, 1.0))
        assert clone(mit).get_params()["samples"] == 10
        assert mit.set_params(samples=3).samples == 3

    def test_coverage(self):
        mit = PERMitigator({}, observables=["ZZ"], samples=1)
        with pytest.raises(CoverageError):
            mit.fit([sample_circuit()])

    @pytest.mark.parametrize("xi", [0.0, 0.5, 2.0])
    def test_mean_matches_scaled_noise(self, xi):
        mit = mitigator(self.model, 3000, (xi,))
        mit.executor = SimulatorExecutor(self.spec(), shots=None)
        mit.fit([sample_circuit()]).predict()
        scaled = NoiseSpec()
        scaled.add_model(CX, self.model.scaled(xi))
        for label, res in mit.results_[0].items():
            exact = exact_expectation(sample_circuit(), scaled, P(label))
            se = res.stderr(xi)
            assert abs(res.mean(xi) - exact) <= max(3 * se, 1e-12), label

    def test_batching_does_not_change_results(self):
        runs = []
        for batch in (None, 7):
            mit = mitigator(self.model, 20, (0.5, 1.0, 2.0), batch_size=batch)
            mit.executor = SimulatorExecutor(self.spec(), shots=None)
            runs.append(mit.fit([sample_circuit()]).predict())
        assert np.array_equal(runs[0], runs[1])

    def test_precomputed_results(self):
        mit = mitigator(self.model, 5, (0.5, 1.0)).fit([sample_circuit()])
        instances = mit.generate()
        results = SimulatorExecutor(self.spec(), shots=None)([i.circuit for i in instances])
        out = mit.predict(results=results)
        assert out.shape == (1, 3)
        with pytest.raises(ValueError):
            mit.predict(results=results[:-1])

    def test_uses_noise_data_spam(self):
        frame = NoiseDataFrame({CX.layer_id: self.model}, {0: 0.5, 1: 0.5})
        plain = mitigator(self.model, 5, (1.0, 2.0))
        mitigated = PERMitigator(
            frame, observables=["ZI", "IZ", "XX"], noise_strengths=(1.0, 2.0), samples=5
        )
        for mit in (plain, mitigated):
            mit.executor = SimulatorExecutor(self.spec(), shots=None)
            mit.fit([sample_circuit()]).predict()
        a = plain.results_[0]["ZI"].mean(1.0)
        b = mitigated.results_[0]["ZI"].mean(1.0)
        assert b == pytest.approx(2 * a)
        c = mitigated.results_[0]["XX"].mean(1.0)
        assert c == pytest.approx(4 * plain.results_[0]["XX"].mean(1.0))

    def test_overheads(self):
        mit = mitigator(self.model, 1, (0.0, 1.0)).fit([sample_circuit()])
        (ov,) = mit.overheads()
        assert ov[0.0] == pytest.approx(overhead([self.model, self.model], 0.0))
        assert ov[1.0] == 1.0


def test_result_serialization():
    res = PERResult(P("Z"), {0.5: [0.5, 0.7], 1.0: [0.4, 0.5]}).extrapolate()
    d = res.to_dict()
    assert d["observable"] == "Z" and [s["xi"] for s in d["strengths"]] == [0.5, 1.0]
    assert d["zero_noise"] == res.fit.a
