from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import simulate, z_expectation
from qempde.ansatz import (AnsatzSpec, CompiledCircuit, InputPoint, evaluate_fields, evaluate_u, gate_sequence,
                           instructions, mean_fidelity, noise_locations, output_state, output_states)
from qempde.errors import ConfigurationError, ValidationError
from qempde.noise import NoiseConfig
from qempde.qstate import DensityMatrix, GateOp, apply_gate, fidelity_pure, set_validation, zero_state


class TestCounts:
    def test_base_counts(self):
        spec = AnsatzSpec(6, 4)
        assert (spec.param_count, spec.gate_count) == (48, 68)

    def test_extended_counts(self):
        spec = AnsatzSpec(6, 4, "constrained")
        assert (spec.param_count, spec.gate_count) == (72, 92)

    def test_small(self):
        spec = AnsatzSpec(2, 1)
        assert (spec.param_count, spec.gate_count) == (4, 5)

    @pytest.mark.parametrize("n", range(1, 9))
    @pytest.mark.parametrize("layers", range(1, 7))
    @pytest.mark.parametrize("variant", ["unconstrained", "constrained"])
    def test_closed_forms(self, n, layers, variant):
        spec = AnsatzSpec(n, layers, variant)
        k = 3 if variant == "constrained" else 2
        assert spec.param_count == k * n * layers
        assert spec.gate_count == k * n * layers + (n - 1) * layers
        gates = gate_sequence(spec, np.zeros(spec.param_count), InputPoint(0.2, 0.3), include_encoding=False)
        assert len(gates) == spec.gate_count


class TestGateSequence:
    def test_layer_structure(self):
        spec = AnsatzSpec(2, 1, "constrained")
        gates = gate_sequence(spec, np.arange(6) * 0.1, InputPoint(0.5, 0.25))
        kinds = [(g.kind, g.targets) for g in gates]
        assert kinds == [("RY", (0,)), ("RY", (1,)), ("RX", (0,)), ("RY", (0,)), ("RZ", (0,)),
                         ("RX", (1,)), ("RY", (1,)), ("RZ", (1,)), ("CNOT", (0, 1))]
        assert gates[0].angle == pytest.approx(np.pi * 0.5)
        assert gates[1].angle == pytest.approx(np.pi * 0.25)

    def test_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            gate_sequence(AnsatzSpec(2, 1), np.zeros(5), InputPoint(0, 0))

    def test_non_finite(self):
        with pytest.raises(ConfigurationError):
            evaluate_u(AnsatzSpec(2, 1), [0, 0, np.nan, 0], InputPoint(0, 0))

    def test_domain_normalisation(self):
        spec = AnsatzSpec(2, 1, x_range=(-1.0, 1.0), t_range=(0.0, 2.0))
        gates = gate_sequence(spec, np.zeros(4), InputPoint(0.0, 1.0))
        assert gates[0].angle == pytest.approx(np.pi / 2) and gates[1].angle == pytest.approx(np.pi / 2)


class TestEvaluate:
    def test_identity_without_encoding(self):
        spec = AnsatzSpec(3, 2, encoding=False)
        assert evaluate_u(spec, np.zeros(spec.param_count), InputPoint(0.3, 0.7)) == pytest.approx(1.0)

    def test_zero_theta_with_encoding(self):
        # Heisenberg picture: Z0 -> cos(pi x) Z0 - sin(pi x) X0 through the second encoding,
        # CNOT(0,1) turns X0 into X0 X1, and the first encodings give <X0 X1> = sin(pi x) sin(pi t)
        spec = AnsatzSpec(3, 2)
        x, t = 0.3, 0.1
        expected = np.cos(np.pi * x) ** 2 - np.sin(np.pi * x) ** 2 * np.sin(np.pi * t)
        assert evaluate_u(spec, np.zeros(spec.param_count), InputPoint(x, t)) == pytest.approx(expected, abs=1e-12)

    def test_full_depolarizing_layer_noise(self):
        spec = AnsatzSpec(3, 2)
        theta = np.random.default_rng(0).uniform(-1, 1, spec.param_count)
        u = evaluate_u(spec, theta, InputPoint(0.4, 0.6), NoiseConfig("depolarizing", 0.75, "layer"))
        assert u == pytest.approx(0.0, abs=1e-12)

    def test_scale_offset(self):
        spec = AnsatzSpec(2, 1, readouts=((0, 0.5, 2.0), (1, 1.0, 0.0)))
        theta = np.random.default_rng(1).normal(size=4)
        base = AnsatzSpec(2, 1)
        z0 = evaluate_u(base, theta, InputPoint(0.2, 0.9))
        vals = evaluate_fields(spec, theta, [[0.2, 0.9]])
        assert vals[0, 0] == pytest.approx(0.5 * z0 + 2.0)

    def test_seed42_matches_kronecker_oracle(self):
        spec = AnsatzSpec(2, 1)
        theta = np.random.default_rng(42).uniform(-np.pi, np.pi, spec.param_count)
        rho = simulate(spec, theta, 0.37, 0.81)
        assert evaluate_u(spec, theta, InputPoint(0.37, 0.81)) == pytest.approx(z_expectation(rho, 0, 2), abs=1e-12)

    def test_gate_sequence_agrees_with_engine(self):
        spec = AnsatzSpec(3, 2, "constrained")
        theta = np.random.default_rng(5).normal(size=spec.param_count)
        pt = InputPoint(0.15, 0.65)
        rho = zero_state(3)
        for g in gate_sequence(spec, theta, pt):
            rho = apply_gate(rho, g)
        np.testing.assert_allclose(output_state(spec, theta, pt).data, rho.data, atol=1e-12)

    @pytest.mark.parametrize("placement", ["gate", "counted", "layer"])
    @pytest.mark.parametrize("channel", ["depolarizing", "amplitude_damping", "bit_flip"])
    def test_noisy_matches_oracle(self, placement, channel):
        spec = AnsatzSpec(3, 2, "constrained")
        theta = np.random.default_rng(11).normal(size=spec.param_count)
        noise = NoiseConfig(channel, 0.07, placement)
        ref = simulate(spec, theta, 0.3, 0.45, noise)
        np.testing.assert_allclose(output_states(spec, theta, [[0.3, 0.45]], noise)[0], ref, atol=1e-12)

    def test_batch_equals_pointwise(self):
        spec = AnsatzSpec(3, 2)
        theta = np.random.default_rng(2).normal(size=spec.param_count)
        pts = np.random.default_rng(3).uniform(size=(5, 2))
        noise = NoiseConfig("amplitude_damping", 0.02)
        batch = evaluate_fields(spec, theta, pts, noise)[0]
        single = [evaluate_u(spec, theta, InputPoint(*p), noise) for p in pts]
        np.testing.assert_allclose(batch, single, atol=1e-13)


class TestNoisePlacement:
    def test_layer_count(self):
        spec = AnsatzSpec(6, 4)
        assert noise_locations(instructions(spec, "layer")) == 24

    def test_counted_equals_gate_count(self):
        for variant in ("unconstrained", "constrained"):
            spec = AnsatzSpec(6, 4, variant)
            assert noise_locations(instructions(spec, "counted")) == spec.gate_count

    def test_gate_placement_covers_encoding_and_both_cnot_qubits(self):
        spec = AnsatzSpec(6, 4)
        expected = 6 * 4 + spec.param_count + 2 * 5 * 4
        assert noise_locations(instructions(spec, "gate")) == expected
        assert CompiledCircuit(spec, NoiseConfig("bit_flip", 0.1)).n_locations == expected


class TestOutputState:
    def test_noiseless_pure(self):
        spec = AnsatzSpec(6, 4)
        theta = np.random.default_rng(4).normal(size=spec.param_count)
        assert output_state(spec, theta, InputPoint(0.2, 0.4)).purity() == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("channel", ["depolarizing", "amplitude_damping", "bit_flip"])
    def test_trace_one(self, channel):
        spec = AnsatzSpec(4, 3)
        theta = np.random.default_rng(5).normal(size=spec.param_count)
        rho = output_state(spec, theta, InputPoint(0.6, 0.1), NoiseConfig(channel, 0.05))
        assert abs(rho.trace() - 1) <= 1e-9

    def test_depolarizing_fidelity_strictly_inside(self):
        spec = AnsatzSpec(6, 4)
        theta = np.random.default_rng(6).normal(size=spec.param_count)
        pt = InputPoint(0.5, 0.5)
        f = fidelity_pure(output_state(spec, theta, pt), output_state(spec, theta, pt, NoiseConfig("depolarizing", 0.01)))
        assert 0 < f < 1

    def test_mean_fidelity_matches_pointwise(self):
        spec = AnsatzSpec(3, 2)
        theta = np.random.default_rng(7).normal(size=spec.param_count)
        pts = [[0.2, 0.3], [0.7, 0.9]]
        noise = NoiseConfig("depolarizing", 0.03)
        f = [fidelity_pure(output_state(spec, theta, InputPoint(*p)), output_state(spec, theta, InputPoint(*p), noise))
             for p in pts]
        assert mean_fidelity(spec, theta, pts, noise) == pytest.approx(np.mean(f), abs=1e-13)

    def test_validation_mode_checks_outputs(self):
        spec = AnsatzSpec(2, 1)
        set_validation(True)
        try:
            rho = output_states(spec, np.ones(4), [[0.1, 0.2]], NoiseConfig("bit_flip", 0.2))
            assert isinstance(DensityMatrix(2, rho[0]), DensityMatrix)
        finally:
            set_validation(False)


class TestProperties:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(0, 11), st.integers(-3, 3))
    def test_two_pi_periodic(self, seed, idx, k):
        spec = AnsatzSpec(3, 2)
        rng = np.random.default_rng(seed)
        theta = rng.uniform(-np.pi, np.pi, spec.param_count)
        pt = InputPoint(*rng.uniform(size=2))
        shifted = theta.copy()
        shifted[idx] += 2 * np.pi * k
        assert evaluate_u(spec, shifted, pt) == pytest.approx(evaluate_u(spec, theta, pt), abs=1e-9)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from(["depolarizing", "amplitude_damping", "bit_flip"]))
    def test_purity_non_increasing_in_p(self, seed, channel):
        # amplitude damping is not unital and re-purifies towards |0> at large strength,
        # so it is checked on the study's range only
        spec = AnsatzSpec(3, 2)
        rng = np.random.default_rng(seed)
        theta = rng.uniform(-np.pi, np.pi, spec.param_count)
        pt = InputPoint(*rng.uniform(size=2))
        grid = (0, 0.001, 0.005, 0.01, 0.02, 0.03, 0.05)
        if channel != "amplitude_damping":
            grid += (0.1, 0.3)
        purities = [output_state(spec, theta, pt, NoiseConfig(channel, p) if p else None).purity() for p in grid]
        assert purities[0] == pytest.approx(1.0, abs=1e-10)
        assert all(b <= a + 1e-12 for a, b in zip(purities, purities[1:]))

    def test_amplitude_damping_can_repurify(self):
        spec = AnsatzSpec(1, 1, encoding=False)
        theta = np.array([np.pi / 2, 0.0])
        pts = [output_state(spec, theta, InputPoint(0, 0), NoiseConfig("amplitude_damping", g, "layer")).purity()
               for g in (0.5, 1.0)]
        assert pts[1] > pts[0]
