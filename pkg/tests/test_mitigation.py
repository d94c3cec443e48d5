from __future__ import annotations

from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import PAULI, simulate, z_expectation
from qempde.ansatz import AnsatzSpec, InputPoint, evaluate_u
from qempde.errors import ConfigurationError, InfeasibleError, SingularChannelError
from qempde.mitigation import (ZneConfig, accuracy_recovery, apply_confusion, pec_estimate, pec_inverse_coefficients,
                               pec_overhead, readout_correct, richardson_weights, zne_estimate, zne_fields)
from qempde.noise import NoiseConfig, ReadoutModel, depolarizing_kraus
from qempde.qstate import DensityMatrix, apply_kraus

PEC_SPEC = AnsatzSpec(2, 1)
PEC_THETA = np.array([0.4, -0.7, 1.1, 0.3])
PEC_POINT = InputPoint(0.3, 0.6)


def pauli_mixture(rho: np.ndarray, coefficients) -> np.ndarray:
    return sum(a * PAULI[k] @ rho @ PAULI[k] for a, k in zip(coefficients, "IXYZ"))


class TestRichardson:
    def test_three_point(self):
        np.testing.assert_allclose(richardson_weights([1, 2, 3]), [3, -3, 1])

    def test_two_point(self):
        np.testing.assert_allclose(richardson_weights([1, 2]), [2, -1])

    def test_single(self):
        np.testing.assert_allclose(richardson_weights([1]), [1])

    def test_duplicates(self):
        with pytest.raises(ConfigurationError):
            richardson_weights([1, 1, 2])

    def test_eliminates_linear_and_quadratic_terms(self):
        w, c = richardson_weights([1, 2, 3]), np.array([1.0, 2.0, 3.0])
        assert abs(w @ c) <= 1e-12 and abs(w @ c**2) <= 1e-12


class TestZneConfig:
    @pytest.mark.parametrize("kw", [{"scale_factors": (1, 1, 2)}, {"scale_factors": (0.5, 1, 2)},
                                    {"scale_factors": (1, 2), "order": 2}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            ZneConfig(**kw)

    def test_amplified_strength_bound(self):
        with pytest.raises(ConfigurationError):
            zne_estimate(lambda q: q, 0.4)


class TestZneEstimate:
    def test_constant(self):
        assert zne_estimate(lambda q: 0.37, 0.01).value == pytest.approx(0.37, abs=1e-15)

    def test_quadratic_exact(self):
        est = zne_estimate(lambda q: 0.5 - 2.0 * q + 7.0 * q**2, 0.02)
        assert est.value == pytest.approx(0.5, abs=1e-12)
        assert est.raw == pytest.approx([0.5 - 0.04 + 0.0028, 0.5 - 0.08 + 0.0112, 0.5 - 0.12 + 0.0252])

    def test_linear_order(self):
        est = zne_estimate(lambda q: 1 - 3 * q, 0.01, ZneConfig((1, 2), order=1))
        assert est.value == pytest.approx(1.0, abs=1e-12)

    def test_circuit_reduction_at_small_p(self):
        spec = AnsatzSpec(3, 2)
        theta = np.random.default_rng(3).uniform(-1, 1, spec.param_count)
        pt = InputPoint(0.4, 0.3)
        ideal = evaluate_u(spec, theta, pt)
        noisy = evaluate_u(spec, theta, pt, NoiseConfig("depolarizing", 0.001))
        est = zne_estimate(lambda q: evaluate_u(spec, theta, pt, NoiseConfig("depolarizing", q)), 0.001)
        assert abs(est.value - ideal) <= 0.2 * abs(noisy - ideal)

    def test_fields_match_scalar_route(self):
        spec = AnsatzSpec(3, 2)
        theta = np.random.default_rng(4).normal(size=spec.param_count)
        noise = NoiseConfig("amplitude_damping", 0.02)
        mitigated, raw = zne_fields(spec, theta, [[0.2, 0.8]], noise)
        est = zne_estimate(lambda q: evaluate_u(spec, theta, InputPoint(0.2, 0.8), NoiseConfig("amplitude_damping", q)), 0.02)
        assert mitigated[0, 0] == pytest.approx(est.value, abs=1e-13)
        assert raw.shape == (3, 1, 1)


class TestPecOverhead:
    @pytest.mark.parametrize("n_g,p,shown", [(20, 0.001, 1.08), (60, 0.01, 10.8), (40, 0.005, 2.22),
                                             (100, 0.001, 1.49), (80, 0.02, 531)])
    def test_table_cells(self, n_g, p, shown):
        assert float(f"{pec_overhead(n_g, p):.3g}") == shown

    def test_large_cell(self):
        assert float(f"{pec_overhead(100, 0.05):.2g}") == 1.9e8

    def test_exact_formula(self):
        assert pec_overhead(7, 0.03) == 1.06**14

    @pytest.mark.parametrize("n_g,p", [(0, 0.01), (10, 0.6), (10, -0.1)])
    def test_invalid(self, n_g, p):
        with pytest.raises(ConfigurationError):
            pec_overhead(n_g, p)


class TestPecInverse:
    def test_zero(self):
        q = pec_inverse_coefficients(0.0)
        assert q.coefficients == (1.0, 0.0, 0.0, 0.0) and q.one_norm == 1.0

    def test_sum_to_one(self):
        assert sum(pec_inverse_coefficients(0.2).coefficients) == pytest.approx(1.0, abs=1e-12)

    def test_gamma_closed_form(self):
        p = 0.03
        assert pec_inverse_coefficients(p).one_norm == pytest.approx((1 + 2 * p / 3) / (1 - 4 * p / 3), abs=1e-14)

    def test_first_order_matches_overhead_factor(self):
        p = 1e-5
        assert pec_inverse_coefficients(p).one_norm - 1 == pytest.approx(2 * p, rel=1e-4)

    def test_singular(self):
        with pytest.raises(SingularChannelError):
            pec_inverse_coefficients(0.75)

    def test_undoes_channel_on_random_states(self):
        rng = np.random.default_rng(50)
        coeffs = pec_inverse_coefficients(0.01).coefficients
        for _ in range(50):
            rho = DensityMatrix.from_statevector(rng.normal(size=2) + 1j * rng.normal(size=2))
            noisy = apply_kraus(rho, depolarizing_kraus(0.01), 0).data
            np.testing.assert_allclose(pauli_mixture(noisy, coeffs), rho.data, atol=1e-12)


class TestPecEstimate:
    def ideal(self):
        return evaluate_u(PEC_SPEC, PEC_THETA, PEC_POINT)

    def test_zero_noise(self):
        assert pec_estimate(PEC_SPEC, PEC_THETA, PEC_POINT, 0.0, 10, 0).value == self.ideal()

    def test_exact_quasi_sum_is_ideal(self):
        # sum over every correction pattern with its signed weight
        p = 0.01
        coeffs = pec_inverse_coefficients(p).coefficients
        noise = NoiseConfig("depolarizing", p, "counted")
        total = 0.0
        for pattern in product(range(4), repeat=PEC_SPEC.gate_count):
            weight = np.prod([coeffs[k] for k in pattern])
            total += weight * z_expectation(simulate(PEC_SPEC, PEC_THETA, PEC_POINT.x, PEC_POINT.t, noise,
                                                     list(pattern)), 0, 2)
        assert total == pytest.approx(self.ideal(), abs=1e-12)

    def test_sampled_estimate(self):
        est = pec_estimate(PEC_SPEC, PEC_THETA, PEC_POINT, 0.01, 20_000, seed=1)
        gamma = est.meta["gamma_total"]
        assert est.meta["n_locations"] == 5
        assert abs(est.value - self.ideal()) <= 3 * gamma / np.sqrt(20_000)

    def test_reproducible(self):
        a = pec_estimate(PEC_SPEC, PEC_THETA, PEC_POINT, 0.01, 3000, seed=9)
        b = pec_estimate(PEC_SPEC, PEC_THETA, PEC_POINT, 0.01, 3000, seed=9)
        assert a.value == b.value

    def test_infeasible(self):
        spec = AnsatzSpec(6, 4)
        with pytest.raises(InfeasibleError):
            pec_estimate(spec, np.zeros(spec.param_count), PEC_POINT, 0.3, 10, 0)

    def test_sample_count(self):
        with pytest.raises(ConfigurationError):
            pec_estimate(PEC_SPEC, PEC_THETA, PEC_POINT, 0.01, 0, 0)

    def test_accuracy_recovery(self):
        assert accuracy_recovery(1.0, 0.8, 1.0) == 1.0
        assert accuracy_recovery(0.9, 0.8, 1.0) == pytest.approx(0.5)
        assert accuracy_recovery(0.5, 0.8, 1.0) == 0.0
        assert accuracy_recovery(0.8, 1.0, 1.0) == 1.0


class TestReadout:
    def test_zero_error(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        np.testing.assert_allclose(readout_correct(p, ReadoutModel(0.0, 2)), p)

    def test_single_qubit(self):
        np.testing.assert_allclose(readout_correct([0.9, 0.1], ReadoutModel(0.1, 1)), [1.0, 0.0], atol=1e-12)

    def test_clip_and_renormalise(self):
        out = readout_correct([0.95, 0.05], ReadoutModel(0.1, 1))
        np.testing.assert_allclose(out, [1.0, 0.0])

    def test_bad_input(self):
        with pytest.raises(ConfigurationError):
            readout_correct([0.5, 0.4], ReadoutModel(0.1, 1))
        with pytest.raises(ConfigurationError):
            readout_correct([1.0, 0.0, 0.0], ReadoutModel(0.1, 1))


class TestProperties:
    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(1, 10), min_size=1, max_size=5, unique=True))
    def test_weights_sum_to_one(self, factors):
        gaps = [abs(a - b) for a in factors for b in factors if a != b]
        if gaps and min(gaps) < 1e-2:
            return
        assert richardson_weights(factors).sum() == pytest.approx(1.0, abs=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-2, 2), st.floats(-5, 5), st.floats(-20, 20), st.floats(1e-4, 0.3))
    def test_quadratic_exactness(self, a, b, c, p):
        est = zne_estimate(lambda q: a + b * q + c * q**2, p)
        assert est.value == pytest.approx(a, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 200), st.floats(0, 0.49), st.floats(1e-4, 0.01))
    def test_overhead_monotone_and_log_exact(self, n_g, p, dp):
        assert pec_overhead(n_g + 1, p) >= pec_overhead(n_g, p)
        assert pec_overhead(n_g, p + dp) > pec_overhead(n_g, p)
        assert np.log(pec_overhead(n_g, p)) == pytest.approx(2 * n_g * np.log(1 + 2 * p), rel=1e-12, abs=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 0.7))
    def test_inverse_ptm_is_identity(self, p):
        # Pauli transfer matrix of (mixture . depolarizing) must be the identity
        coeffs = pec_inverse_coefficients(p).coefficients
        ops = depolarizing_kraus(p).operators
        ptm = np.empty((4, 4))
        for i, a in enumerate("IXYZ"):
            out = pauli_mixture(sum(k @ PAULI[a] @ k.conj().T for k in ops), coeffs)
            for j, b in enumerate("IXYZ"):
                ptm[j, i] = 0.5 * np.trace(PAULI[b] @ out).real
        np.testing.assert_allclose(ptm, np.eye(4), atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([0.01, 0.05, 0.1]), st.integers(1, 4))
    def test_readout_round_trip(self, seed, eps, n):
        p = np.random.default_rng(seed).dirichlet(np.ones(2**n))
        m = ReadoutModel(eps, n)
        np.testing.assert_allclose(readout_correct(apply_confusion(p, m), m), p, atol=1e-9)
