import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nirvib.grid import GridBasis, StateVector, product_state
from nirvib.dynamics import (SizeGuardError, autocorrelation,
                             autocorrelation_series, dense_hamiltonian,
                             error_operator_apply, error_operator_expectation,
                             quantize, trotter_oracle, trotter_plan)
from nirvib.hamiltonian import TaylorHamiltonian, build_model_system
from nirvib.vscf import solve_vscf

OMEGA_WINDOW = 9000.0


def _harmonic(freqs):
    freqs = np.asarray(freqs, dtype=float)
    m = len(freqs)
    return TaylorHamiltonian(m, freqs, np.diag(freqs / 2),
                             {(i, i): freqs[i] / 2 for i in range(m)}, {}, {})


def _potential_only(coeff=700.0):
    return TaylorHamiltonian(1, [2.0 * coeff], [[0.0]], {(0, 0): coeff}, {}, {})


class TestDenseHamiltonian:
    def test_single_harmonic_ladder(self):
        ham = _harmonic([1000.0])
        basis = GridBasis(qubits_per_mode=5, num_modes=1)
        evals = np.linalg.eigvalsh(dense_hamiltonian(ham, basis))
        assert np.abs(evals[:3] - [500.0, 1500.0, 2500.0]).max() < 0.1

    def test_hermiticity(self, triatomic):
        ham, _, _ = triatomic
        basis = GridBasis(qubits_per_mode=3, num_modes=3)
        h = dense_hamiltonian(ham, basis)
        assert np.abs(h - h.conj().T).max() < 1e-10

    def test_separable_spectrum_is_sum_of_ladders(self):
        ham = _harmonic([900.0, 1600.0])
        basis = GridBasis(qubits_per_mode=4, num_modes=2)
        evals = np.linalg.eigvalsh(dense_hamiltonian(ham, basis))
        expected = np.sort([900 * (i + 0.5) + 1600 * (j + 0.5)
                            for i in range(4) for j in range(4)])
        assert np.abs(evals[:8] - expected[:8]).max() < 0.1

    def test_size_guard(self):
        ham = _harmonic([1000.0] * 4)
        with pytest.raises(SizeGuardError):
            dense_hamiltonian(ham, GridBasis(qubits_per_mode=4, num_modes=4))


class TestTrotterOracle:
    def test_zero_time_is_identity(self, triatomic):
        ham, _, _ = triatomic
        basis = GridBasis(qubits_per_mode=3, num_modes=3)
        rng = np.random.default_rng(0)
        amps = rng.normal(size=basis.total_dim) + 1j * rng.normal(size=basis.total_dim)
        state = StateVector(amps / np.linalg.norm(amps), basis)
        out = trotter_oracle(state, ham, None, 0.0, 3)
        assert np.allclose(out.amplitudes, state.amplitudes, atol=1e-12)

    def test_pure_potential_exact_at_r1(self):
        ham = _potential_only(700.0)
        basis = GridBasis(qubits_per_mode=5, num_modes=1)
        h = dense_hamiltonian(ham, basis)
        evals, evecs = np.linalg.eigh(h)
        t = 3.7e-4
        rng = np.random.default_rng(1)
        amps = rng.normal(size=basis.total_dim) + 1j * rng.normal(size=basis.total_dim)
        amps /= np.linalg.norm(amps)
        state = StateVector(amps, basis)
        exact = evecs @ (np.exp(-1j * evals * t) * (evecs.conj().T @ amps))
        out = trotter_oracle(state, ham, None, t, 1)
        assert np.allclose(out.amplitudes, exact, atol=1e-9)

    def test_norm_preserved(self, triatomic):
        ham, _, _ = triatomic
        basis = GridBasis(qubits_per_mode=3, num_modes=3)
        rng = np.random.default_rng(2)
        amps = rng.normal(size=basis.total_dim) + 1j * rng.normal(size=basis.total_dim)
        state = StateVector(amps / np.linalg.norm(amps), basis)
        out = trotter_oracle(state, ham, quantize(ham), 2.0e-3, 7)
        assert out.norm() == pytest.approx(1.0, abs=1e-10)

    def test_eigenstate_phase_converges_second_order(self, triatomic,
                                                     triatomic_dense):
        ham, _, _ = triatomic
        basis, evals, evecs = triatomic_dense
        k = 13  # an anharmonically shifted excited level
        state = StateVector(evecs[:, k], basis, normalized=True)
        t = 1e-4
        errors = []
        for r in (1, 2, 4, 8):
            out = trotter_oracle(state, ham, None, t, r)
            overlap = state.overlap(out)
            phase_err = abs(np.angle(overlap * np.exp(1j * evals[k] * t)))
            errors.append(phase_err / t)
        slope = np.polyfit(np.log([1, 2, 4, 8]), np.log(errors), 1)[0]
        assert slope == pytest.approx(-2.0, abs=0.15)
        assert abs(state.overlap(trotter_oracle(state, ham, None, t, 8))) == \
            pytest.approx(1.0, abs=1e-7)


class TestErrorOperator:
    def test_commuting_fragments_vanish(self):
        ham = _potential_only(500.0)
        basis = GridBasis(qubits_per_mode=5, num_modes=1)
        g = np.exp(-basis.points ** 2 / 2)
        state = product_state(basis, [g])
        assert error_operator_expectation(ham, basis, state) == pytest.approx(0.0, abs=1e-10)

    def test_matches_dense_commutator_oracle(self):
        ham = TaylorHamiltonian(1, [1000.0], [[500.0]], {(0, 0): 500.0},
                                {(0, 0, 0): -25.0}, {(0, 0, 0, 0): 4.0}, n_mode=1)
        basis = GridBasis(qubits_per_mode=5, num_modes=1)
        q = np.diag(basis.points)
        from nirvib.grid import momentum_matrix
        p = momentum_matrix(basis)
        v = 500.0 * q @ q - 25.0 * q @ q @ q + 4.0 * q @ q @ q @ q
        t = 500.0 * p @ p
        def comm(a, b):
            return a @ b - b @ a
        e2 = (2 * comm(t, comm(t, v)) + comm(v, comm(t, v))) / 24.0
        evals, evecs = np.linalg.eigh(dense_hamiltonian(ham, basis))
        state = StateVector(evecs[:, 2], basis)
        dense_value = float(np.real(np.vdot(state.amplitudes, e2 @ state.amplitudes)))
        grid_value = error_operator_expectation(ham, basis, state)
        assert grid_value == pytest.approx(dense_value, abs=1e-8 * max(1, abs(dense_value)))

    def test_expectation_is_real(self, triatomic, triatomic_vscf):
        ham, _, _ = triatomic
        basis, sol = triatomic_vscf
        state = sol.product_state((0, 1, 0))
        applied = error_operator_apply(ham, basis, state)
        value = complex(np.vdot(state.amplitudes, applied.amplitudes))
        assert abs(value.imag) < 1e-10 * max(1.0, abs(value.real))

    def test_harmonic_closed_form(self):
        # for H = (w/2)(p^2 + q^2): <n|E2|n> = -(w^3/24)(n + 1/2) on the
        # low-energy subspace of the grid
        omega = 1000.0
        ham = _harmonic([omega])
        basis = GridBasis(qubits_per_mode=6, num_modes=1)
        evals, evecs = np.linalg.eigh(dense_hamiltonian(ham, basis))
        for n in (0, 1, 3):
            state = StateVector(evecs[:, n], basis)
            expected = -(omega ** 3 / 24.0) * (n + 0.5)
            got = error_operator_expectation(ham, basis, state)
            assert got == pytest.approx(expected, rel=1e-6)


class TestTrotterPlan:
    def test_sqrt_scaling_in_accuracy(self, triatomic, triatomic_vscf):
        ham, _, _ = triatomic
        basis, sol = triatomic_vscf
        state = sol.product_state((0, 2, 0))
        plan1 = trotter_plan(ham, basis, sol, state, 1.0, OMEGA_WINDOW)
        plan4 = trotter_plan(ham, basis, sol, state, 4.0, OMEGA_WINDOW)
        assert plan4.tau == pytest.approx(2.0 * plan1.tau, rel=1e-9)
        for d1, d4 in zip(plan1.diagnostics, plan4.diagnostics):
            if math.isfinite(d1.tau):
                assert d4.tau == pytest.approx(2.0 * d1.tau, rel=1e-12)
        assert plan1.r >= plan4.r

    def test_commuting_fragments_give_r1(self):
        ham = _potential_only(800.0)
        basis = GridBasis(qubits_per_mode=5, num_modes=1)
        sol = solve_vscf(ham, basis)
        plan = trotter_plan(ham, basis, sol, sol.ground_state(), 10.0, OMEGA_WINDOW)
        assert plan.r == 1
        assert math.isinf(plan.tau)

    def test_r_ceiling_invariant(self, triatomic, triatomic_vscf):
        ham, _, _ = triatomic
        basis, sol = triatomic_vscf
        plan = trotter_plan(ham, basis, sol, sol.product_state((0, 2, 0)),
                            10.0, OMEGA_WINDOW)
        assert plan.r == math.ceil(plan.delta_t / plan.tau)
        assert plan.r >= 1

    def test_weights_cover_requested_fraction(self, triatomic, triatomic_vscf):
        ham, _, _ = triatomic
        basis, sol = triatomic_vscf
        rng = np.random.default_rng(4)
        amps = rng.normal(size=basis.total_dim)
        state = StateVector(amps / np.linalg.norm(amps), basis)
        plan = trotter_plan(ham, basis, sol, state, 10.0, OMEGA_WINDOW,
                            coverage=0.99)
        assert sum(d.weight for d in plan.diagnostics) >= 0.99


class TestQuantize:
    def test_scale_endpoint_exact(self):
        ham = TaylorHamiltonian(1, [1000.0], [[500.0]], {(0, 0): 500.0},
                                {(0, 0, 0): -20.0}, {}, n_mode=1)
        q = quantize(ham, b_k=10, b_r=25)
        assert q.phi2[(0, 0)] == 500.0
        assert q.phi3[(0, 0, 0)] == -20.0  # its own group's scale endpoint

    def test_rounding_error_bound(self):
        rng = np.random.default_rng(8)
        m = 3
        freqs = rng.uniform(800, 3000, size=m)
        phi2 = {(i, i): freqs[i] / 2 for i in range(m)}
        phi2[(1, 0)] = rng.uniform(-30, 30)
        phi3 = {(2, 1, 1): rng.uniform(-50, 50), (1, 1, 1): rng.uniform(-80, 80)}
        ham = TaylorHamiltonian(m, freqs, np.diag(freqs / 2), phi2, phi3, {})
        q = quantize(ham, b_k=10, b_r=25)
        for group, exact, rounded in (("phi2", ham.phi2, q.phi2),
                                      ("phi3", ham.phi3, q.phi3)):
            scale = q.scales[group]
            for idx in exact:
                assert abs(rounded[idx] - exact[idx]) <= 2.0 ** -10 * scale + 1e-12

    def test_phase_error_figure(self):
        ham, _, _ = build_model_system("single-morse-expansion")
        q = quantize(ham, b_k=10, b_r=25)
        assert q.max_phase_error <= 3.0e-8

    def test_spectrum_shift_small_on_toy(self, triatomic, triatomic_dense):
        ham, dipole, _ = triatomic
        basis, evals, evecs = triatomic_dense
        q = quantize(ham, b_k=10, b_r=25)
        evals_q = np.linalg.eigvalsh(dense_hamiltonian(ham, basis, quantized=q))
        # transitions that carry dipole intensity inside the window
        from nirvib.grid import position_diagonal
        amps = np.zeros(evals.size)
        ground = evecs[:, 0]
        for ci in range(3):
            diag = np.zeros(basis.shape())
            for mode, m_i in enumerate(dipole.coefficients[ci]):
                diag = diag + m_i * position_diagonal(basis, mode)
            amps += np.abs(evecs.conj().T @ (diag.reshape(-1) * ground)) ** 2
        omegas = evals - evals[0]
        retained = (omegas > 3750) & (omegas < 12500) & (amps > 1e-4 * amps.max())
        shift = np.abs((evals_q - evals_q[0]) - omegas)[retained]
        assert shift.max() < 0.5


class TestAutocorrelation:
    def test_k0_is_unity(self, triatomic, triatomic_vscf):
        ham, _, _ = triatomic
        basis, sol = triatomic_vscf
        plan = trotter_plan(ham, basis, sol, sol.product_state((0, 1, 0)),
                            10.0, OMEGA_WINDOW)
        value = autocorrelation(sol.ground_state(), ham, None, plan, 0, OMEGA_WINDOW)
        assert value == pytest.approx(1.0)

    def test_eigenstate_pure_phase(self, triatomic, triatomic_dense):
        ham, _, _ = triatomic
        basis, evals, evecs = triatomic_dense
        state = StateVector(evecs[:, 5], basis)
        series = autocorrelation_series(state, ham, None, 64, 4, OMEGA_WINDOW)
        assert np.abs(np.abs(series) - 1.0).max() < 1e-6

    def test_matches_dense_propagator(self, triatomic, triatomic_dense,
                                      triatomic_vscf):
        ham, _, _ = triatomic
        basis, evals, evecs = triatomic_dense
        _, sol = triatomic_vscf
        state = sol.product_state((0, 1, 0))
        k = 5
        coeffs = evecs.conj().T @ state.amplitudes
        t = 2 * np.pi * k / OMEGA_WINDOW
        expected = np.sum(np.abs(coeffs) ** 2 * np.exp(-1j * evals * t))
        series = autocorrelation_series(state, ham, None, 8192, k, OMEGA_WINDOW)
        assert abs(series[k] - expected) < 1e-6

    def test_modulus_bounded(self, triatomic, triatomic_vscf):
        ham, _, _ = triatomic
        basis, sol = triatomic_vscf
        series = autocorrelation_series(sol.ground_state(), ham, quantize(ham),
                                        8, 20, OMEGA_WINDOW)
        assert np.abs(series).max() <= 1.0 + 1e-9
