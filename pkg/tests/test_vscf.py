import numpy as np
import pytest

from nirvib.grid import GridBasis
from nirvib.dynamics import dense_hamiltonian
from nirvib.hamiltonian import TaylorHamiltonian, build_model_system
from nirvib.vscf import ProductState, solve_vscf, vscf_excitations


def _harmonic(freqs):
    freqs = np.asarray(freqs, dtype=float)
    m = len(freqs)
    return TaylorHamiltonian(m, freqs, np.diag(freqs / 2),
                             {(i, i): freqs[i] / 2 for i in range(m)}, {}, {})


class TestSolve:
    def test_decoupled_harmonic_zero_point_energy(self):
        ham = _harmonic([1000.0, 1500.0])
        basis = GridBasis(qubits_per_mode=5, num_modes=2)
        sol = solve_vscf(ham, basis)
        assert sol.ground_energy == pytest.approx(1250.0, abs=1e-6)

    def test_single_mode_equals_exact_diagonalization(self):
        ham = TaylorHamiltonian(1, [1200.0], [[600.0]],
                                {(0, 0): 600.0}, {(0, 0, 0): -30.0},
                                {(0, 0, 0, 0): 5.0}, n_mode=1)
        basis = GridBasis(qubits_per_mode=6, num_modes=1)
        sol = solve_vscf(ham, basis)
        exact = np.linalg.eigvalsh(dense_hamiltonian(ham, basis))
        assert sol.ground_energy == pytest.approx(exact[0], abs=1e-8)
        assert np.allclose(sol.modal_energies[0][:6], exact[:6], atol=1e-8)

    def test_mean_field_upper_bounds_exact_ground(self):
        ham, _, _ = build_model_system("coupled-quartic-pair")
        basis = GridBasis(qubits_per_mode=4, num_modes=2)
        sol = solve_vscf(ham, basis)
        exact = np.linalg.eigvalsh(dense_hamiltonian(ham, basis))[0]
        gap = sol.ground_energy - exact
        assert gap >= -1e-8
        assert gap < 5.0  # weakly coupled pair: small correlation energy

    def test_decoupled_matches_exact_to_tolerance(self):
        # no cross-mode terms: mean field is the exact factorized solution
        ham = TaylorHamiltonian(
            2, [1000.0, 1600.0], np.diag([500.0, 800.0]),
            {(0, 0): 500.0, (1, 1): 800.0},
            {(0, 0, 0): -20.0}, {(1, 1, 1, 1): 4.0})
        basis = GridBasis(qubits_per_mode=5, num_modes=2)
        sol = solve_vscf(ham, basis)
        exact = np.linalg.eigvalsh(dense_hamiltonian(ham, basis))[0]
        assert abs(sol.ground_energy - exact) < 1e-8

    def test_modals_orthonormal(self, triatomic_vscf):
        _, sol = triatomic_vscf
        for vecs in sol.modal_vectors:
            gram = vecs.T @ vecs
            assert np.abs(gram - np.eye(gram.shape[0])).max() < 1e-8

    def test_modal_energies_sorted(self, triatomic_vscf):
        _, sol = triatomic_vscf
        for energies in sol.modal_energies:
            assert np.all(np.diff(energies) >= 0)

    def test_energy_trace_monotone_or_flagged(self, triatomic_vscf):
        _, sol = triatomic_vscf
        diffs = np.diff(sol.energy_trace)
        if sol.monotone:
            assert np.all(diffs <= 1e-9)


class TestExcitations:
    def test_harmonic_fundamentals_in_window(self):
        ham = _harmonic([1000.0, 1000.0])
        basis = GridBasis(qubits_per_mode=5, num_modes=2)
        sol = solve_vscf(ham, basis)
        hits = vscf_excitations(sol, (900.0, 1100.0))
        assert len(hits) == 2
        assert {h[0].indices for h in hits} == {(1, 0), (0, 1)}
        for _, energy in hits:
            assert energy == pytest.approx(1000.0, abs=1e-3)

    def test_window_below_lowest_is_empty(self, triatomic_vscf):
        _, sol = triatomic_vscf
        assert vscf_excitations(sol, (10.0, 500.0)) == []

    def test_negative_anharmonicity_compresses_ladder(self):
        ham, _, _ = build_model_system("single-morse-expansion",
                                       {"omega": 2000.0, "anharmonicity": 20.0})
        basis = GridBasis(qubits_per_mode=6, num_modes=1)
        sol = solve_vscf(ham, basis)
        exact = np.linalg.eigvalsh(dense_hamiltonian(ham, basis))
        fundamental = exact[1] - exact[0]
        overtone = exact[2] - exact[0]
        assert overtone < 2 * fundamental
        # the mean-field single-mode ladder sees the same compression
        levels = sol.excitation_grid()[0]
        assert levels[2] < 2 * levels[1]

    def test_quanta_cap_respected(self, triatomic_vscf):
        _, sol = triatomic_vscf
        hits = vscf_excitations(sol, (0.0, 1e6), max_quanta=3)
        assert all(sum(state.indices) <= 3 for state, _ in hits)

    def test_product_state_roundtrip(self, triatomic_vscf):
        basis, sol = triatomic_vscf
        state = sol.product_state((1, 0, 2))
        assert state.norm() == pytest.approx(1.0, abs=1e-10)
        assert sol.excitation_energy((1, 0, 2)) == pytest.approx(
            (sol.modal_energies[0][1] - sol.modal_energies[0][0])
            + (sol.modal_energies[2][2] - sol.modal_energies[2][0]), abs=1e-9)
