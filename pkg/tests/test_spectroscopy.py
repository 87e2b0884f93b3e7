import math

import numpy as np
import pytest

from nirvib.grid import GridBasis, StateVector, position_diagonal, product_state
from nirvib.dynamics import dense_hamiltonian
from nirvib.hamiltonian import DipoleExpansion, TaylorHamiltonian, build_model_system
from nirvib.spectroscopy import (ConfigError, EmptyWindowError, Peak,
                                 ShotLedger, WindowConfig, allocate_shots,
                                 dipole_excite, exact_ledger, matching_pursuit,
                                 project_window, reconstruct, sample_hadamard,
                                 sample_ledger, shot_normalization,
                                 window_defaults)
from nirvib.vscf import solve_vscf


def _harmonic(freqs):
    freqs = np.asarray(freqs, dtype=float)
    m = len(freqs)
    return TaylorHamiltonian(m, freqs, np.diag(freqs / 2),
                             {(i, i): freqs[i] / 2 for i in range(m)}, {}, {})


class TestWindowDefaults:
    def test_paper_constants(self):
        w = window_defaults()
        assert w.omega_width == 9000.0
        assert w.omega_min == 3500.0 and w.omega_max == 12500.0
        assert w.cutoff == 3750.0 and w.padding == 250.0
        assert w.eta == 10.0 and w.epsilon == 0.8

    def test_derived_truncation_constants(self):
        w = window_defaults()
        assert w.t_max == pytest.approx(math.log(1.25) / 10.0, rel=1e-12)
        assert w.k_max == 201

    def test_degenerate_epsilon_rejected(self):
        with pytest.raises(ConfigError):
            WindowConfig(epsilon=0.999999)
        with pytest.raises(ConfigError):
            WindowConfig(epsilon=1.0)

    def test_omega_grid_contract(self):
        w = WindowConfig(num_points=512)
        grid = w.omega_grid()
        assert grid.size == 512
        assert grid[0] == w.omega_min and grid[-1] == w.omega_max


class TestShotAllocation:
    def test_allocation_normalization(self):
        w = window_defaults()
        ledger = allocate_shots(w, 30000, seed=1)
        s = 10000.0
        total = 2 * int(ledger.n_k.sum())
        assert s - w.k_max <= total <= s + w.k_max

    def test_exponential_profile(self):
        w = window_defaults()
        ledger = allocate_shots(w, 30000)
        s = 10000.0
        norm = shot_normalization(w)
        expected = np.round(s * norm * w.damping()[1:])
        assert np.array_equal(ledger.n_k, expected.astype(int))
        assert ledger.n_k[0] >= ledger.n_k[-1]


class TestSampleHadamard:
    def test_degenerate_plus_one(self):
        x, y = sample_hadamard(1.0 + 0.0j, 500, (0, 1))
        assert x == 1.0
        # imaginary branch of a real expectation is a fair coin
        assert abs(y) < 1.0

    def test_zero_expectation_concentrates(self):
        x, y = sample_hadamard(0.0 + 0.0j, 10 ** 6, (7,))
        assert abs(x) < 4e-3 and abs(y) < 4e-3

    def test_zero_shots_contribute_zero(self):
        assert sample_hadamard(0.3 + 0.1j, 0, (0,)) == (0.0, 0.0)

    def test_modulus_guard(self):
        with pytest.raises(ValueError, match="unitary"):
            sample_hadamard(1.2 + 0.0j, 10, (0,))

    def test_deterministic_under_seed(self):
        a = sample_hadamard(0.3 - 0.4j, 1000, (3, 1, 2))
        b = sample_hadamard(0.3 - 0.4j, 1000, (3, 1, 2))
        assert a == b

    def test_unbiased_over_seeds(self):
        z = 0.37 - 0.21j
        n = 200
        xs, ys = [], []
        for seed in range(1000):
            x, y = sample_hadamard(z, n, (seed,))
            xs.append(x)
            ys.append(y)
        se_x = np.std(xs) / math.sqrt(len(xs))
        se_y = np.std(ys) / math.sqrt(len(ys))
        assert abs(np.mean(xs) - z.real) < 5 * se_x
        assert abs(np.mean(ys) - z.imag) < 5 * se_y


class TestDipoleExcite:
    def test_single_mode_ladder_action(self):
        # q|0> lands on the first excited state of the grid oscillator
        ham = _harmonic([1000.0])
        basis = GridBasis(qubits_per_mode=5, num_modes=1)
        _, evecs = np.linalg.eigh(dense_hamiltonian(ham, basis))
        ground = StateVector(evecs[:, 0], basis)
        dip = DipoleExpansion(np.array([[1.0], [0.0], [0.0]]))
        comps = dipole_excite(dip, ground, basis)
        assert comps[0].active and not comps[1].active and not comps[2].active
        overlap = abs(np.vdot(evecs[:, 1], comps[0].state.amplitudes))
        assert overlap > 0.999
        # |mu|^2 = <0|q^2|0> = 1/2 for the unit-width ground state
        assert comps[0].mu_norm ** 2 == pytest.approx(0.5, abs=1e-4)

    def test_inactive_component_flagged(self, triatomic, triatomic_vscf):
        _, dipole, _ = triatomic
        basis, sol = triatomic_vscf
        coeffs = dipole.coefficients.copy()
        coeffs[1] = 0.0
        comps = dipole_excite(DipoleExpansion(coeffs), sol.ground_state(), basis)
        assert not comps[1].active
        assert comps[1].mu_norm == 0.0

    def test_norm_matches_operator_moment(self, triatomic_vscf):
        from nirvib.grid import operator_moment
        basis, sol = triatomic_vscf
        dip = DipoleExpansion(np.array([[0.5, -0.3, 0.2],
                                        [0.0, 0.0, 0.0],
                                        [0.0, 0.0, 0.0]]))
        ground = sol.ground_state()
        comps = dipole_excite(dip, ground, basis)
        # <0| (sum m_i q_i)^2 |0> assembled from second moments
        expected = 0.0
        for i, mi in enumerate(dip.coefficients[0]):
            for j, mj in enumerate(dip.coefficients[0]):
                if mi and mj:
                    expected += mi * mj * operator_moment(ground, (i, j)).real
        assert comps[0].mu_norm ** 2 == pytest.approx(expected, abs=1e-10)


class TestProjectWindow:
    def test_cutoff_below_everything_is_identity(self, triatomic_vscf):
        basis, sol = triatomic_vscf
        state = sol.product_state((1, 0, 0))
        out, retained = project_window(state, sol, -10.0)
        assert retained == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(out.amplitudes, state.amplitudes, atol=1e-10)

    def test_cutoff_above_everything_errors(self, triatomic_vscf):
        basis, sol = triatomic_vscf
        state = sol.product_state((1, 0, 0))
        with pytest.raises(EmptyWindowError):
            project_window(state, sol, 1e9)

    def test_two_mode_bookkeeping(self):
        # W between the fundamentals and the combination band removes exactly
        # the fundamental components
        ham = _harmonic([1000.0, 1500.0])
        basis = GridBasis(qubits_per_mode=4, num_modes=2)
        sol = solve_vscf(ham, basis)
        c = {(0, 0): 0.5, (1, 0): 0.6, (0, 1): 0.5, (1, 1): 0.374}
        norm = math.sqrt(sum(v * v for v in c.values()))
        tensor = np.zeros(basis.shape(), dtype=complex)
        for (i, j), v in c.items():
            amp = np.outer(sol.modal_vectors[0][:, i], sol.modal_vectors[1][:, j])
            tensor += (v / norm) * amp
        state = StateVector(tensor.reshape(-1), basis)
        out, retained = project_window(state, sol, 2000.0)
        expected = c[(1, 1)] ** 2 / norm ** 2
        assert retained == pytest.approx(expected, abs=1e-9)
        # the surviving state is the pure combination component
        comb = np.outer(sol.modal_vectors[0][:, 1], sol.modal_vectors[1][:, 1])
        assert abs(np.vdot(comb.reshape(-1), out.amplitudes)) == pytest.approx(1.0, abs=1e-9)

    def test_upper_screen(self, triatomic_vscf):
        basis, sol = triatomic_vscf
        state = sol.product_state((0, 2, 0))
        with pytest.raises(EmptyWindowError):
            project_window(state, sol, 100.0, upper=5000.0)


def _eigen_ledger(window, weights_positions, active=(True, False, False)):
    """Exact ledger for a synthetic mixture of stationary components."""
    ks = np.arange(window.k_max + 1)
    means = np.zeros((3, window.k_max + 1), dtype=complex)
    for comp in range(3):
        if not active[comp]:
            continue
        z = np.zeros(window.k_max + 1, dtype=complex)
        for weight, pos in weights_positions:
            z += weight * np.exp(-2j * np.pi * pos * ks / window.omega_width)
        means[comp] = z
    return exact_ledger(window, means, active)


class TestReconstruct:
    def test_single_line_matches_closed_form(self):
        window = window_defaults()
        e_line = 6000.0
        ledger = _eigen_ledger(window, [(1.0, e_line)])
        est = reconstruct(ledger, window, (1.0, 0, 0), (1.0, 1.0, 1.0))
        d = window.damping()
        omega = est.omega
        expected = (0.5 + (d[1:, None] * np.cos(
            2 * np.pi * np.outer(np.arange(1, window.k_max + 1),
                                 omega - e_line) / window.omega_width)).sum(axis=0)) \
            / window.omega_width
        assert np.allclose(est.p_curves[0], expected, atol=1e-12)
        peak_idx = np.argmax(est.p_curves[0])
        assert abs(omega[peak_idx] - e_line) < window.omega_width / window.num_points

    def test_grid_contract(self):
        window = WindowConfig(num_points=777)
        ledger = _eigen_ledger(window, [(1.0, 5000.0)])
        est = reconstruct(ledger, window, (1.0, 0, 0), (1.0, 1.0, 1.0))
        assert est.omega.size == 777
        assert est.sigma_a.shape == (777,)
        assert np.allclose(est.sigma_a, est.omega * est.combined)

    def test_curves_real_and_p0_normalized(self, triatomic_vscf):
        window = window_defaults()
        ledger = _eigen_ledger(window, [(0.6, 5000.0), (0.4, 9000.0)])
        est = reconstruct(ledger, window, (1.0, 0, 0), (1.0, 1.0, 1.0))
        assert est.p_curves.dtype.kind == "f"
        assert est.fourier[0, 0] == pytest.approx(1.0)

    def test_sampled_estimator_unbiased_in_mean(self):
        window = WindowConfig(num_points=256)
        z_true = [(0.7, 5200.0), (0.3, 8100.0)]
        exact = _eigen_ledger(window, z_true)
        mean_fourier = np.zeros(window.k_max + 1, dtype=complex)
        n_seeds = 60
        for seed in range(n_seeds):
            ledger = allocate_shots(window, 30000, seed=seed)
            ledger.active = (True, False, False)
            sample_ledger(ledger, exact.means)
            est = reconstruct(ledger, window, (1.0, 0, 0), (1.0, 1.0, 1.0))
            mean_fourier += est.fourier[0]
        mean_fourier /= n_seeds
        exact_est = reconstruct(exact, window, (1.0, 0, 0), (1.0, 1.0, 1.0))
        resid = np.abs(mean_fourier - exact_est.fourier[0])
        # per-component statistical error ~ d_k / sqrt(N_k n_seeds)
        ledger = allocate_shots(window, 30000)
        bound = 5 * window.damping()[1:] / np.sqrt(ledger.n_k * n_seeds)
        assert np.all(resid[1:] <= np.maximum(bound, 1e-12))


class TestMatchingPursuit:
    def test_two_separated_lorentzians(self):
        # a fine time budget makes the window atoms true Lorentzians
        window = WindowConfig(omega_min=0.0, omega_max=4000.0, cutoff=0.0,
                              eta=10.0, epsilon=1e-6, num_points=4096)
        lines = [(1.0, 1200.0), (0.55, 1700.0)]  # gap = 50 eta
        ledger = _eigen_ledger(window, lines)
        est = reconstruct(ledger, window, (1.0, 0, 0), (1.0, 1.0, 1.0))
        peaks = matching_pursuit(est, max_peaks=6)
        assert len(peaks) >= 2
        got = sorted(peaks, key=lambda p: -p.amplitude)[:2]
        got = sorted(got, key=lambda p: p.position)
        cell = window.omega_width / window.num_points
        for (amp, pos), peak in zip(lines, got):
            assert abs(peak.position - pos) < cell
            assert peak.amplitude == pytest.approx(amp, rel=0.01)

    def test_flat_zero_spectrum(self):
        window = WindowConfig(num_points=256)
        means = np.zeros((3, window.k_max + 1), dtype=complex)
        ledger = exact_ledger(window, means, (True, False, False))
        ledger.means[0, 0] = 0.0
        est = reconstruct(ledger, window, (0.0, 0, 0), (1.0, 1.0, 1.0))
        est.fourier[0, 0] = 0.0
        est.combined[:] = 0.0
        assert matching_pursuit(est) == []

    def test_single_peak_survives_shot_noise(self):
        window = window_defaults()
        exact = _eigen_ledger(window, [(1.0, 7400.0)])
        ledger = allocate_shots(window, 100_000, seed=5)
        ledger.active = (True, False, False)
        sample_ledger(ledger, exact.means)
        est = reconstruct(ledger, window, (1.0, 0, 0), (1.0, 1.0, 1.0))
        peaks = matching_pursuit(est, max_peaks=12)
        top = max(peaks, key=lambda p: p.amplitude)
        assert abs(top.position - 7400.0) < window.eta
