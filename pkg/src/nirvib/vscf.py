"""Grid-based vibrational self-consistent field solver.

Each mode gets a mean-field Hamiltonian on its own grid register: the mode's
kinetic term plus the potential monomials averaged over the other modes'
occupied modals.  Diagonalizing per mode and iterating to self-consistency
yields modals that are used for the energy-window projector, the perturbative
Trotter-step weights, and initial-state construction.  Mean field is exact
for Hamiltonians without cross-mode terms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .grid import GridBasis, StateVector, momentum_matrix, product_state
from .hamiltonian import TaylorHamiltonian

__all__ = [
    "VscfSolution",
    "ProductState",
    "VscfConvergenceError",
    "solve_vscf",
    "vscf_excitations",
]


class VscfConvergenceError(RuntimeError):
    def __init__(self, message: str, energy_trace: list[float]):
        super().__init__(message)
        self.energy_trace = energy_trace


@dataclass(frozen=True)
class ProductState:
    """Per-mode modal occupation, optionally with an expansion amplitude."""

    indices: tuple[int, ...]
    amplitude: complex = 1.0


@dataclass
class VscfSolution:
    basis: GridBasis
    modal_vectors: list[np.ndarray]   # per mode, columns = modals on the grid
    modal_energies: list[np.ndarray]  # per mode, ascending (cm^-1)
    ground_energy: float
    energy_trace: list[float]
    monotone: bool
    iterations: int

    def excitation_energy(self, indices: Sequence[int]) -> float:
        """omega~ = sum of per-mode modal energy differences from the ground modal."""
        return float(sum(self.modal_energies[m][k] - self.modal_energies[m][0]
                         for m, k in enumerate(indices)))

    def ground_state(self) -> StateVector:
        return product_state(self.basis, [v[:, 0] for v in self.modal_vectors])

    def product_state(self, indices: Sequence[int]) -> StateVector:
        if len(indices) != self.basis.num_modes:
            raise ValueError("need one modal index per mode")
        vecs = []
        for m, k in enumerate(indices):
            if not 0 <= k < self.modal_vectors[m].shape[1]:
                raise ValueError(f"modal index {k} out of range for mode {m}")
            vecs.append(self.modal_vectors[m][:, k])
        return product_state(self.basis, vecs)

    def excitation_grid(self) -> list[np.ndarray]:
        """Per-mode arrays of modal energies relative to the ground modal."""
        return [e - e[0] for e in self.modal_energies]


def _mode_moments(vec: np.ndarray, points: np.ndarray, max_power: int) -> np.ndarray:
    """<q^k> for k = 0..max_power under a single-mode grid wavefunction."""
    density = np.abs(vec) ** 2
    return np.array([float(density @ points ** k) for k in range(max_power + 1)])


def solve_vscf(ham: TaylorHamiltonian, basis: GridBasis, tol: float = 1e-10,
               max_iterations: int = 200) -> VscfSolution:
    """Self-consistent per-mode diagonalization on the grid.

    Iterates mean-field updates until the ground-state energy moves by less
    than ``tol`` cm^-1; raises VscfConvergenceError (carrying the energy
    trace) if ``max_iterations`` sweeps do not converge.
    """
    if ham.max_degree > 4:
        raise ValueError("solver supports Taylor degree <= 4")
    if basis.num_modes != ham.num_modes:
        raise ValueError("basis mode count must match the Hamiltonian")
    m = ham.num_modes
    g = basis.grid_size
    q = basis.points
    pmat = momentum_matrix(basis)
    p2 = np.real(pmat @ pmat)
    powers = {mode: np.vstack([q ** k for k in range(5)]) for mode in range(m)}

    terms = list(ham.potential_terms())
    vectors = [np.zeros((g, g)) for _ in range(m)]
    energies = [np.zeros(g) for _ in range(m)]

    # initial modals from the bare one-mode parts
    moments = np.zeros((m, 5))
    for mode in range(m):
        diag = np.zeros(g)
        for idx, coeff in terms:
            if set(idx) == {mode}:
                diag += coeff * q ** len(idx)
        h = ham.kinetic[mode, mode] * p2 + np.diag(diag)
        evals, evecs = np.linalg.eigh(h)
        vectors[mode], energies[mode] = evecs, evals
        moments[mode] = _mode_moments(evecs[:, 0], q, 4)

    def total_energy() -> float:
        e = 0.0
        pexp = np.array([float(np.real(np.vdot(vectors[mode][:, 0],
                                               pmat @ vectors[mode][:, 0])))
                         for mode in range(m)])
        p2exp = np.array([float(vectors[mode][:, 0] @ p2 @ vectors[mode][:, 0])
                          for mode in range(m)])
        for i in range(m):
            e += ham.kinetic[i, i] * p2exp[i]
            for j in range(m):
                if j != i:
                    e += ham.kinetic[i, j] * pexp[i] * pexp[j]
        for idx, coeff in terms:
            contrib = coeff
            for mode, power in _powers_of(idx).items():
                contrib *= moments[mode][power]
            e += contrib
        return e

    trace = [total_energy()]
    monotone = True
    for iteration in range(max_iterations):
        for mode in range(m):
            veff = np.zeros(g)
            for idx, coeff in terms:
                pw = _powers_of(idx)
                own = pw.pop(mode, 0)
                if own == 0:
                    continue  # constant shift for this mode, irrelevant to modals
                weight = coeff
                for other, power in pw.items():
                    weight *= moments[other][power]
                veff += weight * powers[mode][own]
            h = ham.kinetic[mode, mode] * p2 + np.diag(veff)
            evals, evecs = np.linalg.eigh(h)
            vectors[mode], energies[mode] = evecs, evals
            moments[mode] = _mode_moments(evecs[:, 0], q, 4)
        e = total_energy()
        if e > trace[-1] + 1e-9:
            monotone = False
        change = abs(e - trace[-1])
        trace.append(e)
        if change < tol:
            return VscfSolution(
                basis=basis, modal_vectors=vectors, modal_energies=energies,
                ground_energy=e, energy_trace=trace, monotone=monotone,
                iterations=iteration + 1,
            )
    raise VscfConvergenceError(
        f"VSCF did not converge in {max_iterations} iterations", trace)


def _powers_of(idx: Iterable[int]) -> dict[int, int]:
    powers: dict[int, int] = {}
    for i in idx:
        powers[i] = powers.get(i, 0) + 1
    return powers


def vscf_excitations(sol: VscfSolution, energy_window: tuple[float, float],
                     max_quanta: int = 6) -> list[tuple[ProductState, float]]:
    """Product excitations with total modal energy inside the window.

    Enumerates occupations with at most ``max_quanta`` total quanta per
    product state, returning (state, omega~) sorted by energy.  An empty
    window yields an empty list.
    """
    lo, hi = energy_window
    m = sol.basis.num_modes
    levels = sol.excitation_grid()
    out: list[tuple[ProductState, float]] = []
    max_per_mode = [min(len(lv) - 1, max_quanta) for lv in levels]
    for occ in itertools.product(*(range(k + 1) for k in max_per_mode)):
        if sum(occ) > max_quanta:
            continue
        energy = float(sum(levels[mode][k] for mode, k in enumerate(occ)))
        if lo <= energy <= hi:
            out.append((ProductState(indices=occ), energy))
    out.sort(key=lambda pair: (pair[1], pair[0].indices))
    return out
