"""Exact and Trotterized time evolution on the grid.

The second-order Trotter oracle applies

    U2(t) = exp(-i V t/2) . Q_M^dag exp(-i T t) Q_M . exp(-i V t/2)

with V and T diagonal phase multiplications in the position and momentum
representations.  Time is measured in cm (the reciprocal of cm^-1 energies),
so exp(-i H t) phases are dimensionless.  The perturbative step-size rule
evaluates the leading error operator

    E2 = (1/24) * (2 [T,[T,V]] + [V,[T,V]])

on mean-field product states and converts a target eigenvalue accuracy into
the largest admissible step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .grid import (GridBasis, StateVector, from_momentum, momentum_matrix,
                   position_diagonal, to_momentum)
from .hamiltonian import TaylorHamiltonian
from .vscf import VscfSolution

__all__ = [
    "SizeGuardError",
    "QuantizedCoefficients",
    "TrotterPlan",
    "quantize",
    "dense_hamiltonian",
    "trotter_oracle",
    "autocorrelation_series",
    "error_operator_apply",
    "error_operator_expectation",
    "trotter_plan",
]

DENSE_QUBIT_GUARD = 14


class SizeGuardError(ValueError):
    """Dense-path request beyond the feasibility guard."""


# ---------------------------------------------------------------------------
# Coefficient quantization
# ---------------------------------------------------------------------------

@dataclass
class QuantizedCoefficients:
    """Fixed-point copies of all Hamiltonian coefficients.

    Each coefficient group (kinetic matrix, Phi2, Phi3, Phi4) is rounded to
    the nearest multiple of scale * 2^(1-b_k), where the scale is the group's
    largest magnitude.  Phases applied through the b_r-bit resource register
    are rounded per term to multiples of 2^(1-b_r) radians, so the error per
    exponential is at most 2^(-b_r).
    """

    kinetic: np.ndarray
    phi2: dict[tuple[int, int], float]
    phi3: dict[tuple[int, int, int], float]
    phi4: dict[tuple[int, int, int, int], float]
    scales: dict[str, float]
    max_errors: dict[str, float]
    b_k: int
    b_r: int

    @property
    def phase_step(self) -> float:
        return 2.0 ** (1 - self.b_r)

    @property
    def max_phase_error(self) -> float:
        return 2.0 ** (-self.b_r)

    def as_hamiltonian(self, ham: TaylorHamiltonian) -> TaylorHamiltonian:
        """The quantized Hamiltonian as a regular object (for dense oracles)."""
        return TaylorHamiltonian(
            num_modes=ham.num_modes, harmonic_freqs=ham.harmonic_freqs.copy(),
            kinetic=self.kinetic.copy(), phi2=dict(self.phi2),
            phi3=dict(self.phi3), phi4=dict(self.phi4),
            n_mode=ham.n_mode, max_degree=ham.max_degree,
        )


def _round_group(values: Mapping[tuple, float] | np.ndarray, b_k: int):
    if isinstance(values, np.ndarray):
        scale = float(np.abs(values).max())
        if scale == 0.0:
            return values.copy(), 0.0, 0.0
        h = scale * 2.0 ** (1 - b_k)
        rounded = np.round(values / h) * h
        return rounded, scale, float(np.abs(rounded - values).max())
    vals = dict(values)
    if not vals:
        return vals, 0.0, 0.0
    scale = max(abs(v) for v in vals.values())
    h = scale * 2.0 ** (1 - b_k)
    rounded = {k: round(v / h) * h for k, v in vals.items()}
    err = max(abs(rounded[k] - vals[k]) for k in vals)
    return rounded, scale, err


def quantize(ham: TaylorHamiltonian, b_k: int = 10, b_r: int = 25) -> QuantizedCoefficients:
    """Fixed-point rounding of every coefficient at a per-degree scale."""
    if b_k < 2 or b_r < 2:
        raise ValueError("b_k and b_r must be >= 2")
    kin, s_k, e_k = _round_group(ham.kinetic, b_k)
    p2, s2, e2 = _round_group(ham.phi2, b_k)
    p3, s3, e3 = _round_group(ham.phi3, b_k)
    p4, s4, e4 = _round_group(ham.phi4, b_k)
    return QuantizedCoefficients(
        kinetic=kin, phi2=p2, phi3=p3, phi4=p4,
        scales={"kinetic": s_k, "phi2": s2, "phi3": s3, "phi4": s4},
        max_errors={"kinetic": e_k, "phi2": e2, "phi3": e3, "phi4": e4},
        b_k=b_k, b_r=b_r,
    )


# ---------------------------------------------------------------------------
# Diagonal builders
# ---------------------------------------------------------------------------

def _monomial_field(basis: GridBasis, idx: Sequence[int]) -> np.ndarray:
    field_ = np.ones((1,) * basis.num_modes)
    for mode in idx:
        field_ = field_ * position_diagonal(basis, mode)
    return field_


def potential_diagonal(ham_terms: Iterable[tuple[tuple[int, ...], float]],
                       basis: GridBasis) -> np.ndarray:
    out = np.zeros(basis.shape())
    for idx, coeff in ham_terms:
        out = out + coeff * _monomial_field(basis, idx)
    return out


def _phase_diagonal(terms: Iterable[tuple[tuple[int, ...], float]],
                    basis: GridBasis, time_factor: float,
                    phase_step: float | None) -> np.ndarray:
    """Summed per-term phase angles -coeff * monomial * time_factor.

    With a finite ``phase_step`` each term's angle field is rounded to the
    resource-register grid before accumulation, mirroring one phase-gradient
    addition per monomial.
    """
    out = np.zeros(basis.shape())
    for idx, coeff in terms:
        ang = -coeff * time_factor * _monomial_field(basis, idx)
        if phase_step is not None:
            ang = np.round(ang / phase_step) * phase_step
        out = out + ang
    return out


def _fragment_terms(ham: TaylorHamiltonian, quantized: QuantizedCoefficients | None):
    if quantized is None:
        v_terms = list(ham.potential_terms())
        t_terms = list(ham.kinetic_terms())
    else:
        qham = quantized.as_hamiltonian(ham)
        v_terms = list(qham.potential_terms())
        t_terms = list(qham.kinetic_terms())
    return v_terms, t_terms


# ---------------------------------------------------------------------------
# Dense reference oracle
# ---------------------------------------------------------------------------

def dense_hamiltonian(ham: TaylorHamiltonian, basis: GridBasis,
                      quantized: QuantizedCoefficients | None = None) -> np.ndarray:
    """Dense Hermitian grid Hamiltonian (reference oracle).

    Guarded at M*N <= 14 qubits; beyond that use the matrix-free paths.  The
    matrix is complex Hermitian in general: the grid momentum operator is not
    purely imaginary (its single unpaired extreme eigenvalue breaks the
    symmetry), so cross-mode kinetic couplings contribute complex entries.
    """
    qubits = basis.num_modes * basis.qubits_per_mode
    if qubits > DENSE_QUBIT_GUARD:
        raise SizeGuardError(
            f"dense Hamiltonian needs {qubits} qubits > guard {DENSE_QUBIT_GUARD}; "
            "use the matrix-free evolution instead")
    v_terms, t_terms = _fragment_terms(ham, quantized)
    dim = basis.total_dim
    h = np.zeros((dim, dim), dtype=complex)
    h[np.diag_indices(dim)] = potential_diagonal(v_terms, basis).reshape(-1)
    pmat = momentum_matrix(basis)
    eye = np.eye(basis.grid_size)
    for (i, j), weight in t_terms:
        ops = [eye] * basis.num_modes
        if i == j:
            ops[i] = pmat @ pmat
        else:
            ops[i] = pmat
            ops[j] = pmat
        term = ops[0]
        for op in ops[1:]:
            term = np.kron(term, op)
        h = h + weight * term
    return (h + h.conj().T) / 2.0


# ---------------------------------------------------------------------------
# Trotterized evolution
# ---------------------------------------------------------------------------

def _step_phases(ham: TaylorHamiltonian, basis: GridBasis,
                 quantized: QuantizedCoefficients | None, tau: float):
    v_terms, t_terms = _fragment_terms(ham, quantized)
    step = quantized.phase_step if quantized is not None else None
    ang_v_half = _phase_diagonal(v_terms, basis, tau / 2.0, step)
    ang_t = _phase_diagonal(t_terms, basis, tau, step)
    return np.exp(1j * ang_v_half), np.exp(1j * ang_t)


def _apply_step(tensor: np.ndarray, exp_v_half: np.ndarray, exp_t: np.ndarray,
                axes: tuple[int, ...]) -> np.ndarray:
    tensor = tensor * exp_v_half
    tensor = to_momentum(tensor, axes)
    tensor = tensor * exp_t
    tensor = from_momentum(tensor, axes)
    return tensor * exp_v_half


def trotter_oracle(state: StateVector, ham: TaylorHamiltonian,
                   quantized: QuantizedCoefficients | None, t: float,
                   r: int) -> StateVector:
    """Apply [exp(-iV t/2r) Q^dag exp(-iT t/r) Q exp(-iV t/2r)]^r to the state."""
    if r < 1:
        raise ValueError("r must be >= 1")
    basis = state.basis
    exp_v, exp_t = _step_phases(ham, basis, quantized, t / r)
    axes = tuple(range(basis.num_modes))
    tensor = state.tensor().copy()
    for _ in range(r):
        tensor = _apply_step(tensor, exp_v, exp_t, axes)
    return StateVector(tensor.reshape(-1), basis, state.normalized)


def autocorrelation_series(state: StateVector, ham: TaylorHamiltonian,
                           quantized: QuantizedCoefficients | None,
                           r: int, k_max: int, omega_width: float,
                           energy_offset: float = 0.0) -> np.ndarray:
    """<psi| exp(-2 pi i (H - offset) k / Omega) |psi> for k = 0..k_max.

    Evolution is Trotterized with r steps per time unit 2 pi / Omega; the
    state is advanced once and reused across k, so the whole series costs
    k_max * r steps.  The energy offset is applied as an exact phase.
    """
    basis = state.basis
    delta_t = 2.0 * np.pi / omega_width
    exp_v, exp_t = _step_phases(ham, basis, quantized, delta_t / r)
    axes = tuple(range(basis.num_modes))
    psi0 = state.amplitudes
    tensor = state.tensor().copy()
    out = np.empty(k_max + 1, dtype=complex)
    out[0] = 1.0 if state.normalized else np.vdot(psi0, psi0)
    for k in range(1, k_max + 1):
        for _ in range(r):
            tensor = _apply_step(tensor, exp_v, exp_t, axes)
        out[k] = np.vdot(psi0, tensor.reshape(-1)) * np.exp(2j * np.pi * energy_offset * k / omega_width)
    return out


def autocorrelation(state: StateVector, ham: TaylorHamiltonian,
                    quantized: QuantizedCoefficients | None, plan: "TrotterPlan",
                    k: int, omega_width: float,
                    energy_offset: float = 0.0) -> complex:
    """Single Fourier-index autocorrelation under Trotterized evolution."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return 1.0 + 0.0j
    series = autocorrelation_series(state, ham, quantized, plan.r, k,
                                    omega_width, energy_offset)
    return complex(series[k])


# ---------------------------------------------------------------------------
# Error operator E2
# ---------------------------------------------------------------------------

def _fragment_appliers(ham: TaylorHamiltonian, basis: GridBasis):
    v_diag = potential_diagonal(ham.potential_terms(), basis)
    t_diag = potential_diagonal(ham.kinetic_terms(), basis)  # same grid values in momentum rep
    axes = tuple(range(basis.num_modes))

    def apply_v(tensor: np.ndarray) -> np.ndarray:
        return v_diag * tensor

    def apply_t(tensor: np.ndarray) -> np.ndarray:
        return from_momentum(t_diag * to_momentum(tensor, axes), axes)

    return apply_v, apply_t


# ordered triple products of the expansion of 2[T,[T,V]] + [V,[T,V]]
_E2_CHAINS = (
    (2.0, "TTV"), (-4.0, "TVT"), (2.0, "VTT"),
    (2.0, "VTV"), (-1.0, "VVT"), (-1.0, "TVV"),
)


def error_operator_apply(ham: TaylorHamiltonian, basis: GridBasis,
                         state: StateVector) -> StateVector:
    """E2 |psi> evaluated matrix-free on the grid."""
    apply_v, apply_t = _fragment_appliers(ham, basis)
    ops = {"V": apply_v, "T": apply_t}
    tensor = state.tensor()
    out = np.zeros_like(tensor)
    for coeff, chain in _E2_CHAINS:
        cur = tensor
        for label in reversed(chain):
            cur = ops[label](cur)
        out = out + (coeff / 24.0) * cur
    return StateVector(out.reshape(-1), basis, normalized=False)


def error_operator_expectation(ham: TaylorHamiltonian, basis: GridBasis,
                               state: StateVector) -> float:
    """<psi| E2 |psi>; the operator is Hermitian so the value is real."""
    applied = error_operator_apply(ham, basis, state)
    value = complex(np.vdot(state.amplitudes, applied.amplitudes))
    return value.real


# ---------------------------------------------------------------------------
# Perturbative step-size selection
# ---------------------------------------------------------------------------

@dataclass
class TauDiagnostic:
    indices: tuple[int, ...]
    weight: float
    e2: float
    tau: float
    component: int


@dataclass
class TrotterPlan:
    tau: float                 # weighted step time, cm
    r: int                     # steps per time unit 2 pi / Omega
    eps_nu: float              # target eigenvalue accuracy, cm^-1
    delta_t: float
    omega_width: float
    coverage: float
    diagnostics: list[TauDiagnostic] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tau_cm": self.tau if math.isfinite(self.tau) else None,
            "r": self.r,
            "eps_nu_cm1": self.eps_nu,
            "delta_t_cm": self.delta_t,
            "omega_cm1": self.omega_width,
            "coverage": self.coverage,
            "states": [
                {"indices": list(d.indices), "weight": d.weight, "e2": d.e2,
                 "tau": d.tau if math.isfinite(d.tau) else None,
                 "component": d.component}
                for d in self.diagnostics
            ],
        }


def _modal_weights(state: StateVector, sol: VscfSolution) -> np.ndarray:
    """|<product modal basis | psi>|^2 over the full product grid."""
    tensor = state.tensor()
    for axis in range(state.basis.num_modes):
        rotated = np.tensordot(sol.modal_vectors[axis].conj().T, tensor,
                               axes=([1], [axis]))
        tensor = np.moveaxis(rotated, 0, axis)
    return np.abs(tensor) ** 2


def trotter_plan(ham: TaylorHamiltonian, basis: GridBasis, sol: VscfSolution,
                 initial: StateVector | Sequence[StateVector], eps_nu: float,
                 omega_width: float, coverage: float = 0.99,
                 weight_floor: float = 1e-12) -> TrotterPlan:
    """Perturbative Trotter step from error-operator expectations.

    For each retained mean-field product state j the admissible step is
    tau_j = sqrt(eps_nu / |<E2>_j|); states are retained per initial state in
    decreasing overlap weight until ``coverage`` of the norm is covered, the
    weighted mean of tau_j is formed with renormalized weights, and the means
    are averaged over the supplied Cartesian components.  Vanishing <E2>
    (commuting fragments) contributes no constraint; if nothing constrains
    the step, r = 1.
    """
    if eps_nu <= 0:
        raise ValueError("eps_nu must be positive")
    states = [initial] if isinstance(initial, StateVector) else list(initial)
    if not states:
        raise ValueError("need at least one initial state")
    delta_t = 2.0 * np.pi / omega_width

    diagnostics: list[TauDiagnostic] = []
    e2_cache: dict[tuple[int, ...], float] = {}
    component_taus: list[float] = []
    for comp, psi in enumerate(states):
        weights = _modal_weights(psi, sol).reshape(-1)
        total = float(weights.sum())
        if total < weight_floor:
            raise ValueError("initial state has no weight on the mean-field screen")
        order = np.argsort(weights)[::-1]
        kept: list[tuple[tuple[int, ...], float]] = []
        acc = 0.0
        for flat in order:
            w = float(weights[flat])
            if w <= weight_floor and kept:
                break
            idx = np.unravel_index(int(flat), basis.shape())
            kept.append((tuple(int(i) for i in idx), w))
            acc += w
            if acc >= coverage * total:
                break
        finite: list[tuple[float, float]] = []
        for idx, w in kept:
            if idx not in e2_cache:
                e2_cache[idx] = error_operator_expectation(ham, basis, sol.product_state(idx))
            e2 = e2_cache[idx]
            tau_j = math.sqrt(eps_nu / abs(e2)) if abs(e2) > 1e-300 else math.inf
            diagnostics.append(TauDiagnostic(idx, w, e2, tau_j, comp))
            if math.isfinite(tau_j):
                finite.append((w, tau_j))
        if finite:
            wsum = sum(w for w, _ in finite)
            component_taus.append(sum(w * t for w, t in finite) / wsum)
        else:
            component_taus.append(math.inf)

    finite_taus = [t for t in component_taus if math.isfinite(t)]
    if finite_taus:
        tau = float(np.mean(finite_taus))
        r = max(1, math.ceil(delta_t / tau))
    else:
        tau = math.inf
        r = 1
    return TrotterPlan(tau=tau, r=r, eps_nu=eps_nu, delta_t=delta_t,
                       omega_width=omega_width, coverage=coverage,
                       diagnostics=diagnostics)
