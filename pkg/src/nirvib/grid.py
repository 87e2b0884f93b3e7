"""Real-space qubit-grid encoding of vibrational modes.

Each mode gets an N-qubit register whose 2^N computational basis states label
a uniform grid with spacing Delta = sqrt(2*pi / 2^N).  Position eigenvalues on
the grid are q(n) = Delta * (n - 2^(N-1)); the momentum representation is
reached by a centered discrete Fourier transform (DFT conjugated with a
most-significant-bit flip), under which the momentum grid coincides with the
position grid.  Energies are in cm^-1 throughout; q and p are dimensionless.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GridBasis",
    "StateVector",
    "position_diagonal",
    "shifted_dft",
    "operator_moment",
    "momentum_matrix",
]


@dataclass(frozen=True)
class GridBasis:
    """Uniform per-mode grid for an M-mode, N-qubit-per-mode register."""

    qubits_per_mode: int
    num_modes: int

    def __post_init__(self):
        if self.qubits_per_mode < 1:
            raise ValueError("qubits_per_mode must be >= 1")
        if self.num_modes < 1:
            raise ValueError("num_modes must be >= 1")

    @property
    def grid_size(self) -> int:
        return 2 ** self.qubits_per_mode

    @property
    def delta(self) -> float:
        return float(np.sqrt(2.0 * np.pi / self.grid_size))

    @property
    def points(self) -> np.ndarray:
        """Grid values q(n) = Delta*(n - 2^(N-1)), n = 0..2^N-1."""
        g = self.grid_size
        return self.delta * (np.arange(g) - g // 2)

    @property
    def total_dim(self) -> int:
        return self.grid_size ** self.num_modes

    @property
    def width(self) -> float:
        return float(np.sqrt(np.pi * 2 ** (self.qubits_per_mode + 1)))

    def shape(self) -> tuple[int, ...]:
        return (self.grid_size,) * self.num_modes


@dataclass
class StateVector:
    """Complex amplitudes over the M*N-qubit product grid (mode 0 = first axis)."""

    amplitudes: np.ndarray
    basis: GridBasis
    normalized: bool = True

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if self.amplitudes.size != self.basis.total_dim:
            raise ValueError(
                f"amplitude length {self.amplitudes.size} does not match basis "
                f"dimension {self.basis.total_dim}"
            )
        if self.normalized:
            nrm = self.norm()
            if abs(nrm - 1.0) > 1e-10:
                raise ValueError(f"state marked normalized but |psi| = {nrm!r}")

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.basis.shape())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.basis, self.normalized)

    def renormalized(self) -> "StateVector":
        return StateVector(self.amplitudes / self.norm(), self.basis)

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def product_state(basis: GridBasis, mode_vectors: Sequence[np.ndarray]) -> StateVector:
    """Outer product of per-mode grid wavefunctions."""
    if len(mode_vectors) != basis.num_modes:
        raise ValueError("need one vector per mode")
    amps = np.asarray(mode_vectors[0], dtype=np.complex128)
    for v in mode_vectors[1:]:
        amps = np.multiply.outer(amps, np.asarray(v, dtype=np.complex128))
    amps = amps.reshape(-1)
    return StateVector(amps / np.linalg.norm(amps), basis)


def position_diagonal(basis: GridBasis, mode: int) -> np.ndarray:
    """Diagonal of q on one mode's register, broadcastable over the product grid."""
    if not 0 <= mode < basis.num_modes:
        raise ValueError(f"mode {mode} out of range for {basis.num_modes} modes")
    shape = [1] * basis.num_modes
    shape[mode] = basis.grid_size
    return basis.points.reshape(shape)


def _mom_axes(basis: GridBasis, modes: Iterable[int] | None) -> tuple[int, ...]:
    if modes is None:
        return tuple(range(basis.num_modes))
    axes = tuple(sorted(set(int(m) for m in modes)))
    for m in axes:
        if not 0 <= m < basis.num_modes:
            raise ValueError(f"mode {m} out of range")
    return axes


def _stagger_sign(g: int) -> np.ndarray:
    # momentum-diagonal phase layer (-1)^(m - g/2); it commutes with every
    # momentum-diagonal operator, so conjugations are unchanged, while grid
    # plane waves transform to positive point masses
    return np.where((np.arange(g) - g // 2) % 2 == 0, 1.0, -1.0)


def to_momentum(tensor: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Centered-DFT change of basis, position -> momentum, along the given axes."""
    if not axes:
        return tensor
    out = np.fft.fftn(tensor, axes=axes, norm="ortho")
    half = tensor.shape[axes[0]] // 2
    out = np.roll(out, tuple(-half for _ in axes), axis=tuple(axes))
    sign = _stagger_sign(tensor.shape[axes[0]])
    for ax in axes:
        shape = [1] * tensor.ndim
        shape[ax] = sign.size
        out = out * sign.reshape(shape)
    return out


def from_momentum(tensor: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    if not axes:
        return tensor
    g = tensor.shape[axes[0]]
    sign = _stagger_sign(g)
    out = tensor
    for ax in axes:
        shape = [1] * tensor.ndim
        shape[ax] = sign.size
        out = out * sign.reshape(shape)
    out = np.roll(out, tuple(g // 2 for _ in axes), axis=tuple(axes))
    return np.fft.ifftn(out, axes=axes, norm="ortho")


def shifted_dft(state: StateVector, modes: Iterable[int] | None = None,
                inverse: bool = False) -> StateVector:
    """Apply the per-mode centered DFT (shifted QFT) on a subset of modes.

    The transform maps position amplitudes to momentum amplitudes; momentum
    eigenvalues on the transformed register coincide with the position grid.
    ``inverse=True`` applies the conjugate transform.
    """
    axes = _mom_axes(state.basis, modes)
    t = state.tensor()
    out = from_momentum(t, axes) if inverse else to_momentum(t, axes)
    return StateVector(out.reshape(-1), state.basis, state.normalized)


def momentum_matrix(basis: GridBasis) -> np.ndarray:
    """Dense single-mode momentum operator p = F^dag q F (2^N x 2^N)."""
    g = basis.grid_size
    f = to_momentum(np.eye(g), axes=(0,))
    return f.conj().T @ (basis.points[:, None] * f)


def operator_moment(state: StateVector, monomial: Sequence[int],
                    kinetic: bool = False) -> complex:
    """Expectation value of a product of q's (or p's) named by mode indices.

    ``monomial`` lists mode indices with multiplicity, e.g. (0, 0, 1) for
    q0^2 q1.  With ``kinetic=True`` the same monomial is taken in the p's,
    evaluated by conjugating with the shifted DFT.
    """
    for m in monomial:
        if not 0 <= m < state.basis.num_modes:
            raise ValueError(f"mode {m} out of range")
    t = state.tensor()
    if kinetic:
        axes = tuple(sorted(set(int(m) for m in monomial)))
        t = to_momentum(t, axes)
    diag = np.ones((1,) * state.basis.num_modes)
    for m in monomial:
        diag = diag * position_diagonal(state.basis, m)
    return complex(np.vdot(t, diag * t))
