"""Taylor-form vibrational Hamiltonians and linear dipole expansions.

The Hamiltonian is

    H = sum_ij K_ij p_i p_j  +  sum_{i>=j} Phi2_ij q_i q_j
        + sum_{i>=j>=k} Phi3_ijk q_i q_j q_k + sum Phi4 q_i q_j q_k q_l

with K a symmetric matrix (full double sum) and the Phi tensors stored as
sparse maps from canonically sorted (non-increasing) index tuples to the full
monomial coefficient.  All energies are cm^-1; coordinates are dimensionless
natural-unit displacements, so a fresh normal-mode system has K = diag(w/2)
and Phi2 diagonal w/2.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "TaylorHamiltonian",
    "DipoleExpansion",
    "DisplacementMatrix",
    "PesSample",
    "PesSampleSet",
    "TermCount",
    "FitError",
    "fit_taylor_from_pes",
    "build_model_system",
    "localize_modes",
    "rotate_dipole",
    "n_mode_truncate",
    "count_terms",
]

# Coefficients below this (cm^-1, absolute) are dropped after any transformation.
DROP_THRESHOLD = 1e-10
# Relative threshold used when reporting sparsity of transformed Hamiltonians.
SPARSITY_RELATIVE_THRESHOLD = 1e-8


class FitError(ValueError):
    """Raised when a PES fit is underdetermined or malformed."""


def _canonical(idx: Sequence[int]) -> tuple[int, ...]:
    return tuple(sorted((int(i) for i in idx), reverse=True))


def _validate_terms(terms: Mapping[tuple[int, ...], float], degree: int,
                    num_modes: int, n_mode: int) -> dict[tuple[int, ...], float]:
    out: dict[tuple[int, ...], float] = {}
    for idx, coeff in terms.items():
        idx = tuple(int(i) for i in idx)
        if len(idx) != degree:
            raise ValueError(f"index tuple {idx} has wrong length for degree {degree}")
        if idx != tuple(sorted(idx, reverse=True)):
            raise ValueError(f"index tuple {idx} is not sorted non-increasing")
        if any(i < 0 or i >= num_modes for i in idx):
            raise ValueError(f"index out of range in {idx}")
        if len(set(idx)) > n_mode:
            raise ValueError(f"term {idx} touches more than n_mode={n_mode} modes")
        if abs(coeff) > DROP_THRESHOLD:
            out[idx] = float(coeff)
    return out


@dataclass
class TaylorHamiltonian:
    num_modes: int
    harmonic_freqs: np.ndarray
    kinetic: np.ndarray
    phi2: dict[tuple[int, int], float]
    phi3: dict[tuple[int, int, int], float]
    phi4: dict[tuple[int, int, int, int], float]
    n_mode: int = 2
    max_degree: int = 4

    def __post_init__(self):
        self.harmonic_freqs = np.asarray(self.harmonic_freqs, dtype=float).reshape(-1)
        self.kinetic = np.asarray(self.kinetic, dtype=float)
        m = self.num_modes
        if self.harmonic_freqs.size != m:
            raise ValueError("harmonic_freqs length must equal num_modes")
        if self.kinetic.shape != (m, m):
            raise ValueError("kinetic matrix must be M x M")
        scale = max(np.abs(self.kinetic).max(), 1.0)
        if np.abs(self.kinetic - self.kinetic.T).max() > 1e-12 * scale:
            raise ValueError("kinetic matrix must be symmetric")
        if not 1 <= self.max_degree <= 4:
            raise ValueError("max_degree must be in 1..4")
        if self.n_mode < 1:
            raise ValueError("n_mode must be >= 1")
        self.phi2 = _validate_terms(self.phi2, 2, m, self.n_mode)
        self.phi3 = _validate_terms(self.phi3, 3, m, self.n_mode) if self.max_degree >= 3 else {}
        self.phi4 = _validate_terms(self.phi4, 4, m, self.n_mode) if self.max_degree >= 4 else {}
        for degree, terms in ((3, self.phi3), (4, self.phi4)):
            if degree > self.max_degree and terms:
                raise ValueError(f"degree-{degree} terms above max_degree={self.max_degree}")

    # -- convenience ------------------------------------------------------

    def potential_terms(self) -> Iterator[tuple[tuple[int, ...], float]]:
        """All potential monomials (degree 2..4) as (sorted index tuple, coefficient)."""
        yield from self.phi2.items()
        yield from self.phi3.items()
        yield from self.phi4.items()

    def kinetic_terms(self) -> Iterator[tuple[tuple[int, ...], float]]:
        """Kinetic monomials in p with full-sum weights: p_i^2 -> K_ii, p_i p_j -> 2 K_ij."""
        m = self.num_modes
        for i in range(m):
            if abs(self.kinetic[i, i]) > DROP_THRESHOLD:
                yield (i, i), float(self.kinetic[i, i])
            for j in range(i):
                if abs(self.kinetic[i, j]) > DROP_THRESHOLD:
                    yield (i, j), float(2.0 * self.kinetic[i, j])

    def n_taylor(self) -> int:
        """Total number of nonzero monomials (potential plus kinetic)."""
        return len(self.phi2) + len(self.phi3) + len(self.phi4) + sum(1 for _ in self.kinetic_terms())

    def copy(self) -> "TaylorHamiltonian":
        return TaylorHamiltonian(
            self.num_modes, self.harmonic_freqs.copy(), self.kinetic.copy(),
            dict(self.phi2), dict(self.phi3), dict(self.phi4),
            self.n_mode, self.max_degree,
        )

    def max_coefficient(self) -> float:
        vals = [abs(v) for _, v in self.potential_terms()]
        vals.append(float(np.abs(self.kinetic).max()))
        return max(vals) if vals else 0.0


@dataclass
class DipoleExpansion:
    """Linear dipole: mu_rho = sum_i m_i^(rho) q_i for rho in x, y, z."""

    coefficients: np.ndarray  # shape (3, M)

    COMPONENTS = ("x", "y", "z")

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.ndim != 2 or self.coefficients.shape[0] != 3:
            raise ValueError("dipole coefficients must have shape (3, M)")

    @property
    def num_modes(self) -> int:
        return self.coefficients.shape[1]

    def component(self, rho: str) -> np.ndarray:
        return self.coefficients[self.COMPONENTS.index(rho)]


@dataclass
class DisplacementMatrix:
    """Cartesian displacement per normal coordinate, shape (3*N_atoms, M)."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.ndim != 2:
            raise ValueError("displacement matrix must be 2-D")
        if self.matrix.shape[0] % 3 != 0:
            raise ValueError("row count must be 3 * N_atoms")

    @property
    def num_modes(self) -> int:
        return self.matrix.shape[1]

    @property
    def num_atoms(self) -> int:
        return self.matrix.shape[0] // 3

    def normalized(self) -> np.ndarray:
        norms = np.linalg.norm(self.matrix, axis=0)
        if np.any(norms <= 0):
            raise ValueError("displacement matrix has a zero column")
        return self.matrix / norms


@dataclass(frozen=True)
class PesSample:
    modes: tuple[int, ...]
    offsets: tuple[float, ...]
    energy: float  # cm^-1


@dataclass
class PesSampleSet:
    samples: list[PesSample]
    quadrature: str = ""

    def reference_energy(self) -> float:
        for s in self.samples:
            if len(s.modes) == 0 or all(abs(o) < 1e-14 for o in s.offsets):
                return s.energy
        raise FitError("sample set lacks the all-zero-offset reference energy")


@dataclass
class TermCount:
    per_degree: dict[int, int]
    n_taylor: int
    multiplications_cached: int
    multiplications_uncached: int


# ---------------------------------------------------------------------------
# PES fitting (n-mode increments, least squares)
# ---------------------------------------------------------------------------

def _one_mode_basis(max_degree: int) -> list[int]:
    # degree-1 terms vanish at the equilibrium expansion point
    return list(range(2, max_degree + 1))


def _two_mode_basis(max_degree: int) -> list[tuple[int, int]]:
    out = []
    for a in range(1, max_degree):
        for b in range(1, max_degree):
            if a + b <= max_degree:
                out.append((a, b))
    return out


def fit_taylor_from_pes(samples: PesSampleSet, max_degree: int = 4,
                        n_mode: int = 2) -> TaylorHamiltonian:
    """Least-squares fit of Taylor coefficients from 1- and 2-mode PES cuts.

    The potential is decomposed into n-mode increments: 1-mode cuts are fitted
    with q^2..q^max_degree (first derivatives vanish at equilibrium), then the
    2-mode increments, with the fitted 1-mode parts subtracted, are fitted with
    cross monomials q_i^a q_j^b (a, b >= 1).  The per-cut RMS residual is kept
    on the returned object as ``fit_residual_rms``.
    """
    if max_degree < 2 or max_degree > 4:
        raise FitError("max_degree must be 2, 3 or 4")
    if n_mode < 1:
        raise FitError("n_mode must be >= 1")
    v0 = samples.reference_energy()

    one_mode: dict[int, list[tuple[float, float]]] = {}
    two_mode: dict[tuple[int, int], list[tuple[float, float, float]]] = {}
    max_mode = -1
    for s in samples.samples:
        live = [(m, o) for m, o in zip(s.modes, s.offsets) if abs(o) > 1e-14]
        if len(live) > n_mode:
            raise FitError(f"sample displaces {len(live)} modes, n_mode is {n_mode}")
        if s.modes:
            max_mode = max(max_mode, max(s.modes))
        if len(live) == 1:
            m, o = live[0]
            one_mode.setdefault(m, []).append((o, s.energy - v0))
        elif len(live) == 2:
            (mi, oi), (mj, oj) = sorted(live)
            two_mode.setdefault((mi, mj), []).append((oi, oj, s.energy - v0))

    if max_mode < 0:
        raise FitError("sample set contains no displaced geometries")
    num_modes = max_mode + 1

    residuals: list[float] = []
    phi: dict[int, dict[tuple[int, ...], float]] = {2: {}, 3: {}, 4: {}}
    one_mode_poly: dict[int, np.ndarray] = {}

    degrees = _one_mode_basis(max_degree)
    for m in range(num_modes):
        pts = one_mode.get(m, [])
        distinct = len({round(o, 12) for o, _ in pts})
        if distinct < max_degree + 1:
            raise FitError(
                f"1-mode sub-surface for mode {m} has {distinct} distinct offsets, "
                f"needs at least {max_degree + 1}"
            )
        q = np.array([o for o, _ in pts])
        v = np.array([e for _, e in pts])
        a = np.column_stack([q ** d for d in degrees])
        coef, *_ = np.linalg.lstsq(a, v, rcond=None)
        residuals.append(float(np.sqrt(np.mean((a @ coef - v) ** 2))))
        one_mode_poly[m] = coef
        for d, c in zip(degrees, coef):
            if abs(c) > DROP_THRESHOLD:
                phi[d][(m,) * d] = float(c)

    if n_mode >= 2:
        basis2 = _two_mode_basis(max_degree)
        for (mi, mj), pts in sorted(two_mode.items()):
            qi = np.array([p[0] for p in pts])
            qj = np.array([p[1] for p in pts])
            v = np.array([p[2] for p in pts])
            # subtract the fitted 1-mode increments to isolate V2
            for d, c in zip(degrees, one_mode_poly[mi]):
                v = v - c * qi ** d
            for d, c in zip(degrees, one_mode_poly[mj]):
                v = v - c * qj ** d
            if min(len({round(x, 12) for x in qi}), len({round(x, 12) for x in qj})) < max_degree + 1:
                raise FitError(f"2-mode sub-surface ({mi},{mj}) is underdetermined")
            a = np.column_stack([qi ** p * qj ** r for p, r in basis2])
            coef, *_ = np.linalg.lstsq(a, v, rcond=None)
            residuals.append(float(np.sqrt(np.mean((a @ coef - v) ** 2))))
            for (p, r), c in zip(basis2, coef):
                if abs(c) <= DROP_THRESHOLD:
                    continue
                idx = _canonical((mi,) * p + (mj,) * r)
                phi[p + r][idx] = float(c)

    freqs = np.zeros(num_modes)
    for m in range(num_modes):
        c2 = phi[2].get((m, m), 0.0)
        if c2 <= 0:
            raise FitError(f"fitted quadratic coefficient for mode {m} is not positive")
        freqs[m] = 2.0 * c2  # natural units: Phi2_mm = w_m / 2

    ham = TaylorHamiltonian(
        num_modes=num_modes,
        harmonic_freqs=freqs,
        kinetic=np.diag(freqs / 2.0),
        phi2=phi[2], phi3=phi[3], phi4=phi[4],
        n_mode=n_mode, max_degree=max_degree,
    )
    ham.fit_residual_rms = residuals  # type: ignore[attr-defined]
    return ham


def gauss_hermite_samples(potential, num_modes: int, points: int = 9,
                          scale: float = 1.0, pairs: bool = True,
                          quadrature: str = "gauss-hermite") -> PesSampleSet:
    """Sample a callable PES V(q_vec) on per-mode Gauss-Hermite offsets."""
    nodes, _ = np.polynomial.hermite.hermgauss(points)
    nodes = nodes * scale
    samples = [PesSample((), (), float(potential(np.zeros(num_modes))))]
    for m in range(num_modes):
        for o in nodes:
            q = np.zeros(num_modes)
            q[m] = o
            samples.append(PesSample((m,), (float(o),), float(potential(q))))
    if pairs and num_modes >= 2:
        for mi in range(num_modes):
            for mj in range(mi + 1, num_modes):
                for oi in nodes:
                    for oj in nodes:
                        q = np.zeros(num_modes)
                        q[mi], q[mj] = oi, oj
                        samples.append(PesSample((mi, mj), (float(oi), float(oj)),
                                                 float(potential(q))))
    return PesSampleSet(samples, quadrature=f"{quadrature}-{points}")


# ---------------------------------------------------------------------------
# Built-in model systems
# ---------------------------------------------------------------------------

MODEL_CATALOG = ("single-morse-expansion", "coupled-quartic-pair", "triatomic-toy")


def _local_displacement(num_atoms: int, num_modes: int) -> DisplacementMatrix:
    # one atom's x displacement per mode: maximally local columns
    b = np.zeros((3 * num_atoms, num_modes))
    for m in range(num_modes):
        b[3 * m, m] = 1.0
    return DisplacementMatrix(b)


def morse_taylor_coefficients(omega: float, anharmonicity: float) -> tuple[float, float, float]:
    """4th-order Taylor coefficients of a Morse well with given w and wx.

    V = D(1 - e^(-a q))^2 with D = w^2/(4 wx), a = sqrt(w / 2D); expansion
    gives (w/2) q^2 - sqrt(w * wx / 2) q^3 + (7/12) wx q^4 + O(q^5).
    """
    if omega <= 0 or anharmonicity <= 0:
        raise ValueError("omega and anharmonicity must be positive")
    phi2 = omega / 2.0
    phi3 = -math.sqrt(omega * anharmonicity / 2.0)
    phi4 = (7.0 / 12.0) * anharmonicity
    return phi2, phi3, phi4


def build_model_system(name: str, params: Mapping[str, float] | None = None):
    """Deterministic built-in (Hamiltonian, dipole, displacement) triples.

    Catalog:
      single-morse-expansion  -- one mode, 4th-order Morse Taylor expansion;
                                 params: omega (3000), anharmonicity (30)
      coupled-quartic-pair    -- two harmonic modes with diagonal and cross
                                 quartics; params: omega1 (3100), omega2 (3250),
                                 coupling (4.0), quartic1 (5.0), quartic2 (6.0)
      triatomic-toy           -- three modes, 2-mode quartic force field with
                                 documented coefficients (no parameters)
    """
    params = dict(params or {})
    if name == "single-morse-expansion":
        omega = float(params.pop("omega", 3000.0))
        chi = float(params.pop("anharmonicity", 30.0))
        _reject_unknown(name, params)
        p2, p3, p4 = morse_taylor_coefficients(omega, chi)
        ham = TaylorHamiltonian(
            num_modes=1, harmonic_freqs=[omega], kinetic=[[omega / 2.0]],
            phi2={(0, 0): p2}, phi3={(0, 0, 0): p3}, phi4={(0, 0, 0, 0): p4},
            n_mode=1, max_degree=4,
        )
        dip = DipoleExpansion(np.array([[1.0], [0.0], [0.0]]))
        return ham, dip, _local_displacement(2, 1)

    if name == "coupled-quartic-pair":
        w1 = float(params.pop("omega1", 3100.0))
        w2 = float(params.pop("omega2", 3250.0))
        c = float(params.pop("coupling", 4.0))
        g1 = float(params.pop("quartic1", 5.0))
        g2 = float(params.pop("quartic2", 6.0))
        _reject_unknown(name, params)
        w = np.array([w1, w2])
        phi4 = {(0, 0, 0, 0): g1, (1, 1, 1, 1): g2}
        if abs(c) > DROP_THRESHOLD:
            phi4[(1, 1, 0, 0)] = c
        ham = TaylorHamiltonian(
            num_modes=2, harmonic_freqs=w, kinetic=np.diag(w / 2.0),
            phi2={(0, 0): w1 / 2.0, (1, 1): w2 / 2.0}, phi3={}, phi4=phi4,
            n_mode=2, max_degree=4,
        )
        dip = DipoleExpansion(np.array([[1.0, 0.4], [0.3, 0.9], [0.0, 0.0]]))
        return ham, dip, _local_displacement(2, 2)

    if name == "triatomic-toy":
        if params:
            _reject_unknown(name, params)
        # mode 0 is a NIR-window chromophore (its fundamental sits above the
        # projector cutoff) carrying only even anharmonicity, so its
        # high-quanta overtones are parity-suppressed; modes 1 and 2 supply
        # mid-IR fundamentals whose overtones and combinations fill the
        # window.  all dominant coefficients are exactly representable at the
        # default fixed-point mantissa
        w = np.array([4096.0, 3200.0, 1408.0])
        phi2 = {
            (0, 0): w[0] / 2.0, (1, 1): w[1] / 2.0, (2, 2): w[2] / 2.0,
            (1, 0): 12.0, (2, 0): 8.0, (2, 1): 4.0,
        }
        phi3 = {
            (1, 1, 1): -50.0, (2, 2, 2): -16.0,
            (1, 0, 0): 7.0, (2, 0, 0): -4.0,
            (2, 1, 1): -5.0, (2, 2, 1): 3.0,
        }
        phi4 = {
            (0, 0, 0, 0): 6.0, (1, 1, 1, 1): 8.0, (2, 2, 2, 2): 2.5,
            (1, 1, 0, 0): 4.0, (2, 2, 1, 1): 2.5, (2, 2, 0, 0): 2.0,
            (2, 2, 2, 1): 1.0,
        }
        ham = TaylorHamiltonian(
            num_modes=3, harmonic_freqs=w, kinetic=np.diag(w / 2.0),
            phi2=phi2, phi3=phi3, phi4=phi4, n_mode=2, max_degree=4,
        )
        dip = DipoleExpansion(np.array([
            [0.07, 1.0, 0.15],
            [0.05, 0.6, 0.9],
            [0.1, 0.3, 0.25],
        ]))
        return ham, dip, _local_displacement(3, 3)

    raise ValueError(f"unknown model {name!r}; catalog: {', '.join(MODEL_CATALOG)}")


def _reject_unknown(name: str, params: Mapping[str, float]) -> None:
    if params:
        raise ValueError(f"unknown parameters for {name}: {sorted(params)}")


# ---------------------------------------------------------------------------
# Mode localization (Pipek-Mezey-style Jacobi sweeps)
# ---------------------------------------------------------------------------

def localization_objective(b_normalized: np.ndarray, u: np.ndarray) -> float:
    """xi(U) = sum_j sum_alpha ( sum_rho (B~ U)_{alpha rho, j}^2 )^2."""
    c = b_normalized @ u
    natoms = c.shape[0] // 3
    pops = (c.reshape(natoms, 3, -1) ** 2).sum(axis=1)
    return float((pops ** 2).sum())


def _atomic_populations(c: np.ndarray) -> np.ndarray:
    natoms = c.shape[0] // 3
    return c.reshape(natoms, 3, -1)


def localize_modes(ham: TaylorHamiltonian, disp: DisplacementMatrix,
                   tol: float = 1e-10, max_sweeps: int = 100):
    """Rotate modes to maximize atomic locality; returns (new_ham, U).

    U is orthogonal with columns giving the localized modes in the input
    basis (q_old = U q_new).  The kinetic matrix becomes U^T diag(w/2) U and
    the Taylor tensors are rotated by exact contraction, so the grid spectrum
    is preserved up to discretization.  Jacobi 2x2 sweeps run in lexicographic
    pair order with the closed-form stationary angle per pair, tie-broken
    toward zero rotation; the objective never decreases.
    """
    m = ham.num_modes
    if disp.num_modes != m:
        raise ValueError("displacement matrix column count must equal num_modes")
    if np.abs(ham.kinetic - np.diag(np.diag(ham.kinetic))).max() > 1e-10:
        raise ValueError("localize_modes expects a normal-mode (diagonal kinetic) Hamiltonian")
    u = np.eye(m)
    if m == 1:
        return ham.copy(), u

    b = disp.normalized()
    c = b.copy()
    xi = localization_objective(b, np.eye(m))
    for _ in range(max_sweeps):
        gain_total = 0.0
        for s in range(m):
            for t in range(s + 1, m):
                pops = _atomic_populations(c)
                qss = (pops[:, :, s] ** 2).sum(axis=1)
                qtt = (pops[:, :, t] ** 2).sum(axis=1)
                qst = (pops[:, :, s] * pops[:, :, t]).sum(axis=1)
                a_st = float((qst ** 2 - 0.25 * (qss - qtt) ** 2).sum())
                b_st = float((qst * (qss - qtt)).sum())
                r = math.hypot(a_st, b_st)
                gain = a_st + r
                if gain <= tol * max(xi, 1.0):
                    continue
                # stationary 4th-order angle; smallest |gamma| maximizer
                gamma = 0.25 * math.atan2(b_st, -a_st)
                cg, sg = math.cos(gamma), math.sin(gamma)
                rot = np.array([[cg, -sg], [sg, cg]])
                c[:, [s, t]] = c[:, [s, t]] @ rot
                u[:, [s, t]] = u[:, [s, t]] @ rot
                gain_total += gain
        xi_new = localization_objective(b, u)
        if xi_new < xi - 1e-9 * max(abs(xi), 1.0):
            raise RuntimeError("localization objective decreased during a sweep")
        xi = xi_new
        if gain_total < 1e-10 * max(xi, 1.0):
            break

    if np.abs(u.T @ u - np.eye(m)).max() > 1e-8:
        raise RuntimeError("localization rotation lost orthogonality")
    return _rotate_hamiltonian(ham, u), u


def _dense_symmetric_tensor(terms: Mapping[tuple[int, ...], float], m: int,
                            degree: int) -> np.ndarray:
    t = np.zeros((m,) * degree)
    for idx, coeff in terms.items():
        perms = set(itertools.permutations(idx))
        for p in perms:
            t[p] += coeff / len(perms)
    return t


def _collect_canonical(tensor: np.ndarray, degree: int) -> dict[tuple[int, ...], float]:
    m = tensor.shape[0]
    out: dict[tuple[int, ...], float] = {}
    for idx in itertools.combinations_with_replacement(range(m - 1, -1, -1), degree):
        mult = len(set(itertools.permutations(idx)))
        v = float(tensor[idx]) * mult
        if abs(v) > DROP_THRESHOLD:
            out[idx] = v
    return out


def _rotate_hamiltonian(ham: TaylorHamiltonian, u: np.ndarray) -> TaylorHamiltonian:
    m = ham.num_modes
    kin = u.T @ np.diag(ham.harmonic_freqs / 2.0) @ u
    t2 = _dense_symmetric_tensor(ham.phi2, m, 2)
    t2r = u.T @ t2 @ u
    phi2 = _collect_canonical(t2r, 2)
    phi3: dict = {}
    phi4: dict = {}
    if ham.phi3:
        t3 = _dense_symmetric_tensor(ham.phi3, m, 3)
        t3r = np.einsum("ijk,ia,jb,kc->abc", t3, u, u, u)
        phi3 = _collect_canonical(t3r, 3)
    if ham.phi4:
        t4 = _dense_symmetric_tensor(ham.phi4, m, 4)
        t4r = np.einsum("ijkl,ia,jb,kc,ld->abcd", t4, u, u, u, u)
        phi4 = _collect_canonical(t4r, 4)
    # rotation can couple any pair of modes
    return TaylorHamiltonian(
        num_modes=m, harmonic_freqs=ham.harmonic_freqs.copy(), kinetic=kin,
        phi2=phi2, phi3=phi3, phi4=phi4,
        n_mode=max(ham.n_mode, max((len(set(i)) for i in list(phi3) + list(phi4)), default=ham.n_mode)),
        max_degree=ham.max_degree,
    )


def rotate_dipole(dipole: DipoleExpansion, u: np.ndarray) -> DipoleExpansion:
    """Re-express a linear dipole in rotated coordinates (q_old = U q_new)."""
    return DipoleExpansion(dipole.coefficients @ u)


def sparsity_count(ham: TaylorHamiltonian,
                   relative_threshold: float = SPARSITY_RELATIVE_THRESHOLD) -> int:
    """Number of potential monomials above a relative magnitude threshold."""
    floor = relative_threshold * ham.max_coefficient()
    return sum(1 for _, v in ham.potential_terms() if abs(v) >= floor)


# ---------------------------------------------------------------------------
# Truncation and counting
# ---------------------------------------------------------------------------

def n_mode_truncate(ham: TaylorHamiltonian, n: int) -> TaylorHamiltonian:
    """Zero all monomials coupling more than n distinct modes."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = ham.copy()
    out.phi2 = {i: v for i, v in ham.phi2.items() if len(set(i)) <= n}
    out.phi3 = {i: v for i, v in ham.phi3.items() if len(set(i)) <= n}
    out.phi4 = {i: v for i, v in ham.phi4.items() if len(set(i)) <= n}
    out.n_mode = n
    return out


def count_terms(ham: TaylorHamiltonian) -> TermCount:
    """Exact nonzero monomial counts plus step multiplication counts."""
    from .resources import multiplication_schedule  # costing walk lives there

    per_degree = {2: len(ham.phi2), 3: len(ham.phi3), 4: len(ham.phi4)}
    cached = multiplication_schedule(ham, caching=True)
    plain = multiplication_schedule(ham, caching=False)
    return TermCount(
        per_degree=per_degree,
        n_taylor=ham.n_taylor(),
        multiplications_cached=cached.register_multiplies,
        multiplications_uncached=plain.register_multiplies,
    )


# ---------------------------------------------------------------------------
# File schemas (JSON)
# ---------------------------------------------------------------------------

def _terms_to_json(terms: Mapping[tuple[int, ...], float]) -> list[dict]:
    return [{"indices": list(idx), "value": v} for idx, v in sorted(terms.items())]


def _terms_from_json(items: Iterable[Mapping]) -> dict[tuple[int, ...], float]:
    return {tuple(int(i) for i in it["indices"]): float(it["value"]) for it in items}


def hamiltonian_to_dict(ham: TaylorHamiltonian) -> dict:
    return {
        "num_modes": ham.num_modes,
        "harmonic_freqs_cm1": ham.harmonic_freqs.tolist(),
        "kinetic_cm1": ham.kinetic.tolist(),
        "phi2": _terms_to_json(ham.phi2),
        "phi3": _terms_to_json(ham.phi3),
        "phi4": _terms_to_json(ham.phi4),
        "n_mode": ham.n_mode,
        "max_degree": ham.max_degree,
        "units": "cm^-1; dimensionless natural-unit coordinates",
    }


def hamiltonian_from_dict(data: Mapping) -> TaylorHamiltonian:
    return TaylorHamiltonian(
        num_modes=int(data["num_modes"]),
        harmonic_freqs=np.asarray(data["harmonic_freqs_cm1"], dtype=float),
        kinetic=np.asarray(data["kinetic_cm1"], dtype=float),
        phi2=_terms_from_json(data.get("phi2", [])),
        phi3=_terms_from_json(data.get("phi3", [])),
        phi4=_terms_from_json(data.get("phi4", [])),
        n_mode=int(data.get("n_mode", 2)),
        max_degree=int(data.get("max_degree", 4)),
    )


def save_hamiltonian(ham: TaylorHamiltonian, path: str | Path) -> None:
    Path(path).write_text(json.dumps(hamiltonian_to_dict(ham), indent=2, sort_keys=True))


def load_hamiltonian(path: str | Path) -> TaylorHamiltonian:
    return hamiltonian_from_dict(json.loads(Path(path).read_text()))


def dipole_to_dict(dip: DipoleExpansion) -> dict:
    return {c: dip.component(c).tolist() for c in DipoleExpansion.COMPONENTS}


def dipole_from_dict(data: Mapping) -> DipoleExpansion:
    return DipoleExpansion(np.array([data["x"], data["y"], data["z"]], dtype=float))


def save_rotation(u: np.ndarray, path: str | Path) -> None:
    Path(path).write_text(json.dumps({"rotation": np.asarray(u).tolist()}, indent=2))


def load_pes_samples(path: str | Path) -> PesSampleSet:
    data = json.loads(Path(path).read_text())
    samples = [
        PesSample(tuple(int(m) for m in s.get("modes", [])),
                  tuple(float(o) for o in s.get("offsets", [])),
                  float(s["energy"]))
        for s in data["samples"]
    ]
    return PesSampleSet(samples, quadrature=str(data.get("quadrature", "")))
