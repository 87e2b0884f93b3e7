import numpy as np
import pytest

from nirvib.grid import GridBasis
from nirvib.hamiltonian import build_model_system
from nirvib.dynamics import dense_hamiltonian
from nirvib.vscf import solve_vscf


@pytest.fixture(scope="session")
def triatomic():
    ham, dipole, disp = build_model_system("triatomic-toy")
    return ham, dipole, disp


@pytest.fixture(scope="session")
def triatomic_dense(triatomic):
    """Dense reference diagonalization of the three-mode toy at N=3."""
    ham, dipole, _ = triatomic
    basis = GridBasis(qubits_per_mode=3, num_modes=3)
    h = dense_hamiltonian(ham, basis)
    evals, evecs = np.linalg.eigh(h)
    return basis, evals, evecs


@pytest.fixture(scope="session")
def triatomic_vscf(triatomic):
    ham, _, _ = triatomic
    basis = GridBasis(qubits_per_mode=3, num_modes=3)
    return basis, solve_vscf(ham, basis)
