"""Classical emulator of a grid-based quantum workflow for NIR vibrational spectra."""

from .grid import GridBasis, StateVector, operator_moment, position_diagonal, shifted_dft
from .hamiltonian import (DipoleExpansion, DisplacementMatrix, PesSample,
                          PesSampleSet, TaylorHamiltonian, TermCount,
                          build_model_system, count_terms, fit_taylor_from_pes,
                          localize_modes, n_mode_truncate, rotate_dipole)
from .vscf import ProductState, VscfSolution, solve_vscf, vscf_excitations
from .dynamics import (QuantizedCoefficients, TrotterPlan, autocorrelation,
                       autocorrelation_series, dense_hamiltonian,
                       error_operator_expectation, quantize, trotter_oracle,
                       trotter_plan)
from .spectroscopy import (ShotLedger, SpectrumEstimate, WindowConfig,
                           allocate_shots, dipole_excite, matching_pursuit,
                           project_window, reconstruct, sample_hadamard,
                           window_defaults)
from .resources import (CostModel, ResourceEstimate, improvement_ledger,
                        mult_cost, qubit_accounting, scaling_table,
                        state_prep_cost, trotter_step_cost, workflow_cost)

__version__ = "0.1.0"
