"""Batch command-line front end.

Subcommands:
  spectrum   -- full emulated workflow: localize, mean-field solve, dipole
                excitation, window projection, perturbative step selection,
                Trotterized autocorrelation, (sampled or exact) reconstruction
                and peak extraction
  exact      -- dense-diagonalization reference: stick spectrum plus a
                broadened curve (size-guarded)
  resources  -- fault-tolerant cost report: per-step and workflow T-gates,
                qubit accounting, active-volume runtimes, optimization ledger

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 size guard.  Logs go to stderr; stdout carries the summary table.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import hamiltonian as ham_mod, resources as res_mod
from .grid import GridBasis, position_diagonal
from .dynamics import SizeGuardError, autocorrelation_series, dense_hamiltonian, quantize, trotter_plan
from .hamiltonian import (DipoleExpansion, build_model_system, dipole_from_dict,
                          load_hamiltonian, rotate_dipole, localize_modes,
                          save_rotation)
from .spectroscopy import (ConfigError, EmptyWindowError, WindowConfig,
                           allocate_shots, dipole_excite, exact_ledger,
                           matching_pursuit, measure_ground_reference,
                           project_window, reconstruct, sample_ledger,
                           spectrum_to_csv, estimate_to_dict,
                           window_defaults, DEFAULT_TOTAL_SHOTS)
from .vscf import VscfConvergenceError, solve_vscf

log = logging.getLogger("nirvib")

STATEVECTOR_QUBIT_GUARD = 20

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_SIZE_GUARD = 4


def _fail(code: int, kind: str, message: str) -> int:
    print(f"ERROR code={code} kind={kind} msg={message}", file=sys.stderr)
    return code


def _parse_window(args) -> WindowConfig:
    base = window_defaults()
    lo, hi = base.omega_min, base.omega_max
    if args.window:
        try:
            lo_s, hi_s = args.window.split(":")
            lo, hi = float(lo_s), float(hi_s)
        except ValueError as exc:
            raise ConfigError(f"bad --window {args.window!r}, expected lo:hi") from exc
    return WindowConfig(
        omega_min=lo, omega_max=hi,
        cutoff=base.cutoff if args.cutoff is None else args.cutoff,
        padding=base.padding,
        eta=args.eta, epsilon=args.epsilon,
        num_points=args.grid_points,
    )


def _load_system(args):
    if args.model:
        params = {}
        for item in args.param or []:
            key, _, value = item.partition("=")
            if not _:
                raise ConfigError(f"bad --param {item!r}, expected name=value")
            params[key] = float(value)
        return build_model_system(args.model, params)
    if not args.hamiltonian:
        raise ConfigError("need --model or --hamiltonian")
    ham = load_hamiltonian(args.hamiltonian)
    if args.dipole:
        dip = dipole_from_dict(json.loads(Path(args.dipole).read_text()))
    else:
        dip = DipoleExpansion(np.vstack([np.ones(ham.num_modes),
                                         np.zeros(ham.num_modes),
                                         np.zeros(ham.num_modes)]))
    disp = None
    if args.displacement:
        data = json.loads(Path(args.displacement).read_text())
        disp = ham_mod.DisplacementMatrix(np.asarray(data["matrix"], dtype=float))
    return ham, dip, disp


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------

@dataclass
class SpectrumRun:
    """Everything the emulated workflow produced for one configuration."""

    ham: object
    basis: GridBasis
    window: WindowConfig
    solution: object
    plan: object
    components: list
    estimate: object
    peaks: list
    ground_reference: float
    rotation: np.ndarray


def run_spectrum(ham, dipole, window: WindowConfig, qubits_per_mode: int,
                 eps_nu: float, exact: bool = True, shots: int = DEFAULT_TOTAL_SHOTS,
                 seed: int = 0, quantize_bits: tuple[int, int] | None = (10, 25),
                 displacement=None, localize: bool = True, project: bool = True,
                 max_peaks: int = 24, workers: int = 1) -> SpectrumRun:
    """The full emulated workflow on in-memory inputs.

    Localize (when a displacement matrix is supplied), solve the mean field,
    excite with the dipole, screen to the window, pick the Trotter step
    perturbatively, measure the ground reference with the same oracle, run
    the autocorrelation loop, reconstruct (sampled or exact) and extract
    peaks.  ``project=False`` skips the window screen (for full-range
    reference runs).
    """
    if ham.num_modes * qubits_per_mode > STATEVECTOR_QUBIT_GUARD:
        raise SizeGuardError(
            f"statevector needs {ham.num_modes * qubits_per_mode} qubits "
            f"> guard {STATEVECTOR_QUBIT_GUARD}")

    rotation = np.eye(ham.num_modes)
    if localize and displacement is not None and ham.num_modes > 1:
        ham, rotation = localize_modes(ham, displacement)
        dipole = rotate_dipole(dipole, rotation)

    basis = GridBasis(qubits_per_mode=qubits_per_mode, num_modes=ham.num_modes)
    sol = solve_vscf(ham, basis)
    log.info("VSCF ground energy %.6f cm^-1 after %d iterations",
             sol.ground_energy, sol.iterations)

    components = dipole_excite(dipole, sol.ground_state(), basis)
    for comp in components:
        if not comp.active or not project:
            continue
        try:
            state, retained = project_window(comp.state, sol, window.cutoff,
                                             upper=window.omega_max)
            comp.state, comp.projector_norm2 = state, retained
        except EmptyWindowError as exc:
            log.warning("component %s: %s; flagged inactive", comp.label, exc)
            comp.active, comp.state = False, None
    live = [c for c in components if c.active]
    if not live:
        raise EmptyWindowError("no dipole component survives the window projector")

    plan = trotter_plan(ham, basis, sol, [c.state for c in live],
                        eps_nu, window.omega_width)
    log.info("Trotter plan: tau=%s cm, r=%d", plan.tau, plan.r)

    quantized = None
    if quantize_bits is not None:
        quantized = quantize(ham, quantize_bits[0], quantize_bits[1])

    # reference level measured with the same oracle at the same step time
    e0_ref = measure_ground_reference(ham, quantized, sol,
                                      plan.delta_t / plan.r,
                                      eta=window.eta, epsilon=window.epsilon)
    log.info("ground reference %.6f cm^-1 (mean-field %.6f)",
             e0_ref, sol.ground_energy)

    expectations = np.zeros((3, window.k_max + 1), dtype=complex)

    def series_for(comp):
        return autocorrelation_series(comp.state, ham, quantized, plan.r,
                                      window.k_max, window.omega_width,
                                      energy_offset=e0_ref)

    n_workers = max(1, min(workers, len(live)))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(series_for, live))
    else:
        results = [series_for(c) for c in live]
    rows = {label: i for i, label in enumerate(DipoleExpansion.COMPONENTS)}
    for comp, series in zip(live, results):
        expectations[rows[comp.label]] = series

    active = tuple(c.active for c in components)
    if exact:
        ledger = exact_ledger(window, expectations, active, seed=seed)
    else:
        ledger = allocate_shots(window, shots, seed=seed)
        ledger.active = active
        sample_ledger(ledger, expectations)

    est = reconstruct(
        ledger, window,
        mu_norms=[c.mu_norm for c in components],
        projector_norms2=[c.projector_norm2 for c in components],
        energy_offset=e0_ref,
    )
    peaks = matching_pursuit(est, max_peaks=max_peaks)
    return SpectrumRun(ham=ham, basis=basis, window=window, solution=sol,
                       plan=plan, components=components, estimate=est,
                       peaks=peaks, ground_reference=e0_ref, rotation=rotation)


def cmd_spectrum(args) -> int:
    window = _parse_window(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    ham, dipole, disp = _load_system(args)
    run = run_spectrum(
        ham, dipole, window, args.qubits_per_mode, args.epsilon_nu,
        exact=args.exact, shots=args.shots, seed=args.seed,
        quantize_bits=None if args.no_quantize else (args.bk, args.br),
        displacement=disp, localize=not args.no_localize,
        max_peaks=args.max_peaks, workers=args.workers)
    est, peaks, sol, plan = run.estimate, run.peaks, run.solution, run.plan
    save_rotation(run.rotation, out_dir / "rotation.json")

    spectrum_to_csv(est, out_dir / "spectrum.csv")
    peak_lines = ["position_cm1,amplitude,height"]
    for p in peaks:
        peak_lines.append(f"{p.position!r},{p.amplitude!r},{p.height!r}")
    (out_dir / "peaks.csv").write_text("\n".join(peak_lines) + "\n")

    report = {
        "config": {
            "model": args.model, "qubits_per_mode": args.qubits_per_mode,
            "epsilon_nu_cm1": args.epsilon_nu, "shots": args.shots,
            "seed": args.seed, "mode": "exact" if args.exact else "sampled",
            "quantized": not args.no_quantize, "b_k": args.bk, "b_r": args.br,
            "localized": not args.no_localize,
        },
        "window": window.to_dict(),
        "vscf": {"ground_energy_cm1": sol.ground_energy,
                 "iterations": sol.iterations, "monotone": sol.monotone},
        "ground_reference_cm1": run.ground_reference,
        "plan": plan.to_dict(),
        "components": [
            {"label": c.label, "active": c.active, "mu_norm": c.mu_norm,
             "projector_norm2": c.projector_norm2}
            for c in run.components
        ],
        "estimate": estimate_to_dict(est),
    }
    _write_json(out_dir / "report.json", report)

    print(f"{'position (cm^-1)':>18} {'amplitude':>14}")
    for p in peaks:
        print(f"{p.position:>18.3f} {p.amplitude:>14.6e}")
    log.info("wrote %s", out_dir)
    return EXIT_OK


# ---------------------------------------------------------------------------
# exact reference
# ---------------------------------------------------------------------------

def cmd_exact(args) -> int:
    window = _parse_window(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ham, dipole, _ = _load_system(args)
    basis = GridBasis(qubits_per_mode=args.qubits_per_mode, num_modes=ham.num_modes)

    h = dense_hamiltonian(ham, basis)
    evals, evecs = np.linalg.eigh(h)
    ground = evecs[:, 0]
    e0 = float(evals[0])

    amps = np.zeros(evals.size)
    for ci in range(3):
        coeffs = dipole.coefficients[ci]
        if not np.any(coeffs):
            continue
        diag = np.zeros(basis.shape())
        for mode, m_i in enumerate(coeffs):
            if m_i != 0.0:
                diag = diag + m_i * position_diagonal(basis, mode)
        excited = (diag.reshape(-1) * ground)
        amps += np.abs(evecs.conj().T @ excited) ** 2

    omegas = evals - e0
    keep = amps > 1e-16
    stick_lines = ["omega_cm1,amplitude"]
    for w, a in zip(omegas[keep], amps[keep]):
        stick_lines.append(f"{float(w)!r},{float(a)!r}")
    (out_dir / "exact_sticks.csv").write_text("\n".join(stick_lines) + "\n")

    grid = window.omega_grid()
    curve = np.zeros_like(grid)
    for w, a in zip(omegas[keep], amps[keep]):
        curve += a * window.eta / ((grid - w) ** 2 + window.eta ** 2)
    curve *= grid
    curve_lines = ["omega_cm1,sigma_A"]
    for x, y in zip(grid, curve):
        curve_lines.append(f"{float(x)!r},{float(y)!r}")
    (out_dir / "exact_spectrum.csv").write_text("\n".join(curve_lines) + "\n")

    _write_json(out_dir / "exact_report.json", {
        "ground_energy_cm1": e0,
        "window": window.to_dict(),
        "num_transitions": int(keep.sum()),
        "lowest_levels_cm1": [float(x) for x in evals[:16]],
    })
    in_window = [(w, a) for w, a in zip(omegas[keep], amps[keep])
                 if window.omega_min <= w <= window.omega_max]
    print(f"{'position (cm^-1)':>18} {'amplitude':>14}")
    for w, a in sorted(in_window):
        print(f"{w:>18.3f} {a:>14.6e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# resources
# ---------------------------------------------------------------------------

def cmd_resources(args) -> int:
    window = _parse_window(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.standin_modes:
        ham = res_mod.dense_standin_hamiltonian(args.standin_modes)
        label = f"standin-M{args.standin_modes}"
    else:
        ham, _, _ = _load_system(args)
        label = args.model or Path(args.hamiltonian).stem

    model = res_mod.CostModel(qubits_per_mode=args.qubits_per_mode,
                              b_k=args.bk, b_r=args.br,
                              zeta=args.zeta, qft_rotation_tgates=args.qft_rotation_tgates)
    if args.trotter_r is not None:
        r = args.trotter_r
    elif ham.num_modes * args.qubits_per_mode <= 12:
        basis = GridBasis(args.qubits_per_mode, ham.num_modes)
        sol = solve_vscf(ham, basis)
        plan = trotter_plan(ham, basis, sol, sol.ground_state(),
                            args.epsilon_nu, window.omega_width)
        r = plan.r
        log.info("perturbative r = %d", r)
    else:
        raise ConfigError("system too large to derive r here; pass --trotter-r")

    step = res_mod.trotter_step_cost(ham, model, caching=not args.no_caching)
    qubits = res_mod.qubit_accounting(ham.num_modes, args.qubits_per_mode, model,
                                      ham.max_degree)
    ledger = allocate_shots(window, args.shots)

    budgets = [int(b) for b in args.budgets.split(",")]
    estimates = []
    for q_b in budgets:
        estimates.append(res_mod.workflow_cost(
            step, r, window.k_max, ledger.n_k, model,
            qubits=qubits, q_budget=q_b, nu_clock=args.nu_clock))

    full_window = WindowConfig(omega_min=0.0, omega_max=window.omega_max,
                               cutoff=window.cutoff, padding=window.padding,
                               eta=window.eta, epsilon=window.epsilon,
                               num_points=window.num_points)
    full_ledger = allocate_shots(full_window, args.shots)
    improvements = res_mod.improvement_ledger(
        ham, model, r, window.k_max, ledger.n_k,
        full_k_max=full_window.k_max, full_n_k=full_ledger.n_k,
        baseline_r=args.baseline_r)

    header = (f"{'system':<18} {'r':>4} {'max T-gates (runtime)':>28} "
              f"{'total T-gates (runtime)':>28}  [Q_B]")
    table = [header]
    for q_b, est in zip(budgets, estimates):
        table.append(est.table_row(label) + f"  [{q_b}]")
    text = "\n".join(table)
    print(text)
    print()
    print(f"{'optimization':<28} {'factor':>8}")
    for row in improvements:
        print(f"{row.name:<28} {row.factor:>8.2f}   {row.detail}")
    (out_dir / "resources.txt").write_text(text + "\n")

    _write_json(out_dir / "resources.json", {
        "system": label,
        "modes": ham.num_modes,
        "qubits_per_mode": args.qubits_per_mode,
        "r": r,
        "step": {
            "t_gates": step.t_gates,
            "multiplications": step.multiplications,
            "coeff_multiplications": step.coeff_multiplications,
            "additions": step.additions,
            "qft_t_gates": step.qft_t_gates,
            "clifford_cnots": step.clifford_cnots,
            "caching": step.caching,
        },
        "qubits": qubits.itemized() | {"paper_reference_total": qubits.paper_reference_total},
        "window": window.to_dict(),
        "estimates": [
            {"q_budget": q_b,
             "max_circuit_t_gates": est.max_circuit_t_gates,
             "total_t_gates": est.total_t_gates,
             "max_circuit_runtime_s": est.max_circuit_runtime_s,
             "total_runtime_s": est.total_runtime_s}
            for q_b, est in zip(budgets, estimates)
        ],
        "improvements": [
            {"name": row.name, "factor": row.factor, "detail": row.detail}
            for row in improvements
        ],
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_system_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=ham_mod.MODEL_CATALOG, default=None)
    p.add_argument("--param", action="append", metavar="NAME=VALUE",
                   help="model parameter override (repeatable)")
    p.add_argument("--hamiltonian", help="Hamiltonian JSON file")
    p.add_argument("--dipole", help="dipole JSON file")
    p.add_argument("--displacement", help="displacement-matrix JSON file")
    p.add_argument("--qubits-per-mode", type=int, default=3)
    p.add_argument("--out", default="out", help="output directory")


def _add_window_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", metavar="LO:HI", help="spectral window, cm^-1")
    p.add_argument("--cutoff", type=float, default=None, help="projector cutoff W, cm^-1")
    p.add_argument("--eta", type=float, default=10.0)
    p.add_argument("--epsilon", type=float, default=0.8)
    p.add_argument("--grid-points", type=int, default=2048)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nirvib", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", help="emulated spectroscopy workflow")
    _add_system_args(sp)
    _add_window_args(sp)
    sp.add_argument("--epsilon-nu", type=float, default=10.0)
    sp.add_argument("--shots", type=int, default=DEFAULT_TOTAL_SHOTS)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--exact", action="store_true",
                    help="exact expectation values (infinite-shot mode)")
    sp.add_argument("--no-localize", action="store_true")
    sp.add_argument("--no-quantize", action="store_true")
    sp.add_argument("--bk", type=int, default=10, help="coefficient mantissa bits")
    sp.add_argument("--br", type=int, default=25, help="phase-gradient register bits")
    sp.add_argument("--max-peaks", type=int, default=24)
    sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    sp.set_defaults(func=cmd_spectrum)

    ex = sub.add_parser("exact", help="dense-diagonalization reference")
    _add_system_args(ex)
    _add_window_args(ex)
    ex.set_defaults(func=cmd_exact)

    rs = sub.add_parser("resources", help="fault-tolerant cost report")
    _add_system_args(rs)
    _add_window_args(rs)
    rs.add_argument("--standin-modes", type=int, default=None,
                    help="use the dense 2-mode quartic stand-in with this many modes")
    rs.add_argument("--trotter-r", type=int, default=None)
    rs.add_argument("--baseline-r", type=int, default=None,
                    help="user-supplied r for the improvement ledger")
    rs.add_argument("--epsilon-nu", type=float, default=10.0)
    rs.add_argument("--shots", type=int, default=DEFAULT_TOTAL_SHOTS)
    rs.add_argument("--bk", type=int, default=10)
    rs.add_argument("--br", type=int, default=25)
    rs.add_argument("--zeta", type=float, default=1.49)
    rs.add_argument("--qft-rotation-tgates", type=int, default=50)
    rs.add_argument("--no-caching", action="store_true")
    rs.add_argument("--budgets", default="500,2000")
    rs.add_argument("--nu-clock", type=float, default=1e6)
    rs.set_defaults(func=cmd_resources)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except SizeGuardError as exc:
        return _fail(EXIT_SIZE_GUARD, "size-guard", str(exc))
    except (ValueError, KeyError, FileNotFoundError) as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except (VscfConvergenceError, EmptyWindowError, RuntimeError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", str(exc))


if __name__ == "__main__":
    sys.exit(main())
