"""
Experiment runner for kdvlimit
Runs one subcommand from a validated config into a fresh run directory with a digest-checked manifest
"""
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

from . import __version__
from .config import Config, ConfigValidationError, ExperimentConfig
from .diagnostics import (burgers_term, difference_trajectory, energy_H, energy_report, h1_budget,
                          h2_budget_mkdv, l2_identity_residual, lipschitz_probe)
from .integrators import Trajectory, solve, solve_with_diagnostics
from .inviscid import epsilon_sweep, fit_rate, truncation_study
from .probes import estimate_probe
from .resonance import verify_phase_lemmas
from .spectral import normalize, random_sobolev_field
from .utils import make_run_dir, save_to_json, sha256_file, write_csv, write_dict_csv, write_failed_marker

EXIT_OK = 0
EXIT_COMPUTE_FAILURE = 1
EXIT_CONFIG_ERROR = 2

MANIFEST_NAME = "manifest.json"

SWEEP_COLUMNS = ["epsilon", "distance", "s", "T", "K", "seed", "fingerprint"]
PROBE_COLUMNS = ["operator", "s", "N", "K", "trials", "max_ratio", "unrestricted_max_ratio",
                 "fitted_exponent", "unrestricted_exponent"]
TRUNCATION_COLUMNS = ["cutoff", "data_tail", "viscous_leg", "truncated_gap", "inviscid_leg", "leg_sum", "direct",
                      "triangle_holds"]
LIPSCHITZ_COLUMNS = ["epsilon", "sup_difference", "data_difference", "ratio"]
SERIES_COLUMNS = ["t", "value", "residual"]


@dataclass
class RunManifest:
    config: Dict[str, Any]
    version: str
    started: str
    finished: str = ""
    artifacts: Dict[str, str] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'config': self.config,
            'version': self.version,
            'started': self.started,
            'finished': self.finished,
            'artifacts': dict(self.artifacts),
            'diagnostics': self.diagnostics,
        }


Outcome = Tuple[List[Path], Dict[str, Any]]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _trajectory_rows(traj: Trajectory):
    """One row per node and nonnegative mode; negative modes are conjugates"""
    K = traj.config.grid.band_limit
    for t, state in zip(traj.times, traj.states):
        for k in range(K + 1):
            c = state.coeffs[K + k]
            yield [float(t), k, float(c.real), float(c.imag)]


def _relative(values: List[float]) -> List[float]:
    base = values[0]
    return [abs(v - base) / abs(base) if base != 0 else abs(v - base) for v in values]


def run_simulate(experiment: ExperimentConfig, run_dir: Path) -> Outcome:
    """trajectory.csv with physical coefficients and norms.csv with the L2 and H^s norms per node"""
    solver = experiment.solver
    summary: Dict[str, Any] = {}
    if experiment.method == "picard":
        traj, contraction = solve_with_diagnostics(experiment.phi, solver)
        summary['contraction'] = contraction.to_dict()
    else:
        traj = solve(experiment.phi, solver, "reference")
    trajectory_csv = write_csv(run_dir / "trajectory.csv", "trajectory", ["t", "k", "re", "im"],
                               _trajectory_rows(traj))
    l2 = traj.norms(0.0)
    hs = traj.norms(solver.s)
    norms_csv = write_csv(run_dir / "norms.csv", "norms", ["t", "l2", "hs"],
                          ([t, a, b] for t, a, b in zip(traj.times, l2, hs)))
    summary.update({
        'nodes': len(traj),
        'final_l2': float(l2[-1]),
        'sup_hs': float(hs.max()),
        'max_l2_identity_residual': max(l2_identity_residual(traj)),
    })
    return [trajectory_csv, norms_csv], summary


def run_sweep(experiment: ExperimentConfig, run_dir: Path) -> Outcome:
    """sweep.csv with one distance per epsilon, and rate_fit.json when fitting"""
    fit = experiment.settings['fit']
    records = epsilon_sweep(experiment.phi, experiment.epsilons, experiment.solver, experiment.method,
                            experiment.threads, for_fit=fit, seed=experiment.seed)
    artifacts = [write_dict_csv(run_dir / "sweep.csv", "sweep", [r.to_dict() for r in records], SWEEP_COLUMNS)]
    summary: Dict[str, Any] = {'epsilons': len(records)}
    if fit:
        rate = fit_rate(records)
        artifacts.append(save_to_json(rate.to_dict(), run_dir / "rate_fit.json"))
        summary.update({'slope': rate.slope, 'r_squared': rate.r_squared})
    return artifacts, summary


def run_verify_lemmas(experiment: ExperimentConfig, run_dir: Path) -> Outcome:
    """lemmas.json with counterexamples and claims.csv with one row per claim"""
    settings = experiment.settings
    report = verify_phase_lemmas(settings['lemma_K'], experiment.convention,
                                 [float(e) for e in settings['lemma_epsilons']])
    lemmas_json = save_to_json(report.to_dict(), run_dir / "lemmas.json")
    claims_csv = write_csv(run_dir / "claims.csv", "claims", ["claim", "checked", "violations", "holds"],
                           ([c.name, c.checked, c.violation_count, c.holds] for c in report.claims))
    if not report.all_hold:
        logging.warning(f"Phase lemma verification found violations: "
                        f"{[c.name for c in report.claims if not c.holds]}")
    return [lemmas_json, claims_csv], {'all_hold': report.all_hold, 'claims': len(report.claims)}


def run_probe(experiment: ExperimentConfig, run_dir: Path) -> Outcome:
    """probe.csv with the per-N constants of every configured operator"""
    settings = experiment.settings
    reports = []
    for kind in experiment.operators:
        reports.append(estimate_probe(kind, experiment.solver.s, settings['trials'], settings['N_values'],
                                      experiment.seed, band_limit=experiment.grid.band_limit,
                                      threads=experiment.threads))
    rows = [row for report in reports for row in report.to_rows()]
    probe_csv = write_dict_csv(run_dir / "probe.csv", "probe", rows, PROBE_COLUMNS)
    probe_json = save_to_json({'reports': [r.to_dict() for r in reports]}, run_dir / "probe.json")
    summary = {'exponents': {r.operator.tag.value: r.fitted_N_exponent for r in reports}}
    return [probe_csv, probe_json], summary


def _series(path: Path, artifact: str, times, values: List[float], residuals: List[float]) -> Path:
    return write_csv(path, artifact, SERIES_COLUMNS, ([t, v, r] for t, v, r in zip(times, values, residuals)))


def run_report(experiment: ExperimentConfig, run_dir: Path) -> Outcome:
    """Energy series, budgets, the Burgers-term report and an optional Lipschitz table"""
    solver = experiment.solver
    viscous = solve(experiment.phi, solver, experiment.method)
    inviscid = solve(experiment.phi, solver.with_(epsilon=0.0), experiment.method)
    energy = energy_report(viscous)

    artifacts = []
    half_mass = [0.5 * n ** 2 for n in energy.l2_norms]
    identity = [m + 0.5 * d for m, d in zip(half_mass, energy.dissipation_integral)]
    artifacts.append(_series(run_dir / "l2_identity.csv", "l2_identity", energy.times, identity,
                             energy.identity_residuals))
    if solver.alpha == 2:
        H = [energy_H(u) for u in viscous.states]
        artifacts.append(_series(run_dir / "hamiltonian.csv", "hamiltonian", energy.times, H, _relative(H)))
    artifacts.append(_series(run_dir / "l2_norm.csv", "l2_norm", energy.times, energy.l2_norms,
                             _relative(energy.l2_norms)))

    budget_key, budget = (("h1_budget", h1_budget(viscous)) if solver.alpha == 2
                          else ("h2_budget", h2_budget_mkdv(viscous)))
    burgers = burgers_term(viscous, difference_trajectory(viscous, inviscid))
    artifacts.append(save_to_json({budget_key: budget, 'burgers_term': burgers.to_dict(),
                                   'epsilon': solver.epsilon}, run_dir / "budget.json"))

    summary: Dict[str, Any] = {'max_identity_residual': max(energy.identity_residuals),
                               budget_key: budget['total'], 'burgers_ratio': burgers.ratio}
    perturbation = float(experiment.settings['lipschitz_perturbation'])
    if perturbation > 0:
        bump = random_sobolev_field(experiment.seed + 1, experiment.grid, float(experiment.settings['data_s']), 1.0)
        phi2 = experiment.phi + normalize(bump, solver.s, perturbation)
        table = lipschitz_probe(experiment.phi, phi2, experiment.epsilons, solver, experiment.method,
                                experiment.threads)
        artifacts.append(write_dict_csv(run_dir / "lipschitz.csv", "lipschitz",
                                        [r.to_dict() for r in table.rows], LIPSCHITZ_COLUMNS))
        summary['lipschitz_uniformity'] = table.uniformity
    return artifacts, summary


def run_truncation(experiment: ExperimentConfig, run_dir: Path) -> Outcome:
    """truncation.csv with the three legs per cutoff against the direct distance"""
    rows = truncation_study(experiment.phi, experiment.settings['cutoffs'], experiment.solver.epsilon,
                            experiment.solver, experiment.method, experiment.threads)
    truncation_csv = write_dict_csv(run_dir / "truncation.csv", "truncation", [r.to_dict() for r in rows],
                                    TRUNCATION_COLUMNS)
    return [truncation_csv], {'triangle_holds': all(r.triangle_holds for r in rows)}


HANDLERS: Dict[str, Callable[[ExperimentConfig, Path], Outcome]] = {
    "simulate": run_simulate,
    "sweep": run_sweep,
    "verify-lemmas": run_verify_lemmas,
    "probe": run_probe,
    "report": run_report,
    "truncation": run_truncation,
}


def verify_manifest(run_dir: Path) -> List[str]:
    """Names of artifacts whose digest no longer matches the manifest"""
    with open(run_dir / MANIFEST_NAME, 'r', encoding='utf-8') as f:
        manifest = json.load(f)
    mismatched = []
    for name, digest in manifest['artifacts'].items():
        path = run_dir / name
        if not path.exists() or sha256_file(path) != digest:
            mismatched.append(name)
    return mismatched


def execute(experiment: ExperimentConfig, run_dir: Path) -> RunManifest:
    """Run the handler, then write and verify the manifest; raises on any failure"""
    manifest = RunManifest(config=experiment.echo(), version=__version__, started=_now())
    artifacts, summary = HANDLERS[experiment.subcommand](experiment, run_dir)
    manifest.artifacts = {path.name: sha256_file(path) for path in artifacts}
    manifest.diagnostics = summary
    manifest.finished = _now()
    save_to_json(manifest.to_dict(), run_dir / MANIFEST_NAME)
    mismatched = verify_manifest(run_dir)
    if mismatched:
        raise RuntimeError(f"artifact digests do not match the manifest: {', '.join(mismatched)}")
    return manifest


def run(config_path: Optional[str], subcommand: str, overrides: Optional[Mapping[str, Any]] = None) -> int:
    """Run one subcommand; 0 on success, 1 on a compute failure, 2 on a configuration error"""
    try:
        config = Config(config_path, overrides)
        experiment = ExperimentConfig.from_config(config, subcommand)
    except (ConfigValidationError, FileNotFoundError) as e:
        logging.error(f"{e}")
        return EXIT_CONFIG_ERROR

    run_dir = make_run_dir(experiment.output_dir, subcommand, experiment.echo())
    try:
        manifest = execute(experiment, run_dir)
    except Exception as e:
        write_failed_marker(run_dir, f"{type(e).__name__}: {e}")
        logging.error(f"{subcommand} failed: {e}")
        return EXIT_COMPUTE_FAILURE
    logging.info(f"{subcommand} finished in {run_dir} with {len(manifest.artifacts)} artifacts")
    return EXIT_OK
