"""
Conservation, dissipation and energy-budget diagnostics
Post-processing over finished trajectories: the L2 identity, the Hamiltonian, H1/H2 budgets and stability probes
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .integrators import SolverConfig, Trajectory, solve
from .spectral import SpectralField, convolve_direct, sobolev_norm

# Share of the top third of the band above which budgets are flagged as K-sensitive
K_SENSITIVITY_THRESHOLD = 1e-2


@dataclass
class EnergyReport:
    times: List[float]
    l2_norms: List[float]
    dissipation_integral: List[float]
    identity_residuals: List[float]
    H_values: List[float] = field(default_factory=list)
    h1_budget: Dict[str, float] = field(default_factory=dict)
    h2_budget: Dict[str, float] = field(default_factory=dict)
    epsilon: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'epsilon': self.epsilon,
            'times': list(self.times),
            'l2_norms': list(self.l2_norms),
            'dissipation_integral': list(self.dissipation_integral),
            'identity_residuals': list(self.identity_residuals),
            'H_values': list(self.H_values),
            'h1_budget': dict(self.h1_budget),
            'h2_budget': dict(self.h2_budget),
        }


def cumulative_integral(values: np.ndarray, times: np.ndarray, quadrature: str = "simpson") -> np.ndarray:
    """Running integral from t=0 with the solver's quadrature rule"""
    values = np.asarray(values, dtype=float)
    if len(times) == 1:
        return np.zeros(1)
    if quadrature == "simpson" and len(times) >= 3:
        return integrate.cumulative_simpson(values, x=times, initial=0.0)
    return integrate.cumulative_trapezoid(values, x=times, initial=0.0)


def _require_nodes(traj: Trajectory) -> None:
    if len(traj) == 0:
        raise ValueError("trajectory has no nodes")


def _seminorm_squared(f: SpectralField, order: int) -> float:
    """|d_x^order f|_{L2}^2 by Plancherel"""
    k = f.grid.wavenumbers.astype(float)
    return 2 * math.pi * float(np.sum(k ** (2 * order) * np.abs(f.coeffs) ** 2))


def dissipation_integral(traj: Trajectory) -> np.ndarray:
    """Cumulative 2 eps int_0^t |u_x|^2"""
    _require_nodes(traj)
    grad = np.array([_seminorm_squared(u, 1) for u in traj.states])
    return 2 * traj.config.epsilon * cumulative_integral(grad, traj.times, traj.config.quadrature)


def l2_identity_residual(traj: Trajectory, epsilon: Optional[float] = None) -> List[float]:
    """Relative defect of 1/2|u(t)|^2 + eps int_0^t |u_x|^2 = 1/2|phi|^2 at every node"""
    _require_nodes(traj)
    eps = traj.config.epsilon if epsilon is None else epsilon
    grad = np.array([_seminorm_squared(u, 1) for u in traj.states])
    dissipated = eps * cumulative_integral(grad, traj.times, traj.config.quadrature)
    half_mass = 0.5 * np.array([_seminorm_squared(u, 0) for u in traj.states])
    initial = half_mass[0]
    defect = np.abs(half_mass + dissipated - initial)
    if initial == 0:
        return defect.tolist()
    return (defect / initial).tolist()


def energy_H(u: SpectralField) -> float:
    """H[u] = int u_x^2 + (2/3) u^3 + u^2 over the torus"""
    K = u.grid.band_limit
    quadratic = _seminorm_squared(u, 1) + _seminorm_squared(u, 0)
    # zero mode of u^3
    cubic = 2 * math.pi * convolve_direct([u.coeffs, u.coeffs, u.coeffs], K)[K].real
    return quadratic + (2.0 / 3.0) * cubic


def _tail_fraction(f: SpectralField, order: int) -> float:
    k = f.grid.wavenumbers
    weights = k.astype(float) ** (2 * order) * np.abs(f.coeffs) ** 2
    total = float(np.sum(weights))
    if total == 0:
        return 0.0
    return float(np.sum(weights[np.abs(k) > 2 * f.grid.band_limit // 3])) / total


def _budget(traj: Trajectory, epsilon: float, sup_index: float, dissipative_order: Optional[int],
            dissipative_index: Optional[float]) -> Dict[str, float]:
    _require_nodes(traj)
    sup_term = traj.sup_norm(sup_index)
    if dissipative_order is not None:
        integrand = np.array([_seminorm_squared(u, dissipative_order) for u in traj.states])
    else:
        integrand = np.array([sobolev_norm(u, dissipative_index) ** 2 for u in traj.states])
    integral = cumulative_integral(integrand, traj.times, traj.config.quadrature)[-1]
    dissipative = math.sqrt(epsilon) * math.sqrt(max(integral, 0.0))
    order = dissipative_order if dissipative_order is not None else int(dissipative_index)
    tail = max(_tail_fraction(u, order) for u in traj.states)
    if tail > K_SENSITIVITY_THRESHOLD:
        logging.warning(f"Budget is K-sensitive: {tail:.2%} of the order-{order} energy sits in the top third of the band")
    if not (math.isfinite(sup_term) and math.isfinite(dissipative)):
        raise ValueError("budget terms must be finite")
    return {'sup': sup_term, 'dissipative': dissipative, 'total': sup_term + dissipative, 'tail_fraction': tail}


def h1_budget(traj: Trajectory, epsilon: Optional[float] = None) -> Dict[str, float]:
    """sup_t |u|_{H1} and eps^(1/2) (int_0^T |u_xx|^2)^(1/2)"""
    eps = traj.config.epsilon if epsilon is None else epsilon
    return _budget(traj, eps, 1.0, 2, None)


def h2_budget_mkdv(traj: Trajectory, epsilon: Optional[float] = None) -> Dict[str, float]:
    """sup_t |u|_{H2} and eps^(1/2) (int_0^T |u|_{H3}^2)^(1/2)"""
    eps = traj.config.epsilon if epsilon is None else epsilon
    return _budget(traj, eps, 2.0, None, 3.0)


def energy_report(traj: Trajectory, epsilon: Optional[float] = None) -> EnergyReport:
    """Assemble every energy functional of a trajectory"""
    _require_nodes(traj)
    eps = traj.config.epsilon if epsilon is None else epsilon
    report = EnergyReport(
        times=traj.times.tolist(),
        l2_norms=traj.norms(0.0).tolist(),
        dissipation_integral=(2 * eps * cumulative_integral(
            [_seminorm_squared(u, 1) for u in traj.states], traj.times, traj.config.quadrature)).tolist(),
        identity_residuals=l2_identity_residual(traj, eps),
        epsilon=eps,
    )
    if traj.config.alpha == 2:
        report.H_values = [energy_H(u) for u in traj.states]
        report.h1_budget = h1_budget(traj, eps)
    else:
        report.h2_budget = h2_budget_mkdv(traj, eps)
    logging.info(f"Energy report: max identity residual {max(report.identity_residuals):.3e}")
    return report


def difference_trajectory(a: Trajectory, b: Trajectory) -> Trajectory:
    """Node-wise a - b on shared nodes"""
    _check_aligned(a, b)
    return Trajectory(a.times, [x - y for x, y in zip(a.states, b.states)], a.config)


def _check_aligned(a: Trajectory, b: Trajectory) -> None:
    if len(a) != len(b) or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ValueError(f"trajectories are not aligned: {len(a)} vs {len(b)} nodes")


@dataclass
class BurgersTermReport:
    term: float
    dissipation_part: float
    difference_part: float
    ratio: float
    measured_C: float

    def to_dict(self) -> Dict[str, float]:
        return {
            'term': self.term,
            'dissipation_part': self.dissipation_part,
            'difference_part': self.difference_part,
            'ratio': self.ratio,
            'measured_C': self.measured_C,
        }


def burgers_term(u_traj: Trajectory, w_traj: Trajectory) -> BurgersTermReport:
    """int_0^T int u_x w^2 dx dt against eps^2 int |u_x|^2 + sup_t |w|^2"""
    _check_aligned(u_traj, w_traj)
    _require_nodes(u_traj)
    K = u_traj.config.grid.band_limit
    k = u_traj.config.grid.wavenumbers
    values = []
    for u, w in zip(u_traj.states, w_traj.states):
        w_squared = convolve_direct([w.coeffs, w.coeffs], K)
        # Parseval against the reflected spectrum of w^2
        values.append(2 * math.pi * float(np.sum(1j * k * u.coeffs * w_squared[::-1]).real))
    quadrature = u_traj.config.quadrature
    term = float(cumulative_integral(values, u_traj.times, quadrature)[-1])
    eps = u_traj.config.epsilon
    grad = [_seminorm_squared(u, 1) for u in u_traj.states]
    dissipation_part = eps ** 2 * float(cumulative_integral(grad, u_traj.times, quadrature)[-1])
    difference_part = max(_seminorm_squared(w, 0) for w in w_traj.states)
    budget = dissipation_part + difference_part
    ratio = abs(term) / budget if budget > 0 else 0.0
    measured_C = max(0.0, abs(term) - dissipation_part) / difference_part if difference_part > 0 else 0.0
    return BurgersTermReport(term=term, dissipation_part=dissipation_part, difference_part=difference_part,
                             ratio=ratio, measured_C=measured_C)


@dataclass
class LipschitzRow:
    epsilon: float
    sup_difference: float
    data_difference: float
    ratio: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {'epsilon': self.epsilon, 'sup_difference': self.sup_difference,
                'data_difference': self.data_difference, 'ratio': self.ratio}


@dataclass
class LipschitzTable:
    rows: List[LipschitzRow]
    uniformity: Optional[float]
    identical_data: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {'rows': [r.to_dict() for r in self.rows], 'uniformity': self.uniformity,
                'identical_data': self.identical_data}


def _lipschitz_job(job: Tuple[SpectralField, SpectralField, float, SolverConfig, str]) -> float:
    phi1, phi2, epsilon, config, method = job
    leg_config = config.with_(epsilon=epsilon)
    first = solve(phi1, leg_config, method)
    second = solve(phi2, leg_config, method)
    return difference_trajectory(first, second).sup_norm(config.s)


def lipschitz_probe(phi1: SpectralField, phi2: SpectralField, epsilons: Sequence[float], config: SolverConfig,
                    method: str = "reference", threads: int = 1) -> LipschitzTable:
    """sup_t |u1 - u2|_{H^s} / |phi1 - phi2|_{H^s} per epsilon, and its spread across epsilon"""
    data_difference = sobolev_norm(phi1 - phi2, config.s)
    if data_difference == 0:
        logging.info("Lipschitz probe on identical data: the difference is identically zero")
        rows = [LipschitzRow(float(e), 0.0, 0.0, None) for e in epsilons]
        return LipschitzTable(rows=rows, uniformity=None, identical_data=True)

    jobs = [(phi1, phi2, float(e), config, method) for e in epsilons]
    if threads <= 1:
        sups = [_lipschitz_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as executor:
            sups = list(executor.map(_lipschitz_job, jobs))

    rows = [LipschitzRow(float(e), sup, data_difference, sup / data_difference) for e, sup in zip(epsilons, sups)]
    ratios = [r.ratio for r in rows if r.ratio and r.ratio > 0]
    uniformity = max(ratios) / min(ratios) if ratios else None
    logging.info(f"Lipschitz probe over {len(rows)} epsilons: spread {uniformity}")
    return LipschitzTable(rows=rows, uniformity=uniformity)
