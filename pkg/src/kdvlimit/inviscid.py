"""
Inviscid-limit experiments for kdvlimit
Viscous/inviscid solve pairs from shared data, epsilon sweeps, rate fits and the frequency-truncation argument
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .diagnostics import difference_trajectory
from .integrators import SolverConfig, Trajectory, solve
from .spectral import BandMode, SpectralField, project_band, sobolev_norm
from .utils import fingerprint

MIN_FIT_EPSILONS = 3
MIN_FIT_DECADES = 2.0

# Metric-inequality slack for the truncation triangle
TRIANGLE_SLACK = 1e-8


class PairSolveError(RuntimeError):
    """Raised when one leg of a viscous/inviscid pair fails"""

    def __init__(self, leg: str, epsilon: float, cause: Exception):
        self.leg = leg
        self.epsilon = epsilon
        super().__init__(f"{leg} leg failed at epsilon={epsilon}: {cause}")


@dataclass(frozen=True)
class SweepRecord:
    epsilon: float
    distance: float
    s: float
    T: float
    K: int
    seed: Optional[int] = None
    fingerprint: str = ""
    horizon: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'epsilon': self.epsilon, 'distance': self.distance, 's': self.s, 'T': self.T, 'K': self.K,
                'seed': self.seed, 'fingerprint': self.fingerprint, 'horizon': self.horizon}


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    epsilons_used: List[float]
    excluded: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {'slope': self.slope, 'intercept': self.intercept, 'r_squared': self.r_squared,
                'epsilons_used': list(self.epsilons_used), 'excluded': list(self.excluded)}


def _solve_leg(phi: SpectralField, config: SolverConfig, epsilon: float, method: str, leg: str) -> Trajectory:
    try:
        return solve(phi, config.with_(epsilon=epsilon), method)
    except Exception as e:
        raise PairSolveError(leg, epsilon, e) from e


def _distance(viscous: Trajectory, inviscid: Trajectory, s: float, horizon: Optional[float]) -> float:
    difference = difference_trajectory(viscous, inviscid)
    if horizon is not None:
        difference = difference.restrict(horizon)
    return difference.sup_norm(s)


def _record(epsilon: float, distance: float, config: SolverConfig, seed: Optional[int],
            horizon: Optional[float]) -> SweepRecord:
    return SweepRecord(epsilon=float(epsilon), distance=float(distance), s=config.s, T=config.T,
                       K=config.grid.band_limit, seed=seed,
                       fingerprint=fingerprint(config.with_(epsilon=float(epsilon)).to_dict()), horizon=horizon)


def run_pair(phi: SpectralField, epsilon: float, config: SolverConfig, method: str = "reference",
             horizon: Optional[float] = None, seed: Optional[int] = None) -> SweepRecord:
    """sup over shared nodes of |S^eps(phi) - S(phi)|_{H^s}, optionally up to a horizon"""
    inviscid = _solve_leg(phi, config, 0.0, method, "inviscid")
    viscous = inviscid if epsilon == 0 else _solve_leg(phi, config, epsilon, method, "viscous")
    distance = _distance(viscous, inviscid, config.s, horizon)
    logging.info(f"Pair at epsilon={epsilon}: distance {distance:.6e}")
    return _record(epsilon, distance, config, seed, horizon)


def _viscous_job(job: Tuple[SpectralField, SolverConfig, float, str]) -> Trajectory:
    phi, config, epsilon, method = job
    return _solve_leg(phi, config, epsilon, method, "viscous")


def check_fit_grid(epsilons: Sequence[float]) -> None:
    """At least three positive epsilons spanning two decades"""
    if len(epsilons) < MIN_FIT_EPSILONS:
        raise ValueError(f"at least {MIN_FIT_EPSILONS} epsilons required for fit, got {len(epsilons)}")
    positive = [e for e in epsilons if e > 0]
    if len(positive) < MIN_FIT_EPSILONS:
        raise ValueError(f"at least {MIN_FIT_EPSILONS} positive epsilons required for fit")
    decades = math.log10(max(positive) / min(positive))
    if decades < MIN_FIT_DECADES - 1e-12:
        raise ValueError(f"epsilons must span at least {MIN_FIT_DECADES:g} decades for fit, got {decades:.3g}")


def epsilon_sweep(phi: SpectralField, epsilons: Sequence[float], config: SolverConfig, method: str = "reference",
                  threads: int = 1, for_fit: bool = False, seed: Optional[int] = None,
                  horizon: Optional[float] = None) -> List[SweepRecord]:
    """One inviscid solve shared by a viscous solve per epsilon; records keep input order"""
    epsilons = [float(e) for e in epsilons]
    if for_fit:
        check_fit_grid(epsilons)
    if any(e < 0 or e > 1 for e in epsilons):
        raise ValueError(f"epsilons must lie in [0, 1], got {epsilons}")

    inviscid = _solve_leg(phi, config, 0.0, method, "inviscid")
    jobs = [(phi, config, e, method) for e in epsilons if e > 0]
    if threads <= 1 or len(jobs) <= 1:
        legs = [_viscous_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as executor:
            legs = list(executor.map(_viscous_job, jobs))

    viscous_by_eps = iter(legs)
    records = []
    for e in epsilons:
        viscous = inviscid if e == 0 else next(viscous_by_eps)
        distance = _distance(viscous, inviscid, config.s, horizon)
        records.append(_record(e, distance, config, seed, horizon))
        logging.info(f"Sweep leg epsilon={e}: distance {distance:.6e}")
    return records


def fit_rate(records: Sequence[SweepRecord]) -> RateFit:
    """Least-squares slope of log(distance) against log(epsilon)"""
    usable, excluded = [], []
    for r in records:
        if r.distance > 0 and r.epsilon > 0 and math.isfinite(r.distance):
            usable.append(r)
        else:
            excluded.append(r.epsilon)
            logging.warning(f"Excluding epsilon={r.epsilon} from the rate fit: distance {r.distance}")
    if len(usable) < MIN_FIT_EPSILONS:
        raise ValueError(f"rate fit needs at least {MIN_FIT_EPSILONS} points with positive distance, "
                         f"got {len(usable)}")
    x = np.log([r.epsilon for r in usable])
    y = np.log([r.distance for r in usable])
    fit = stats.linregress(x, y)
    r_squared = min(1.0, max(0.0, float(fit.rvalue) ** 2))
    logging.info(f"Rate fit over {len(usable)} epsilons: slope {fit.slope:.4f}, r^2 {r_squared:.4f}")
    return RateFit(slope=float(fit.slope), intercept=float(fit.intercept), r_squared=r_squared,
                   epsilons_used=[r.epsilon for r in usable], excluded=excluded)


@dataclass
class TruncationRow:
    cutoff: int
    data_tail: float
    viscous_leg: float
    truncated_gap: float
    inviscid_leg: float
    direct: float

    @property
    def leg_sum(self) -> float:
        return self.viscous_leg + self.truncated_gap + self.inviscid_leg

    @property
    def triangle_holds(self) -> bool:
        return self.direct <= self.leg_sum + TRIANGLE_SLACK

    def to_dict(self) -> Dict[str, Any]:
        return {'cutoff': self.cutoff, 'data_tail': self.data_tail, 'viscous_leg': self.viscous_leg,
                'truncated_gap': self.truncated_gap, 'inviscid_leg': self.inviscid_leg,
                'leg_sum': self.leg_sum, 'direct': self.direct, 'triangle_holds': self.triangle_holds}


def _truncation_job(job: Tuple[SpectralField, int, float, SolverConfig, str]) -> Tuple[Trajectory, Trajectory]:
    phi, cutoff, epsilon, config, method = job
    truncated = project_band(phi, BandMode.LOW, cutoff)
    return (_solve_leg(truncated, config, epsilon, method, "viscous"),
            _solve_leg(truncated, config, 0.0, method, "inviscid"))


def truncation_study(phi: SpectralField, cutoffs: Sequence[int], epsilon: float, config: SolverConfig,
                     method: str = "reference", threads: int = 1) -> List[TruncationRow]:
    """Split |S^eps(phi) - S(phi)| through the truncated datum P_{<=cutoff} phi

    The three legs are |S^eps(phi) - S^eps(P phi)|, |S^eps(P phi) - S(P phi)| and
    |S(P phi) - S(phi)|, each a sup over nodes in H^s.
    """
    K = config.grid.band_limit
    cutoffs = [int(c) for c in cutoffs]
    for c in cutoffs:
        if not 1 <= c <= K:
            raise ValueError(f"cutoff {c} must lie in [1, {K}]")
    viscous = _solve_leg(phi, config, epsilon, method, "viscous")
    inviscid = _solve_leg(phi, config, 0.0, method, "inviscid")
    direct = _distance(viscous, inviscid, config.s, None)

    jobs = [(phi, c, epsilon, config, method) for c in cutoffs]
    if threads <= 1:
        pairs = [_truncation_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as executor:
            pairs = list(executor.map(_truncation_job, jobs))

    rows = []
    for c, (viscous_truncated, inviscid_truncated) in zip(cutoffs, pairs):
        row = TruncationRow(
            cutoff=c,
            data_tail=sobolev_norm(project_band(phi, BandMode.HIGH, c), config.s),
            viscous_leg=_distance(viscous, viscous_truncated, config.s, None),
            truncated_gap=_distance(viscous_truncated, inviscid_truncated, config.s, None),
            inviscid_leg=_distance(inviscid_truncated, inviscid, config.s, None),
            direct=direct,
        )
        if not row.triangle_holds:
            logging.warning(f"Triangle inequality violated at cutoff {c}: {row.direct} > {row.leg_sum}")
        rows.append(row)
        logging.info(f"Cutoff {c}: legs {row.viscous_leg:.3e}, {row.truncated_gap:.3e}, {row.inviscid_leg:.3e}")
    return rows
