"""
Empirical estimate probes for the normal-form operators
Measures worst-case ratios of operator norms to the lemma right sides over randomized near-extremal inputs
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .operators import OperatorKind, OperatorTag, apply_operator
from .spectral import (BandMode, GridSpec, SpectralField, normalize, packet_field, project_band,
                       random_sobolev_field, sobolev_norm)

MIN_PROBE_TRIALS = 32
MIN_FIT_POINTS = 3

# Polynomial degrees of the diagonal operators that take a single field
DIAGONAL_DEGREES: Dict[OperatorTag, Tuple[int, ...]] = {
    OperatorTag.B_TOTAL: (3, 4),
    OperatorTag.BOUNDARY_TOTAL: (2, 3),
    OperatorTag.M_R: (3,),
}

# Operators with a difference estimate, and their multilinear degree
DIFFERENCE_DEGREES: Dict[OperatorTag, int] = {
    OperatorTag.A2: 2,
    OperatorTag.A3: 3,
    OperatorTag.R3_0: 3,
    OperatorTag.A4_1: 4,
    OperatorTag.A4_2: 4,
}

# Sobolev offset of the first slot on the right side
FIRST_SLOT_OFFSET: Dict[OperatorTag, float] = {
    OperatorTag.C2: -1.0,
    OperatorTag.C3: -0.5,
}

_CUBIC_TAGS = (OperatorTag.M_R, OperatorTag.M_GAMMA0, OperatorTag.M_N1, OperatorTag.M_N2, OperatorTag.C3)


def minimum_index(tag: OperatorTag) -> float:
    """Smallest admissible s for the estimate behind each operator"""
    if tag in _CUBIC_TAGS:
        return 0.5
    if tag is OperatorTag.C1:
        return -0.5
    return 0.0


@dataclass
class ProbeReport:
    operator: OperatorKind
    s: float
    trials: int
    N_values: List[int]
    empirical_constants: List[float]
    unrestricted_constants: List[float]
    fitted_N_exponent: float
    unrestricted_exponent: float
    band_limits: List[int] = field(default_factory=list)
    difference: bool = False
    excluded_N: List[int] = field(default_factory=list)

    def to_rows(self) -> List[Dict[str, Any]]:
        rows = []
        for i, N in enumerate(self.N_values):
            rows.append({
                'operator': self.operator.tag.value + ('_diff' if self.difference else ''),
                's': self.s,
                'N': N,
                'K': self.band_limits[i] if self.band_limits else None,
                'trials': self.trials,
                'max_ratio': self.empirical_constants[i],
                'unrestricted_max_ratio': self.unrestricted_constants[i],
                'fitted_exponent': self.fitted_N_exponent,
                'unrestricted_exponent': self.unrestricted_exponent,
            })
        return rows

    def to_dict(self) -> Dict[str, Any]:
        return {
            'operator': self.operator.tag.value,
            't': self.operator.t,
            'epsilon': self.operator.epsilon,
            's': self.s,
            'trials': self.trials,
            'N_values': list(self.N_values),
            'band_limits': list(self.band_limits),
            'empirical_constants': list(self.empirical_constants),
            'unrestricted_constants': list(self.unrestricted_constants),
            'fitted_N_exponent': self.fitted_N_exponent,
            'unrestricted_exponent': self.unrestricted_exponent,
            'difference': self.difference,
            'excluded_N': list(self.excluded_N),
        }


def _slot_seed(seed: int, N: int, trial: int, slot: int) -> int:
    return int(np.random.SeedSequence([seed, N, trial, slot]).generate_state(1)[0])


def probe_inputs(seed: int, grid: GridSpec, s: float, N: int, trial: int, slots: int) -> List[SpectralField]:
    """Unit H^s inputs; slot trial % slots carries a flat packet on (N, 2N], the rest decay like |k|^-(s+1)"""
    packet_slot = trial % slots
    inputs = []
    for slot in range(slots):
        slot_seed = _slot_seed(seed, N, trial, slot)
        if slot == packet_slot:
            f = packet_field(slot_seed, grid, N, min(2 * N, grid.band_limit))
        else:
            f = random_sobolev_field(slot_seed, grid, s, 1.0)
        inputs.append(normalize(f, s))
    return inputs


def _right_side(tag: OperatorTag, inputs: Sequence[SpectralField], s: float) -> float:
    if tag in DIAGONAL_DEGREES:
        norm = sobolev_norm(inputs[0], s)
        return sum(norm ** d for d in DIAGONAL_DEGREES[tag])
    product = 1.0
    for i, f in enumerate(inputs):
        product *= sobolev_norm(f, s + (FIRST_SLOT_OFFSET.get(tag, 0.0) if i == 0 else 0.0))
    return product


def _ratios(output: SpectralField, rhs: float, s: float, N: int) -> Tuple[float, float]:
    if rhs == 0:
        return 0.0, 0.0
    restricted = sobolev_norm(project_band(output, BandMode.HIGH, N), s)
    return restricted / rhs, sobolev_norm(output, s) / rhs


def _probe_job(job: Tuple[OperatorKind, float, int, int, int, int]) -> Tuple[float, float]:
    kind, s, trials, N, K, seed = job
    grid = GridSpec(K)
    slots = 1 if kind.tag in DIAGONAL_DEGREES else kind.degree
    worst, worst_full = 0.0, 0.0
    for trial in range(trials):
        inputs = probe_inputs(seed, grid, s, N, trial, slots)
        output = apply_operator(kind, *inputs)
        restricted, full = _ratios(output, _right_side(kind.tag, inputs, s), s, N)
        worst, worst_full = max(worst, restricted), max(worst_full, full)
    logging.info(f"Probe {kind.tag.value} N={N} K={K}: max ratio {worst:.6g} (unrestricted {worst_full:.6g})")
    return worst, worst_full


def _difference_job(job: Tuple[OperatorKind, float, int, int, int, int]) -> Tuple[float, float]:
    kind, s, trials, N, K, seed = job
    grid = GridSpec(K)
    degree = DIFFERENCE_DEGREES[kind.tag]
    worst, worst_full = 0.0, 0.0
    for trial in range(trials):
        u1, u2 = probe_inputs(seed, grid, s, N, trial, 2)
        delta = u1 - u2
        scale = (sobolev_norm(u1, s) + sobolev_norm(u2, s)) ** (degree - 1) * sobolev_norm(delta, s)
        output = apply_operator(kind, u1) - apply_operator(kind, u2)
        restricted, full = _ratios(output, scale, s, N)
        worst, worst_full = max(worst, restricted), max(worst_full, full)
    logging.info(f"Difference probe {kind.tag.value} N={N} K={K}: max ratio {worst:.6g}")
    return worst, worst_full


def _fit_exponent(N_values: Sequence[int], constants: Sequence[float]) -> Tuple[float, List[int]]:
    points = [(n, c) for n, c in zip(N_values, constants) if c > 0 and math.isfinite(c)]
    excluded = [n for n, c in zip(N_values, constants) if not (c > 0 and math.isfinite(c))]
    for n in excluded:
        logging.warning(f"Excluding N={n} from the exponent fit: zero or non-finite ratio")
    if len(points) < MIN_FIT_POINTS:
        logging.warning(f"Only {len(points)} usable N values, fewer than {MIN_FIT_POINTS}; "
                        f"reporting the exponent as nan")
        return float('nan'), excluded
    fit = stats.linregress(np.log([p[0] for p in points]), np.log([p[1] for p in points]))
    return float(fit.slope), excluded


def _validate(kind: OperatorKind, s: float, trials: int, N_values: Sequence[int],
              band_limit: Optional[int]) -> List[int]:
    if trials < MIN_PROBE_TRIALS:
        raise ValueError(f"probes need at least {MIN_PROBE_TRIALS} trials, got {trials}")
    if len(N_values) < MIN_FIT_POINTS:
        raise ValueError(f"degenerate fit: at least {MIN_FIT_POINTS} N values required, got {len(N_values)}")
    if s < minimum_index(kind.tag):
        raise ValueError(f"s={s} is below the admissible index {minimum_index(kind.tag)} for {kind.tag.value}")
    band_limits = []
    for N in N_values:
        if N < 2:
            raise ValueError(f"split N must be at least 2, got {N}")
        K = band_limit if band_limit is not None else max(2 * N, 4)
        if K < 2 * N:
            raise ValueError(f"band limit {K} cannot hold the packet (N, 2N] for N={N}")
        band_limits.append(K)
    return band_limits


def _run_jobs(job_fn, jobs: List[Tuple], threads: int) -> List[Tuple[float, float]]:
    if threads <= 1:
        return [job_fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(job_fn, jobs))


def estimate_probe(kind: OperatorKind, s: float, trials: int, N_values: Sequence[int], seed: int,
                   band_limit: Optional[int] = None, threads: int = 1) -> ProbeReport:
    """Max over trials of the high-band operator norm over the right side, per N, with a log-log fit

    Args:
        kind: operator with its evaluation time and viscosity
        s: Sobolev index of the measurement
        trials: random inputs per N
        N_values: split frequencies; at least three for the fit
        seed: base seed, combined with N, trial and slot
        band_limit: fixed K for every N; defaults to 2N
        threads: worker processes for the N values
    """
    N_values = [int(n) for n in N_values]
    band_limits = _validate(kind, s, trials, N_values, band_limit)
    jobs = [(kind, s, trials, N, K, seed) for N, K in zip(N_values, band_limits)]
    results = _run_jobs(_probe_job, jobs, threads)
    restricted = [r[0] for r in results]
    unrestricted = [r[1] for r in results]
    exponent, excluded = _fit_exponent(N_values, restricted)
    full_exponent, _ = _fit_exponent(N_values, unrestricted)
    logging.info(f"Probe {kind.tag.value} at s={s}: fitted N exponent {exponent:.4f}")
    return ProbeReport(operator=kind, s=s, trials=trials, N_values=N_values,
                       empirical_constants=restricted, unrestricted_constants=unrestricted,
                       fitted_N_exponent=exponent, unrestricted_exponent=full_exponent,
                       band_limits=band_limits, excluded_N=excluded)


def estimate_difference_probe(kind: OperatorKind, s: float, trials: int, N_values: Sequence[int], seed: int,
                              band_limit: Optional[int] = None, threads: int = 1) -> ProbeReport:
    """Same as estimate_probe for Op(u1) - Op(u2) against (|u1| + |u2|)^(d-1) |u1 - u2|"""
    if kind.tag not in DIFFERENCE_DEGREES:
        raise ValueError(f"no difference estimate for {kind.tag.value}")
    N_values = [int(n) for n in N_values]
    band_limits = _validate(kind, s, trials, N_values, band_limit)
    jobs = [(kind, s, trials, N, K, seed) for N, K in zip(N_values, band_limits)]
    results = _run_jobs(_difference_job, jobs, threads)
    restricted = [r[0] for r in results]
    unrestricted = [r[1] for r in results]
    exponent, excluded = _fit_exponent(N_values, restricted)
    full_exponent, _ = _fit_exponent(N_values, unrestricted)
    return ProbeReport(operator=kind, s=s, trials=trials, N_values=N_values,
                       empirical_constants=restricted, unrestricted_constants=unrestricted,
                       fitted_N_exponent=exponent, unrestricted_exponent=full_exponent,
                       band_limits=band_limits, difference=True, excluded_N=excluded)
