"""
Phase functions and resonance classification for kdvlimit
Exact integer arithmetic for the cubic phase and the Q phases, plus lattice checks of their lower bounds
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Sequence

import numpy as np

# Exhaustive verification is limited to this box half-width
MAX_EXHAUSTIVE_K = 128

# Every lattice triple in Gamma satisfies |phase_tilde| >= 3 * k_m
GAMMA_PHASE_CONSTANT = 3


class TripleClass(Enum):
    GAMMA0 = "Gamma0"
    GAMMA1 = "Gamma1"
    GAMMA21 = "Gamma21"
    GAMMA22 = "Gamma22"


@dataclass(frozen=True)
class ThresholdConvention:
    """Operational constants behind the much-less, greater-than-about and comparable relations

    a << b means a <= c_much_less * b, a >~ b means a >= c_gtrsim * b and
    a ~ b means b / c_sim <= a <= c_sim * b.
    """
    c_much_less: float = 0.1
    c_gtrsim: float = 1.0
    c_sim: float = 4.0

    def __post_init__(self):
        if not 0 < self.c_much_less < 1:
            raise ValueError(f"c_much_less must lie in (0, 1), got {self.c_much_less}")
        if self.c_gtrsim <= 0:
            raise ValueError(f"c_gtrsim must be positive, got {self.c_gtrsim}")
        if self.c_sim <= 1:
            raise ValueError(f"c_sim must exceed 1, got {self.c_sim}")

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class TripleReport:
    k1: int
    k2: int
    k3: int
    k: int
    phase_tilde: int
    k_m: int
    Lambda: int
    lambda_min: int
    triple_class: TripleClass

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['class'] = data.pop('triple_class').value
        return data


def phase_tilde(k1: int, k2: int, k3: int) -> int:
    """Cubic phase k^3 - k1^3 - k2^3 - k3^3 in factored form"""
    k1, k2, k3 = int(k1), int(k2), int(k3)
    return 3 * (k1 + k2) * (k2 + k3) * (k1 + k3)


def q1(k: int, k1: int, k2: int, epsilon: float) -> complex:
    """Quadratic phase 3kk1k2 + i eps (k^2 - k1^2 - k2^2)"""
    k, k1, k2 = int(k), int(k1), int(k2)
    if k != k1 + k2:
        raise ValueError(f"q1 requires k = k1 + k2, got k={k}, k1={k1}, k2={k2}")
    return complex(3 * k * k1 * k2, epsilon * (2 * k1 * k2))


def q2(k: int, k1: int, k2: int, k3: int, epsilon: float) -> complex:
    """Cubic phase: phase_tilde plus i eps (k^2 - k1^2 - k2^2 - k3^2)"""
    k, k1, k2, k3 = int(k), int(k1), int(k2), int(k3)
    if k != k1 + k2 + k3:
        raise ValueError(f"q2 requires k = k1 + k2 + k3, got k={k}, ({k1}, {k2}, {k3})")
    defect = k * k - k1 * k1 - k2 * k2 - k3 * k3
    return complex(phase_tilde(k1, k2, k3), epsilon * defect)


def q3_kdv(k: int, k1: int, k2: int, k3: int, k4: int, epsilon: float) -> complex:
    """Iterated quadratic phase Q2(k, k1+k2, k3, k4) + Q1(k1+k2, k1, k2)"""
    if int(k) != int(k1) + int(k2) + int(k3) + int(k4):
        raise ValueError(f"q3_kdv requires k = k1 + k2 + k3 + k4, got k={k}, ({k1}, {k2}, {k3}, {k4})")
    m = int(k1) + int(k2)
    return q2(k, m, k3, k4, epsilon) + q1(m, k1, k2, epsilon)


def q3_mkdv(k: int, k1: int, k2: int, k3: int, j1: int, j2: int, j3: int, epsilon: float) -> complex:
    """Iterated cubic phase Q2(k, k1, k2, k3) + Q2(k1, j1, j2, j3)"""
    if int(k1) != int(j1) + int(j2) + int(j3):
        raise ValueError(f"q3_mkdv requires k1 = j1 + j2 + j3, got k1={k1}, ({j1}, {j2}, {j3})")
    if 0 in (int(j1), int(j2), int(j3)):
        raise ValueError(f"inner frequencies must be nonzero for mean-zero fields, got ({j1}, {j2}, {j3})")
    return q2(k, k1, k2, k3, epsilon) + q2(k1, j1, j2, j3, epsilon)


def q1_array(k: np.ndarray, k1: np.ndarray, k2: np.ndarray, epsilon: float) -> np.ndarray:
    """Broadcast q1 without the index-sum check; callers build k = k1 + k2"""
    k = np.asarray(k, dtype=np.int64)
    k1 = np.asarray(k1, dtype=np.int64)
    k2 = np.asarray(k2, dtype=np.int64)
    return (3 * k * k1 * k2).astype(float) + 1j * epsilon * (2 * k1 * k2).astype(float)


def q2_array(k1: np.ndarray, k2: np.ndarray, k3: np.ndarray, epsilon: float) -> np.ndarray:
    k1 = np.asarray(k1, dtype=np.int64)
    k2 = np.asarray(k2, dtype=np.int64)
    k3 = np.asarray(k3, dtype=np.int64)
    real = 3 * (k1 + k2) * (k2 + k3) * (k1 + k3)
    defect = 2 * (k1 * k2 + k2 * k3 + k1 * k3)
    return real.astype(float) + 1j * epsilon * defect.astype(float)


def _gamma1_threshold(k_m, conv: ThresholdConvention):
    return conv.c_much_less * 0.25 * np.asarray(k_m, dtype=float) ** 2


def _gamma21_threshold(k_m):
    return np.asarray(k_m, dtype=float) ** (15.0 / 7.0)


def classify_triple(k1: int, k2: int, k3: int, conv: ThresholdConvention = ThresholdConvention()) -> TripleReport:
    """Place (k1, k2, k3) in Gamma0, Gamma1, Gamma21 or Gamma22 under the given convention"""
    k1, k2, k3 = int(k1), int(k2), int(k3)
    k = k1 + k2 + k3
    a, b, c = k1 + k2, k2 + k3, k1 + k3
    phi = 3 * a * b * c
    k_m = max(abs(k), abs(k1), abs(k2), abs(k3))
    big_lambda = min(abs(a * b), abs(b * c), abs(c * a))
    small_lambda = min(abs(a), abs(b), abs(c))

    if a * b * c == 0:
        triple_class = TripleClass.GAMMA0
    elif abs(phi) <= float(_gamma1_threshold(k_m, conv)):
        triple_class = TripleClass.GAMMA1
    elif abs(phi) < float(_gamma21_threshold(k_m)):
        triple_class = TripleClass.GAMMA21
    else:
        triple_class = TripleClass.GAMMA22

    return TripleReport(k1=k1, k2=k2, k3=k3, k=k, phase_tilde=phi, k_m=k_m,
                        Lambda=big_lambda, lambda_min=small_lambda, triple_class=triple_class)


def enumerate_triples(k: int, K: int, conv: ThresholdConvention = ThresholdConvention()) -> Iterator[TripleReport]:
    """Yield every classified triple with k1 + k2 + k3 = k and |ki| <= K"""
    if K < 0:
        raise ValueError(f"K must be nonnegative, got {K}")
    if abs(k) > 3 * K:
        raise ValueError(f"|k| = {abs(k)} exceeds 3K = {3 * K}")
    for k1 in range(-K, K + 1):
        for k2 in range(-K, K + 1):
            k3 = k - k1 - k2
            if abs(k3) <= K:
                yield classify_triple(k1, k2, k3, conv)


@dataclass
class ClaimResult:
    name: str
    checked: int = 0
    violation_count: int = 0
    violations: List[Dict[str, Any]] = field(default_factory=list)
    measured: Dict[str, Any] = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.violation_count == 0

    def record(self, example: Dict[str, Any], limit: int) -> None:
        self.violation_count += 1
        if len(self.violations) < limit:
            self.violations.append(example)


@dataclass
class LemmaReport:
    convention: ThresholdConvention
    K: int
    epsilons: List[float]
    claims: List[ClaimResult]
    # Gamma21 and Gamma22 are separated by |phase_tilde|
    notes: List[str] = field(default_factory=lambda: [
        "Gamma21/Gamma22 thresholds are evaluated on |phase_tilde|",
        "Gamma1 comparability is measured as the worst ratio, not asserted",
    ])

    def claim(self, name: str) -> ClaimResult:
        for result in self.claims:
            if result.name == name:
                return result
        raise KeyError(f"no claim named '{name}'")

    @property
    def all_hold(self) -> bool:
        return all(result.holds for result in self.claims)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'convention': self.convention.to_dict(),
            'K': self.K,
            'epsilons': list(self.epsilons),
            'notes': list(self.notes),
            'claims': [
                {
                    'name': result.name,
                    'checked': result.checked,
                    'violation_count': result.violation_count,
                    'violations': result.violations,
                    'measured': result.measured,
                }
                for result in self.claims
            ],
        }


def _triple_example(k1, k2, k3, **extra) -> Dict[str, Any]:
    example = {'k1': int(k1), 'k2': int(k2), 'k3': int(k3), 'k': int(k1 + k2 + k3)}
    example.update(extra)
    return example


def verify_phase_lemmas(K: int, conv: ThresholdConvention = ThresholdConvention(),
                        epsilons: Sequence[float] = (0.0,), max_counterexamples: int = 20) -> LemmaReport:
    """Exhaustively check the phase identities and lower bounds on the box |ki| <= K

    Violations are collected as counterexample triples rather than raised.
    """
    if not 1 <= K <= MAX_EXHAUSTIVE_K:
        raise ValueError(f"exhaustive verification needs 1 <= K <= {MAX_EXHAUSTIVE_K}, got {K}")
    epsilons = [float(e) for e in epsilons]
    if any(e < 0 for e in epsilons):
        raise ValueError(f"epsilons must be nonnegative, got {epsilons}")
    logging.info(f"Verifying phase lemmas on |ki| <= {K} for epsilons {epsilons}")

    identity = ClaimResult("phase_identity")
    real_part = ClaimResult("q2_real_part_equals_phase")
    gamma_bound = ClaimResult("gamma_phase_lower_bound", measured={'constant': GAMMA_PHASE_CONSTANT})
    q1_bound = ClaimResult("q1_lower_bound")
    q2_bound = ClaimResult("q2_lower_bound")
    gamma21_pair = ClaimResult("gamma21_small_pair_sum")
    gamma1_comparable = ClaimResult("gamma1_comparable_frequencies", measured={'c_sim': conv.c_sim})

    ks = np.arange(-K, K + 1, dtype=np.int64)
    k2, k3 = np.meshgrid(ks, ks, indexing='ij')
    min_ratio = math.inf
    worst_pair_ratio = 0.0
    worst_sim_ratio = 1.0
    class_counts = {cls.value: 0 for cls in TripleClass}

    for k1 in ks:
        k = k1 + k2 + k3
        a, b, c = k1 + k2, k2 + k3, k1 + k3
        phi = 3 * a * b * c
        direct = k ** 3 - k1 ** 3 - k2 ** 3 - k3 ** 3

        identity.checked += phi.size
        for i, j in zip(*np.nonzero(direct != phi)):
            identity.record(_triple_example(k1, k2[i, j], k3[i, j]), max_counterexamples)

        k_m = np.maximum.reduce([np.abs(k), np.full_like(k, abs(k1)), np.abs(k2), np.abs(k3)])
        in_gamma = phi != 0
        abs_phi = np.abs(phi)

        for eps in epsilons:
            q = q2_array(k1, k2, k3, eps)
            real_part.checked += q.size
            for i, j in zip(*np.nonzero(q.real != phi)):
                real_part.record(_triple_example(k1, k2[i, j], k3[i, j], epsilon=eps), max_counterexamples)
            q2_bound.checked += q.size
            for i, j in zip(*np.nonzero(np.abs(q) < abs_phi)):
                q2_bound.record(_triple_example(k1, k2[i, j], k3[i, j], epsilon=eps), max_counterexamples)

        # Gamma lower bound
        gamma_bound.checked += int(np.count_nonzero(in_gamma))
        if np.any(in_gamma):
            ratios = abs_phi[in_gamma] / k_m[in_gamma]
            min_ratio = min(min_ratio, float(np.min(ratios)))
            bad = in_gamma & (abs_phi < GAMMA_PHASE_CONSTANT * k_m)
            for i, j in zip(*np.nonzero(bad)):
                gamma_bound.record(_triple_example(k1, k2[i, j], k3[i, j], phase_tilde=int(phi[i, j])),
                                   max_counterexamples)

        gamma1 = in_gamma & (abs_phi <= _gamma1_threshold(k_m, conv))
        gamma21 = in_gamma & ~gamma1 & (abs_phi < _gamma21_threshold(k_m))
        class_counts['Gamma0'] += int(np.count_nonzero(~in_gamma))
        class_counts['Gamma1'] += int(np.count_nonzero(gamma1))
        class_counts['Gamma21'] += int(np.count_nonzero(gamma21))
        class_counts['Gamma22'] += int(np.count_nonzero(in_gamma & ~gamma1 & ~gamma21))

        # Gamma21 has a pair sum below c_much_less * k_m^(5/7)
        if np.any(gamma21):
            pair_min = np.minimum.reduce([np.abs(a), np.abs(b), np.abs(c)])
            scale = np.asarray(k_m, dtype=float) ** (5.0 / 7.0)
            gamma21_pair.checked += int(np.count_nonzero(gamma21))
            worst_pair_ratio = max(worst_pair_ratio, float(np.max(pair_min[gamma21] / scale[gamma21])))
            bad = gamma21 & (pair_min > conv.c_much_less * scale)
            for i, j in zip(*np.nonzero(bad)):
                gamma21_pair.record(_triple_example(k1, k2[i, j], k3[i, j], lambda_min=int(pair_min[i, j])),
                                    max_counterexamples)

        # Gamma1 frequencies are comparable
        if np.any(gamma1):
            stack = np.abs(np.stack([np.full_like(k, k1), k2, k3]))
            largest = stack.max(axis=0)
            smallest = np.where(stack > 0, stack, np.iinfo(np.int64).max).min(axis=0)
            ratio = largest / smallest
            gamma1_comparable.checked += int(np.count_nonzero(gamma1))
            worst_sim_ratio = max(worst_sim_ratio, float(np.max(ratio[gamma1])))
            for i, j in zip(*np.nonzero(gamma1 & (ratio > conv.c_sim))):
                gamma1_comparable.record(_triple_example(k1, k2[i, j], k3[i, j], ratio=float(ratio[i, j])),
                                         max_counterexamples)

    # |Q1| >= 3|k k1 k2| on pairs k = k1 + k2 with k k1 k2 != 0
    p1, p2 = np.meshgrid(ks, ks, indexing='ij')
    pk = p1 + p2
    admissible = (pk != 0) & (p1 != 0) & (p2 != 0)
    lower = 3 * np.abs(pk * p1 * p2)
    for eps in epsilons:
        q = q1_array(pk, p1, p2, eps)
        q1_bound.checked += int(np.count_nonzero(admissible))
        for i, j in zip(*np.nonzero(admissible & (np.abs(q) < lower))):
            q1_bound.record({'k': int(pk[i, j]), 'k1': int(p1[i, j]), 'k2': int(p2[i, j]), 'epsilon': eps},
                            max_counterexamples)

    gamma_bound.measured['min_ratio'] = None if math.isinf(min_ratio) else min_ratio
    gamma21_pair.measured['worst_ratio_to_km_5_7'] = worst_pair_ratio
    gamma1_comparable.measured['worst_ratio'] = worst_sim_ratio
    gamma1_comparable.measured['gamma1_empty'] = class_counts['Gamma1'] == 0
    identity.measured['class_counts'] = class_counts

    claims = [identity, real_part, gamma_bound, q1_bound, q2_bound, gamma21_pair, gamma1_comparable]
    for result in claims:
        if result.holds:
            logging.info(f"Claim {result.name}: {result.checked} cases, no violations")
        else:
            logging.warning(f"Claim {result.name}: {result.violation_count} violations out of {result.checked}")
    return LemmaReport(convention=conv, K=K, epsilons=epsilons, claims=claims)
