"""
Normal-form multilinear operators for kdvlimit
Boundary, remainder and iterated terms produced by differentiation by parts, evaluated in coefficient space

Every operator takes physical-gauge inputs u(t) and returns e^{t eps d_x^2} Op(v) with
v = e^{t(d_x^3 - eps d_x^2)} u. In that combination all dissipative exponentials cancel,
so the result is exp(-itk^3) times a time-independent form in the physical coefficients,
delivered as a TWISTED field.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, Iterator, Optional, Sequence, Tuple

import numpy as np

from .spectral import Gauge, SpectralField, convolve_direct, to_physical, twist_phase

# Sparse kernels are cached only up to this band limit
KERNEL_CACHE_MAX_K = 96

# Operator evaluation is supported up to this band limit
MAX_OPERATOR_K = 512


class OperatorTag(Enum):
    A2 = "A2"
    A3 = "A3"
    R3_0 = "R3_0"
    A4_1 = "A4_1"
    A4_2 = "A4_2"
    B_TOTAL = "B_total"
    BOUNDARY_TOTAL = "boundary_total"
    M_R = "mR"
    M_GAMMA0 = "mGamma0"
    M_N1 = "mN1"
    M_N2 = "mN2"
    C1 = "C1"
    C2 = "C2"
    C3 = "C3"


# Number of field slots per operator
OPERATOR_DEGREE: Dict[OperatorTag, int] = {
    OperatorTag.A2: 2,
    OperatorTag.A3: 3,
    OperatorTag.R3_0: 3,
    OperatorTag.A4_1: 4,
    OperatorTag.A4_2: 4,
    OperatorTag.B_TOTAL: 1,
    OperatorTag.BOUNDARY_TOTAL: 1,
    OperatorTag.M_R: 1,
    OperatorTag.M_GAMMA0: 3,
    OperatorTag.M_N1: 3,
    OperatorTag.M_N2: 5,
    OperatorTag.C1: 3,
    OperatorTag.C2: 3,
    OperatorTag.C3: 3,
}


@dataclass(frozen=True)
class OperatorKind:
    """Which operator to evaluate, at which time and viscosity"""
    tag: OperatorTag
    t: float = 0.0
    epsilon: float = 0.0
    gauge: Gauge = Gauge.TWISTED

    def __post_init__(self):
        object.__setattr__(self, 'tag', OperatorTag(self.tag))
        if self.t < 0:
            raise ValueError(f"operator time must be nonnegative, got t={self.t}")
        if not 0 <= self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")

    @property
    def degree(self) -> int:
        return OPERATOR_DEGREE[self.tag]

    @property
    def is_majorant(self) -> bool:
        return self.tag in (OperatorTag.C1, OperatorTag.C2, OperatorTag.C3)


class _KernelKind(Enum):
    A3 = "a3"
    N1 = "n1"
    C2 = "c2"
    C3 = "c3"


@dataclass(frozen=True)
class SparseTrilinearKernel:
    """Nonzero entries of a trilinear kernel on the band, stored as index arrays"""
    K: int
    first: np.ndarray
    second: np.ndarray
    third: np.ndarray
    target: np.ndarray
    weights: np.ndarray

    def contract(self, f: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
        return _accumulate(self.K, self.target, self.weights * f[self.first] * g[self.second] * h[self.third])

    @property
    def nnz(self) -> int:
        return int(self.weights.size)


def _accumulate(K: int, target: np.ndarray, terms: np.ndarray) -> np.ndarray:
    n = 2 * K + 1
    if np.iscomplexobj(terms):
        return (np.bincount(target, weights=terms.real, minlength=n)
                + 1j * np.bincount(target, weights=terms.imag, minlength=n))
    return np.bincount(target, weights=terms, minlength=n).astype(complex)


def assert_gauge_safe(k: np.ndarray, k1, k2, k3, defect: np.ndarray) -> None:
    """Check that no kernel entry carries a growing dissipative factor

    Against lifted inputs exp(t eps k_j^2) u_j, the oscillatory factor exp(-itQ2) contributes
    exp(t eps defect) and the delivered form exp(-t eps k^2); their exponent, in units of t eps,
    must be non-positive for t, eps >= 0.
    """
    exponent = k1 ** 2 + k2 ** 2 + k3 ** 2 - k ** 2 + defect
    assert np.all(exponent <= 0), f"dissipative exponent up to {int(np.max(exponent))} t eps in a kernel entry"


def _kernel_chunks(K: int, kind: _KernelKind, epsilon: float) -> Iterator[Tuple[np.ndarray, ...]]:
    """Yield (first, second, third, target, weights) slices, one per first-slot wavenumber"""
    ks = np.arange(-K, K + 1, dtype=np.int64)
    b, c = np.meshgrid(ks, ks, indexing='ij')
    for a in ks:
        if a == 0:
            continue
        k = a + b + c
        ab, bc, ac = a + b, b + c, a + c
        phi = 3 * ab * bc * ac
        mask = (phi != 0) & (np.abs(k) <= K) & (k != 0) & (b != 0) & (c != 0)
        if kind is _KernelKind.A3:
            mask &= np.abs(ab) <= K
        if not np.any(mask):
            continue
        km, abm, bm, cm, phim = k[mask], ab[mask], b[mask], c[mask], phi[mask]
        if kind in (_KernelKind.A3, _KernelKind.N1):
            defect = 2 * (a * bm + bm * cm + a * cm)
            assert_gauge_safe(km, a, bm, cm, defect)
            q2 = phim.astype(float) + 1j * epsilon * defect.astype(float)
        if kind is _KernelKind.A3:
            q1 = (3 * km * abm * cm).astype(float) + 2j * epsilon * (abm * cm).astype(float)
            weights = (km * abm).astype(float) / (q1 * q2)
        elif kind is _KernelKind.N1:
            weights = km.astype(float) / q2
        elif kind is _KernelKind.C2:
            weights = 1.0 / (np.abs(cm) * np.abs(phim)).astype(float)
        else:
            weights = np.abs(km).astype(float) / np.abs(phim).astype(float)
        count = weights.size
        yield (np.full(count, a + K, dtype=np.int32), (bm + K).astype(np.int32),
               (cm + K).astype(np.int32), (km + K).astype(np.int32), weights)


@lru_cache(maxsize=8)
def _cached_kernel(K: int, kind: _KernelKind, epsilon: float) -> SparseTrilinearKernel:
    parts = list(zip(*_kernel_chunks(K, kind, epsilon)))
    if not parts:
        empty = np.zeros(0, dtype=np.int32)
        return SparseTrilinearKernel(K, empty, empty, empty, empty, np.zeros(0))
    kernel = SparseTrilinearKernel(K, *(np.concatenate(p) for p in parts))
    logging.info(f"Built {kind.value} kernel for K={K}, epsilon={epsilon}: {kernel.nnz} entries")
    return kernel


def _trilinear(K: int, kind: _KernelKind, epsilon: float,
               f: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    if K > MAX_OPERATOR_K:
        raise ValueError(f"operator evaluation is limited to K <= {MAX_OPERATOR_K}, got {K}")
    if K <= KERNEL_CACHE_MAX_K:
        return _cached_kernel(K, kind, float(epsilon)).contract(f, g, h)
    out = np.zeros(2 * K + 1, dtype=complex)
    for first, second, third, target, weights in _kernel_chunks(K, kind, epsilon):
        out += _accumulate(K, target, weights * f[first] * g[second] * h[third])
    return out


def clear_kernel_cache() -> None:
    _cached_kernel.cache_clear()


def _physical_coeffs(fields: Sequence[SpectralField], t: float) -> Tuple[int, Tuple[np.ndarray, ...]]:
    if not fields:
        raise ValueError("at least one input field is required")
    K = fields[0].grid.band_limit
    coeffs = []
    for f in fields:
        if f.grid.band_limit != K:
            raise ValueError(f"band mismatch: K={K} vs K={f.grid.band_limit}")
        coeffs.append(to_physical(f, t).coeffs if f.gauge is Gauge.TWISTED else f.coeffs)
    return K, tuple(coeffs)


def _deliver(template: SpectralField, static: np.ndarray, t: float) -> SpectralField:
    """Attach the exp(-itk^3) twist to a static form and tag the result"""
    K = template.grid.band_limit
    return SpectralField(static * twist_phase(K, t), template.grid, Gauge.TWISTED)


def _wavenumbers(K: int) -> np.ndarray:
    return np.arange(-K, K + 1)


def _flux(K: int, *coeffs: np.ndarray) -> np.ndarray:
    """ik times the band-limited product: the composite slot fed by a time derivative"""
    return 1j * _wavenumbers(K) * convolve_direct(list(coeffs), K)


def _divide_by_k(K: int, coeffs: np.ndarray) -> np.ndarray:
    k = _wavenumbers(K).astype(float)
    out = np.zeros_like(coeffs)
    nonzero = k != 0
    out[nonzero] = coeffs[nonzero] / k[nonzero]
    return out


def _q1_output_factor(K: int, epsilon: float) -> np.ndarray:
    """k / (3k + 2i eps), zero at k = 0"""
    k = _wavenumbers(K).astype(float)
    factor = np.zeros(2 * K + 1, dtype=complex)
    nonzero = k != 0
    factor[nonzero] = k[nonzero] / (3 * k[nonzero] + 2j * epsilon)
    return factor


# Static forms

def a2_static(K: int, epsilon: float, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    # Q1(k, k1, k2) = k1 k2 (3k + 2i eps), so the sum factors into a convolution
    return _q1_output_factor(K, epsilon) * convolve_direct([_divide_by_k(K, f), _divide_by_k(K, g)], K)


def _gamma0_pair_sums(K: int, f: np.ndarray, g: np.ndarray, h: np.ndarray,
                      weight: np.ndarray, composite_in_band: bool) -> np.ndarray:
    """Sum over Gamma0 triples with k1 + k2 != 0 and k3 != 0 of weight(k3) f g h

    Such triples have k3 = -k1 (so k2 = k) or k3 = -k2 (so k1 = k); the triple
    (k, k, -k) lies in both families and is counted once.
    """
    k = _wavenumbers(K)
    n = 2 * K + 1
    kk, aa = np.meshgrid(k, k, indexing='ij')
    allowed = (aa != 0) & (kk != 0) & (aa + kk != 0)
    if composite_in_band:
        allowed &= np.abs(aa + kk) <= K
    # weight indexed by k3 = -a
    matrix = np.where(allowed, weight[::-1][None, :], 0.0)
    h_reflected = h[::-1]
    family_one = g * (matrix @ (f * h_reflected))
    family_two = f * (matrix @ (g * h_reflected))
    overlap = np.zeros(n, dtype=complex)
    both = (k != 0)
    if composite_in_band:
        both &= np.abs(2 * k) <= K
    overlap[both] = (f * g * h_reflected * weight[::-1])[both]
    return family_one + family_two - overlap


def r3_0_static(K: int, epsilon: float, f: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    # ik(k1+k2)/Q1(k, k1+k2, k3) = ik / (k3 (3k + 2i eps))
    inv_k3 = _divide_by_k(K, np.ones(2 * K + 1, dtype=complex))
    sums = _gamma0_pair_sums(K, f, g, h, inv_k3, composite_in_band=True)
    return 1j * _q1_output_factor(K, epsilon) * sums


def a3_static(K: int, epsilon: float, f: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    return _trilinear(K, _KernelKind.A3, epsilon, f, g, h)


def n1_static(K: int, epsilon: float, f: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    return _trilinear(K, _KernelKind.N1, epsilon, f, g, h)


def gamma0_static(K: int, f: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """ik times the full sum over Gamma0 triples, by inclusion-exclusion over the three pair planes"""
    k = _wavenumbers(K)
    fr, gr, hr = f[::-1], g[::-1], h[::-1]
    planes = np.sum(f * gr) * h + np.sum(g * hr) * f + np.sum(f * hr) * g
    lines = f * gr * h + fr * g * h + f * g * hr
    out = 1j * k * (planes - lines)
    out[K] = 0.0
    return out


def resonant_static(K: int, f: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """-ik f_k g_{-k} h_k"""
    return -1j * _wavenumbers(K) * f * g[::-1] * h


# Twisted-gauge operators

def a2(u: SpectralField, v: SpectralField, t: float, epsilon: float) -> SpectralField:
    """Quadratic boundary term with kernel k / Q1"""
    K, (f, g) = _physical_coeffs([u, v], t)
    return _deliver(u, a2_static(K, epsilon, f, g), t)


def a3(u: SpectralField, v: SpectralField, w: SpectralField, t: float, epsilon: float) -> SpectralField:
    """Cubic boundary term k(k1+k2) / (Q1(k, k1+k2, k3) Q2) over non-resonant triples"""
    K, (f, g, h) = _physical_coeffs([u, v, w], t)
    return _deliver(u, a3_static(K, epsilon, f, g, h), t)


def r3_0(u: SpectralField, v: SpectralField, w: SpectralField, t: float, epsilon: float) -> SpectralField:
    """Resonant cubic remainder ik(k1+k2) / Q1(k, k1+k2, k3) over Gamma0"""
    K, (f, g, h) = _physical_coeffs([u, v, w], t)
    return _deliver(u, r3_0_static(K, epsilon, f, g, h), t)


def a4_1(u: SpectralField, v: SpectralField, w: SpectralField, z: SpectralField,
         t: float, epsilon: float) -> SpectralField:
    """Quartic term from differentiating the first slot of the cubic boundary term"""
    K, (f, g, h, p) = _physical_coeffs([u, v, w, z], t)
    return _deliver(u, a3_static(K, epsilon, _flux(K, f, g), h, p), t)


def a4_2(u: SpectralField, v: SpectralField, w: SpectralField, z: SpectralField,
         t: float, epsilon: float) -> SpectralField:
    """Quartic term from differentiating the third slot of the cubic boundary term"""
    K, (f, g, h, p) = _physical_coeffs([u, v, w, z], t)
    return _deliver(u, a3_static(K, epsilon, f, g, _flux(K, h, p)), t)


def b_total(v: SpectralField, t: float, epsilon: float) -> SpectralField:
    """R3_0 + 2 A4_1 + A4_2 on the diagonal"""
    K, (f,) = _physical_coeffs([v], t)
    flux = _flux(K, f, f)
    static = (r3_0_static(K, epsilon, f, f, f)
              + 2 * a3_static(K, epsilon, flux, f, f)
              + a3_static(K, epsilon, f, f, flux))
    return _deliver(v, static, t)


def boundary_total(v: SpectralField, t: float, epsilon: float) -> SpectralField:
    """A2 + 2 A3 on the diagonal: the boundary term of the quadratic normal form"""
    K, (f,) = _physical_coeffs([v], t)
    static = a2_static(K, epsilon, f, f) + 2 * a3_static(K, epsilon, f, f, f)
    return _deliver(v, static, t)


def mkdv_resonant(v: SpectralField, t: float, epsilon: float) -> SpectralField:
    """Diagonal resonant cubic -ik |v_k|^2 v_k"""
    K, (f,) = _physical_coeffs([v], t)
    return _deliver(v, resonant_static(K, f, f, f), t)


def mkdv_gamma0(v: SpectralField, t: float, epsilon: float) -> SpectralField:
    """Whole Gamma0 part of the cubic nonlinearity: 3ik S v_k - 3ik |v_k|^2 v_k with S = sum |v_m|^2"""
    K, (f,) = _physical_coeffs([v], t)
    return _deliver(v, gamma0_static(K, f, f, f), t)


def gamma0_form(u: SpectralField, v: SpectralField, w: SpectralField, t: float, epsilon: float) -> SpectralField:
    K, (f, g, h) = _physical_coeffs([u, v, w], t)
    return _deliver(u, gamma0_static(K, f, g, h), t)


def n1_form(u: SpectralField, v: SpectralField, w: SpectralField, t: float, epsilon: float) -> SpectralField:
    """Cubic boundary form with kernel k / Q2 over non-resonant triples"""
    K, (f, g, h) = _physical_coeffs([u, v, w], t)
    return _deliver(u, n1_static(K, epsilon, f, g, h), t)


def n2_form(p: SpectralField, q: SpectralField, r: SpectralField, x: SpectralField, y: SpectralField,
            t: float, epsilon: float) -> SpectralField:
    """Quintic form ik k1 / Q2 with k1 = j1 + j2 + j3 carried by the first three slots"""
    K, (fp, fq, fr, fx, fy) = _physical_coeffs([p, q, r, x, y], t)
    return _deliver(p, n1_static(K, epsilon, _flux(K, fp, fq, fr), fx, fy), t)


def mkdv_n1(v: SpectralField, t: float, epsilon: float) -> SpectralField:
    return n1_form(v, v, v, t, epsilon)


def mkdv_n2(v: SpectralField, t: float, epsilon: float) -> SpectralField:
    K, (f,) = _physical_coeffs([v], t)
    return _deliver(v, n1_static(K, epsilon, _flux(K, f, f, f), f, f), t)


# Majorants with nonnegative kernels acting on coefficient moduli

def _majorant_field(template: SpectralField, static: np.ndarray) -> SpectralField:
    return SpectralField(static.real.astype(complex), template.grid, Gauge.PHYSICAL)


def c1(v1: SpectralField, v2: SpectralField, v3: SpectralField) -> SpectralField:
    """Gamma0 majorant with kernel |k3|^-1"""
    K, coeffs = _physical_coeffs([v1, v2, v3], 0.0)
    f, g, h = (np.abs(c) for c in coeffs)
    weight = np.abs(_divide_by_k(K, np.ones(2 * K + 1)))
    return _majorant_field(v1, _gamma0_pair_sums(K, f, g, h, weight, composite_in_band=False))


def c2(v1: SpectralField, v2: SpectralField, v3: SpectralField) -> SpectralField:
    """Non-resonant majorant with kernel |k3|^-1 |phase_tilde|^-1"""
    K, coeffs = _physical_coeffs([v1, v2, v3], 0.0)
    f, g, h = (np.abs(c) for c in coeffs)
    return _majorant_field(v1, _trilinear(K, _KernelKind.C2, 0.0, f, g, h))


def c3(v1: SpectralField, v2: SpectralField, v3: SpectralField) -> SpectralField:
    """Non-resonant majorant with kernel |k| |phase_tilde|^-1"""
    K, coeffs = _physical_coeffs([v1, v2, v3], 0.0)
    f, g, h = (np.abs(c) for c in coeffs)
    return _majorant_field(v1, _trilinear(K, _KernelKind.C3, 0.0, f, g, h))


_DISPATCH: Dict[OperatorTag, Callable[..., SpectralField]] = {
    OperatorTag.A2: a2,
    OperatorTag.A3: a3,
    OperatorTag.R3_0: r3_0,
    OperatorTag.A4_1: a4_1,
    OperatorTag.A4_2: a4_2,
    OperatorTag.B_TOTAL: b_total,
    OperatorTag.BOUNDARY_TOTAL: boundary_total,
    OperatorTag.M_R: mkdv_resonant,
    OperatorTag.M_GAMMA0: gamma0_form,
    OperatorTag.M_N1: n1_form,
    OperatorTag.M_N2: n2_form,
}

_MAJORANTS: Dict[OperatorTag, Callable[..., SpectralField]] = {
    OperatorTag.C1: c1,
    OperatorTag.C2: c2,
    OperatorTag.C3: c3,
}


def apply_operator(kind: OperatorKind, *fields: SpectralField) -> SpectralField:
    """Evaluate an operator on its slots; a single field fills every slot"""
    degree = kind.degree
    if len(fields) == 1 and degree > 1:
        fields = fields * degree
    if len(fields) != degree:
        raise ValueError(f"{kind.tag.value} takes {degree} fields, got {len(fields)}")
    if kind.is_majorant:
        return _MAJORANTS[kind.tag](*fields)
    return _DISPATCH[kind.tag](*fields, kind.t, kind.epsilon)
