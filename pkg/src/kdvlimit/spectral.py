"""
Band-limited Fourier fields for kdvlimit
Real mean-zero periodic fields stored as conjugate-symmetric coefficient arrays
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Mapping, Optional, Union

import numpy as np
from scipy import fft as sp_fft

# exp(700) is the last safe power of e in double precision
MAX_GROWTH_EXPONENT = 700.0

# Direct convolution is exact and cheap enough up to this band limit
DIRECT_CONVOLUTION_LIMIT = 256


class GaugeOverflowError(ValueError):
    """Raised when a requested multiplier would grow past exp(700)"""
    pass


class Gauge(Enum):
    """Which exponential prefactor is folded into stored coefficients"""
    PHYSICAL = "physical"
    TWISTED = "twisted"


class BandMode(Enum):
    LOW = "low"
    HIGH = "high"


class SemigroupDirection(Enum):
    """FORWARD is the linear flow of the equation, INVERSE the twist into the interaction picture"""
    FORWARD = "forward"
    INVERSE = "inverse"


class SemigroupParts(Enum):
    DISPERSIVE_ONLY = "dispersive_only"
    DISSIPATIVE_ONLY = "dissipative_only"
    FULL = "full"


@dataclass(frozen=True)
class GridSpec:
    """Band limit K and the dealiasing limit applied after nonlinear products"""
    band_limit: int
    dealias_limit: Optional[int] = None
    domain_length: float = 2 * math.pi

    def __post_init__(self):
        if not isinstance(self.band_limit, (int, np.integer)) or self.band_limit < 4:
            raise ValueError(f"band_limit must be an integer >= 4, got {self.band_limit}")
        if self.dealias_limit is None:
            object.__setattr__(self, 'dealias_limit', int(self.band_limit))
        if not 1 <= self.dealias_limit <= self.band_limit:
            raise ValueError(f"dealias_limit must lie in [1, {self.band_limit}], got {self.dealias_limit}")
        if not math.isclose(self.domain_length, 2 * math.pi):
            raise ValueError("domain_length is fixed to 2*pi")

    @property
    def size(self) -> int:
        return 2 * self.band_limit + 1

    @property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers -K..K in storage order"""
        return np.arange(-self.band_limit, self.band_limit + 1)

    def index(self, k: int) -> int:
        if abs(k) > self.band_limit:
            raise ValueError(f"wavenumber {k} outside band |k| <= {self.band_limit}")
        return int(k) + self.band_limit


@dataclass(frozen=True)
class SobolevIndex:
    """Regularity index s with the homogeneous |k|^s or inhomogeneous (1+k^2)^(s/2) weight"""
    s: float
    homogeneous: bool = False

    def __post_init__(self):
        if not math.isfinite(self.s):
            raise ValueError(f"Sobolev index must be finite, got {self.s}")

    def weights(self, wavenumbers: np.ndarray) -> np.ndarray:
        k2 = wavenumbers.astype(float) ** 2
        if self.homogeneous:
            w = np.zeros_like(k2)
            nonzero = k2 > 0
            w[nonzero] = k2[nonzero] ** self.s
            return w
        return (1.0 + k2) ** self.s


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable band-limited field; coeffs[i] is the amplitude of wavenumber i - K"""
    coeffs: np.ndarray
    grid: GridSpec
    gauge: Gauge = Gauge.PHYSICAL

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=complex)
        if arr.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} coefficients for K={self.grid.band_limit}, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field coefficients must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, 'coeffs', arr)

    @property
    def band_limit(self) -> int:
        return self.grid.band_limit

    def coefficient(self, k: int) -> complex:
        if abs(k) > self.grid.band_limit:
            return 0j
        return complex(self.coeffs[self.grid.index(k)])

    def as_dict(self, drop_zero: bool = True) -> Dict[int, complex]:
        out = {}
        for k, c in zip(self.grid.wavenumbers, self.coeffs):
            if drop_zero and c == 0:
                continue
            out[int(k)] = complex(c)
        return out

    def with_coeffs(self, coeffs: np.ndarray, gauge: Optional[Gauge] = None) -> 'SpectralField':
        return SpectralField(coeffs, self.grid, self.gauge if gauge is None else gauge)

    def _check_compatible(self, other: 'SpectralField') -> None:
        if not isinstance(other, SpectralField):
            raise TypeError(f"expected SpectralField, got {type(other).__name__}")
        if other.grid.band_limit != self.grid.band_limit:
            raise ValueError(f"band mismatch: K={self.grid.band_limit} vs K={other.grid.band_limit}")
        if other.gauge is not self.gauge:
            raise ValueError(f"gauge mismatch: {self.gauge.value} vs {other.gauge.value}")

    def __add__(self, other: 'SpectralField') -> 'SpectralField':
        self._check_compatible(other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: 'SpectralField') -> 'SpectralField':
        self._check_compatible(other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar: Union[int, float]) -> 'SpectralField':
        # complex scalars would break reality of the field
        if isinstance(scalar, (complex, np.complexfloating)) or not np.isreal(scalar):
            raise TypeError("fields can only be scaled by real numbers")
        return self.with_coeffs(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> 'SpectralField':
        return self.with_coeffs(-self.coeffs)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Pointwise values sum_k c_k exp(ikx) at the given points"""
        x = np.asarray(x, dtype=float)
        phases = np.exp(1j * np.multiply.outer(x, self.grid.wavenumbers))
        return (phases @ self.coeffs).real

    def on_grid(self, points: int) -> np.ndarray:
        """Values at `points` equispaced nodes of [0, 2*pi)"""
        x = 2 * math.pi * np.arange(points) / points
        return self.evaluate(x)


def symmetrize(coeffs: np.ndarray) -> np.ndarray:
    """Enforce c_{-k} = conj(c_k) by averaging and drop the zero mode"""
    arr = np.asarray(coeffs, dtype=complex)
    sym = 0.5 * (arr + np.conj(arr[::-1]))
    sym[len(sym) // 2] = 0.0
    return sym


def field_from_array(coeffs: np.ndarray, grid: GridSpec, gauge: Gauge = Gauge.PHYSICAL) -> SpectralField:
    return SpectralField(symmetrize(coeffs), grid, gauge)


def zero_field(grid: GridSpec, gauge: Gauge = Gauge.PHYSICAL) -> SpectralField:
    return SpectralField(np.zeros(grid.size, dtype=complex), grid, gauge)


def make_field(coeffs: Mapping[int, complex], grid: GridSpec) -> SpectralField:
    """Build a real mean-zero field from a wavenumber -> amplitude map

    Amplitudes are conjugate-symmetrized as (c_k + conj(c_{-k}))/2 and the
    zero mode is dropped.
    """
    arr = np.zeros(grid.size, dtype=complex)
    for k, value in coeffs.items():
        k = int(k)
        if abs(k) > grid.band_limit:
            raise ValueError(f"wavenumber {k} outside band |k| <= {grid.band_limit}")
        value = complex(value)
        if not (math.isfinite(value.real) and math.isfinite(value.imag)):
            raise ValueError(f"non-finite amplitude {value} at k={k}")
        arr[grid.index(k)] = value
    return field_from_array(arr, grid)


def cosine_field(grid: GridSpec, mode: int = 1, amplitude: float = 1.0) -> SpectralField:
    """amplitude * cos(mode * x)"""
    return make_field({mode: amplitude / 2, -mode: amplitude / 2}, grid)


def random_sobolev_field(seed: int, grid: GridSpec, s: float, amplitude: float) -> SpectralField:
    """Random-phase field with |c_k| = amplitude * |k|^-(s+1), deterministic in seed"""
    if amplitude < 0:
        raise ValueError(f"amplitude must be nonnegative, got {amplitude}")
    K = grid.band_limit
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2 * math.pi, size=K)
    k = np.arange(1, K + 1, dtype=float)
    positive = amplitude * k ** (-(s + 1.0)) * np.exp(1j * phases)
    arr = np.zeros(grid.size, dtype=complex)
    arr[K + 1:] = positive
    arr[:K] = np.conj(positive[::-1])
    return SpectralField(arr, grid)


def packet_field(seed: int, grid: GridSpec, low: int, high: int) -> SpectralField:
    """Flat-amplitude random-phase packet on modes low < |k| <= high"""
    if not 0 <= low < high <= grid.band_limit:
        raise ValueError(f"packet ({low}, {high}] does not fit band K={grid.band_limit}")
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2 * math.pi, size=high - low)
    arr = np.zeros(grid.size, dtype=complex)
    K = grid.band_limit
    ks = np.arange(low + 1, high + 1)
    arr[ks + K] = np.exp(1j * phases)
    arr[-ks + K] = np.exp(-1j * phases)
    return SpectralField(arr, grid)


def _as_index(idx: Union[SobolevIndex, float, int]) -> SobolevIndex:
    if isinstance(idx, SobolevIndex):
        return idx
    return SobolevIndex(float(idx))


def sobolev_norm_coeffs(coeffs: np.ndarray, K: int, idx: Union[SobolevIndex, float]) -> float:
    idx = _as_index(idx)
    weights = idx.weights(np.arange(-K, K + 1))
    return math.sqrt(2 * math.pi * float(np.sum(weights * np.abs(coeffs) ** 2)))


def sobolev_norm(f: SpectralField, idx: Union[SobolevIndex, float]) -> float:
    """(2 pi sum w_s(k) |f_k|^2)^(1/2) with the weight chosen by idx"""
    return sobolev_norm_coeffs(f.coeffs, f.grid.band_limit, idx)


def l2_quadrature(f: SpectralField, points: int = 128) -> float:
    """L2 norm by the rectangle rule on the inverse transform, exact for band-limited fields"""
    values = f.on_grid(points)
    return math.sqrt(2 * math.pi * float(np.mean(values ** 2)))


def normalize(f: SpectralField, idx: Union[SobolevIndex, float], target: float = 1.0) -> SpectralField:
    norm = sobolev_norm(f, idx)
    if norm == 0:
        return f
    return f * (target / norm)


def project_band(f: SpectralField, mode: Union[BandMode, str], N: int) -> SpectralField:
    """Keep |k| <= N (low) or |k| > N (high); low + high reproduces f exactly"""
    mode = BandMode(mode)
    if N < 0 or N > f.grid.band_limit:
        raise ValueError(f"split N={N} must lie in [0, {f.grid.band_limit}]")
    keep = np.abs(f.grid.wavenumbers) <= N
    if mode is BandMode.HIGH:
        keep = ~keep
    return f.with_coeffs(np.where(keep, f.coeffs, 0.0))


def derivative(f: SpectralField, order: int = 1) -> SpectralField:
    if order < 0:
        raise ValueError("use inv_derivative for negative orders")
    k = f.grid.wavenumbers
    return f.with_coeffs(f.coeffs * (1j * k) ** order)


def inv_derivative(f: SpectralField) -> SpectralField:
    """Multiply by (ik)^-1 off the zero mode"""
    k = f.grid.wavenumbers.astype(float)
    factor = np.zeros(f.grid.size, dtype=complex)
    nonzero = k != 0
    factor[nonzero] = 1.0 / (1j * k[nonzero])
    return f.with_coeffs(f.coeffs * factor)


def semigroup_multiplier(K: int, t: float, epsilon: float,
                         direction: Union[SemigroupDirection, str] = SemigroupDirection.FORWARD,
                         parts: Union[SemigroupParts, str] = SemigroupParts.FULL) -> np.ndarray:
    """Mode-wise multiplier of exp(t(-d^3 + eps d^2)) (forward) or its inverse

    The symbol of d^3 is -ik^3 and of eps d^2 is -eps k^2, so the forward
    dispersive factor is exp(itk^3) and the forward dissipative factor
    exp(-t eps k^2).
    """
    direction = SemigroupDirection(direction)
    parts = SemigroupParts(parts)
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    k = np.arange(-K, K + 1, dtype=float)
    exponent = np.zeros(2 * K + 1, dtype=complex)
    if parts in (SemigroupParts.DISPERSIVE_ONLY, SemigroupParts.FULL):
        exponent += 1j * t * k ** 3
    if parts in (SemigroupParts.DISSIPATIVE_ONLY, SemigroupParts.FULL):
        exponent -= t * epsilon * k ** 2
    if direction is SemigroupDirection.INVERSE:
        exponent = -exponent
    growth = float(np.max(exponent.real))
    if growth > MAX_GROWTH_EXPONENT:
        raise GaugeOverflowError(
            f"multiplier grows like exp({growth:.1f}) for t={t}, epsilon={epsilon}, K={K}; "
            f"t*epsilon*K^2 must stay below {MAX_GROWTH_EXPONENT}")
    return np.exp(exponent)


def semigroup(f: SpectralField, t: float, epsilon: float,
              direction: Union[SemigroupDirection, str] = SemigroupDirection.FORWARD,
              parts: Union[SemigroupParts, str] = SemigroupParts.FULL) -> SpectralField:
    multiplier = semigroup_multiplier(f.grid.band_limit, t, epsilon, direction, parts)
    return f.with_coeffs(f.coeffs * multiplier)


def twist_phase(K: int, t: float) -> np.ndarray:
    """exp(-itk^3): multiplies physical coefficients into the dispersion-twisted gauge"""
    k = np.arange(-K, K + 1, dtype=float)
    return np.exp(-1j * t * k ** 3)


def to_twisted(f: SpectralField, t: float) -> SpectralField:
    if f.gauge is Gauge.TWISTED:
        return f
    return SpectralField(f.coeffs * twist_phase(f.grid.band_limit, t), f.grid, Gauge.TWISTED)


def to_physical(f: SpectralField, t: float) -> SpectralField:
    if f.gauge is Gauge.PHYSICAL:
        return f
    return SpectralField(f.coeffs * np.conj(twist_phase(f.grid.band_limit, t)), f.grid, Gauge.PHYSICAL)


def convolve_direct(arrays, K: int) -> np.ndarray:
    """Exact coefficient convolution of band arrays, projected back to |k| <= K"""
    result = np.asarray(arrays[0], dtype=complex)
    for other in arrays[1:]:
        result = np.convolve(result, np.asarray(other, dtype=complex))
    center = (len(result) - 1) // 2
    return result[center - K:center + K + 1].copy()


def padded_size(K: int, alpha: int) -> int:
    """FFT length that keeps a degree-alpha product alias-free on |k| <= K"""
    return sp_fft.next_fast_len((alpha + 1) * K + 1, real=True)


def power_fft(coeffs: np.ndarray, K: int, alpha: int) -> np.ndarray:
    """Pointwise alpha-th power on a zero-padded grid, truncated back to |k| <= K

    The padding generalizes the 3/2 rule so the retained band matches direct
    convolution up to roundoff.
    """
    M = padded_size(K, alpha)
    half = np.zeros(M // 2 + 1, dtype=complex)
    half[:K + 1] = coeffs[K:]
    values = sp_fft.irfft(half, n=M) * M
    back = sp_fft.rfft(values ** alpha) / M
    out = np.zeros(2 * K + 1, dtype=complex)
    out[K:] = back[:K + 1]
    out[:K] = np.conj(back[1:K + 1][::-1])
    return out


def power_coeffs(coeffs: np.ndarray, K: int, alpha: int, method: str = "auto") -> np.ndarray:
    """Coefficients of u^alpha restricted to |k| <= K"""
    if method == "auto":
        method = "direct" if K <= DIRECT_CONVOLUTION_LIMIT else "fft"
    if method == "direct":
        return convolve_direct([coeffs] * alpha, K)
    if method == "fft":
        return power_fft(coeffs, K, alpha)
    raise ValueError(f"unknown convolution method '{method}'")


def multiply(f: SpectralField, g: SpectralField) -> SpectralField:
    """Band-limited product of two physical fields"""
    f._check_compatible(g)
    return f.with_coeffs(convolve_direct([f.coeffs, g.coeffs], f.grid.band_limit))


def nonlinear_flux(coeffs: np.ndarray, grid: GridSpec, alpha: int, method: str = "auto") -> np.ndarray:
    """ik * P_D (u^alpha)_k with D the dealiasing limit"""
    K = grid.band_limit
    k = grid.wavenumbers
    product = power_coeffs(coeffs, K, alpha, method)
    product[np.abs(k) > grid.dealias_limit] = 0.0
    product[K] = 0.0
    return 1j * k * product
