"""
Time integrators for kdvlimit
A fourth-order exponential reference solver and the normal-form Picard solver for KdV-Burgers and mKdV-Burgers
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .operators import b_total, boundary_total, mkdv_gamma0, mkdv_n1, mkdv_n2
from .spectral import (Gauge, GridSpec, SpectralField, nonlinear_flux, sobolev_norm, to_physical,
                       twist_phase)

BLOW_UP_NORM = 1e6

# Contour for the ETDRK4 coefficient integrals
CONTOUR_POINTS = 32
CONTOUR_RADIUS = 1.0

# Consecutive non-contracting iterates before Picard gives up
NON_CONTRACTION_LIMIT = 3

# Norm allowance for chained restarts
RESTART_NORM_MARGIN = 1.25

# Gate-sized Picard restarts allowed for one solve
MAX_RESTART_CHUNKS = 64

QUADRATURES = ("trapezoid", "simpson")
SCHEMES = ("ifrk4", "etdrk4")
CONVOLUTIONS = ("auto", "direct", "fft")
METHODS = ("reference", "picard")


class BlowUpError(RuntimeError):
    """Raised when a reference solve leaves the admissible norm range"""

    def __init__(self, t: float, norm: float, dt: float):
        self.t = t
        self.norm = norm
        self.dt = dt
        super().__init__(f"solution norm {norm:.6g} exceeded {BLOW_UP_NORM:g} at t={t:.6g} with dt={dt:.6g}; "
                         f"reduce the step size")


class ContractionError(RuntimeError):
    """Raised when Picard iterates stop contracting"""

    def __init__(self, diagnostics: 'ContractionDiagnostics'):
        self.diagnostics = diagnostics
        ratios = ', '.join(f"{r:.4g}" for r in diagnostics.contraction_ratios[-NON_CONTRACTION_LIMIT:])
        super().__init__(f"Picard iteration is not contracting after {diagnostics.iterations} iterates "
                         f"(last ratios: {ratios})")


def default_split(T: float) -> int:
    """Split frequency N = ceil(T^(-2/5))"""
    return max(1, math.ceil(T ** (-0.4)))


@dataclass(frozen=True)
class SolverConfig:
    alpha: int
    epsilon: float
    s: float
    T: float
    grid: GridSpec
    split_N: Optional[int] = None
    time_steps: int = 64
    substeps: int = 4
    quadrature: str = "simpson"
    picard_max_iters: int = 30
    picard_tol: float = 1e-10
    scheme: str = "ifrk4"
    convolution: str = "auto"
    gate_c: float = 0.01
    nonlinear: bool = True

    def __post_init__(self):
        if self.alpha not in (2, 3):
            raise ValueError(f"nonlinearity power must be 2 or 3, got {self.alpha}")
        if not 0 <= self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.alpha == 2 and self.s < 0:
            raise ValueError(f"KdV-Burgers needs s >= 0, got s={self.s}")
        if self.alpha == 3 and self.s < 0.5:
            raise ValueError(f"mKdV-Burgers needs s >= 1/2, got s={self.s}")
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if self.split_N is None:
            object.__setattr__(self, 'split_N', default_split(self.T))
        if not 1 <= self.split_N <= self.grid.band_limit:
            raise ValueError(f"split_N={self.split_N} must lie in [1, {self.grid.band_limit}]")
        if self.time_steps < 1 or self.substeps < 1:
            raise ValueError(f"time_steps and substeps must be positive, got {self.time_steps}, {self.substeps}")
        if self.quadrature not in QUADRATURES:
            raise ValueError(f"quadrature must be one of {QUADRATURES}, got '{self.quadrature}'")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got '{self.scheme}'")
        if self.convolution not in CONVOLUTIONS:
            raise ValueError(f"convolution must be one of {CONVOLUTIONS}, got '{self.convolution}'")
        if self.picard_max_iters < 1 or self.picard_tol <= 0:
            raise ValueError("picard_max_iters must be positive and picard_tol > 0")
        if self.gate_c <= 0:
            raise ValueError(f"gate_c must be positive, got {self.gate_c}")

    @property
    def dt(self) -> float:
        return self.T / self.time_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.time_steps + 1)

    @property
    def gate_exponent(self) -> float:
        """Power of T in the smallness gate: 2/5 for KdV-Burgers, 1/5 for mKdV-Burgers"""
        return 0.4 if self.alpha == 2 else 0.2

    def with_(self, **changes) -> 'SolverConfig':
        return replace(self, **changes)

    def to_dict(self) -> Dict:
        return {
            'alpha': self.alpha,
            'epsilon': self.epsilon,
            's': self.s,
            'T': self.T,
            'K': self.grid.band_limit,
            'dealias_limit': self.grid.dealias_limit,
            'split_N': self.split_N,
            'time_steps': self.time_steps,
            'substeps': self.substeps,
            'quadrature': self.quadrature,
            'picard_max_iters': self.picard_max_iters,
            'picard_tol': self.picard_tol,
            'scheme': self.scheme,
            'convolution': self.convolution,
            'gate_c': self.gate_c,
            'nonlinear': self.nonlinear,
        }


@dataclass
class Trajectory:
    times: np.ndarray
    states: List[SpectralField]
    config: SolverConfig

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.states):
            raise ValueError(f"{len(self.times)} times but {len(self.states)} states")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def initial(self) -> SpectralField:
        return self.states[0]

    @property
    def final(self) -> SpectralField:
        return self.states[-1]

    def coefficients(self) -> np.ndarray:
        """Node-by-mode array of physical coefficients"""
        return np.stack([f.coeffs for f in self.states])

    def norms(self, s: float) -> np.ndarray:
        return np.array([sobolev_norm(f, s) for f in self.states])

    def sup_norm(self, s: float) -> float:
        return float(np.max(self.norms(s))) if self.states else 0.0

    def restrict(self, horizon: float) -> 'Trajectory':
        """Nodes with t <= horizon"""
        keep = self.times <= horizon * (1 + 1e-12)
        return Trajectory(self.times[keep], [f for f, k in zip(self.states, keep) if k], self.config)

    def node_index(self, t: float) -> int:
        matches = np.nonzero(np.isclose(self.times, t, rtol=0, atol=1e-12 * max(1.0, abs(t))))[0]
        if matches.size == 0:
            raise ValueError(f"t={t} is not a quadrature node of the trajectory")
        return int(matches[0])


@dataclass
class ContractionDiagnostics:
    iterate_distances: List[float] = field(default_factory=list)
    contraction_ratios: List[float] = field(default_factory=list)
    smallness_check: Dict[str, bool] = field(default_factory=dict)
    converged: bool = False
    empirical_C: float = 1.0
    gate_value: float = 0.0
    chunks: int = 1

    @property
    def iterations(self) -> int:
        return len(self.iterate_distances)

    def to_dict(self) -> Dict:
        return {
            'iterate_distances': list(self.iterate_distances),
            'contraction_ratios': list(self.contraction_ratios),
            'smallness_check': dict(self.smallness_check),
            'converged': self.converged,
            'empirical_C': self.empirical_C,
            'gate_value': self.gate_value,
            'chunks': self.chunks,
        }


# Reference solver

def linear_symbol(grid: GridSpec, epsilon: float) -> np.ndarray:
    """ik^3 - eps k^2: the linear part of the equation in Fourier space"""
    k = grid.wavenumbers.astype(float)
    return 1j * k ** 3 - epsilon * k ** 2


class _Stepper:
    """Exponential one-step scheme for u_t = L u + N(u) with diagonal L"""

    def __init__(self, L: np.ndarray, rhs: Callable[[np.ndarray], np.ndarray]):
        self.L = L
        self.rhs = rhs

    def setup(self, dt: float) -> None:
        raise NotImplementedError

    def step(self, u: np.ndarray, dt: float) -> np.ndarray:
        raise NotImplementedError


class IntegratingFactorRK4(_Stepper):
    """Classical RK4 applied in the integrating-factor frame"""

    def setup(self, dt: float) -> None:
        self.half = np.exp(0.5 * dt * self.L)
        self.full = np.exp(dt * self.L)

    def step(self, u: np.ndarray, dt: float) -> np.ndarray:
        a = self.rhs(u)
        b = self.rhs(self.half * (u + 0.5 * dt * a))
        c = self.rhs(self.half * u + 0.5 * dt * b)
        d = self.rhs(self.full * u + dt * self.half * c)
        return self.full * u + dt / 6.0 * (self.full * a + 2.0 * self.half * (b + c) + d)


class ETDRK4(_Stepper):
    """Cox-Matthews ETDRK4 with coefficients from contour means"""

    def setup(self, dt: float) -> None:
        hL = dt * self.L
        circle = CONTOUR_RADIUS * np.exp(2j * np.pi * (np.arange(1, CONTOUR_POINTS + 1) - 0.5) / CONTOUR_POINTS)
        z = hL[:, np.newaxis] + circle[np.newaxis, :]
        ez = np.exp(z)
        self.half = np.exp(0.5 * hL)
        self.full = np.exp(hL)
        self.zeta = dt * ((np.exp(z / 2.0) - 1.0) / z).mean(axis=-1)
        self.alph = dt * ((-4.0 - z + ez * (4.0 - 3.0 * z + z ** 2)) / z ** 3).mean(axis=-1)
        self.beta = dt * ((2.0 + z + ez * (z - 2.0)) / z ** 3).mean(axis=-1)
        self.gamm = dt * ((-4.0 - 3.0 * z - z ** 2 + ez * (4.0 - z)) / z ** 3).mean(axis=-1)

    def step(self, u: np.ndarray, dt: float) -> np.ndarray:
        n1 = self.rhs(u)
        a = self.half * u + self.zeta * n1
        n2 = self.rhs(a)
        b = self.half * u + self.zeta * n2
        n3 = self.rhs(b)
        c = self.half * a + self.zeta * (2.0 * n3 - n1)
        n4 = self.rhs(c)
        return self.full * u + self.alph * n1 + 2.0 * self.beta * (n2 + n3) + self.gamm * n4


STEPPERS = {"ifrk4": IntegratingFactorRK4, "etdrk4": ETDRK4}


def _check_datum(phi: SpectralField, config: SolverConfig) -> SpectralField:
    if phi.grid.band_limit != config.grid.band_limit:
        raise ValueError(f"datum has K={phi.grid.band_limit}, solver grid has K={config.grid.band_limit}")
    if phi.gauge is not Gauge.PHYSICAL:
        phi = to_physical(phi, 0.0)
    if phi.coefficient(0) != 0:
        raise ValueError("initial datum must be mean-zero")
    return phi


def reference_solve(phi: SpectralField, config: SolverConfig) -> Trajectory:
    """Fourth-order exponential Runge-Kutta solve returning physical states at uniform nodes"""
    phi = _check_datum(phi, config)
    grid = config.grid
    if config.nonlinear:
        def rhs(u):
            return nonlinear_flux(u, grid, config.alpha, config.convolution)
    else:
        def rhs(u):
            return np.zeros_like(u)

    h = config.dt / config.substeps
    stepper = STEPPERS[config.scheme](linear_symbol(grid, config.epsilon), rhs)
    stepper.setup(h)
    logging.info(f"Reference solve ({config.scheme}): alpha={config.alpha}, epsilon={config.epsilon}, "
                 f"K={grid.band_limit}, T={config.T}, steps={config.time_steps}x{config.substeps}")

    times = config.times
    u = np.array(phi.coeffs)
    states = [phi]
    for n in range(1, len(times)):
        for _ in range(config.substeps):
            u = stepper.step(u, h)
        norm = sobolev_norm_array(u, grid.band_limit, config.s)
        if not math.isfinite(norm) or norm > BLOW_UP_NORM:
            raise BlowUpError(float(times[n]), norm, h)
        states.append(SpectralField(u, grid))
    logging.info(f"Reference solve finished: sup H^{config.s} norm {max(sobolev_norm(f, config.s) for f in states):.6g}")
    return Trajectory(times, states, config)


def sobolev_norm_array(coeffs: np.ndarray, K: int, s: float) -> float:
    k2 = np.arange(-K, K + 1, dtype=float) ** 2
    with np.errstate(over='ignore', invalid='ignore'):
        return math.sqrt(2 * math.pi * float(np.sum((1.0 + k2) ** s * np.abs(coeffs) ** 2)))


# Normal-form Picard solver

def time_integral(values: np.ndarray, x: np.ndarray, quadrature: str) -> np.ndarray:
    """Integrate node values along axis 0; one node gives zero, two nodes use the trapezoid rule"""
    if len(x) == 1:
        return np.zeros(values.shape[1:], dtype=values.dtype)
    if len(x) == 2 or quadrature == "trapezoid":
        return integrate.trapezoid(values, x=x, axis=0)
    return integrate.simpson(values, x=x, axis=0)


def _kdv_terms(u: SpectralField, t: float, epsilon: float) -> Tuple[np.ndarray, np.ndarray]:
    """Boundary term A2 + 2A3 and integrand 2B at one node"""
    return boundary_total(u, t, epsilon).coeffs, 2.0 * b_total(u, t, epsilon).coeffs


def _mkdv_terms(u: SpectralField, t: float, epsilon: float) -> Tuple[np.ndarray, np.ndarray]:
    """Boundary term N1 and integrand Gamma0 + 3 N2 at one node"""
    integrand = mkdv_gamma0(u, t, epsilon).coeffs + 3.0 * mkdv_n2(u, t, epsilon).coeffs
    return mkdv_n1(u, t, epsilon).coeffs, integrand


@dataclass
class _NodeTerms:
    boundary: np.ndarray
    integrand: np.ndarray
    low_flux: np.ndarray


def _node_terms(states: Sequence[SpectralField], times: np.ndarray, config: SolverConfig) -> _NodeTerms:
    terms_fn = _kdv_terms if config.alpha == 2 else _mkdv_terms
    K = config.grid.band_limit
    boundary, integrand, low_flux = [], [], []
    for u, t in zip(states, times):
        b, g = terms_fn(u, float(t), config.epsilon)
        boundary.append(b)
        integrand.append(g)
        low_flux.append(twist_phase(K, float(t)) * nonlinear_flux(u.coeffs, config.grid, config.alpha,
                                                                  config.convolution))
    return _NodeTerms(np.array(boundary), np.array(integrand), np.array(low_flux))


def _assemble(terms: _NodeTerms, phi: SpectralField, times: np.ndarray, n: int,
              config: SolverConfig) -> np.ndarray:
    """Twisted coefficients of the Picard map at node n"""
    k = config.grid.wavenumbers
    k2 = k.astype(float) ** 2
    eps = config.epsilon
    t_n = float(times[n])
    decay = np.exp(-t_n * eps * k2)
    nodes = times[:n + 1]
    damping = np.exp(-np.outer(t_n - nodes, k2) * eps)
    low = decay * phi.coeffs + time_integral(damping * terms.low_flux[:n + 1], nodes, config.quadrature)
    high = (decay * phi.coeffs + decay * terms.boundary[0] - terms.boundary[n]
            + time_integral(damping * terms.integrand[:n + 1], nodes, config.quadrature))
    return np.where(np.abs(k) <= config.split_N, low, high)


def _require_picard_grid(config: SolverConfig) -> None:
    if config.grid.dealias_limit != config.grid.band_limit:
        raise ValueError(f"the normal-form map needs dealias_limit == K, got "
                         f"{config.grid.dealias_limit} != {config.grid.band_limit}")


def _phi_map(history: Trajectory, phi: SpectralField, t: float, config: SolverConfig) -> SpectralField:
    _require_picard_grid(config)
    phi = _check_datum(phi, config)
    n = history.node_index(t)
    times = history.times[:n + 1]
    if times[0] != 0.0:
        raise ValueError("history must start at t=0")
    terms = _node_terms(history.states[:n + 1], times, config)
    return SpectralField(_assemble(terms, phi, times, n, config), config.grid, Gauge.TWISTED)


def phi_map(history: Trajectory, phi: SpectralField, t: float, config: SolverConfig) -> SpectralField:
    """KdV-Burgers normal-form map at node t, returned as the twisted state

    Args:
        history: physical iterate covering [0, t] at the quadrature nodes
        phi: initial datum
        t: a node of history
        config: solver configuration with alpha = 2
    """
    if config.alpha != 2:
        raise ValueError("phi_map is the quadratic map; use mkdv_phi_map for alpha = 3")
    return _phi_map(history, phi, t, config)


def mkdv_phi_map(history: Trajectory, phi: SpectralField, t: float, config: SolverConfig) -> SpectralField:
    """mKdV-Burgers normal-form map at node t, returned as the twisted state"""
    if config.alpha != 3:
        raise ValueError("mkdv_phi_map is the cubic map; use phi_map for alpha = 2")
    return _phi_map(history, phi, t, config)


def gate_value(norm: float, T: float, config: SolverConfig) -> float:
    """T^gamma |phi|^2 with gamma = 2/5 (KdV-Burgers) or 1/5 (mKdV-Burgers)"""
    return T ** config.gate_exponent * norm ** 2


def gate_horizon(norm: float, config: SolverConfig) -> float:
    """Longest T that passes the smallness gate for a datum of the given norm"""
    if norm == 0:
        return math.inf
    return (config.gate_c / norm ** 2) ** (1.0 / config.gate_exponent)


def smallness_check(r: float, sup_norm: float, config: SolverConfig) -> Tuple[Dict[str, bool], float]:
    """Contraction conditions with the empirical constant C = max(1, sup |u| / r)"""
    C = max(1.0, sup_norm / r) if r > 0 else 1.0
    T = config.T
    if config.alpha == 2:
        scale = T ** 0.4
        checks = {
            'quadratic': scale * (2 * C) ** 2 * r <= 0.25,
            'cubic': scale * (2 * C) ** 4 * r ** 3 <= 0.25,
        }
    else:
        scale = T ** 0.2
        checks = {
            'cubic': C * scale * sup_norm ** 2 <= 0.25,
            'quintic': C * scale * sup_norm ** 4 <= 0.25,
        }
    return checks, C


def _linear_iterate(phi: SpectralField, times: np.ndarray, config: SolverConfig) -> np.ndarray:
    """Twisted coefficients of the constant-in-time seed v = phi"""
    k2 = config.grid.wavenumbers.astype(float) ** 2
    return np.exp(-np.outer(times, k2) * config.epsilon) * phi.coeffs[np.newaxis, :]


def _physical_states(twisted: np.ndarray, times: np.ndarray, grid: GridSpec) -> List[SpectralField]:
    K = grid.band_limit
    return [SpectralField(w * np.conj(twist_phase(K, float(t))), grid) for w, t in zip(twisted, times)]


def _sup_distance(a: np.ndarray, b: np.ndarray, K: int, s: float) -> float:
    return max(sobolev_norm_array(x - y, K, s) for x, y in zip(a, b))


def _picard(phi: SpectralField, config: SolverConfig) -> Tuple[Trajectory, ContractionDiagnostics]:
    _require_picard_grid(config)
    phi = _check_datum(phi, config)
    K = config.grid.band_limit
    r = sobolev_norm(phi, config.s)
    gate = gate_value(r, config.T, config)
    if gate > config.gate_c:
        raise ValueError(f"datum outside the smallness gate: T^{config.gate_exponent:g} |phi|^2 = {gate:.4g} "
                         f"> gate_c = {config.gate_c}")

    times = config.times
    diagnostics = ContractionDiagnostics(gate_value=gate)
    current = _linear_iterate(phi, times, config)
    stalled = 0
    logging.info(f"Picard solve: alpha={config.alpha}, epsilon={config.epsilon}, K={K}, N={config.split_N}, "
                 f"T={config.T}, gate {gate:.4g}")

    for iteration in range(1, config.picard_max_iters + 1):
        states = _physical_states(current, times, config.grid)
        terms = _node_terms(states, times, config)
        updated = np.array([_assemble(terms, phi, times, n, config) for n in range(len(times))])
        distance = _sup_distance(updated, current, K, config.s)
        diagnostics.iterate_distances.append(distance)
        if len(diagnostics.iterate_distances) > 1:
            previous = diagnostics.iterate_distances[-2]
            ratio = distance / previous if previous > 0 else 0.0
            diagnostics.contraction_ratios.append(ratio)
            stalled = stalled + 1 if ratio >= 1 else 0
        current = updated
        logging.info(f"Picard iterate {iteration}: sup H^{config.s} distance {distance:.3e}")
        if distance < config.picard_tol:
            diagnostics.converged = True
            break
        if stalled >= NON_CONTRACTION_LIMIT:
            raise ContractionError(diagnostics)

    if not diagnostics.converged:
        logging.warning(f"Picard iteration stopped at {config.picard_max_iters} iterates with distance "
                        f"{diagnostics.iterate_distances[-1]:.3e} >= {config.picard_tol}")

    trajectory = Trajectory(times, _physical_states(current, times, config.grid), config)
    checks, C = smallness_check(r, trajectory.sup_norm(config.s), config)
    diagnostics.smallness_check = checks
    diagnostics.empirical_C = C
    return trajectory, diagnostics


def picard_solve(phi: SpectralField, config: SolverConfig) -> Tuple[Trajectory, ContractionDiagnostics]:
    """Iterate the KdV-Burgers normal-form map from the constant-in-time seed"""
    if config.alpha != 2:
        raise ValueError("picard_solve is the quadratic solver; use mkdv_picard_solve for alpha = 3")
    return _picard(phi, config)


def mkdv_picard_solve(phi: SpectralField, config: SolverConfig) -> Tuple[Trajectory, ContractionDiagnostics]:
    """Iterate the mKdV-Burgers normal-form map from the constant-in-time seed"""
    if config.alpha != 3:
        raise ValueError("mkdv_picard_solve is the cubic solver; use picard_solve for alpha = 2")
    return _picard(phi, config)


def _chain(phi: SpectralField, config: SolverConfig, chunks: int) -> Tuple[Trajectory, ContractionDiagnostics]:
    solver = picard_solve if config.alpha == 2 else mkdv_picard_solve
    chunk_config = config.with_(T=config.T / chunks, split_N=config.split_N)
    times: List[float] = []
    states: List[SpectralField] = []
    summary = ContractionDiagnostics(chunks=chunks)
    datum = phi
    for i in range(chunks):
        offset = i * chunk_config.T
        piece, diagnostics = solver(datum, chunk_config)
        start = 0 if i == 0 else 1
        times.extend(offset + piece.times[start:])
        states.extend(piece.states[start:])
        summary.iterate_distances.extend(diagnostics.iterate_distances)
        summary.contraction_ratios.extend(diagnostics.contraction_ratios)
        summary.gate_value = max(summary.gate_value, diagnostics.gate_value)
        for key, ok in diagnostics.smallness_check.items():
            summary.smallness_check[key] = summary.smallness_check.get(key, True) and ok
        summary.empirical_C = max(summary.empirical_C, diagnostics.empirical_C)
        summary.converged = diagnostics.converged if i == 0 else summary.converged and diagnostics.converged
        datum = piece.final
        logging.info(f"Restart {i + 1}/{chunks} finished at t={offset + chunk_config.T:.6g}")
    return Trajectory(np.array(times), states, config), summary


def solve(phi: SpectralField, config: SolverConfig, method: str = "reference") -> Trajectory:
    """Dispatch to the reference or Picard solver, re-stepping Picard over gate-sized chunks"""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got '{method}'")
    if method == "reference":
        return reference_solve(phi, config)
    trajectory, _ = solve_with_diagnostics(phi, config)
    return trajectory


def restart_chunks(norm: float, config: SolverConfig) -> int:
    """Gate-sized Picard pieces needed to reach T from a datum of the given norm

    Raises:
        ValueError: more than MAX_RESTART_CHUNKS pieces would be needed
    """
    if config.T <= gate_horizon(norm, config):
        return 1
    # restarted data may grow above L^2 regularity
    horizon = gate_horizon(RESTART_NORM_MARGIN * norm, config)
    chunks = math.ceil(config.T / horizon)
    if chunks > MAX_RESTART_CHUNKS:
        raise ValueError(f"method picard needs {chunks} gate-sized restarts to reach T={config.T} "
                         f"(limit {MAX_RESTART_CHUNKS}); lower T or the amplitude, or use method reference")
    logging.info(f"Horizon T={config.T} exceeds the gate horizon {horizon:.4g}; re-stepping over {chunks} chunks")
    return chunks


def solve_with_diagnostics(phi: SpectralField, config: SolverConfig) -> Tuple[Trajectory, ContractionDiagnostics]:
    """Picard solve over [0, T], chained over gate-sized restarts when T is past the gate horizon

    A restarted piece whose datum grew past the norm allowance still fails its own gate with ValueError.
    """
    return _chain(phi, config, restart_chunks(sobolev_norm(phi, config.s), config))
