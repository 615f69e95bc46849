"""
Configuration loader for kdvlimit
Loads flat YAML experiment settings, validates them with line-numbered errors and builds solver inputs
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

import yaml

try:
    from importlib.resources import files
except ImportError:
    # Python < 3.9 fallback
    from importlib_resources import files

from .integrators import METHODS, SolverConfig, restart_chunks
from .inviscid import check_fit_grid
from .operators import OperatorKind, OperatorTag
from .probes import MIN_PROBE_TRIALS
from .resonance import MAX_EXHAUSTIVE_K, ThresholdConvention
from .spectral import (GridSpec, SpectralField, cosine_field, make_field, normalize, random_sobolev_field,
                       sobolev_norm, zero_field)

SUBCOMMANDS = ("simulate", "sweep", "verify-lemmas", "probe", "report", "truncation")
# Subcommands that run the configured solver method
SOLVING_SUBCOMMANDS = ("simulate", "sweep", "report", "truncation")
EQUATIONS = {"kdvb": 2, "mkdvb": 3}
INITIAL_DATA = ("cos", "sum-of-modes", "random-sobolev", "zero")

NUMBER = (int, float)
OPTIONAL_INT = (int, type(None))
OPTIONAL_NUMBER = (int, float, type(None))

DEFAULT_CONFIG_NAME = "kdvlimit.yaml"
USER_CONFIG_PATH = "~/.kdvlimit/config.yaml"


def bundled_config_path() -> str:
    return str(files("kdvlimit.data").joinpath("config.yaml"))


class ConfigValidationError(Exception):
    """Raised when configuration validation fails"""
    pass


class Config:
    """Configuration manager for kdvlimit"""

    # Expected configuration schema; list values are ('list', item types)
    EXPECTED_SCHEMA = {
        'equation': str,
        'epsilon': NUMBER,
        'epsilons': ('list', NUMBER),
        's': NUMBER,
        'T': NUMBER,
        'K': int,
        'dealias_limit': OPTIONAL_INT,
        'N': OPTIONAL_INT,
        'time_steps': int,
        'substeps': int,
        'scheme': str,
        'method': str,
        'quadrature': str,
        'convolution': str,
        'picard_max_iters': int,
        'picard_tol': NUMBER,
        'gate_c': NUMBER,
        'seed': int,
        'initial_data': str,
        'amplitude': NUMBER,
        'mode': int,
        'modes': dict,
        'data_s': NUMBER,
        'normalize_to': OPTIONAL_NUMBER,
        'output_dir': str,
        'threads': int,
        'fit': bool,
        'operators': ('list', str),
        'N_values': ('list', int),
        'trials': int,
        'probe_t': NUMBER,
        'lemma_K': int,
        'lemma_epsilons': ('list', NUMBER),
        'c_much_less': NUMBER,
        'c_gtrsim': NUMBER,
        'c_sim': NUMBER,
        'cutoffs': ('list', int),
        'lipschitz_perturbation': NUMBER,
    }

    # Inclusive (low, high) bounds; None leaves a side open
    RANGES = {
        'epsilon': (0, 1),
        'epsilons': (0, 1),
        's': (0, None),
        'T': (1e-12, None),
        'K': (4, None),
        'dealias_limit': (1, None),
        'N': (1, None),
        'time_steps': (1, None),
        'substeps': (1, None),
        'picard_max_iters': (1, None),
        'picard_tol': (1e-300, None),
        'gate_c': (1e-300, None),
        'seed': (0, None),
        'amplitude': (0, None),
        'mode': (1, None),
        'normalize_to': (0, None),
        'threads': (1, None),
        'N_values': (2, None),
        'trials': (MIN_PROBE_TRIALS, None),
        'probe_t': (0, None),
        'lemma_K': (1, MAX_EXHAUSTIVE_K),
        'lemma_epsilons': (0, 1),
        'cutoffs': (1, None),
        'lipschitz_perturbation': (0, None),
    }

    CHOICES = {
        'equation': tuple(EQUATIONS),
        'scheme': ("ifrk4", "etdrk4"),
        'method': METHODS,
        'quadrature': ("simpson", "trapezoid"),
        'convolution': ("auto", "direct", "fft"),
        'initial_data': INITIAL_DATA,
        'operators': tuple(tag.value for tag in OperatorTag),
    }

    def __init__(self, config_file: str = None, overrides: Optional[Mapping[str, Any]] = None):
        self.config_file = self._find_config_file(config_file)
        self._lines: Dict[str, int] = {}
        self._config = self._load_config()
        for key, value in (overrides or {}).items():
            if value is not None:
                self._config[key] = value
                self._lines.pop(key, None)
        self._validate_config()

    def _find_config_file(self, config_file: str = None) -> str:
        """Find configuration file using hierarchical search strategy"""
        if config_file and not os.path.exists(config_file):
            raise FileNotFoundError(f"Configuration file {config_file} not found")
        # Search order: CLI argument -> current dir -> user home -> bundled default
        search_paths = [
            config_file,
            os.path.join(".", DEFAULT_CONFIG_NAME),
            os.path.expanduser(USER_CONFIG_PATH),
            self._get_bundled_config_path()
        ]

        for path in search_paths:
            if path and os.path.exists(path):
                return path

        raise FileNotFoundError("No configuration file found in any search location")

    def _get_bundled_config_path(self) -> str:
        """Get path to bundled default configuration file"""
        return bundled_config_path()

    def _read_mapping(self, path: str) -> Tuple[Dict[str, Any], Dict[str, int]]:
        """Parse a flat YAML mapping and the 1-based line of each key"""
        with open(path, 'r', encoding='utf-8') as file:
            text = file.read()
        name = os.path.basename(path)
        try:
            data = yaml.safe_load(text)
            node = yaml.compose(text)
        except yaml.YAMLError as e:
            mark = getattr(e, 'problem_mark', None)
            line = f" line {mark.line + 1}" if mark is not None else ""
            raise ConfigValidationError(f"Configuration validation failed: {name}{line}: {e}")
        if data is None:
            return {}, {}
        if not isinstance(data, dict):
            raise ConfigValidationError(
                f"Configuration validation failed: {name}: expected a key-value mapping, got {type(data).__name__}")
        lines = {}
        if isinstance(node, yaml.MappingNode):
            for key_node, _ in node.value:
                lines[str(key_node.value)] = key_node.start_mark.line + 1
        return data, lines

    def _load_config(self) -> Dict[str, Any]:
        """Load the bundled defaults and merge the selected file over them"""
        bundled = self._get_bundled_config_path()
        config, _ = self._read_mapping(bundled)
        if os.path.abspath(self.config_file) != os.path.abspath(bundled):
            user, lines = self._read_mapping(self.config_file)
            config.update(user)
            self._lines = lines
            logging.info(f"Loaded configuration from {self.config_file}")
        return config

    def _where(self, key: str) -> str:
        name = os.path.basename(self.config_file)
        line = self._lines.get(key)
        return f"{name} line {line}" if line else name

    def _validate_config(self) -> None:
        """Validate configuration against expected schema"""
        for key in self._config:
            if key not in self.EXPECTED_SCHEMA:
                raise ConfigValidationError(
                    f"Configuration validation failed: {self._where(key)}: unknown key '{key}'")
        for key, expected in self.EXPECTED_SCHEMA.items():
            try:
                self._config[key] = self._validate_value(key, self._config.get(key), expected)
            except ValueError as e:
                raise ConfigValidationError(f"Configuration validation failed: {self._where(key)}: {e}")

    def _validate_value(self, key: str, value: Any, expected: Any) -> Any:
        """Check one value against its schema entry, range and choices"""
        if isinstance(expected, tuple) and expected and expected[0] == 'list':
            if not isinstance(value, list):
                raise ValueError(f"Expected list at {key}, got {type(value).__name__}")
            if not value:
                raise ValueError(f"Expected a non-empty list at {key}")
            return [self._validate_value(key, item, expected[1]) for item in value]

        if expected is dict:
            if not isinstance(value, dict):
                raise ValueError(f"Expected dict at {key}, got {type(value).__name__}")
            modes = {}
            for mode, amplitude in value.items():
                if not isinstance(mode, int) or isinstance(mode, bool) or mode < 1:
                    raise ValueError(f"Expected positive integer modes at {key}, got {mode!r}")
                modes[mode] = self._check_type(key, amplitude, NUMBER)
            return modes

        value = self._check_type(key, value, expected)
        if value is None:
            return value
        low, high = self.RANGES.get(key, (None, None))
        if low is not None and value < low or high is not None and value > high:
            bounds = f"[{low if low is not None else '-inf'}, {high if high is not None else 'inf'}]"
            raise ValueError(f"{key}={value} is outside {bounds}")
        if key in self.CHOICES and value not in self.CHOICES[key]:
            raise ValueError(f"{key} must be one of {', '.join(self.CHOICES[key])}, got '{value}'")
        return value

    def _check_type(self, key: str, value: Any, expected: Any) -> Any:
        types = expected if isinstance(expected, tuple) else (expected,)
        # bool is an int subclass but never a valid number here
        if isinstance(value, bool) and bool not in types:
            raise ValueError(f"Expected {' or '.join(t.__name__ for t in types)} at {key}, got bool")
        if float in types and isinstance(value, str):
            # PyYAML reads 1e-10 as a string
            try:
                value = float(value)
            except ValueError:
                pass
        if not isinstance(value, types):
            raise ValueError(f"Expected {' or '.join(t.__name__ for t in types)} at {key}, "
                             f"got {type(value).__name__}")
        if isinstance(value, float) and not math.isfinite(value):
            raise ValueError(f"{key} must be finite, got {value}")
        return value

    def __getitem__(self, key: str) -> Any:
        return self._config[key]

    def as_dict(self) -> Dict[str, Any]:
        """Validated settings, in schema order"""
        return {key: self._config[key] for key in self.EXPECTED_SCHEMA}

    @property
    def alpha(self) -> int:
        """Get the nonlinearity power for the configured equation"""
        return EQUATIONS[self._config['equation']]

    @property
    def epsilons(self) -> List[float]:
        return [float(e) for e in self._config['epsilons']]

    @property
    def output_dir(self) -> str:
        return self._config['output_dir']

    @property
    def threads(self) -> int:
        return self._config['threads']

    @property
    def seed(self) -> int:
        return self._config['seed']

    @property
    def threshold_convention(self) -> ThresholdConvention:
        """Get the constants behind the resonance-class relations"""
        return ThresholdConvention(c_much_less=float(self._config['c_much_less']),
                                   c_gtrsim=float(self._config['c_gtrsim']),
                                   c_sim=float(self._config['c_sim']))

    def line_of(self, key: str) -> Optional[int]:
        return self._lines.get(key)


@dataclass
class ExperimentConfig:
    """Everything one subcommand needs, checked against the solver preconditions"""
    subcommand: str
    settings: Dict[str, Any]
    grid: GridSpec
    solver: SolverConfig
    method: str
    phi: SpectralField
    convention: ThresholdConvention
    operators: List[OperatorKind] = field(default_factory=list)

    @property
    def epsilons(self) -> List[float]:
        return [float(e) for e in self.settings['epsilons']]

    @property
    def seed(self) -> int:
        return self.settings['seed']

    @property
    def threads(self) -> int:
        return self.settings['threads']

    @property
    def output_dir(self) -> str:
        return self.settings['output_dir']

    def echo(self) -> Dict[str, Any]:
        """Config echo for manifests and run-directory fingerprints"""
        settings = dict(self.settings)
        settings['modes'] = {str(k): v for k, v in settings['modes'].items()}
        return {'subcommand': self.subcommand, **settings}

    @classmethod
    def from_config(cls, config: Config, subcommand: str) -> 'ExperimentConfig':
        if subcommand not in SUBCOMMANDS:
            raise ConfigValidationError(f"Configuration validation failed: unknown subcommand '{subcommand}'")
        settings = config.as_dict()
        try:
            grid = GridSpec(settings['K'], settings['dealias_limit'])
            solver = SolverConfig(
                alpha=config.alpha,
                epsilon=float(settings['epsilon']),
                s=float(settings['s']),
                T=float(settings['T']),
                grid=grid,
                split_N=settings['N'],
                time_steps=settings['time_steps'],
                substeps=settings['substeps'],
                quadrature=settings['quadrature'],
                picard_max_iters=settings['picard_max_iters'],
                picard_tol=float(settings['picard_tol']),
                scheme=settings['scheme'],
                convolution=settings['convolution'],
                gate_c=float(settings['gate_c']),
            )
            phi = build_initial_data(settings, grid)
            operators = [OperatorKind(OperatorTag(tag), t=float(settings['probe_t']),
                                      epsilon=float(settings['epsilon'])) for tag in settings['operators']]
            _check_subcommand(subcommand, settings)
            if settings['method'] == "picard" and subcommand in SOLVING_SUBCOMMANDS:
                _check_picard_restarts(subcommand, settings, phi, solver)
        except ValueError as e:
            raise ConfigValidationError(f"Configuration validation failed: {os.path.basename(config.config_file)}: {e}")
        return cls(subcommand=subcommand, settings=settings, grid=grid, solver=solver,
                   method=settings['method'], phi=phi, convention=config.threshold_convention,
                   operators=operators)


def _check_subcommand(subcommand: str, settings: Mapping[str, Any]) -> None:
    """Cross-key checks that only matter for one subcommand"""
    if subcommand == "sweep" and settings['fit']:
        check_fit_grid([float(e) for e in settings['epsilons']])
    if subcommand == "truncation":
        for c in settings['cutoffs']:
            if c > settings['K']:
                raise ValueError(f"cutoff {c} exceeds K={settings['K']}")
    if subcommand == "probe":
        for N in settings['N_values']:
            if 2 * N > settings['K']:
                raise ValueError(f"probe split N={N} needs K >= {2 * N}, got K={settings['K']}")


def _check_picard_restarts(subcommand: str, settings: Mapping[str, Any], phi: SpectralField,
                           solver: SolverConfig) -> None:
    """Reject Picard runs whose gate-sized restarts would exceed the limit before any solve starts"""
    norm = sobolev_norm(phi, solver.s)
    if subcommand == "report":
        # the Lipschitz pair adds a perturbation of this H^s size
        norm += float(settings['lipschitz_perturbation'])
    restart_chunks(norm, solver)


def build_initial_data(settings: Mapping[str, Any], grid: GridSpec) -> SpectralField:
    """Named initial datum, rescaled to normalize_to in H^s when set"""
    kind = settings['initial_data']
    amplitude = float(settings['amplitude'])
    if kind == "cos":
        if settings['mode'] > grid.band_limit:
            raise ValueError(f"mode {settings['mode']} exceeds K={grid.band_limit}")
        phi = cosine_field(grid, settings['mode'], amplitude)
    elif kind == "sum-of-modes":
        coeffs = {}
        for mode, a in settings['modes'].items():
            coeffs[mode] = coeffs[-mode] = amplitude * float(a) / 2
        phi = make_field(coeffs, grid)
    elif kind == "random-sobolev":
        phi = random_sobolev_field(settings['seed'], grid, float(settings['data_s']), amplitude)
    else:
        return zero_field(grid)
    if settings['normalize_to'] is not None:
        phi = normalize(phi, float(settings['s']), float(settings['normalize_to']))
    return phi
