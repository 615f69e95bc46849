"""
Pytest configuration and shared fixtures for kdvlimit tests
"""
import os
import sys

import numpy as np
import pytest
import yaml

# Add the src directory to Python path so tests can import the package without installing it
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
src_dir = os.path.join(project_root, "src")
if src_dir not in sys.path:
    sys.path.insert(0, src_dir)

from kdvlimit.integrators import SolverConfig  # noqa: E402
from kdvlimit.spectral import GridSpec, cosine_field, field_from_array, random_sobolev_field  # noqa: E402

FIXTURES_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures")


def random_field(rng: np.random.Generator, grid: GridSpec, scale: float = 0.5):
    """Random real mean-zero field with O(scale) coefficients"""
    raw = scale * (rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size))
    return field_from_array(raw, grid)


@pytest.fixture
def small_grid():
    """K = 4 lattice for brute-force oracles"""
    return GridSpec(4)


@pytest.fixture
def grid16():
    return GridSpec(16)


@pytest.fixture
def grid32():
    return GridSpec(32)


@pytest.fixture
def rng():
    """Seeded generator so property loops are reproducible"""
    return np.random.default_rng(20240607)


@pytest.fixture
def cos_field(grid16):
    """cos(x) on K = 16"""
    return cosine_field(grid16, 1, 1.0)


@pytest.fixture
def smooth_field(grid32):
    """Random-phase field decaying like |k|^-3"""
    return random_sobolev_field(7, grid32, 2.0, 0.2)


@pytest.fixture
def kdv_config(grid16):
    """Small KdV-Burgers reference configuration"""
    return SolverConfig(alpha=2, epsilon=0.1, s=0.0, T=0.1, grid=grid16, time_steps=16, substeps=2)


@pytest.fixture
def mkdv_config(grid16):
    """Small mKdV-Burgers reference configuration"""
    return SolverConfig(alpha=3, epsilon=0.1, s=0.5, T=0.1, grid=grid16, time_steps=16, substeps=2)


@pytest.fixture
def sample_config_dict(tmp_path):
    """Partial configuration small enough for end-to-end runs"""
    return {
        'equation': 'kdvb',
        'epsilon': 0.1,
        'epsilons': [0.1, 0.01, 0.001],
        's': 0.0,
        'T': 0.05,
        'K': 8,
        'time_steps': 8,
        'substeps': 2,
        'initial_data': 'cos',
        'amplitude': 0.2,
        'normalize_to': None,
        'output_dir': str(tmp_path / "runs"),
        'N_values': [2, 3, 4],
        'trials': 32,
        'lemma_K': 6,
        'cutoffs': [2, 4],
    }


@pytest.fixture
def write_config(tmp_path):
    """Write a mapping as YAML and return its path"""
    def _write(data, name="kdvlimit.yaml"):
        path = tmp_path / name
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(data, f, sort_keys=False)
        return str(path)
    return _write


@pytest.fixture
def fixture_config():
    """Path of a sample config under tests/fixtures/configs"""
    def _path(name):
        return os.path.join(FIXTURES_DIR, "configs", name)
    return _path
