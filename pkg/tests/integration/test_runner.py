"""End-to-end runs of every subcommand through the runner."""

import json
from pathlib import Path

import pytest
from unittest.mock import patch

from kdvlimit.runner import (EXIT_COMPUTE_FAILURE, EXIT_CONFIG_ERROR, EXIT_OK, MANIFEST_NAME, run,
                             verify_manifest)
from kdvlimit.utils import FAILED_MARKER, csv_body, read_csv


def _only_run_dir(output_dir) -> Path:
    dirs = [p for p in Path(output_dir).iterdir() if p.is_dir()]
    assert len(dirs) == 1
    return dirs[0]


def _manifest(run_dir: Path) -> dict:
    with open(run_dir / MANIFEST_NAME, encoding="utf-8") as f:
        return json.load(f)


class TestSimulate:
    """Test the simulate subcommand"""

    def test_artifacts_and_manifest(self, sample_config_dict, write_config):
        """Test that simulate writes both tables and a matching manifest"""
        path = write_config(sample_config_dict)
        assert run(path, "simulate") == EXIT_OK
        run_dir = _only_run_dir(sample_config_dict['output_dir'])
        manifest = _manifest(run_dir)
        assert set(manifest['artifacts']) == {"trajectory.csv", "norms.csv"}
        assert manifest['config']['subcommand'] == "simulate"
        assert manifest['diagnostics']['nodes'] == 9
        assert verify_manifest(run_dir) == []

        schema, header, rows = read_csv(run_dir / "trajectory.csv")
        assert schema == "kdvlimit.trajectory/1"
        assert header == ["t", "k", "re", "im"]
        assert len(rows) == 9 * 9

    def test_zero_data(self, sample_config_dict, write_config):
        """Test that zero data stay zero"""
        path = write_config(dict(sample_config_dict, initial_data='zero'))
        assert run(path, "simulate") == EXIT_OK
        run_dir = _only_run_dir(sample_config_dict['output_dir'])
        _, _, rows = read_csv(run_dir / "norms.csv")
        assert all(float(row[1]) == 0.0 for row in rows)

    def test_deterministic_bodies(self, sample_config_dict, write_config):
        """Test that repeated runs write identical tables into separate directories"""
        path = write_config(sample_config_dict)
        assert run(path, "simulate") == EXIT_OK
        assert run(path, "simulate") == EXIT_OK
        first, second = sorted(Path(sample_config_dict['output_dir']).iterdir())
        assert second.name == first.name + "-r1"
        for name in ("trajectory.csv", "norms.csv"):
            assert csv_body(first / name) == csv_body(second / name)

    def test_tampered_artifact_detected(self, sample_config_dict, write_config):
        """Test that editing an artifact breaks the manifest check"""
        assert run(write_config(sample_config_dict), "simulate") == EXIT_OK
        run_dir = _only_run_dir(sample_config_dict['output_dir'])
        with open(run_dir / "norms.csv", "a", encoding="utf-8") as f:
            f.write("1,2,3\n")
        assert verify_manifest(run_dir) == ["norms.csv"]

    def test_picard_method(self, sample_config_dict, write_config):
        """Test that the Picard path records its contraction diagnostics"""
        path = write_config(dict(sample_config_dict, method='picard', amplitude=0.05))
        assert run(path, "simulate") == EXIT_OK
        manifest = _manifest(_only_run_dir(sample_config_dict['output_dir']))
        assert 'contraction' in manifest['diagnostics']


class TestExitCodes:
    """Test configuration and compute failures"""

    def test_config_error_creates_nothing(self, fixture_config, tmp_path):
        """Test that a two-epsilon fit is a configuration error before any run directory exists"""
        out = tmp_path / "runs"
        assert run(fixture_config("two_epsilons_fit.yaml"), "sweep", {'output_dir': str(out)}) == EXIT_CONFIG_ERROR
        assert not out.exists()

    def test_picard_restart_limit_is_config_error(self, sample_config_dict, write_config):
        """Test that a Picard run past the restart limit exits 2 before any run directory exists"""
        path = write_config(dict(sample_config_dict, method='picard', amplitude=1.0, T=1.0))
        assert run(path, "simulate") == EXIT_CONFIG_ERROR
        assert not Path(sample_config_dict['output_dir']).exists()

    def test_missing_config_file(self, tmp_path):
        """Test that an explicit missing file is a configuration error"""
        assert run(str(tmp_path / "absent.yaml"), "simulate") == EXIT_CONFIG_ERROR

    def test_compute_failure_marks_run(self, sample_config_dict, write_config):
        """Test that a failing solve leaves a FAILED marker and no manifest"""
        path = write_config(sample_config_dict)
        with patch('kdvlimit.runner.solve', side_effect=RuntimeError("solver diverged")):
            assert run(path, "report") == EXIT_COMPUTE_FAILURE
        run_dir = _only_run_dir(sample_config_dict['output_dir'])
        assert (run_dir / FAILED_MARKER).read_text() == "RuntimeError: solver diverged\n"
        assert not (run_dir / MANIFEST_NAME).exists()


class TestSubcommands:
    """Test the remaining subcommands on small grids"""

    def test_sweep_with_fit(self, sample_config_dict, write_config):
        """Test that sweep writes one row per epsilon and a rate fit"""
        assert run(write_config(sample_config_dict), "sweep") == EXIT_OK
        run_dir = _only_run_dir(sample_config_dict['output_dir'])
        _, header, rows = read_csv(run_dir / "sweep.csv")
        assert header[:2] == ["epsilon", "distance"]
        assert [float(r[0]) for r in rows] == [0.1, 0.01, 0.001]
        with open(run_dir / "rate_fit.json", encoding="utf-8") as f:
            assert 0.8 < json.load(f)['slope'] < 1.2

    def test_verify_lemmas(self, sample_config_dict, write_config):
        """Test that the exact claims hold on a small box"""
        assert run(write_config(sample_config_dict), "verify-lemmas") == EXIT_OK
        run_dir = _only_run_dir(sample_config_dict['output_dir'])
        _, header, rows = read_csv(run_dir / "claims.csv")
        assert header == ["claim", "checked", "violations", "holds"]
        holds = {row[0]: row[3] for row in rows}
        assert holds['phase_identity'] == "true"
        assert holds['q1_lower_bound'] == "true"

    def test_probe(self, sample_config_dict, write_config):
        """Test one probe row per operator and split"""
        assert run(write_config(sample_config_dict), "probe") == EXIT_OK
        run_dir = _only_run_dir(sample_config_dict['output_dir'])
        _, _, rows = read_csv(run_dir / "probe.csv")
        assert len(rows) == 3 * 3
        assert {row[0] for row in rows} == {"A2", "A3", "R3_0"}

    def test_report_kdv(self, sample_config_dict, write_config):
        """Test that the KdV-Burgers report includes the Hamiltonian and the Lipschitz table"""
        path = write_config(dict(sample_config_dict, lipschitz_perturbation=0.01))
        assert run(path, "report") == EXIT_OK
        run_dir = _only_run_dir(sample_config_dict['output_dir'])
        assert set(_manifest(run_dir)['artifacts']) == {"l2_identity.csv", "hamiltonian.csv", "l2_norm.csv",
                                                        "budget.json", "lipschitz.csv"}
        _, _, rows = read_csv(run_dir / "l2_identity.csv")
        assert max(float(r[2]) for r in rows) < 1e-6

    def test_report_mkdv(self, sample_config_dict, write_config):
        """Test that the mKdV-Burgers report carries the H2 budget and no Hamiltonian"""
        path = write_config(dict(sample_config_dict, equation='mkdvb', s=0.5))
        assert run(path, "report") == EXIT_OK
        run_dir = _only_run_dir(sample_config_dict['output_dir'])
        assert "hamiltonian.csv" not in _manifest(run_dir)['artifacts']
        with open(run_dir / "budget.json", encoding="utf-8") as f:
            assert 'h2_budget' in json.load(f)

    def test_truncation(self, sample_config_dict, write_config):
        """Test one row per cutoff with the triangle inequality holding"""
        assert run(write_config(sample_config_dict), "truncation") == EXIT_OK
        run_dir = _only_run_dir(sample_config_dict['output_dir'])
        _, _, rows = read_csv(run_dir / "truncation.csv")
        assert [int(r[0]) for r in rows] == [2, 4]
        assert all(r[-1] == "true" for r in rows)


@pytest.mark.slow
class TestAcceptance:
    """Larger experiments matching the published behaviour"""

    def test_smooth_rate_is_linear(self, write_config, tmp_path):
        """Test that smooth KdV-Burgers data converge at rate one in epsilon"""
        path = write_config({'K': 32, 'T': 0.5, 'time_steps': 32, 'epsilons': [0.1, 0.03, 0.01, 0.003, 0.001],
                             'amplitude': 0.3, 'normalize_to': None, 'output_dir': str(tmp_path / "runs")})
        assert run(path, "sweep") == EXIT_OK
        with open(_only_run_dir(tmp_path / "runs") / "rate_fit.json", encoding="utf-8") as f:
            fit = json.load(f)
        assert 0.9 < fit['slope'] < 1.1
        assert fit['r_squared'] > 0.99

    def test_lemmas_on_default_box(self, tmp_path, write_config):
        """Test the exact phase claims on the default verification box"""
        path = write_config({'output_dir': str(tmp_path / "runs")})
        assert run(path, "verify-lemmas") == EXIT_OK
        _, _, rows = read_csv(_only_run_dir(tmp_path / "runs") / "claims.csv")
        holds = {row[0]: row[3] for row in rows}
        for claim in ("phase_identity", "q2_real_part_equals_phase", "gamma_phase_lower_bound",
                      "q1_lower_bound", "q2_lower_bound"):
            assert holds[claim] == "true"
