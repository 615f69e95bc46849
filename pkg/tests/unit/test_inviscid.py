"""
Unit tests for viscous/inviscid pairs, sweeps, rate fits and truncation splits
"""
import logging
import math

import pytest
from unittest.mock import patch

from kdvlimit.integrators import SolverConfig, solve
from kdvlimit.inviscid import (PairSolveError, SweepRecord, TruncationRow, check_fit_grid, epsilon_sweep, fit_rate,
                               run_pair, truncation_study)
from kdvlimit.spectral import random_sobolev_field


@pytest.fixture
def phi(cos_field):
    return cos_field * 0.3


class TestRunPair:
    """Test single viscous/inviscid pairs"""

    def test_zero_epsilon_gives_zero(self, phi, kdv_config):
        """Test that eps = 0 reuses the inviscid leg and measures zero"""
        record = run_pair(phi, 0.0, kdv_config)
        assert record.distance == 0.0

    def test_record_fields(self, phi, kdv_config):
        """Test the provenance carried by a record"""
        record = run_pair(phi, 0.01, kdv_config, seed=5)
        assert record.distance > 0
        assert record.K == 16
        assert record.seed == 5
        assert len(record.fingerprint) == 12
        assert record.to_dict()['epsilon'] == 0.01

    def test_horizon_restricts(self, phi, kdv_config):
        """Test that a shorter horizon cannot increase the distance"""
        full = run_pair(phi, 0.1, kdv_config)
        early = run_pair(phi, 0.1, kdv_config, horizon=0.05)
        assert early.distance <= full.distance
        assert early.horizon == 0.05

    def test_failed_leg_is_named(self, phi, kdv_config):
        """Test that a solver failure reports which leg broke"""
        with patch('kdvlimit.inviscid.solve', side_effect=RuntimeError("boom")):
            with pytest.raises(PairSolveError, match="inviscid leg failed") as excinfo:
                run_pair(phi, 0.1, kdv_config)
        assert excinfo.value.leg == "inviscid"
        assert isinstance(excinfo.value.__cause__, RuntimeError)


class TestEpsilonSweep:
    """Test the shared-inviscid sweep"""

    def test_order_and_zero(self, phi, kdv_config):
        """Test that records keep input order and eps = 0 measures zero"""
        records = epsilon_sweep(phi, [0.01, 0.0, 0.1], kdv_config)
        assert [r.epsilon for r in records] == [0.01, 0.0, 0.1]
        assert records[1].distance == 0.0
        assert records[2].distance > records[0].distance > 0

    def test_matches_run_pair(self, phi, kdv_config):
        """Test that sweep distances equal independent pair runs"""
        records = epsilon_sweep(phi, [0.1, 0.01], kdv_config)
        for record in records:
            assert record.distance == pytest.approx(run_pair(phi, record.epsilon, kdv_config).distance, rel=1e-12)

    def test_smooth_data_rate_is_linear(self, phi, kdv_config):
        """Test that smooth data converge at rate close to one"""
        records = epsilon_sweep(phi, [0.1, 0.01, 0.001], kdv_config, for_fit=True)
        rate = fit_rate(records)
        assert 0.9 < rate.slope < 1.1
        assert rate.r_squared > 0.99
        assert rate.epsilons_used == [0.1, 0.01, 0.001]

    def test_threads_match_serial(self, phi, kdv_config):
        """Test that parallel legs give the serial distances"""
        serial = epsilon_sweep(phi, [0.1, 0.01], kdv_config)
        parallel = epsilon_sweep(phi, [0.1, 0.01], kdv_config, threads=2)
        assert [r.distance for r in serial] == [r.distance for r in parallel]

    def test_epsilon_range(self, phi, kdv_config):
        """Test that epsilons outside [0, 1] are rejected"""
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            epsilon_sweep(phi, [0.1, 2.0], kdv_config)

    def test_fit_grid_checked_before_solving(self, phi, kdv_config):
        """Test that a degenerate fit grid fails before any solve"""
        with patch('kdvlimit.inviscid.solve') as mock_solve:
            with pytest.raises(ValueError, match="at least 3 epsilons required for fit, got 2"):
                epsilon_sweep(phi, [0.1, 0.01], kdv_config, for_fit=True)
        mock_solve.assert_not_called()


class TestFitGrid:
    """Test fit grid validation"""

    def test_valid_grid(self):
        """Test that three positive epsilons over two decades pass"""
        check_fit_grid([0.1, 0.01, 0.001])

    @pytest.mark.parametrize("epsilons,message", [
        ([0.1, 0.01], "at least 3 epsilons"),
        ([0.1, 0.01, 0.0], "positive epsilons"),
        ([0.1, 0.05, 0.02], "two decades|2 decades"),
    ])
    def test_invalid_grids(self, epsilons, message):
        """Test short, zero-padded and narrow grids"""
        with pytest.raises(ValueError, match=message):
            check_fit_grid(epsilons)


def _record(epsilon, distance):
    return SweepRecord(epsilon=epsilon, distance=distance, s=0.0, T=1.0, K=16)


class TestFitRate:
    """Test the log-log rate fit"""

    def test_exact_power_law(self):
        """Test that distance = 2 eps^(1/2) fits slope 1/2 exactly"""
        records = [_record(e, 2 * math.sqrt(e)) for e in (1e-1, 1e-2, 1e-3, 1e-4)]
        rate = fit_rate(records)
        assert rate.slope == pytest.approx(0.5)
        assert rate.intercept == pytest.approx(math.log(2))
        assert rate.r_squared == pytest.approx(1.0)

    def test_zero_distances_excluded(self, caplog):
        """Test that zero distances are dropped with a warning"""
        records = [_record(0.0, 0.0)] + [_record(e, e) for e in (1e-1, 1e-2, 1e-3)]
        with caplog.at_level(logging.WARNING):
            rate = fit_rate(records)
        assert rate.excluded == [0.0]
        assert "Excluding epsilon=0.0" in caplog.text

    def test_too_few_points(self):
        """Test that fewer than three usable points fail"""
        with pytest.raises(ValueError, match="at least 3 points"):
            fit_rate([_record(0.1, 0.1), _record(0.01, 0.0), _record(0.001, 0.001)])


class TestTruncationStudy:
    """Test the three-leg truncation split"""

    @pytest.fixture
    def rough_phi(self, grid16):
        return random_sobolev_field(11, grid16, 0.5, 0.2)

    def test_triangle_holds(self, rough_phi, kdv_config):
        """Test that the direct distance never exceeds the sum of the legs"""
        rows = truncation_study(rough_phi, [2, 4, 8], 0.1, kdv_config)
        assert [r.cutoff for r in rows] == [2, 4, 8]
        assert all(r.triangle_holds for r in rows)
        tails = [r.data_tail for r in rows]
        assert tails == sorted(tails, reverse=True)

    def test_full_cutoff_collapses_legs(self, rough_phi, kdv_config):
        """Test that cutoff K leaves only the truncated gap, equal to the direct distance"""
        row = truncation_study(rough_phi, [16], 0.1, kdv_config)[0]
        assert row.data_tail == 0.0
        assert row.viscous_leg == 0.0
        assert row.inviscid_leg == 0.0
        assert row.truncated_gap == pytest.approx(row.direct)

    @pytest.mark.parametrize("cutoff", [0, 17])
    def test_cutoff_range(self, rough_phi, kdv_config, cutoff):
        """Test that cutoffs outside [1, K] are rejected"""
        with pytest.raises(ValueError, match="cutoff"):
            truncation_study(rough_phi, [cutoff], 0.1, kdv_config)

    def test_row_dict(self):
        """Test the derived columns of a row"""
        row = TruncationRow(cutoff=4, data_tail=0.1, viscous_leg=0.1, truncated_gap=0.2, inviscid_leg=0.3,
                            direct=0.5)
        data = row.to_dict()
        assert data['leg_sum'] == pytest.approx(0.6)
        assert data['triangle_holds'] is True


ACCEPTANCE_EPSILONS = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]


@pytest.mark.slow
class TestMkdvSweep:
    """Test mKdV-Burgers sweeps on H^2 data measured in H^1/2"""

    @pytest.fixture
    def config(self, grid32):
        return SolverConfig(alpha=3, epsilon=0.1, s=0.5, T=0.5, grid=grid32, time_steps=32, substeps=2)

    @pytest.fixture
    def smooth_phi(self, grid32):
        return random_sobolev_field(7, grid32, 2.0, 0.2)

    def test_rate_fit(self, smooth_phi, config):
        """Test that the distance falls at least like eps^0.45 with a clean log-log fit"""
        records = epsilon_sweep(smooth_phi, ACCEPTANCE_EPSILONS, config, for_fit=True, threads=2)
        rate = fit_rate(records)
        assert rate.excluded == []
        assert rate.slope >= 0.45
        assert rate.r_squared >= 0.95

    def test_viscous_norms_uniform_in_epsilon(self, config, grid32):
        """Test that the sup-in-time H^1/2 norm of the viscous solution varies by less than 2 across eps"""
        rough_phi = random_sobolev_field(3, grid32, 0.5, 0.1)
        sups = [solve(rough_phi, config.with_(epsilon=e)).sup_norm(config.s) for e in ACCEPTANCE_EPSILONS + [0.0]]
        assert all(math.isfinite(v) and v > 0 for v in sups)
        assert max(sups) / min(sups) < 2
