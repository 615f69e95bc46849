"""
Unit tests for the reference and normal-form Picard solvers
"""
import math

import numpy as np
import pytest
from unittest.mock import patch

from kdvlimit.integrators import (MAX_RESTART_CHUNKS, BlowUpError, SolverConfig, Trajectory, _chain, default_split,
                                  gate_horizon, gate_value, linear_symbol, mkdv_phi_map, mkdv_picard_solve, phi_map,
                                  picard_solve, reference_solve, restart_chunks, smallness_check, solve,
                                  solve_with_diagnostics, time_integral)
from kdvlimit.spectral import GridSpec, SpectralField, cosine_field, sobolev_norm, to_twisted, zero_field


def _final_gap(a: Trajectory, b: Trajectory) -> float:
    return float(np.max(np.abs(a.final.coeffs - b.final.coeffs)))


class TestSolverConfig:
    """Test solver configuration validation"""

    def test_defaults(self, grid16):
        """Test the derived split, step and node grid"""
        config = SolverConfig(alpha=2, epsilon=0.1, s=0.0, T=0.1, grid=grid16, time_steps=10)
        assert config.split_N == default_split(0.1) == 3
        assert config.dt == pytest.approx(0.01)
        assert len(config.times) == 11
        assert config.gate_exponent == 0.4
        assert config.with_(alpha=3, s=0.5).gate_exponent == 0.2

    @pytest.mark.parametrize("changes", [
        {'alpha': 4}, {'epsilon': 1.5}, {'epsilon': -0.1}, {'s': -0.5}, {'T': 0.0}, {'split_N': 17},
        {'time_steps': 0}, {'quadrature': 'gauss'}, {'scheme': 'euler'}, {'convolution': 'naive'},
        {'picard_tol': 0.0}, {'gate_c': 0.0},
    ])
    def test_invalid_values(self, grid16, changes):
        """Test that out-of-range settings are rejected"""
        args = dict(alpha=2, epsilon=0.1, s=0.0, T=0.1, grid=grid16)
        args.update(changes)
        with pytest.raises(ValueError):
            SolverConfig(**args)

    def test_mkdv_needs_half_derivative(self, grid16):
        """Test that mKdV-Burgers requires s >= 1/2"""
        with pytest.raises(ValueError, match="s >= 1/2"):
            SolverConfig(alpha=3, epsilon=0.1, s=0.25, T=0.1, grid=grid16)

    def test_to_dict(self, kdv_config):
        """Test the serialized configuration"""
        data = kdv_config.to_dict()
        assert data['K'] == 16
        assert data['alpha'] == 2
        assert data['nonlinear'] is True


class TestTrajectory:
    """Test trajectory containers"""

    def test_restrict_and_norms(self, kdv_config, cos_field):
        """Test restriction to a shorter horizon"""
        traj = Trajectory(kdv_config.times, [cos_field] * len(kdv_config.times), kdv_config)
        short = traj.restrict(0.05)
        assert short.times[-1] == pytest.approx(0.05)
        assert len(short) == 9
        assert traj.sup_norm(0.0) == pytest.approx(sobolev_norm(cos_field, 0.0))

    def test_times_must_increase(self, kdv_config, cos_field):
        """Test that repeated node times are rejected"""
        with pytest.raises(ValueError, match="strictly increasing"):
            Trajectory([0.0, 0.0], [cos_field, cos_field], kdv_config)

    def test_node_index(self, kdv_config, cos_field):
        """Test that node lookup rejects off-grid times"""
        traj = Trajectory(kdv_config.times, [cos_field] * len(kdv_config.times), kdv_config)
        assert traj.node_index(kdv_config.times[3]) == 3
        with pytest.raises(ValueError, match="not a quadrature node"):
            traj.node_index(0.0123)


class TestReferenceSolver:
    """Test the exponential Runge-Kutta reference solver"""

    @pytest.mark.parametrize("scheme", ["ifrk4", "etdrk4"])
    def test_linear_flow_is_exact(self, kdv_config, smooth_field, scheme):
        """Test that the linear problem matches the exact multiplier at every node"""
        grid = smooth_field.grid
        config = kdv_config.with_(grid=grid, nonlinear=False, scheme=scheme)
        traj = reference_solve(smooth_field, config)
        L = linear_symbol(grid, config.epsilon)
        for t, state in zip(traj.times, traj.states):
            np.testing.assert_allclose(state.coeffs, np.exp(t * L) * smooth_field.coeffs, rtol=1e-10, atol=1e-14)

    def test_zero_datum_stays_zero(self, kdv_config, grid16):
        """Test that zero data give the zero solution"""
        traj = reference_solve(zero_field(grid16), kdv_config)
        assert all(np.all(state.coeffs == 0) for state in traj.states)

    def test_fourth_order_convergence(self, grid16):
        """Test that halving the step cuts the error by roughly sixteen"""
        phi = cosine_field(grid16, 1, 0.2)
        base = SolverConfig(alpha=2, epsilon=0.1, s=0.0, T=0.2, grid=grid16, time_steps=4)
        fine = reference_solve(phi, base.with_(substeps=64))
        coarse_err = _final_gap(reference_solve(phi, base.with_(substeps=1)), fine)
        half_err = _final_gap(reference_solve(phi, base.with_(substeps=2)), fine)
        assert coarse_err / half_err > 8

    def test_schemes_agree(self, kdv_config, cos_field):
        """Test that IFRK4 and ETDRK4 agree on a smooth problem"""
        phi = cos_field * 0.2
        a = reference_solve(phi, kdv_config.with_(substeps=8))
        b = reference_solve(phi, kdv_config.with_(substeps=8, scheme="etdrk4"))
        assert _final_gap(a, b) < 1e-8

    def test_inviscid_l2_conservation(self, kdv_config, cos_field):
        """Test that the L2 norm is conserved at eps = 0"""
        traj = reference_solve(cos_field * 0.3, kdv_config.with_(epsilon=0.0, substeps=8))
        norms = traj.norms(0.0)
        assert np.max(np.abs(norms - norms[0])) / norms[0] < 1e-8

    def test_viscous_l2_decay(self, mkdv_config, cos_field):
        """Test that the L2 norm does not increase for eps > 0"""
        traj = reference_solve(cos_field * 0.3, mkdv_config)
        norms = traj.norms(0.0)
        assert np.all(np.diff(norms) <= 1e-14)
        assert norms[-1] < norms[0]

    def test_mean_zero_preserved(self, kdv_config, smooth_field):
        """Test that the zero mode stays zero"""
        config = kdv_config.with_(grid=smooth_field.grid)
        traj = reference_solve(smooth_field, config)
        assert all(state.coefficient(0) == 0 for state in traj.states)

    def test_blow_up(self, grid16):
        """Test that a diverging solve raises with the step size"""
        config = SolverConfig(alpha=2, epsilon=0.0, s=0.0, T=1.0, grid=grid16, time_steps=1, substeps=1)
        with pytest.raises(BlowUpError, match="reduce the step size"):
            reference_solve(cosine_field(grid16, 1, 1e4), config)

    def test_datum_checks(self, kdv_config, grid16):
        """Test band and mean-zero checks on the datum"""
        with pytest.raises(ValueError, match="solver grid"):
            reference_solve(zero_field(GridSpec(8)), kdv_config)
        coeffs = np.zeros(grid16.size, dtype=complex)
        coeffs[16] = 1.0
        with pytest.raises(ValueError, match="mean-zero"):
            reference_solve(SpectralField(coeffs, grid16), kdv_config)


@pytest.fixture
def small_kdv(grid16):
    """Gate-passing KdV-Burgers problem"""
    config = SolverConfig(alpha=2, epsilon=0.1, s=0.0, T=0.1, grid=grid16, time_steps=16, substeps=4)
    return cosine_field(grid16, 1, 0.05), config


@pytest.fixture
def small_mkdv(grid16):
    """Gate-passing mKdV-Burgers problem"""
    config = SolverConfig(alpha=3, epsilon=0.1, s=0.5, T=0.1, grid=grid16, time_steps=16, substeps=4)
    return cosine_field(grid16, 1, 0.04), config


class TestPicardSolver:
    """Test the normal-form Picard iteration"""

    def test_kdv_converges_to_reference(self, small_kdv):
        """Test that the KdV-Burgers fixed point matches the reference solution"""
        phi, config = small_kdv
        traj, diagnostics = picard_solve(phi, config)
        assert diagnostics.converged
        assert all(r < 1 for r in diagnostics.contraction_ratios)
        assert all(r <= 0.5 for r in diagnostics.contraction_ratios[1:])
        assert _final_gap(traj, reference_solve(phi, config)) < 1e-7

    def test_mkdv_converges_to_reference(self, small_mkdv):
        """Test that the mKdV-Burgers fixed point matches the reference solution"""
        phi, config = small_mkdv
        traj, diagnostics = mkdv_picard_solve(phi, config)
        assert diagnostics.converged
        assert all(r <= 0.5 for r in diagnostics.contraction_ratios[1:])
        assert _final_gap(traj, reference_solve(phi, config)) < 1e-7

    def test_fixed_point_of_map(self, small_kdv):
        """Test that the converged trajectory is reproduced by one application of the map"""
        phi, config = small_kdv
        traj, _ = picard_solve(phi, config)
        t = float(config.times[8])
        image = phi_map(traj, phi, t, config)
        expected = to_twisted(traj.states[8], t)
        np.testing.assert_allclose(image.coeffs, expected.coeffs, atol=1e-9)

    def test_map_at_zero_is_datum(self, small_mkdv):
        """Test that the map returns the datum at t = 0"""
        phi, config = small_mkdv
        traj, _ = mkdv_picard_solve(phi, config)
        image = mkdv_phi_map(traj, phi, 0.0, config)
        np.testing.assert_allclose(image.coeffs, phi.coeffs, atol=1e-15)

    def test_equation_mismatch(self, small_kdv, small_mkdv):
        """Test that each solver and map insists on its own power"""
        phi, kdv = small_kdv
        _, mkdv = small_mkdv
        with pytest.raises(ValueError):
            picard_solve(phi, mkdv)
        with pytest.raises(ValueError):
            mkdv_picard_solve(phi, kdv)
        traj, _ = picard_solve(phi, kdv)
        with pytest.raises(ValueError, match="mkdv_phi_map"):
            phi_map(traj, phi, 0.0, mkdv)

    def test_gate_rejects_large_data(self, grid16):
        """Test that data outside the smallness gate are refused"""
        config = SolverConfig(alpha=2, epsilon=0.1, s=0.0, T=0.1, grid=grid16)
        with pytest.raises(ValueError, match="smallness gate"):
            picard_solve(cosine_field(grid16, 1, 1.0), config)

    def test_dealiased_grid_rejected(self, grid16):
        """Test that the map needs dealias_limit equal to K"""
        grid = GridSpec(16, 10)
        config = SolverConfig(alpha=2, epsilon=0.1, s=0.0, T=0.1, grid=grid)
        with pytest.raises(ValueError, match="dealias_limit"):
            picard_solve(cosine_field(grid, 1, 0.05), config)

    def test_smallness_check_keys(self, small_kdv, small_mkdv):
        """Test the reported contraction conditions per equation"""
        _, kdv = small_kdv
        _, mkdv = small_mkdv
        checks, C = smallness_check(0.05, 0.05, kdv)
        assert set(checks) == {'quadratic', 'cubic'}
        assert all(checks.values())
        assert C == 1.0
        checks, _ = smallness_check(0.05, 0.05, mkdv)
        assert set(checks) == {'cubic', 'quintic'}


class TestDispatch:
    """Test solver dispatch and restarted Picard runs"""

    def test_gate_helpers(self, small_kdv):
        """Test that the gate horizon is where the gate value reaches gate_c"""
        _, config = small_kdv
        horizon = gate_horizon(0.3, config)
        assert gate_value(0.3, horizon, config) == pytest.approx(config.gate_c)
        assert gate_horizon(0.0, config) == math.inf

    def test_single_chunk(self, small_kdv):
        """Test that a gate-passing run uses one chunk"""
        phi, config = small_kdv
        traj, diagnostics = solve_with_diagnostics(phi, config)
        assert diagnostics.chunks == 1
        assert len(traj) == config.time_steps + 1

    def test_restarted_chunks(self, grid16):
        """Test that a horizon beyond the gate is covered by restarts"""
        phi = cosine_field(grid16, 1, 0.1)
        config = SolverConfig(alpha=2, epsilon=0.1, s=0.0, T=0.5, grid=grid16, time_steps=8)
        traj, diagnostics = solve_with_diagnostics(phi, config)
        assert diagnostics.chunks > 1
        assert len(traj) == diagnostics.chunks * config.time_steps + 1
        assert traj.times[-1] == pytest.approx(0.5)
        assert _final_gap(traj, reference_solve(phi, config)) < 1e-6

    def test_restart_chunk_count(self, small_kdv):
        """Test the chunk count below, past and far past the gate horizon"""
        _, config = small_kdv
        assert restart_chunks(0.0, config) == 1
        assert restart_chunks(0.3, config.with_(T=gate_horizon(0.3, config))) == 1
        past = config.with_(T=2 * gate_horizon(0.3, config))
        assert 2 <= restart_chunks(0.3, past) <= MAX_RESTART_CHUNKS
        with pytest.raises(ValueError, match="gate-sized restarts"):
            restart_chunks(0.3, config.with_(T=1000 * MAX_RESTART_CHUNKS * gate_horizon(0.3, config)))

    def test_restart_limit_fails_before_solving(self, grid16):
        """Test that an unreachable horizon is refused without a Picard iterate"""
        config = SolverConfig(alpha=2, epsilon=0.1, s=0.0, T=1.0, grid=grid16, time_steps=8)
        with patch('kdvlimit.integrators._picard') as mock_picard:
            with pytest.raises(ValueError, match="gate-sized restarts"):
                solve(cosine_field(grid16, 1, 1.0), config, "picard")
        mock_picard.assert_not_called()

    @pytest.mark.parametrize("alpha,s,amplitude", [(2, 0.0, 0.05), (3, 0.5, 0.04)])
    def test_restart_matches_single_solve(self, grid16, alpha, s, amplitude):
        """Test that two chained solves over [0, T] reproduce one solve over [0, 2T]"""
        phi = cosine_field(grid16, 1, amplitude)
        config = SolverConfig(alpha=alpha, epsilon=0.1, s=s, T=0.2, grid=grid16, time_steps=32, substeps=4)
        single = picard_solve(phi, config)[0] if alpha == 2 else mkdv_picard_solve(phi, config)[0]
        chained, diagnostics = _chain(phi, config.with_(time_steps=16), 2)
        assert diagnostics.chunks == 2
        assert diagnostics.converged
        np.testing.assert_allclose(chained.times, single.times, atol=1e-15)
        gap = max(float(np.max(np.abs(a.coeffs - b.coeffs))) for a, b in zip(chained.states, single.states))
        assert gap < 1e-7
        assert _final_gap(chained, reference_solve(phi, config)) < 1e-7

    def test_solve_methods(self, small_kdv):
        """Test dispatch by method name"""
        phi, config = small_kdv
        assert len(solve(phi, config, "reference")) == config.time_steps + 1
        assert len(solve(phi, config, "picard")) == config.time_steps + 1
        with pytest.raises(ValueError, match="method must be one of"):
            solve(phi, config, "euler")


class TestTimeIntegral:
    """Test the node quadrature"""

    def test_single_node_is_zero(self):
        """Test that one node integrates to zero"""
        out = time_integral(np.ones((1, 3)), np.array([0.0]), "simpson")
        assert np.all(out == 0)

    def test_two_nodes_use_trapezoid(self):
        """Test that two nodes fall back to the trapezoid rule"""
        out = time_integral(np.array([[0.0], [2.0]]), np.array([0.0, 1.0]), "simpson")
        assert out[0] == pytest.approx(1.0)

    def test_simpson_is_exact_for_cubics(self):
        """Test Simpson on t^3 over five nodes"""
        x = np.linspace(0.0, 1.0, 5)
        out = time_integral((x ** 3)[:, np.newaxis], x, "simpson")
        assert out[0] == pytest.approx(0.25)
