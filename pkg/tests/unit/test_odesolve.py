"""
Unit tests for the Numerov shooting solver and the chain machinery.
"""

import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from mqra.core import Parity, Potential, ProblemFamily
from mqra.odesolve import (
    GridFunction,
    ShootingConfig,
    build_chain,
    chain_energy,
    chain_function,
    chain_mismatch,
    chain_slope_jump,
    choose_x_max,
    default_x_max_floor,
    gauge_fix,
    grid_points,
    inner,
    integrate_ivp,
    quadrature,
    shoot_chain_energy,
    solve_eigen,
)
from utils.config import reset_settings
from utils.exceptions import ChainInconsistencyError, GridError, InvalidInputError

HARMONIC = Potential(((1.0, 2),))


class TestGrid:

    def test_grid_points(self):
        assert grid_points(8.0, 1e-3) == 8000

    def test_non_integral_ratio(self):
        with pytest.raises(GridError):
            grid_points(1.0, 0.3)

    def test_too_short(self):
        with pytest.raises(GridError):
            grid_points(0.1, 0.1)

    def test_grid_function_shape_checked(self):
        with pytest.raises(GridError):
            GridFunction(x_max=1.0, h=0.5, values=np.zeros(4))

    def test_mismatched_grids_refused(self):
        f = GridFunction(x_max=1.0, h=0.5, values=np.ones(3))
        g = GridFunction(x_max=2.0, h=0.5, values=np.ones(5))
        with pytest.raises(GridError):
            f.plus(g)

    def test_mismatched_parity_refused(self):
        f = GridFunction(x_max=1.0, h=0.5, values=np.ones(3))
        g = GridFunction(x_max=1.0, h=0.5, values=np.ones(3), parity=Parity.ODD)
        with pytest.raises(GridError):
            inner(f, g)

    def test_default_floors(self):
        assert default_x_max_floor(HARMONIC) == 8.0
        assert default_x_max_floor(Potential(((1.0, 4),))) == 6.0
        assert default_x_max_floor(Potential(((1.0, 6),))) == 5.0

    def test_choose_x_max_rounds_up(self):
        config = ShootingConfig()
        # x_t(25) = 5 -> 12.5
        assert choose_x_max(HARMONIC, 25.0, config) == 12.5
        assert choose_x_max(HARMONIC, 1.0, config) == 8.0


class TestQuadrature:

    def test_simpson_gaussian(self):
        f = GridFunction(x_max=10.0, h=0.01, values=np.exp(-np.arange(1001) * 0.01 * np.arange(1001) * 0.01))
        assert 2.0 * quadrature(f) == pytest.approx(np.sqrt(np.pi), rel=1e-10)

    def test_inner_is_full_line(self):
        x = np.arange(1001) * 0.01
        f = GridFunction(x_max=10.0, h=0.01, values=np.exp(-0.5 * x * x))
        assert inner(f, f) == pytest.approx(np.sqrt(np.pi), rel=1e-10)


class TestIntegrateIvp:

    def test_harmonic_ground_state(self):
        solution = integrate_ivp(HARMONIC, 1.0, None, (1.0, 0.0), (8.0, 1e-3))
        x = solution.function.x
        mask = x <= 4.0
        np.testing.assert_allclose(solution.function.values[mask], np.exp(-0.5 * x[mask] ** 2), atol=1e-7)

    def test_odd_start(self):
        solution = integrate_ivp(HARMONIC, 3.0, None, (0.0, 1.0), (8.0, 1e-3))
        x = solution.function.x
        mask = x <= 4.0
        np.testing.assert_allclose(solution.function.values[mask], x[mask] * np.exp(-0.5 * x[mask] ** 2),
                                   atol=1e-7)
        assert solution.function.parity is Parity.ODD

    def test_inhomogeneous_particular_solution(self):
        x = np.arange(8001) * 1e-3
        envelope = np.exp(-0.5 * x * x)
        source = GridFunction(x_max=8.0, h=1e-3, values=(0.75 - x ** 4) * envelope)
        solution = integrate_ivp(HARMONIC, 1.0, source, (0.0, 0.0), (8.0, 1e-3))
        expected = (-0.375 * x ** 2 - 0.125 * x ** 4) * envelope
        mask = x <= 3.0
        np.testing.assert_allclose(solution.function.values[mask], expected[mask], atol=1e-8)

    def test_off_eigenvalue_diverges(self):
        above = integrate_ivp(HARMONIC, 1.1, None, (1.0, 0.0), (8.0, 1e-3))
        below = integrate_ivp(HARMONIC, 0.9, None, (1.0, 0.0), (8.0, 1e-3))
        assert above.divergence_sign == -below.divergence_sign

    def test_rejects_mixed_initial_data(self):
        with pytest.raises(InvalidInputError):
            integrate_ivp(HARMONIC, 1.0, None, (1.0, 1.0), (8.0, 1e-3))


class TestSolveEigen:

    def setup_method(self):
        reset_settings()

    def teardown_method(self):
        reset_settings()

    @pytest.mark.parametrize("level", [0, 1, 2, 3])
    def test_harmonic_levels(self, level):
        energy, psi = solve_eigen(HARMONIC, level)
        assert energy == pytest.approx(2 * level + 1, rel=1e-9)
        assert psi.parity is Parity.of_level(level)

    def test_quartic_ground_state(self):
        energy, _ = solve_eigen(ProblemFamily(a=2, b=4).direct_potential(1.0), 0)
        assert energy == pytest.approx(1.392351580103, rel=5e-7)

    def test_node_count(self):
        _, psi = solve_eigen(HARMONIC, 4)
        inside = psi.values[psi.x < 4.0]
        assert np.count_nonzero(np.diff(np.sign(inside[np.abs(inside) > 1e-12]))) == 2

    def test_rejects_negative_level(self):
        with pytest.raises(InvalidInputError):
            solve_eigen(HARMONIC, -1)

    def test_fixed_extent_is_respected(self):
        _, psi = solve_eigen(HARMONIC, 0, ShootingConfig(x_max=9.0))
        assert psi.x_max == 9.0

    def test_step_halving_is_fourth_order(self):
        energies = [solve_eigen(HARMONIC, 0, ShootingConfig(x_max=8.0, h=h, tol_e=1e-14))[0]
                    for h in (0.04, 0.02, 0.01)]
        ratio = (energies[0] - energies[1]) / (energies[1] - energies[2])
        assert 12.0 <= ratio <= 20.0


class TestChain:

    def setup_method(self):
        self.state = build_chain(HARMONIC, 4, 0, 4)

    def test_quartic_exact_coefficients(self):
        energies = self.state.energies
        assert energies[0] == pytest.approx(1.0, rel=1e-10)
        assert energies[1] == pytest.approx(0.75, rel=1e-8)
        assert energies[2] == pytest.approx(-21.0 / 16.0, rel=1e-6)
        assert energies[3] == pytest.approx(333.0 / 64.0, rel=1e-5)

    def test_functions_are_orthogonal_to_base(self):
        psi0 = self.state.base
        for fn in self.state.functions[1:]:
            assert abs(inner(fn, psi0)) <= 1e-10 * inner(psi0, psi0)

    def test_first_chain_function_matches_closed_form(self):
        psi1 = self.state.functions[1]
        x = psi1.x
        closed = (-0.375 * x ** 2 - 0.125 * x ** 4) * np.exp(-0.5 * x * x)
        reference = gauge_fix(psi1.with_values(closed), self.state.base)
        np.testing.assert_allclose(psi1.values, reference.values, atol=1e-7)

    def test_gauge_invariance_of_energy(self):
        shifted = self.state.with_function(1, self.state.functions[1].plus(self.state.base, 0.37))
        assert chain_energy(shifted, 2) == pytest.approx(chain_energy(self.state, 2), rel=1e-9)

    def test_rayleigh_quotient(self):
        psi0 = self.state.base
        quotient = inner(psi0.with_values(psi0.x ** 4 * psi0.values), psi0) / inner(psi0, psi0)
        assert chain_energy(self.state, 1) == pytest.approx(quotient, rel=1e-10)

    def test_shooting_route_agrees(self):
        assert shoot_chain_energy(self.state, 2) == pytest.approx(self.state.energies[2], rel=1e-7)

    def test_shooting_first_order_is_exact(self):
        assert shoot_chain_energy(self.state, 1) == pytest.approx(0.75, rel=1e-8)

    def test_slope_jump_vanishes_at_projected_energy(self):
        """The turning-point slope jump and the projection integral share their root."""
        at_root = chain_slope_jump(self.state, 2, self.state.energies[2])
        off = chain_slope_jump(self.state, 2, self.state.energies[2] + 1.0)
        assert abs(at_root) <= 1e-6 * abs(off)

    def test_wrong_energy_is_inconsistent(self):
        wrong = self.state.energies[1] + 1.0
        assert chain_mismatch(self.state, 1, wrong) > 1e-5
        with pytest.raises(ChainInconsistencyError):
            chain_function(self.state, 1, wrong, decay_tol=1e-8)

    def test_chain_order_beyond_state(self):
        with pytest.raises(InvalidInputError):
            chain_energy(self.state, 6)

    def test_shoot_method_chain(self):
        state = build_chain(HARMONIC, 4, 1, 3, method="shoot")
        assert state.energies[1] == pytest.approx(3.75, rel=1e-7)
        assert state.energies[2] == pytest.approx(-165.0 / 16.0, rel=1e-6)
