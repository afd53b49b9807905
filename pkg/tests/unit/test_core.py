"""
Unit tests for problem normalization and the large-coupling structure.
"""

import os
import sys
from fractions import Fraction

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from mqra.core import (
    Parity,
    Potential,
    ProblemFamily,
    ReducedProblem,
    asymptotic_structure,
    physical_energy,
    reduce_potential,
    scale_to_asymptotic,
    validate_family,
)
from mqra.odesolve import solve_eigen
from utils.exceptions import InvalidInputError


class TestProblemFamily:
    """Exponent validation."""

    def test_quartic_family(self):
        family = validate_family(2, 4)
        assert family.g == 2
        assert family.label == "x^2+lambda*x^4"

    @pytest.mark.parametrize("a,b", [(3, 4), (2, 5), (4, 4), (4, 2), (0, 4)])
    def test_rejects_bad_exponents(self, a, b):
        with pytest.raises(InvalidInputError):
            validate_family(a, b)

    def test_direct_and_scaled_potentials(self):
        family = ProblemFamily(a=2, b=6)
        x = np.array([0.0, 1.0, 2.0])
        np.testing.assert_allclose(family.direct_potential(0.5)(x), [0.0, 1.5, 4.0 + 32.0])
        np.testing.assert_allclose(family.scaled_potential()(x), [0.0, 1.0, 64.0])

    def test_reduced_problem_accepts_lambda_alias(self):
        problem = ReducedProblem(family=ProblemFamily(a=2, b=4), **{"lambda": 0.5}, level=3)
        assert problem.coupling == 0.5
        assert problem.parity is Parity.ODD


class TestPotential:

    def test_turning_point_of_harmonic_well(self):
        assert Potential(((1.0, 2),)).turning_point(4.0) == pytest.approx(2.0, abs=1e-10)

    def test_turning_point_below_bottom(self):
        assert Potential(((1.0, 2),)).turning_point(-1.0) == 0.0

    def test_curvature_only_from_quadratic_term(self):
        assert Potential(((1.0, 2), (3.0, 4))).curvature_at_origin() == 2.0
        assert Potential(((1.0, 4),)).curvature_at_origin() == 0.0

    def test_parity_initial_conditions(self):
        assert Parity.of_level(0).initial_conditions == (1.0, 0.0)
        assert Parity.of_level(1).initial_conditions == (0.0, 1.0)


class TestReduction:

    def test_reduce_pure_harmonic(self):
        coupling, x_scale, e_scale = reduce_potential(4.0, 0.0, 2, 4)
        assert coupling == 0.0
        assert x_scale == pytest.approx(4.0 ** -0.25)
        assert e_scale == pytest.approx(2.0)

    def test_reduce_unit_base_keeps_coupling(self):
        coupling, x_scale, e_scale = reduce_potential(1.0, 0.7, 2, 4)
        assert (coupling, x_scale, e_scale) == (0.7, 1.0, 1.0)

    def test_reduce_rejects_nonpositive_base(self):
        with pytest.raises(InvalidInputError):
            reduce_potential(0.0, 1.0, 2, 4)

    def test_reduce_rejects_negative_perturbation(self):
        with pytest.raises(InvalidInputError):
            reduce_potential(1.0, -1.0, 2, 4)

    def test_scale_to_asymptotic(self):
        lambda_tilde, y_scale, e_scale = scale_to_asymptotic(8.0, ProblemFamily(a=2, b=4))
        assert lambda_tilde == pytest.approx(0.25)
        assert y_scale == pytest.approx(8.0 ** (-1.0 / 6.0))
        assert e_scale == pytest.approx(2.0)

    def test_scale_to_asymptotic_rejects_zero(self):
        with pytest.raises(InvalidInputError):
            scale_to_asymptotic(0.0, ProblemFamily(a=2, b=4))


class TestAsymptoticStructure:

    def test_quartic_pieces(self):
        structure = asymptotic_structure(ProblemFamily(a=2, b=4))
        assert (structure.m, structure.s) == (3, 2)
        assert structure.exponents == (Fraction(1, 3), Fraction(-1, 3), Fraction(-1))
        assert structure.exponent_strings() == ("1/3", "-1/3", "-1")

    def test_sextic_pieces(self):
        structure = asymptotic_structure(ProblemFamily(a=2, b=6))
        assert (structure.m, structure.s) == (2, 1)
        assert structure.exponents == (Fraction(1, 4), Fraction(-1, 4))

    def test_piece_of_index(self):
        structure = asymptotic_structure(ProblemFamily(a=2, b=4))
        assert structure.piece_of(0) == (0, 0)
        assert structure.piece_of(4) == (1, 2)
        assert structure.piece_of(8) == (2, 4)

    def test_matching_order_descends_in_lambda_power(self):
        structure = asymptotic_structure(ProblemFamily(a=2, b=4))
        order = [structure.matching_order(i) for i in range(7)]
        assert order == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (2, 1)]
        powers = [structure.exponents[j] - r for j, r in order]
        assert powers == sorted(powers, reverse=True)

    def test_matching_order_without_gaps(self):
        structure = asymptotic_structure(ProblemFamily(a=2, b=6))
        assert [structure.matching_order(i) for i in range(6)] == [structure.piece_of(i) for i in range(6)]


class TestPhysicalEnergy:

    def test_harmonic_rescaling(self):
        assert physical_energy(4.0, 0.0, 2, 4, 0) == pytest.approx(2.0, rel=1e-8)
        assert physical_energy(4.0, 0.0, 2, 4, 1) == pytest.approx(6.0, rel=1e-8)

    def test_reduced_frame_matches_direct_solve(self):
        direct, _ = solve_eigen(Potential(((2.0, 2), (3.0, 6))), 0)
        assert physical_energy(2.0, 3.0, 2, 6, 0) == pytest.approx(direct, rel=1e-7)

    @pytest.mark.parametrize("A,B", [(0.5, 2.0), (3.0, 0.1), (7.0, 40.0)])
    def test_energy_scale_composes_with_large_coupling_frame(self, A, B):
        """Both rescalings together leave only the x^b coefficient."""
        family = ProblemFamily(a=2, b=4)
        coupling, _, e_scale = reduce_potential(A, B, family.a, family.b)
        _, _, e_tilde_scale = scale_to_asymptotic(coupling, family)
        assert e_scale * e_tilde_scale == pytest.approx(B ** (2.0 / (family.b + 2)), rel=1e-12)
