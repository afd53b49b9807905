"""
Unit tests for the large-coupling expansion.
"""

import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from mqra.asymptotics import AsymptoticSeries, asymptotic_series, eval_asymptotic, flatten_pieces
from mqra.core import ProblemFamily
from mqra.perturb import finite_point, SeriesData
from utils.exceptions import InvalidInputError

QUARTIC = ProblemFamily(a=2, b=4)
SEXTIC = ProblemFamily(a=2, b=6)


class TestAsymptoticSeries:

    def test_quartic_ground_state_terms(self):
        series = asymptotic_series(QUARTIC, 0, 2)
        assert series.coefficients[0] == pytest.approx(1.060361944892, rel=5e-7)
        assert series.coefficients[1] == pytest.approx(0.362022935, rel=1e-5)
        assert series.meta["n_terms"] == 2

    def test_sextic_leading_term(self):
        series = asymptotic_series(SEXTIC, 1, 1)
        assert series.coefficients[0] == pytest.approx(4.338598612643, rel=5e-7)

    def test_pieces_interleave(self):
        series = AsymptoticSeries(family=QUARTIC, level=0, coefficients=(1.0, 2.0, 3.0, 4.0))
        assert series.pieces == ((1.0, 4.0), (2.0,), (3.0,))
        assert flatten_pieces(series.pieces) == series.coefficients

    def test_series_data_conversion(self):
        series = AsymptoticSeries(family=SEXTIC, level=2, coefficients=(9.07, 0.9))
        data = series.to_series_data()
        assert data.is_asymptotic
        assert AsymptoticSeries.from_series_data(data) == series

    def test_finite_series_refused(self):
        data = SeriesData(family=QUARTIC, level=0, point=finite_point(0.0), coefficients=(1.0,))
        with pytest.raises(InvalidInputError):
            AsymptoticSeries.from_series_data(data)


class TestEvalAsymptotic:

    def setup_method(self):
        self.series = AsymptoticSeries(family=QUARTIC, level=0, coefficients=(1.0, 2.0, 3.0, 4.0))

    def test_exponents_per_piece(self):
        # 8^{1/3} + 2 * 8^{-1/3} + 3 * 8^{-1} + 4 * 8^{1/3 - 2}
        assert eval_asymptotic(self.series, 8.0) == pytest.approx(2.0 + 1.0 + 0.375 + 0.125)

    def test_truncation(self):
        assert eval_asymptotic(self.series, 8.0, n_terms=1) == pytest.approx(2.0)

    def test_rejects_nonpositive_coupling(self):
        with pytest.raises(InvalidInputError):
            eval_asymptotic(self.series, 0.0)

    def test_rejects_excess_terms(self):
        with pytest.raises(InvalidInputError):
            eval_asymptotic(self.series, 8.0, n_terms=5)
