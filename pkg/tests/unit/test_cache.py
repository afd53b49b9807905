"""
Unit tests for the series bank and the parallel mapper.
"""

import os
import sys
import threading
from unittest.mock import MagicMock, patch

import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from mqra.core import ProblemFamily
from mqra.perturb import SeriesData, asymptotic_point, finite_point
from utils.batch_processor import ParallelMapper
from utils.cache import SeriesBank
from utils.config import reset_settings
from utils.exceptions import InvalidInputError, MissingSeriesError

QUARTIC = ProblemFamily(a=2, b=4)
SEXTIC = ProblemFamily(a=2, b=6)


def series(alpha=0.5, coefficients=(1.24, 0.6), family=QUARTIC, level=0):
    point = asymptotic_point() if alpha is None else finite_point(alpha)
    return SeriesData(family=family, level=level, point=point, coefficients=coefficients)


class TestSeriesBank:
    """Test cases for SeriesBank."""

    def test_put_and_lookup(self):
        """Stored coefficients are reachable by point and order."""
        bank = SeriesBank(QUARTIC)
        bank.put(series())
        bank.put(series(alpha=None, coefficients=(1.06, 0.36)))
        assert bank.finite(0, 0.5, 1) == 0.6
        assert bank.asymptotic(0, 0) == 1.06

    def test_missing_coefficient(self):
        bank = SeriesBank(QUARTIC)
        bank.put(series())
        with pytest.raises(MissingSeriesError) as exc_info:
            bank.finite(0, 0.5, 2)
        assert exc_info.value.details["index"] == 2
        with pytest.raises(MissingSeriesError):
            bank.asymptotic(1, 0)

    def test_family_mismatch(self):
        bank = SeriesBank(QUARTIC)
        with pytest.raises(InvalidInputError):
            bank.put(series(family=SEXTIC))

    def test_longer_series_wins(self):
        bank = SeriesBank(QUARTIC)
        bank.put(series(coefficients=(1.24, 0.6, -0.2)))
        bank.put(series(coefficients=(1.24,)))
        assert len(bank.get(0, finite_point(0.5)).coefficients) == 3

    def test_ensure_computes_once(self):
        """ensure calls the compute callback only when the stored series is too short."""
        compute = MagicMock(return_value=series(coefficients=(1.24, 0.6, -0.2)))
        bank = SeriesBank(QUARTIC, compute=compute)
        first = bank.ensure(0, finite_point(0.5), 3)
        second = bank.ensure(0, finite_point(0.5), 2)
        assert first is second
        compute.assert_called_once_with(0, finite_point(0.5), 3)
        assert bank.stats()["computed"] == 1

    def test_read_only_bank(self):
        bank = SeriesBank(QUARTIC)
        with pytest.raises(MissingSeriesError):
            bank.ensure(0, asymptotic_point(), 2)

    def test_disk_round_trip(self, tmp_path):
        compute = MagicMock(return_value=series(alpha=1.0, coefficients=(1.39, 0.47)))
        bank = SeriesBank(QUARTIC, cache_dir=str(tmp_path), compute=compute)
        bank.ensure(0, finite_point(1.0), 2)
        assert len(list(tmp_path.glob("*.json"))) == 1

        reloaded = SeriesBank(QUARTIC, cache_dir=str(tmp_path))
        assert reloaded.finite(0, 1.0, 1) == 0.47
        assert reloaded.stats()["disk_reads"] == 1

    def test_load_skips_other_families_and_garbage(self, tmp_path):
        (tmp_path / "junk.json").write_bytes(b"{not json")
        (tmp_path / "sextic.json").write_bytes(series(family=SEXTIC).to_json())
        (tmp_path / "quartic.json").write_bytes(series().to_json())
        bank = SeriesBank(QUARTIC)
        assert bank.load_directory(tmp_path) == 1

    def test_save_directory(self, tmp_path):
        bank = SeriesBank(QUARTIC)
        bank.put(series())
        bank.put(series(alpha=None))
        assert bank.save_directory(tmp_path / "out") == 2
        assert len(list((tmp_path / "out").glob("*.json"))) == 2

    def test_invalidate(self):
        bank = SeriesBank(QUARTIC)
        bank.put(series(level=0))
        bank.put(series(level=1))
        bank.put(series(alpha=None, level=1))
        assert bank.invalidate(level=1, point=finite_point(0.5)) == 1
        assert bank.invalidate(level=1) == 1
        assert bank.stats()["entries"] == 1

    def test_other_solver_settings_are_not_loaded(self, tmp_path):
        """Cached numeric series are only reused under the settings that produced them."""
        fine = {"h": 1e-3, "tol_e": 1e-12, "decay_tol": 1e-10}
        coarse = {"h": 1e-2, "tol_e": 1e-12, "decay_tol": 1e-10}
        numeric = SeriesData(family=QUARTIC, level=0, point=finite_point(1.0), coefficients=(1.39, 0.47),
                             meta={"solver": "numerov", "method": "projection", **fine})
        exact = SeriesData(family=QUARTIC, level=0, point=finite_point(0.0), coefficients=(0.5, 0.75),
                           meta={"method": "exact"})
        (tmp_path / "numeric.json").write_bytes(numeric.to_json())
        (tmp_path / "exact.json").write_bytes(exact.to_json())

        other = SeriesBank(QUARTIC, cache_dir=str(tmp_path), solver=coarse)
        assert other.get(0, finite_point(1.0)) is None
        assert other.finite(0, 0.0, 1) == 0.75
        assert other.stats()["stale"] == 1

        same = SeriesBank(QUARTIC, cache_dir=str(tmp_path), solver=fine)
        assert same.finite(0, 1.0, 1) == 0.47
        assert same.stats()["stale"] == 0

    def test_digest_depends_on_term_count(self):
        assert SeriesBank.digest(QUARTIC, 0, finite_point(0.5), 2) != SeriesBank.digest(QUARTIC, 0, finite_point(0.5), 3)


class TestParallelMapper:
    """Test cases for ParallelMapper."""

    def setup_method(self):
        reset_settings()

    def teardown_method(self):
        reset_settings()

    def test_order_preserved(self):
        mapper = ParallelMapper(max_workers=4)
        assert mapper.map(lambda v: v * v, range(10)) == [v * v for v in range(10)]

    def test_serial_path(self):
        calls = []
        mapper = ParallelMapper(max_workers=1)
        mapper.map(calls.append, [3, 1, 2])
        assert calls == [3, 1, 2]

    def test_every_item_runs_before_first_failure_is_raised(self):
        seen = []
        lock = threading.Lock()

        def work(v):
            with lock:
                seen.append(v)
            if v in (2, 4):
                raise ValueError(f"bad {v}")
            return v

        mapper = ParallelMapper(max_workers=3)
        with pytest.raises(ValueError, match="bad 2"):
            mapper.map(work, range(6))
        assert sorted(seen) == list(range(6))
        assert mapper.statistics(6)["failed_items"] == 2

    def test_workers_from_environment(self):
        with patch.dict(os.environ, {"MQRA_MAX_WORKERS": "2"}):
            reset_settings()
            assert ParallelMapper().max_workers == 2
