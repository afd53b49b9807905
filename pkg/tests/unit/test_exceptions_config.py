"""
Unit tests for the error hierarchy, exit codes and environment settings.
"""

import os
import sys
from unittest.mock import patch

import orjson
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from mqra.odesolve import ShootingConfig
from utils.config import get_settings, reset_settings
from utils.exceptions import (
    BracketError,
    ChainInconsistencyError,
    ConfigurationError,
    ConstraintCountError,
    DefectError,
    DuplicateConstraintError,
    InvalidInputError,
    MissingSeriesError,
    ReproductionError,
    SingularSystemError,
    exit_code_for,
)


class TestExitCodes:

    @pytest.mark.parametrize("error,code", [
        (InvalidInputError("bad", field="level"), 2),
        (ConstraintCountError(constraints=14, unknowns=15), 2),
        (DuplicateConstraintError("twice", constraint="asym0"), 2),
        (ConfigurationError("bad", config_key="MQRA_PRECISION"), 2),
        (ReproductionError("off", table="II", failures=1), 3),
        (DefectError("roots", positive_roots=[0.5]), 1),
        (SingularSystemError("zero pivot", size=3, pivot_index=1), 1),
        (MissingSeriesError("absent", level=0, point="0.5", index=2), 1),
        (BracketError("lost", level=3), 1),
        (ChainInconsistencyError("no decay", order=2, mismatch=1e-3, tolerance=1e-8), 1),
        (ValueError("plain"), 2),
        (TypeError("bad call"), 1),
        (RuntimeError("plain"), 1),
    ])
    def test_mapping(self, error, code):
        assert exit_code_for(error) == code

    def test_json_payload(self):
        """Errors serialize with their code and details."""
        payload = orjson.loads(DefectError("roots", positive_roots=[0.5], mu=2.0).to_json())
        assert payload == {
            "error": "roots",
            "error_code": "DEFECTIVE_APPROXIMANT",
            "details": {"positive_roots": [0.5], "mu": 2.0},
        }


class TestSettings:

    def setup_method(self):
        reset_settings()

    def teardown_method(self):
        reset_settings()

    def test_defaults(self):
        with patch.dict(os.environ, {}, clear=True):
            reset_settings()
            settings = get_settings()
        assert settings.precision == "double"
        assert settings.grid_step == 1e-3
        assert settings.max_terms == 6

    def test_environment_overrides(self):
        with patch.dict(os.environ, {"MQRA_PRECISION": "Extended", "MQRA_GRID_STEP": "0.002",
                                     "MQRA_TOL_E": "1e-10"}):
            reset_settings()
            settings = get_settings()
            config = ShootingConfig.from_settings(tol_e=None, decay_tol=1e-6)
        assert settings.precision == "extended"
        assert config.h == 0.002
        assert config.tol_e == 1e-10
        assert config.decay_tol == 1e-6

    @pytest.mark.parametrize("env", [
        {"MQRA_PRECISION": "quad"},
        {"MQRA_MAX_WORKERS": "many"},
        {"MQRA_GRID_STEP": "0.5"},
        {"MQRA_EXTENDED_DPS": "5"},
    ])
    def test_invalid_values(self, env):
        with patch.dict(os.environ, env):
            reset_settings()
            with pytest.raises(ConfigurationError):
                get_settings()

    def test_settings_are_cached(self):
        first = get_settings()
        with patch.dict(os.environ, {"MQRA_MAX_TERMS": "9"}):
            assert get_settings() is first
