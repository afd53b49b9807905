"""
Environment-driven configuration.
Values come from the process environment after a local .env file (if any)
has been merged in by python-dotenv.
"""

import os
from functools import lru_cache
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field

from utils.exceptions import ConfigurationError

PRECISION_CHOICES = {"double", "extended"}


class Settings(BaseModel):
    """Process-wide defaults for solvers, fan-out and caching."""
    model_config = ConfigDict(frozen=True)

    precision: str = Field("double", description="Dense solver back end for approximant systems")
    extended_dps: int = Field(50, ge=20, le=400, description="Decimal digits for the extended back end")
    log_level: str = Field("INFO", description="Structured logger level")
    max_workers: int = Field(4, ge=1, le=64, description="Thread fan-out for sweeps and scans")
    cache_dir: Optional[str] = Field(None, description="On-disk SeriesData cache directory")
    grid_step: float = Field(1e-3, gt=0, le=0.1, description="Default uniform grid step")
    tol_e: float = Field(1e-12, gt=0, lt=1e-3, description="Relative eigenvalue tolerance")
    decay_tol: float = Field(1e-8, gt=0, lt=1e-2, description="Decay and boundary-mismatch tolerance")
    max_terms: int = Field(6, ge=1, le=40, description="Precision budget for numeric chains")


def _read(name: str, default: str) -> str:
    value = os.getenv(name)
    return default if value is None or value.strip() == "" else value.strip()


def _as_int(name: str, default: int) -> int:
    raw = _read(name, str(default))
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"{name} must be an integer, got {raw!r}", config_key=name)


def _as_float(name: str, default: float) -> float:
    raw = _read(name, repr(default))
    try:
        return float(raw)
    except ValueError:
        raise ConfigurationError(f"{name} must be a number, got {raw!r}", config_key=name)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """
    Build the settings model from the environment.

    Returns:
        Frozen Settings instance (cached until reset_settings is called)

    Raises:
        ConfigurationError: If a variable holds an unusable value
    """
    load_dotenv(override=False)

    precision = _read("MQRA_PRECISION", "double").lower()
    if precision not in PRECISION_CHOICES:
        raise ConfigurationError(
            f"MQRA_PRECISION must be one of {sorted(PRECISION_CHOICES)}, got {precision!r}",
            config_key="MQRA_PRECISION"
        )

    try:
        return Settings(
            precision=precision,
            extended_dps=_as_int("MQRA_EXTENDED_DPS", 50),
            log_level=_read("LOG_LEVEL", "INFO").upper(),
            max_workers=_as_int("MQRA_MAX_WORKERS", 4),
            cache_dir=os.getenv("MQRA_CACHE_DIR") or None,
            grid_step=_as_float("MQRA_GRID_STEP", 1e-3),
            tol_e=_as_float("MQRA_TOL_E", 1e-12),
            decay_tol=_as_float("MQRA_DECAY_TOL", 1e-8),
            max_terms=_as_int("MQRA_MAX_TERMS", 6),
        )
    except ConfigurationError:
        raise
    except Exception as e:
        raise ConfigurationError(f"Invalid configuration: {e}", config_key="environment")


def reset_settings() -> None:
    """Forget cached settings so the next call re-reads the environment."""
    get_settings.cache_clear()
