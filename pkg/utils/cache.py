"""
Series bank: in-memory store of expansion data with an optional on-disk cache.
Documents are keyed by a SHA-256 digest of (family, level, point, term count).
"""

import hashlib
import threading
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

import orjson

from mqra.core import ProblemFamily
from mqra.perturb import SeriesData, asymptotic_point, finite_point, point_label
from utils.exceptions import InvalidInputError, MissingSeriesError
from utils.structured_logger import get_logger
from utils.validation import PointModel, SeriesDocument

logger = get_logger(__name__)

SeriesSource = Callable[[int, PointModel, int], SeriesData]
SOLVER_KEYS = ("h", "tol_e", "decay_tol")


def settings_digest(values: Mapping[str, Any]) -> str:
    """Digest of the solver settings a series was computed with."""
    snapshot = {key: values.get(key) for key in SOLVER_KEYS}
    return hashlib.sha256(orjson.dumps(snapshot, option=orjson.OPT_SORT_KEYS)).hexdigest()


class SeriesBank:
    """Expansion data of one family, looked up by (level, point)."""

    def __init__(self, family: ProblemFamily, cache_dir: Optional[str] = None,
                 compute: Optional[SeriesSource] = None, solver: Optional[Mapping[str, Any]] = None):
        """
        Initialize the bank.

        Args:
            family: Exponent pair every stored series must belong to
            cache_dir: Directory of cached SeriesData documents (read and written)
            compute: Callback producing missing series; None makes the bank read-only
            solver: Settings the callback solves with; cached numeric series
                recorded under other settings are not loaded
        """
        self.family = family
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.compute = compute
        self.solver_digest = settings_digest(solver) if solver is not None else None
        self._store: Dict[Tuple[int, str], SeriesData] = {}
        self._lock = threading.Lock()
        self._stats = {"hits": 0, "misses": 0, "computed": 0, "disk_reads": 0, "disk_writes": 0, "stale": 0}
        if self.cache_dir and self.cache_dir.is_dir():
            self.load_directory(self.cache_dir)

    @staticmethod
    def digest(family: ProblemFamily, level: int, point: PointModel, n_terms: int) -> str:
        content = f"{family.a}:{family.b}:{level}:{point_label(point)}:{n_terms}"
        return hashlib.sha256(content.encode()).hexdigest()

    def _key(self, level: int, point: PointModel) -> Tuple[int, str]:
        return level, point_label(point)

    def get(self, level: int, point: PointModel) -> Optional[SeriesData]:
        with self._lock:
            series = self._store.get(self._key(level, point))
            self._stats["hits" if series is not None else "misses"] += 1
            return series

    def put(self, series: SeriesData) -> None:
        """Store a series, keeping the longer one when both exist."""
        if series.family != self.family:
            raise InvalidInputError(
                f"Series for {series.family.label} cannot enter a bank for {self.family.label}",
                field="family", value=series.family.label
            )
        key = self._key(series.level, series.point)
        with self._lock:
            current = self._store.get(key)
            if current is None or len(series.coefficients) >= len(current.coefficients):
                self._store[key] = series

    def invalidate(self, level: Optional[int] = None, point: Optional[PointModel] = None) -> int:
        """Drop matching entries; returns how many were removed."""
        label = point_label(point) if point is not None else None
        with self._lock:
            doomed = [k for k in self._store
                      if (level is None or k[0] == level) and (label is None or k[1] == label)]
            for key in doomed:
                del self._store[key]
        logger.info("Series bank invalidated", operation="invalidate", removed=len(doomed))
        return len(doomed)

    def stats(self) -> Dict[str, int]:
        with self._lock:
            return {"entries": len(self._store), **self._stats}

    def _stale(self, meta: Mapping[str, Any]) -> bool:
        if self.solver_digest is None or meta.get("method") == "exact":
            return False
        if not any(key in meta for key in SOLVER_KEYS):
            return False
        return settings_digest(meta) != self.solver_digest

    def load_directory(self, directory) -> int:
        """
        Read every SeriesData document of this family from a directory.

        Numeric series whose recorded solver settings differ from the bank's
        are skipped and counted as stale; exact series and series with no
        recorded settings (printed table data) are always accepted.
        """
        directory = Path(directory)
        loaded = 0
        stale = 0
        for path in sorted(directory.glob("*.json")):
            try:
                document = SeriesDocument.model_validate(orjson.loads(path.read_bytes()))
            except Exception as e:
                logger.warning(f"Skipping unreadable series file {path.name}: {e}",
                               operation="load_directory")
                continue
            if (document.family.a, document.family.b) != (self.family.a, self.family.b):
                continue
            if self._stale(document.meta):
                stale += 1
                continue
            self.put(SeriesData.from_document(document))
            loaded += 1
        with self._lock:
            self._stats["disk_reads"] += loaded
            self._stats["stale"] += stale
        if stale:
            logger.warning(f"Skipped {stale} cached series computed with other solver settings",
                           operation="load_directory", directory=str(directory))
        logger.info("Series documents loaded", operation="load_directory",
                    directory=str(directory), loaded=loaded)
        return loaded

    def save_directory(self, directory) -> int:
        """Write every stored series as <digest>.json."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with self._lock:
            entries = list(self._store.values())
        for series in entries:
            self._write(directory, series)
        return len(entries)

    def _write(self, directory: Path, series: SeriesData) -> None:
        name = self.digest(series.family, series.level, series.point, len(series.coefficients))
        (directory / f"{name}.json").write_bytes(series.to_json())
        with self._lock:
            self._stats["disk_writes"] += 1

    def ensure(self, level: int, point: PointModel, n_terms: int) -> SeriesData:
        """
        Series with at least n_terms coefficients, computing it when allowed.

        Raises:
            MissingSeriesError: When the data is absent and no compute callback is set
        """
        series = self.get(level, point)
        if series is not None and len(series.coefficients) >= n_terms:
            return series
        if self.compute is None:
            raise MissingSeriesError(
                f"No series with {n_terms} terms for level {level} at {point_label(point)}",
                level=level, point=point_label(point), index=n_terms - 1
            )
        series = self.compute(level, point, n_terms)
        self.put(series)
        with self._lock:
            self._stats["computed"] += 1
        if self.cache_dir:
            self._write(self.cache_dir, series)
        return series

    def finite(self, level: int, alpha: float, order: int) -> float:
        """E^alpha_order."""
        return self._lookup(level, finite_point(alpha), order)

    def asymptotic(self, level: int, index: int) -> float:
        """E~_index."""
        return self._lookup(level, asymptotic_point(), index)

    def _lookup(self, level: int, point: PointModel, index: int) -> float:
        series = self.get(level, point)
        if series is None or index >= len(series.coefficients):
            raise MissingSeriesError(
                f"Series bank has no coefficient {index} for level {level} at {point_label(point)}",
                level=level, point=point_label(point), index=index
            )
        return series.coefficients[index]
