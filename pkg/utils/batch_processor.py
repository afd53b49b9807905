"""
Thread fan-out for independent numerical solves.
Used by error sweeps, mu scans and multi-point series computation; the
Numerov kernels release the GIL so threads run in parallel.
"""

import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

from utils.config import get_settings
from utils.structured_logger import get_logger

logger = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class ItemFailure:
    """Failure of a single item; the original exception is kept for re-raising."""
    index: int
    item: Any
    error: Exception


class ParallelMapper:
    """Order-preserving map over a thread pool."""

    def __init__(self, max_workers: Optional[int] = None, operation: str = "parallel_map"):
        """
        Initialize the mapper.

        Args:
            max_workers: Thread count (defaults to MQRA_MAX_WORKERS)
            operation: Name used in log entries
        """
        self.max_workers = max_workers or get_settings().max_workers
        self.operation = operation
        self.failures: List[ItemFailure] = []

    def map(self, func: Callable[[T], R], items: Sequence[T]) -> List[R]:
        """
        Apply func to every item and return results in input order.

        Every item runs even when some fail; the first failure (by input
        position) is re-raised afterwards.

        Args:
            func: Pure function of one item
            items: Inputs

        Returns:
            Results aligned with items
        """
        items = list(items)
        start = time.perf_counter()
        self.failures = []
        results: List[Any] = [None] * len(items)

        if self.max_workers == 1 or len(items) <= 1:
            for index, item in enumerate(items):
                try:
                    results[index] = func(item)
                except Exception as e:
                    self.failures.append(ItemFailure(index, item, e))
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                future_to_index = {
                    executor.submit(func, item): index
                    for index, item in enumerate(items)
                }
                for future in as_completed(future_to_index):
                    index = future_to_index[future]
                    try:
                        results[index] = future.result()
                    except Exception as e:
                        self.failures.append(ItemFailure(index, items[index], e))

        duration_ms = (time.perf_counter() - start) * 1000
        logger.performance(
            f"{self.operation} finished",
            duration_ms=duration_ms,
            operation=self.operation,
            items=len(items),
            failures=len(self.failures),
            workers=self.max_workers
        )

        if self.failures:
            self.failures.sort(key=lambda f: f.index)
            first = self.failures[0]
            logger.error(
                f"{len(self.failures)} of {len(items)} items failed",
                operation=self.operation,
                error_type=type(first.error).__name__,
                exception=first.error,
                first_failed_item=str(first.item)
            )
            raise first.error
        return results

    def statistics(self, total: int) -> Dict[str, Any]:
        """Success statistics of the last map call."""
        failed = len(self.failures)
        return {
            'total_items': total,
            'successful_items': total - failed,
            'failed_items': failed,
            'success_rate': ((total - failed) / total * 100) if total > 0 else 0
        }
