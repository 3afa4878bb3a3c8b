"""
Run metrics for riskgrid batch jobs
"""

import threading
import time
from collections import defaultdict
from contextlib import contextmanager
from typing import Any, Dict, Iterator

from core.logging import logger


class RunMetrics:
    """Thread-safe counters and phase timers for one batch run"""

    def __init__(self):
        self.counters: Dict[str, int] = defaultdict(int)
        self.phase_seconds: Dict[str, float] = defaultdict(float)
        self._lock = threading.Lock()

    def increment(self, name: str, amount: int = 1) -> None:
        with self._lock:
            self.counters[name] += amount

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        """Time a block and accumulate it under ``name``"""
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            with self._lock:
                self.phase_seconds[name] += elapsed
            logger.debug(f"Phase {name} took {elapsed:.3f}s")

    def summary(self) -> Dict[str, Any]:
        with self._lock:
            return {
                "counters": dict(self.counters),
                "phase_seconds": {k: round(v, 3) for k, v in self.phase_seconds.items()},
            }

    def log_summary(self) -> None:
        data = self.summary()
        counters = ", ".join(f"{k}={v}" for k, v in sorted(data["counters"].items()))
        phases = ", ".join(f"{k}={v:.1f}s" for k, v in sorted(data["phase_seconds"].items()))
        logger.info(f"Run metrics: {counters or 'no counters'} | {phases or 'no phases'}")

    def reset(self) -> None:
        with self._lock:
            self.counters.clear()
            self.phase_seconds.clear()


# Global metrics instance
metrics = RunMetrics()
