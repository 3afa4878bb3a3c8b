from __future__ import annotations
import os
from dataclasses import dataclass
from dotenv import load_dotenv

load_dotenv()


@dataclass
class Settings:
    # Worker pool (0 means "one per physical core")
    threads: int = int(os.getenv("RISKGRID_THREADS", "0"))

    # Exact mini-batch evaluation enumerates support^N tuples at most
    enumeration_cap: int = int(os.getenv("RISKGRID_ENUMERATION_CAP", "1000000"))

    # Largest navigation instance the exact baseline will enumerate
    exact_state_cap: int = int(os.getenv("RISKGRID_EXACT_STATE_CAP", "5000000"))

    # Output and run store
    output_dir: str = os.getenv("RISKGRID_OUT", "runs")
    db_name: str = os.getenv("RISKGRID_DB", "riskgrid.db")

    log_level: str = os.getenv("RISKGRID_LOG_LEVEL", "INFO")

    # Memoised navigation feature vectors, least recently used evicted first
    feature_cache_size: int = int(os.getenv("RISKGRID_FEATURE_CACHE", "200000"))


settings = Settings()


def worker_count() -> int:
    """Number of pool workers, capped by RISKGRID_THREADS when it is set"""
    if settings.threads > 0:
        return settings.threads
    import psutil

    return max(1, psutil.cpu_count(logical=False) or os.cpu_count() or 1)


def enumeration_cap() -> int:
    """Maximum support^N tuples an exact mini-batch evaluation may touch"""
    return settings.enumeration_cap


def exact_state_cap() -> int:
    """Maximum enumerated states for the exact navigation baseline"""
    return settings.exact_state_cap


def db_url(output_dir: str | os.PathLike) -> str:
    """SQLite URL of the run store inside an output directory"""
    from pathlib import Path

    return f"sqlite:///{Path(output_dir) / settings.db_name}"
