"""
Report files for comparison runs: stats CSV, trajectory CSVs and summary JSON.

All writers are byte-stable for identical inputs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import pandas as pd

from core.logging import logger
from core.resilience import surface_io_error
from core.schemas import PolicyStats
from nav.simulator import NavEpisode

STATS_COLUMNS = ["config_id", "policy", "mean_cost", "upper_semideviation", "episodes"]
TRAJECTORY_COLUMNS = ["config_id", "episode", "step", "x", "y", "action", "info", "cost"]

# (config_id, episodes) per configuration
Trajectories = Sequence[Tuple[int, Sequence[NavEpisode]]]


def _write_frame(frame: pd.DataFrame, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise surface_io_error(path, e) from e
    return path


def write_stats(stats: Sequence[PolicyStats], path: str | Path) -> Path:
    frame = pd.DataFrame([s.model_dump() for s in stats], columns=STATS_COLUMNS)
    return _write_frame(frame, Path(path))


def read_stats(path: str | Path) -> List[PolicyStats]:
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip", dtype={"policy": str})
    except OSError as e:
        raise surface_io_error(path, e, action="read") from e
    return [PolicyStats(**row) for row in frame.to_dict(orient="records")]


def trajectory_frame(trajectories: Trajectories) -> pd.DataFrame:
    rows = [
        {
            "config_id": config_id,
            "episode": e,
            "step": t,
            "x": step.state.robot[0],
            "y": step.state.robot[1],
            "action": step.action.label,
            "info": step.state.info,
            "cost": step.cost,
        }
        for config_id, episodes in trajectories
        for e, episode in enumerate(episodes)
        for t, step in enumerate(episode.steps)
    ]
    return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)


def write_trajectories(trajectories: Trajectories, path: str | Path) -> Path:
    return _write_frame(trajectory_frame(trajectories), Path(path))


def write_summary(summary: Mapping[str, Any], path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise surface_io_error(path, e) from e
    return path


def emit_reports(stats: Sequence[PolicyStats], trajectories: Mapping[str, Trajectories],
                 out_dir: str | Path, summary: Mapping[str, Any] | None = None) -> List[Path]:
    """stats.csv, trajectories_<policy>.csv per policy and summary.json"""
    out = Path(out_dir)
    paths = [write_stats(stats, out / "stats.csv")]
    for policy in sorted(trajectories):
        paths.append(write_trajectories(trajectories[policy], out / f"trajectories_{policy}.csv"))
    if summary is not None:
        paths.append(write_summary(summary, out / "summary.json"))
    logger.info(f"Wrote {len(paths)} report files to {out}")
    return paths


def stats_table(stats: Sequence[PolicyStats]) -> str:
    """Per-configuration table with one column block per policy"""
    if not stats:
        return "(no statistics)"
    frame = pd.DataFrame([s.model_dump() for s in stats], columns=STATS_COLUMNS)
    frame["risk_adjusted"] = frame["mean_cost"] + frame["upper_semideviation"]
    table = frame.pivot(index="config_id", columns="policy",
                        values=["mean_cost", "upper_semideviation", "risk_adjusted"])
    return table.round(3).to_string()


def improvement_count(stats: Sequence[PolicyStats], candidate: str, baseline: str) -> Dict[str, int]:
    """Configurations where ``candidate`` beats ``baseline`` on mean + semideviation"""
    by_key = {(s.config_id, s.policy): s for s in stats}
    configs = sorted({s.config_id for s in stats})
    better = sum(
        1 for c in configs
        if (c, candidate) in by_key and (c, baseline) in by_key
        and by_key[(c, candidate)].risk_adjusted <= by_key[(c, baseline)].risk_adjusted
    )
    return {"improved": better, "configs": len(configs)}
