"""
Desk-scale acceptance runs: improvement over the initial heuristic and distance to the DP optimum
"""

from pathlib import Path

import numpy as np
import pytest

from apps.experiment import RISK_AVERSE, run_comparison
from core.schemas import ExperimentConfig, GridSpec
from core.validation import load_model

DATA = Path(__file__).resolve().parents[2] / "data"


def relative_gaps(summary, name):
    return [c["exact"][name]["relative_gap"] for c in summary["configs"] if name in c["exact"]]


@pytest.mark.slow
@pytest.mark.integration
def test_desk_run_improves_and_stays_near_optimum(tmp_path):
    cfg = load_model(DATA / "configs" / "desk.json", ExperimentConfig)
    summary = run_comparison(cfg.model_copy(update={"output_dir": str(tmp_path)}))

    improvement = summary["improvement"][RISK_AVERSE]
    assert improvement["configs"] == 10
    assert improvement["improved"] >= 9

    gaps = relative_gaps(summary, RISK_AVERSE)
    assert gaps, "no configuration small enough for the exact baseline"
    assert float(np.median(gaps)) <= 0.15


@pytest.mark.slow
@pytest.mark.integration
def test_chosen_gamma_near_optimum_on_two_waypoint_grids(tmp_path):
    cfg = ExperimentConfig(
        seed=11,
        configs=10,
        episodes=20,
        outer_iters=10,
        grid=GridSpec(width=6, height=6, obstacles=[], n_waypoints=2, n_transmission=1),
        test_set_size=30,
        fresh_configs=10,
        eval_episodes=50,
        trajectory_episodes=0,
        output_dir=str(tmp_path),
    )
    summary = run_comparison(cfg)

    gaps = relative_gaps(summary, RISK_AVERSE)
    assert len(gaps) == 10
    assert all(g >= -1e-6 for g in gaps)
    assert float(np.median(gaps)) <= 0.15
