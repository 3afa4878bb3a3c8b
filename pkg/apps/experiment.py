"""
Experiment pipeline for the navigation study.

Hyperspace training pools episodes from many sampled configurations, fresh
configurations are improved with one lookahead step, and the resulting
policies are compared by simulation and, where tractable, by exact DP.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from apps.reports import emit_reports, improvement_count
from approx.least_squares import LsResult, evaluate_policy_ls, write_iterates_csv
from core.config import worker_count
from core.logging import logger
from core.monitoring import metrics
from core.resilience import StateSpaceTooLarge, log_performance, surface_io_error
from core.rng import stream
from core.schemas import ExperimentConfig, PolicyStats, RiskMappingSpec
from nav.env import NavConfig, NavWorld, grid_from_spec, sample_configuration
from nav.exact import build_nav_mdp, exact_baseline, policy_exact_value
from nav.policy import NavPolicy, NearestRelevantPolicy, ThresholdPolicy, improve_gamma
from nav.simulator import NavEpisode, NavEpisodeSource, evaluate_policy_stats, sample_test_states
from state.db import RunStore

INITIAL = "initial"
RISK_NEUTRAL = "risk_neutral"
RISK_AVERSE = "risk_averse"


@dataclass
class TrainResult:
    label: str
    spec: RiskMappingSpec
    ls: LsResult

    @property
    def theta(self) -> np.ndarray:
        return self.ls.theta


@dataclass
class ConfigOutcome:
    config_id: int
    config: NavConfig
    gammas: Dict[str, float] = field(default_factory=dict)
    stats: List[PolicyStats] = field(default_factory=list)
    trajectories: Dict[str, List[NavEpisode]] = field(default_factory=dict)
    exact: Dict[str, Any] = field(default_factory=dict)


def _worlds(cfg: ExperimentConfig, count: int, purpose: str) -> List[NavWorld]:
    grid = grid_from_spec(cfg.grid)
    base: Optional[NavWorld] = None
    worlds = []
    for j in range(count):
        config = sample_configuration(grid, cfg.grid, stream(cfg.seed, purpose, j))
        if base is None:
            base = NavWorld(grid, config, cfg.params)
            worlds.append(base)
        else:
            worlds.append(base.with_config(config))
    return worlds


def training_worlds(cfg: ExperimentConfig) -> List[NavWorld]:
    return _worlds(cfg, cfg.configs, "train-config")


def fresh_worlds(cfg: ExperimentConfig) -> List[NavWorld]:
    return _worlds(cfg, cfg.fresh_configs, "fresh-config")


@log_performance
def train(cfg: ExperimentConfig, spec: Optional[RiskMappingSpec] = None, label: str = "train",
          store: Optional[RunStore] = None, worlds: Optional[Sequence[NavWorld]] = None) -> TrainResult:
    """Pooled least-squares evaluation of the initial threshold policy"""
    spec = spec or cfg.spec
    worlds = list(worlds) if worlds is not None else training_worlds(cfg)
    policy = ThresholdPolicy(cfg.initial_gamma)
    source = NavEpisodeSource(worlds, [policy] * len(worlds), cfg.episodes, cfg.max_steps)

    run_id = store.start_run(label, spec.to_json(), cfg.seed) if store else None

    def persist(iteration: int, theta: np.ndarray, objective: float, residual: float) -> None:
        if store is not None:
            store.record_iterate(run_id, iteration, theta, objective, residual)

    logger.info(f"Training {label} ({spec.label}) on {len(worlds)} configurations x {cfg.episodes} episodes")
    with metrics.phase(f"train_{label}"):
        result = evaluate_policy_ls(source, spec, cfg.outer_iters, cfg.lambda_reg,
                                    seed=cfg.seed, on_iterate=persist)
    return TrainResult(label, spec, result)


def _compare_one(j: int, world: NavWorld, learned: Dict[str, TrainResult],
                 cfg: ExperimentConfig) -> ConfigOutcome:
    outcome = ConfigOutcome(config_id=j, config=world.config)
    test_states = sample_test_states(world, cfg.test_set_size, cfg.seed, key=j)
    policies: List[Tuple[str, NavPolicy]] = [(INITIAL, NearestRelevantPolicy())]
    for name, trained in learned.items():
        choice = improve_gamma(trained.theta, trained.spec, world, cfg.gammas, test_states,
                               seed=cfg.seed + j)
        outcome.gammas[name] = choice.gamma
        policies.append((name, ThresholdPolicy(choice.gamma)))
    for name, policy in policies:
        stats, runs = evaluate_policy_stats(world, policy, j, name, cfg.eval_episodes, cfg.seed)
        outcome.stats.append(stats)
        outcome.trajectories[name] = runs[: cfg.trajectory_episodes]
    logger.info(f"Config {j}: gammas {outcome.gammas}, "
                + ", ".join(f"{s.policy}={s.risk_adjusted:.3f}" for s in outcome.stats))
    return outcome


@log_performance
def improve_and_compare(learned: Dict[str, TrainResult], cfg: ExperimentConfig,
                        worlds: Sequence[NavWorld]) -> List[ConfigOutcome]:
    """One improvement step per fresh configuration, then evaluation rollouts"""
    with metrics.phase("improve_and_compare"):
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            futures = [pool.submit(_compare_one, j, w, learned, cfg) for j, w in enumerate(worlds)]
            return [f.result() for f in futures]


def exact_gaps(outcome: ConfigOutcome, world: NavWorld, cfg: ExperimentConfig,
               learned: Dict[str, TrainResult]) -> Dict[str, Any]:
    """Exact restart values of the improved policies against the DP optimum"""
    try:
        nav = build_nav_mdp(world)
    except StateSpaceTooLarge as e:
        logger.warning(f"Config {outcome.config_id}: exact baseline skipped ({e})")
        return {"skipped": str(e)}
    gaps: Dict[str, Any] = {"states": len(nav.states)}
    for name, trained in learned.items():
        with metrics.phase("exact_baseline"):
            optimum = exact_baseline(world, trained.spec, nav=nav).restart_value
            achieved = policy_exact_value(nav, ThresholdPolicy(outcome.gammas[name]), trained.spec)
        gaps[name] = {
            "optimal": optimum,
            "policy": achieved,
            "relative_gap": (achieved - optimum) / max(abs(optimum), 1e-12),
        }
    return gaps


def write_theta(result: TrainResult, path: str | Path) -> Path:
    path = Path(path)
    payload = {"label": result.label, "spec": json.loads(result.spec.to_json()),
               "theta": [float(x) for x in result.theta]}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise surface_io_error(path, e) from e
    return path


def read_theta(path: str | Path) -> TrainResult:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise surface_io_error(path, e, action="read") from e
    theta = np.array(payload["theta"], dtype=float)
    ls = LsResult(thetas=[theta])
    return TrainResult(payload["label"], RiskMappingSpec.model_validate(payload["spec"]), ls)


def build_summary(cfg: ExperimentConfig, outcomes: Sequence[ConfigOutcome],
                  learned: Dict[str, TrainResult]) -> Dict[str, Any]:
    stats = [s for o in outcomes for s in o.stats]
    return {
        "seed": cfg.seed,
        "specs": {name: t.spec.label for name, t in learned.items()},
        "configs": [
            {
                "config_id": o.config_id,
                "waypoints": [list(c) for c in o.config.waypoints],
                "transmission_points": [list(c) for c in o.config.transmission_points],
                "gamma": o.gammas,
                "exact": o.exact,
            }
            for o in outcomes
        ],
        "improvement": {
            name: improvement_count(stats, name, INITIAL) for name in learned
        },
    }


@log_performance
def run_comparison(cfg: ExperimentConfig, out_dir: Optional[str | Path] = None) -> Dict[str, Any]:
    """Train both models, improve and evaluate on fresh configurations, write reports"""
    out = Path(out_dir or cfg.output_dir)
    store = RunStore(out)
    train_set = training_worlds(cfg)
    learned = {
        RISK_NEUTRAL: train(cfg, cfg.risk_neutral_spec, RISK_NEUTRAL, store, train_set),
        RISK_AVERSE: train(cfg, cfg.risk_averse_spec, RISK_AVERSE, store, train_set),
    }
    for name, result in learned.items():
        write_iterates_csv(result.ls, out / f"iterates_{name}.csv")
        write_theta(result, out / f"theta_{name}.json")

    worlds = fresh_worlds(cfg)
    outcomes = improve_and_compare(learned, cfg, worlds)
    if cfg.exact_baseline:
        for outcome, world in zip(outcomes, worlds):
            outcome.exact = exact_gaps(outcome, world, cfg, learned)

    stats = [s for o in outcomes for s in o.stats]
    trajectories = {
        name: [(o.config_id, o.trajectories[name]) for o in outcomes]
        for name in [INITIAL, *learned]
    }
    summary = build_summary(cfg, outcomes, learned)
    emit_reports(stats, trajectories, out, summary)
    metrics.log_summary()
    return summary
