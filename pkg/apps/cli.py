from __future__ import annotations

import functools
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import click
from pydantic import ValidationError

from apps.experiment import (
    fresh_worlds,
    read_theta,
    run_comparison,
    train,
    write_theta,
)
from apps.reports import read_stats, stats_table, write_stats, write_summary
from approx.least_squares import write_iterates_csv
from core.logging import configure, logger
from core.resilience import RiskgridError, exit_code_for
from core.schemas import ExperimentConfig, RiskMappingSpec
from core.validation import InstanceFile, load_model
from mdp.model import load_mdp
from mdp.solver import value_iteration_optimal, write_report
from nav.env import world_from_instance
from nav.exact import exact_baseline
from nav.policy import NearestRelevantPolicy, ThresholdPolicy, improve_gamma
from nav.simulator import evaluate_policy_stats, sample_test_states
from state.db import RunStore


def load_config(config: Optional[str], **overrides: Any) -> ExperimentConfig:
    """ExperimentConfig from an optional JSON file with command-line overrides on top"""
    base = load_model(config, ExperimentConfig) if config else ExperimentConfig()
    mapping = {
        "seed": overrides.get("seed"),
        "output_dir": overrides.get("out"),
        "episodes": overrides.get("episodes"),
        "configs": overrides.get("configs"),
        "outer_iters": overrides.get("iters"),
    }
    updates: Dict[str, Any] = {k: v for k, v in mapping.items() if v is not None}
    if overrides.get("spec"):
        updates["spec"] = RiskMappingSpec.from_json(overrides["spec"])
    if not updates:
        return base
    data = base.model_dump()
    data.update({k: (v.model_dump() if isinstance(v, RiskMappingSpec) else v) for k, v in updates.items()})
    return ExperimentConfig.model_validate(data)


def experiment_options(func: Callable) -> Callable:
    """Flags shared by every experiment subcommand"""
    options = [
        click.option("--config", "config", type=click.Path(dir_okay=False), help="ExperimentConfig JSON file"),
        click.option("--seed", type=click.IntRange(min=0), help="Master seed"),
        click.option("--out", type=click.Path(file_okay=False), help="Output directory"),
        click.option("--spec", help="Risk mapping spec as JSON"),
        click.option("--episodes", type=click.IntRange(min=1), help="Episodes per configuration"),
        click.option("--configs", type=click.IntRange(min=1), help="Number of training configurations"),
        click.option("--iters", type=click.IntRange(min=1), help="Outer least-squares iterations"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def guarded(func: Callable) -> Callable:
    """Turn library failures into the exit code contract: 2 validation, 3 numerical"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (RiskgridError, ValidationError) as e:
            code = exit_code_for(e)
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"❌ {type(e).__name__}: {e}", err=True)
            sys.exit(code)
    return wrapper


@click.group()
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              help="Override RISKGRID_LOG_LEVEL")
def cli(log_level):
    """riskgrid: risk-averse MDP evaluation and grid navigation experiments"""
    if log_level:
        configure(log_level)


@cli.command("train")
@experiment_options
@click.option("--label", default="train", help="Run label in the run store")
@guarded
def train_cmd(config, seed, out, spec, episodes, configs, iters, label):
    """Pooled least-squares training of the initial threshold policy"""
    cfg = load_config(config, seed=seed, out=out, spec=spec, episodes=episodes, configs=configs, iters=iters)
    out_dir = Path(cfg.output_dir)
    result = train(cfg, cfg.spec, label, RunStore(out_dir))
    write_iterates_csv(result.ls, out_dir / f"iterates_{label}.csv")
    path = write_theta(result, out_dir / f"theta_{label}.json")
    click.echo(f"✅ Trained {label} ({cfg.spec.label}) over {cfg.outer_iters} iterations")
    click.echo(f"   Objective: {result.ls.objectives[-1]:.4f}")
    click.echo(f"💾 Theta saved to: {path}")


@cli.command("improve")
@experiment_options
@click.option("--theta", "theta_file", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Theta JSON written by train")
@click.option("--depth", type=click.Choice(["variable", "one_step"]), default="variable")
@guarded
def improve_cmd(config, seed, out, spec, episodes, configs, iters, theta_file, depth):
    """Choose gamma by lookahead on fresh configurations"""
    cfg = load_config(config, seed=seed, out=out, spec=spec, episodes=episodes, configs=configs, iters=iters)
    trained = read_theta(theta_file)
    chosen = {}
    for j, world in enumerate(fresh_worlds(cfg)):
        tests = sample_test_states(world, cfg.test_set_size, cfg.seed, key=j)
        choice = improve_gamma(trained.theta, trained.spec, world, cfg.gammas, tests,
                               seed=cfg.seed + j, depth=depth)
        chosen[str(j)] = choice.gamma
        click.echo(f"Config {j}: gamma* = {choice.gamma:g} (score {choice.scores[choice.gamma]:.4f})")
    path = write_summary({"label": trained.label, "depth": depth, "gamma": chosen},
                         Path(cfg.output_dir) / f"gammas_{trained.label}.json")
    click.echo(f"💾 Gammas saved to: {path}")


@cli.command("evaluate")
@experiment_options
@click.option("--gamma", type=float, help="Threshold gamma; omit for the nearest-relevant-point policy")
@guarded
def evaluate_cmd(config, seed, out, spec, episodes, configs, iters, gamma):
    """Simulate one policy on the fresh configurations"""
    cfg = load_config(config, seed=seed, out=out, spec=spec, episodes=episodes, configs=configs, iters=iters)
    if gamma is None:
        name, policy = "initial", NearestRelevantPolicy()
    else:
        name, policy = f"gamma_{gamma:g}", ThresholdPolicy(gamma)
    stats = [
        evaluate_policy_stats(world, policy, j, name, cfg.eval_episodes, cfg.seed)[0]
        for j, world in enumerate(fresh_worlds(cfg))
    ]
    path = write_stats(stats, Path(cfg.output_dir) / f"stats_{name}.csv")
    click.echo(stats_table(stats))
    click.echo(f"💾 Statistics saved to: {path}")


@cli.command("exact")
@click.option("--instance", type=click.Path(exists=True, dir_okay=False), help="Navigation instance JSON")
@click.option("--mdp", "mdp_file", type=click.Path(exists=True, dir_okay=False), help="Tabular MDP JSON")
@click.option("--spec", help="Risk mapping spec as JSON")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory")
@click.option("--tol", type=float, default=1e-8, show_default=True)
@guarded
def exact_cmd(instance, mdp_file, spec, out, tol):
    """Exact optimal values of one instance by value iteration"""
    if bool(instance) == bool(mdp_file):
        raise click.UsageError("pass exactly one of --instance or --mdp")
    risk = RiskMappingSpec.from_json(spec) if spec else RiskMappingSpec.expectation()
    out_dir = Path(out or ExperimentConfig().output_dir)
    if instance:
        world = world_from_instance(load_model(instance, InstanceFile))
        baseline = exact_baseline(world, risk, tol)
        report, value = baseline.report, baseline.restart_value
        click.echo(f"States: {len(baseline.nav.states)}")
    else:
        mdp = load_mdp(mdp_file)
        report, _policy = value_iteration_optimal(mdp, risk, tol)
        value = float(mdp.restart.probabilities @ report.value)
    path = write_report(report, out_dir / "exact_report.json")
    click.echo(f"✅ {risk.label}: restart value {value:.6f} after {report.iterations} iterations")
    click.echo(f"💾 Report saved to: {path}")


@cli.command("compare")
@experiment_options
@guarded
def compare_cmd(config, seed, out, spec, episodes, configs, iters):
    """Full pipeline: train, improve, evaluate, exact baselines, reports"""
    cfg = load_config(config, seed=seed, out=out, spec=spec, episodes=episodes, configs=configs, iters=iters)
    if spec:
        cfg = cfg.model_copy(update={"risk_averse_spec": cfg.spec})
    summary = run_comparison(cfg)
    click.echo("\n📊 COMPARISON")
    click.echo("=" * 50)
    click.echo(stats_table(read_stats(Path(cfg.output_dir) / "stats.csv")))
    for name, counts in summary["improvement"].items():
        click.echo(f"{name}: improved on {counts['improved']}/{counts['configs']} configurations")
    click.echo(f"💾 Reports saved to: {cfg.output_dir}")


@cli.command("report")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory of a compare run")
@guarded
def report_cmd(out):
    """Print the per-configuration table of an earlier run"""
    out_dir = Path(out or ExperimentConfig().output_dir)
    click.echo(stats_table(read_stats(out_dir / "stats.csv")))
    summary_path = out_dir / "summary.json"
    if summary_path.exists():
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        for entry in summary.get("configs", []):
            click.echo(f"Config {entry['config_id']}: gamma {entry['gamma']}")


def main():
    cli()


if __name__ == "__main__":
    main()
