"""Command line entry point (``bootroute``)."""

from __future__ import annotations

import asyncio
import json
import logging
import sys
from pathlib import Path

import click

from ..cost import format_currency
from ..types import ConfigError, Query, RouterConfig, load_config

config_option = click.option("--config", "config_path", required=True,
                             type=click.Path(exists=True, dir_okay=False),
                             help="Router configuration (YAML or JSON).")
seed_option = click.option("--seed", type=int, default=None,
                           help="Seed for label shuffling (overrides config).")
concurrency_option = click.option("--concurrency", type=int, default=4, show_default=True)
out_option = click.option("--out", "out_dir", type=click.Path(file_okay=False),
                          default="runs", show_default=True)


def _load(config_path: str, seed: int | None) -> RouterConfig:
    try:
        config = load_config(Path(config_path))
    except ConfigError as exc:
        raise click.BadParameter(str(exc), param_hint="--config") from exc
    return config.replace(seed=seed) if seed is not None else config


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise click.BadParameter(f"expected integers, got {text!r}") from exc


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose: bool) -> None:
    """Boot-token probing router over a pool of chat-completion endpoints."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@config_option
@seed_option
@out_option
@click.option("--capability", "capabilities", multiple=True)
@click.argument("text")
def route(config_path, seed, out_dir, capabilities, text):
    """Route a single query and print the final answer."""
    from ..client import AllCandidatesFailed
    from ..pipeline import route as route_query

    config = _load(config_path, seed)
    query = Query(text, frozenset(capabilities))
    try:
        trace = asyncio.run(route_query(query, config))
    except AllCandidatesFailed as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"trace-{trace.query_id}.json"
    path.write_text(trace.to_json())
    click.echo(trace.final_text)
    click.echo(f"# tokens={trace.total_tokens} cost={format_currency(trace.total_currency)} "
               f"trace={path}", err=True)


@main.command()
@config_option
@seed_option
@concurrency_option
@out_option
@click.option("--strategy", type=click.Choice(["router", "all-full", "single-best"]),
              default="router", show_default=True)
@click.option("--model", "single_model", default=None, help="Model for single-best.")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
def bench(config_path, seed, concurrency, out_dir, strategy, single_model, dataset):
    """Run a JSON-lines dataset through the router and score it."""
    from .bench import run_benchmark
    from .scoring import load_dataset

    config = _load(config_path, seed)
    report = asyncio.run(run_benchmark(load_dataset(dataset), config, concurrency,
                                       strategy=strategy, single_model=single_model))
    path = report.save(out_dir, name=f"report-{strategy}")
    agg = report.to_dict()["aggregate"]
    click.echo(json.dumps(agg, indent=2))
    click.echo(f"# report={path}", err=True)


@main.command()
@config_option
@seed_option
@concurrency_option
@out_option
@click.option("--axis", type=click.Choice(["k", "boot_budget", "layers"]), required=True)
@click.option("--values", required=True, help="Comma separated integers.")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
def sweep(config_path, seed, concurrency, out_dir, axis, values, dataset):
    """Sweep one router parameter; write a CSV and a Pareto chart."""
    from .bench import run_sweep, write_sweep_csv
    from .pareto import emit_pareto, report_points
    from .scoring import load_dataset

    config = _load(config_path, seed)
    reports, skipped = asyncio.run(
        run_sweep(load_dataset(dataset), config, axis, _int_list(values), concurrency))
    for msg in skipped:
        click.echo(f"warning: {msg}", err=True)
    if not reports:
        raise click.ClickException("no valid sweep values")
    out = Path(out_dir)
    for r in reports:
        r.save(out, name=f"report-{axis}-{r.value}")
    csv_path = write_sweep_csv(reports, out / f"sweep-{axis}.csv")
    frontier = emit_pareto(report_points(reports), out, name=f"pareto-{axis}")
    click.echo(csv_path.read_text(), nl=False)
    click.echo(f"# frontier: {', '.join(frontier)}", err=True)


@main.command()
@click.option("--experiment", type=click.Choice(["variance", "pollution", "sweep-k"]),
              default="variance", show_default=True)
@click.option("--family", default="bernoulli-mixture", show_default=True)
@click.option("--mu", type=float, default=0.8, show_default=True)
@click.option("--var", "var", type=float, default=0.04, show_default=True)
@click.option("--trials", type=int, default=100_000, show_default=True)
@click.option("--ks", default="1,2,4,8", show_default=True)
@click.option("--lambda", "lam", type=float, default=0.0, show_default=True)
@click.option("--n", "N", type=int, default=5, show_default=True)
@click.option("--cost-per-candidate", type=float, default=0.001, show_default=True)
@click.option("--merge-cost", type=float, default=0.001, show_default=True)
@click.option("--policy", type=click.Choice(["mean", "best-of"]), default="mean",
              show_default=True)
@click.option("--selector-noise", type=float, default=0.0, show_default=True)
@seed_option
@out_option
def simulate(experiment, family, mu, var, trials, ks, lam, N, cost_per_candidate, merge_cost,
             policy, selector_noise, seed, out_dir):
    """Monte-Carlo experiments on merge and selection statistics."""
    from ..theory import (ConsistencyModel, MergePolicy, simulate_merge_variance,
                          simulate_pool_pollution, sweep_k_objective)

    seed = 0 if seed is None else seed
    model = ConsistencyModel(mu, var, family, seed)
    if experiment == "variance":
        click.echo("k,empirical_mean,empirical_variance,predicted_variance")
        for k in _int_list(ks):
            m = simulate_merge_variance(model, k, trials)
            click.echo(f"{k},{m.mean:.6f},{m.variance:.6g},{var / k:.6g}")
    elif experiment == "pollution":
        good = ConsistencyModel(0.9, 0.0016, "truncated-normal", seed)
        bad = ConsistencyModel(0.2, 0.0016, "truncated-normal", seed)
        for flt in (False, True):
            r = simulate_pool_pollution(good, bad, 3, 2, MergePolicy(policy), flt, 2, trials,
                                        selector_noise)
            click.echo(f"with_filter={flt} mean_merged={r.mean_merged_score:.4f} "
                       f"(se {r.std_error:.1e})")
    else:
        result = sweep_k_objective(model, cost_per_candidate, merge_cost, lam, N, trials,
                                   MergePolicy(policy), selector_noise)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.to_csv(out / "sweep-k-theory.csv")
        click.echo((out / "sweep-k-theory.csv").read_text(), nl=False)
        click.echo(f"# k*={result.best_k}", err=True)


@main.command()
@out_option
@click.option("--report", "reports", multiple=True, type=click.Path(exists=True),
              help="Report JSON written by bench/sweep.")
@click.option("--point", "points", multiple=True, help="LABEL,SCORE,COST")
def pareto(out_dir, reports, points):
    """Compute the Pareto frontier over reports and labelled points."""
    from .pareto import emit_pareto

    pts = []
    for path in reports:
        doc = json.loads(Path(path).read_text())
        label = (f"{doc['axis']}={doc['value']}" if doc.get("axis") else doc["strategy"])
        agg = doc["aggregate"]
        pts.append((label, float(agg["accuracy"] or 0), float(agg["mean_cost_per_query"])))
    for p in points:
        try:
            label, score, cost = p.rsplit(",", 2)
            pts.append((label, float(score), float(cost)))
        except ValueError as exc:
            raise click.BadParameter(f"bad point {p!r}", param_hint="--point") from exc
    if not pts:
        raise click.UsageError("give at least one --report or --point")
    frontier = emit_pareto(pts, out_dir)
    click.echo("\n".join(frontier))


@main.command()
@config_option
@seed_option
@concurrency_option
@click.option("--bind", "bind_address", default="127.0.0.1:8080", show_default=True)
def serve(config_path, seed, concurrency, bind_address):
    """Serve POST /route, GET /trace/<id>, GET /healthz."""
    from .server import serve as run

    run(_load(config_path, seed), bind_address, concurrency)


if __name__ == "__main__":
    main()
