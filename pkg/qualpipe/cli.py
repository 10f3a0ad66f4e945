"""Command line interface, one subcommand per pipeline stage.

Settings come from a TOML file (`--config`), `QUALPIPE_<KEY>` environment
variables and flags, later ones winning. Exit codes: 0 ok, 2 configuration,
3 evaluator, 4 data, 5 infeasible assignment.
"""

import logging
import os
from collections.abc import Callable
from pathlib import Path
from typing import Annotated

import typer

from qualpipe.config import Config, load_config
from qualpipe.errors import QualpipeError
from qualpipe.gateway import Gateway, GatewayMode
from qualpipe.model import Target
from qualpipe.pipeline import (
    make_gateway,
    run_all,
    run_assign,
    run_augment,
    run_discover,
    run_report,
    run_score,
)

logger = logging.getLogger(__package__)

app = typer.Typer(
    help="Qualitative evaluation of language models with an evaluator model.",
    no_args_is_help=True,
)

ConfigOpt = Annotated[
    None | Path, typer.Option("--config", help="TOML file with settings")
]
DatasetOpt = Annotated[
    None | Path, typer.Option("--dataset", help="JSONL dataset of instances")
]
AttributesOpt = Annotated[
    None | Path,
    typer.Option("--attributes", help="attributes.json (default: in --out-dir)"),
]
OutDirOpt = Annotated[None | Path, typer.Option("--out-dir", help="Artifact directory")]
ModeOpt = Annotated[
    None | GatewayMode, typer.Option("--mode", help="Evaluator gateway mode")
]
CacheDirOpt = Annotated[
    None | Path, typer.Option("--cache-dir", help="Response cache directory")
]
ParallelismOpt = Annotated[
    None | int, typer.Option("--parallelism", help="Concurrent evaluator requests")
]
SeedOpt = Annotated[None | int, typer.Option("--seed", help="Top-level random seed")]
EpsilonOpt = Annotated[
    None | float, typer.Option("--epsilon", help="Slack of the assignment bounds")
]
NAttributesOpt = Annotated[
    None | int, typer.Option("--n-attributes", help="Attributes kept per kind")
]
PruneFactorOpt = Annotated[
    None | int, typer.Option("--prune-factor", help="Shrink factor per pruning round")
]
ChunkSizeOpt = Annotated[
    None | int, typer.Option("--chunk-size", help="Instances per discovery prompt")
]
MetricOpt = Annotated[
    None | str,
    typer.Option("--metric", help="rouge-l, exact-match or external:<command>"),
]
TargetOpt = Annotated[
    None | Target, typer.Option("--target", help="Text scored against attributes")
]
DomainsOpt = Annotated[
    None | str, typer.Option("--domains", help="Comma-separated target domains")
]
BudgetOpt = Annotated[
    None | int, typer.Option("--budget", help="Instances to select for augmentation")
]
PoolOpt = Annotated[
    None | Path, typer.Option("--pool", help="JSONL pool to select from")
]
VerboseOpt = Annotated[bool, typer.Option("--verbose", "-v", help="Log progress")]


def _execute(
    ctx: typer.Context,
    stage: str,
    config: None | Path,
    overrides: dict[str, object],
    action: Callable[[Config, Callable[[], Gateway]], object],
    *,
    verbose: bool,
) -> None:
    """Resolve the configuration and run `action`, mapping errors to exit codes.

    `ctx.obj` may hold a transport to use instead of HTTP.
    """
    logging.getLogger(__package__).setLevel(
        logging.INFO if verbose else logging.WARNING
    )
    try:
        cfg = load_config(config, os.environ, overrides)
        action(cfg, lambda: make_gateway(cfg, ctx.obj))
    except QualpipeError as e:
        logger.error("%s failed: %s", stage, e)  # noqa: TRY400
        for note in getattr(e, "__notes__", []):
            logger.error("  %s", note)  # noqa: TRY400
        raise typer.Exit(e.exit_code) from e


@app.command()
def discover(  # noqa: PLR0913
    ctx: typer.Context,
    config: ConfigOpt = None,
    dataset: DatasetOpt = None,
    out_dir: OutDirOpt = None,
    mode: ModeOpt = None,
    cache_dir: CacheDirOpt = None,
    parallelism: ParallelismOpt = None,
    seed: SeedOpt = None,
    n_attributes: NAttributesOpt = None,
    prune_factor: PruneFactorOpt = None,
    chunk_size: ChunkSizeOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Discover domains and sub-tasks of the dataset."""
    overrides = {
        "dataset": dataset,
        "out_dir": out_dir,
        "mode": mode,
        "cache_dir": cache_dir,
        "parallelism": parallelism,
        "seed": seed,
        "n_attributes": n_attributes,
        "prune_factor": prune_factor,
        "chunk_size": chunk_size,
    }
    _execute(
        ctx,
        "discover",
        config,
        overrides,
        lambda cfg, gateway: run_discover(cfg, gateway()),
        verbose=verbose,
    )


@app.command()
def score(  # noqa: PLR0913
    ctx: typer.Context,
    config: ConfigOpt = None,
    dataset: DatasetOpt = None,
    attributes: AttributesOpt = None,
    out_dir: OutDirOpt = None,
    mode: ModeOpt = None,
    cache_dir: CacheDirOpt = None,
    parallelism: ParallelismOpt = None,
    target: TargetOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Score instances against the discovered attributes."""
    overrides = {
        "dataset": dataset,
        "attributes": attributes,
        "out_dir": out_dir,
        "mode": mode,
        "cache_dir": cache_dir,
        "parallelism": parallelism,
        "target": target,
    }
    _execute(
        ctx,
        "score",
        config,
        overrides,
        lambda cfg, gateway: run_score(cfg, gateway()),
        verbose=verbose,
    )


@app.command()
def assign(  # noqa: PLR0913
    ctx: typer.Context,
    config: ConfigOpt = None,
    dataset: DatasetOpt = None,
    attributes: AttributesOpt = None,
    out_dir: OutDirOpt = None,
    epsilon: EpsilonOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Assign two domains and two sub-tasks to every instance."""
    overrides = {
        "dataset": dataset,
        "attributes": attributes,
        "out_dir": out_dir,
        "epsilon": epsilon,
    }
    _execute(
        ctx,
        "assign",
        config,
        overrides,
        lambda cfg, _: run_assign(cfg),
        verbose=verbose,
    )


@app.command()
def report(  # noqa: PLR0913
    ctx: typer.Context,
    config: ConfigOpt = None,
    dataset: DatasetOpt = None,
    attributes: AttributesOpt = None,
    out_dir: OutDirOpt = None,
    mode: ModeOpt = None,
    cache_dir: CacheDirOpt = None,
    metric: MetricOpt = None,
    seed: SeedOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Compute metrics and insights and write the dashboard."""
    overrides = {
        "dataset": dataset,
        "attributes": attributes,
        "out_dir": out_dir,
        "mode": mode,
        "cache_dir": cache_dir,
        "metric": metric,
        "seed": seed,
    }
    _execute(
        ctx,
        "report",
        config,
        overrides,
        lambda cfg, gateway: run_report(cfg, gateway()),
        verbose=verbose,
    )


@app.command()
def augment(  # noqa: PLR0913
    ctx: typer.Context,
    config: ConfigOpt = None,
    dataset: DatasetOpt = None,
    out_dir: OutDirOpt = None,
    domains: DomainsOpt = None,
    budget: BudgetOpt = None,
    pool: PoolOpt = None,
    seed: SeedOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Select instances of weak domains for annotation, plus a random baseline."""
    overrides = {
        "dataset": dataset,
        "out_dir": out_dir,
        "domains": domains,
        "budget": budget,
        "pool": pool,
        "seed": seed,
    }
    _execute(
        ctx,
        "augment",
        config,
        overrides,
        lambda cfg, _: run_augment(cfg),
        verbose=verbose,
    )


@app.command()
def run(  # noqa: PLR0913
    ctx: typer.Context,
    config: ConfigOpt = None,
    dataset: DatasetOpt = None,
    out_dir: OutDirOpt = None,
    mode: ModeOpt = None,
    cache_dir: CacheDirOpt = None,
    parallelism: ParallelismOpt = None,
    seed: SeedOpt = None,
    n_attributes: NAttributesOpt = None,
    prune_factor: PruneFactorOpt = None,
    chunk_size: ChunkSizeOpt = None,
    epsilon: EpsilonOpt = None,
    metric: MetricOpt = None,
    domains: DomainsOpt = None,
    budget: BudgetOpt = None,
    pool: PoolOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Run every stage in order."""
    overrides = {
        "dataset": dataset,
        "out_dir": out_dir,
        "mode": mode,
        "cache_dir": cache_dir,
        "parallelism": parallelism,
        "seed": seed,
        "n_attributes": n_attributes,
        "prune_factor": prune_factor,
        "chunk_size": chunk_size,
        "epsilon": epsilon,
        "metric": metric,
        "domains": domains,
        "budget": budget,
        "pool": pool,
    }
    _execute(
        ctx,
        "run",
        config,
        overrides,
        lambda cfg, gateway: run_all(cfg, gateway()),
        verbose=verbose,
    )


if __name__ == "__main__":
    app()
