# cli/main.py

import functools
import logging
import os
from typing import Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from src.artifact_store import verify_manifest
from src.cli.models import SimulationSettings
from src.config import DEFAULT_MAX_RHAT, DEFAULT_THREADS, LOG_FORMAT, LOG_LEVEL, TOOL_VERSION
from src.core.errors import InputDataError, NarrinfError
from src.core.inference import McmcConfig, PriorSpec
from src.core.outcome_model import ModelConfig
from src.core.pipeline import (
    StageRun,
    check_convergence,
    load_params,
    run_crlb,
    run_fit,
    run_impact,
    run_ingest,
    run_simulate,
)
from src.tools.simulate_dataset import DEFAULT_TRUTH

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="narrinf",
    help="Estimate the causal influence of accounts on a narrative's spread.",
    no_args_is_help=True,
    add_completion=False,
)
console = Console()
err_console = Console(stderr=True)


@app.callback()
def main(
    log_level: str = typer.Option(LOG_LEVEL, "--log-level", envvar="LOG_LEVEL", help="Logging level"),
):
    logging.basicConfig(level=getattr(logging, log_level.upper(), logging.INFO), format=LOG_FORMAT)


def handle_errors(func):
    """Map toolkit errors to their exit codes and invalid settings to exit code 2."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except NarrinfError as e:
            logger.error(f"{type(e).__name__}: {e}")
            err_console.print(f"error: {e}", markup=False, style="red")
            raise typer.Exit(code=e.exit_code)
        except ValidationError as e:
            logger.error(f"Invalid configuration: {e.error_count()} error(s)")
            err_console.print(f"invalid configuration:\n{e}", markup=False, style="red")
            raise typer.Exit(code=2)

    return wrapper


def _stage(ctx: typer.Context, seed: Optional[int] = None) -> StageRun:
    """Replayable command line and option values of the running command."""
    command = ["narrinf", ctx.info_name]
    for param in ctx.command.params:
        value = ctx.params.get(param.name)
        if value is None or value is False or not param.opts:
            continue
        command.append(param.opts[0])
        if value is not True:
            command.append(str(value))
    return StageRun(command=command, config=dict(ctx.params), seed=seed)


def _split(values: Optional[str]) -> Optional[list[str]]:
    if not values:
        return None
    return [v.strip() for v in values.split(",") if v.strip()]


def _read_source_file(path: str) -> list[str]:
    if not os.path.isfile(path):
        raise InputDataError(f"Source list not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return [line.strip() for line in f if line.strip()]


@app.command()
@handle_errors
def ingest(
    ctx: typer.Context,
    input_path: str = typer.Option(..., "--input", "-i", help="JSON-lines tweet records"),
    narrative: str = typer.Option(..., "--narrative", "-n", help="Narrative spec JSON (hashtags, keywords)"),
    out: str = typer.Option(..., "--out", "-o", help="Output directory"),
    sources: Optional[str] = typer.Option(None, "--sources", help="Comma-separated source ids or @screen_names"),
    sources_file: Optional[str] = typer.Option(None, "--sources-file", help="File with one source per line"),
    exclude_retweets: bool = typer.Option(False, "--exclude-retweets", help="Count only original tweets in outcomes"),
    normalize_rows: bool = typer.Option(False, "--normalize-rows", help="Divide each row of A by its maximum"),
    no_language: bool = typer.Option(False, "--no-language", help="Skip language-community covariates"),
    dot: bool = typer.Option(False, "--dot", help="Also write graph.dot"),
):
    """Filter records to a narrative and derive edges, covariates, outcomes and sources."""
    explicit = _split(sources)
    if sources_file:
        explicit = (explicit or []) + _read_source_file(sources_file)

    result = run_ingest(
        _stage(ctx),
        input_path,
        narrative,
        out,
        explicit_sources=explicit,
        exclude_retweets=exclude_retweets,
        normalize_rows=normalize_rows,
        include_language=not no_language,
        write_dot=dot,
    )
    console.print(
        f"{result.n_filtered}/{result.n_records} narrative record(s) ({result.n_skipped} skipped): "
        f"{result.graph.n_vertices} accounts, {result.graph.edge_count} edges, "
        f"{result.n_sources} source(s), covariates {', '.join(result.covariates.column_names)}"
    )


@app.command("fit")
@handle_errors
def fit_command(
    ctx: typer.Context,
    data: str = typer.Option(..., "--data", "-d", help="Directory written by ingest"),
    out: str = typer.Option(..., "--out", "-o", help="Output directory"),
    hops: int = typer.Option(1, "--hops", help="Number of exposure hops"),
    chains: int = typer.Option(4, "--chains"),
    iters: int = typer.Option(5000, "--iters"),
    burn: int = typer.Option(2500, "--burn"),
    thin: int = typer.Option(5, "--thin"),
    seed: int = typer.Option(0, "--seed"),
    target_accept: float = typer.Option(0.3, "--target-accept"),
    priors: Optional[str] = typer.Option(None, "--priors", help="Prior hyperparameters as JSON"),
    max_rhat: float = typer.Option(DEFAULT_MAX_RHAT, "--max-rhat", envvar="NARRINF_MAX_RHAT",
                                   help="Exit with code 4 when any R-hat exceeds this"),
    threads: int = typer.Option(DEFAULT_THREADS, "--threads", envvar="NARRINF_THREADS", help="Parallel chains"),
    dump_exposure: bool = typer.Option(False, "--dump-exposure", help="Also write exposure.csv"),
    progress: bool = typer.Option(False, "--progress", help="Show per-chain progress bars"),
):
    """Sample the posterior of the outcome model by Metropolis-within-Gibbs."""
    mcmc = McmcConfig(
        n_chains=chains,
        n_iters=iters,
        burn_in=burn,
        thin=thin,
        seed=seed,
        target_accept=target_accept,
        n_jobs=threads,
        progress=progress,
    )
    prior_spec = PriorSpec.model_validate_json(_read_text(priors)) if priors else PriorSpec()
    result = run_fit(
        _stage(ctx, seed),
        data,
        out,
        mcmc,
        ModelConfig(n_hops=hops),
        priors=prior_spec,
        dump_exposure=dump_exposure,
    )

    table = Table(title=f"Posterior ({result.samples.n_chains} chain(s) x {result.samples.draws_per_chain} draws)")
    for column in ("parameter", "mean", "sd", "5%", "95%", "R-hat", "ESS", "accept"):
        table.add_column(column, justify="left" if column == "parameter" else "right")
    for name, p in result.summary.parameters.items():
        table.add_row(
            name,
            f"{p.mean:.4f}",
            f"{p.sd:.4f}",
            f"{p.q05:.4f}",
            f"{p.q95:.4f}",
            "-" if p.rhat is None else f"{p.rhat:.3f}",
            f"{p.ess:.0f}",
            "-" if p.acceptance_rate is None else f"{p.acceptance_rate:.2f}",
        )
    console.print(table)
    for notice in result.summary.notices:
        console.print(notice)
    check_convergence(result.summary, max_rhat)


def _read_text(path: str) -> str:
    if not os.path.isfile(path):
        raise InputDataError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


@app.command()
@handle_errors
def impact(
    ctx: typer.Context,
    data: str = typer.Option(..., "--data", "-d", help="Directory written by ingest"),
    posterior: str = typer.Option(..., "--posterior", "-p", help="posterior.csv written by fit"),
    out: str = typer.Option(..., "--out", "-o", help="Impact CSV; report.csv is written next to it"),
    vertices: Optional[str] = typer.Option(None, "--vertices", help="Comma-separated vertex ids or @screen_names"),
    observed_base: bool = typer.Option(False, "--observed-base",
                                       help="Toggle each account against the observed sources instead of none"),
    threads: int = typer.Option(DEFAULT_THREADS, "--threads", envvar="NARRINF_THREADS"),
    top: int = typer.Option(10, "--top", help="Rows to print"),
    progress: bool = typer.Option(False, "--progress"),
):
    """Rank accounts by their posterior impact on the narrative."""
    result = run_impact(
        _stage(ctx),
        data,
        posterior,
        out,
        vertices=_split(vertices),
        observed_base=observed_base,
        n_jobs=threads,
        progress=progress,
    )

    table = Table(title="Estimated influence")
    for column in ("screen_name", "T", "TRT", "MRT", "F", "first_time", "PR", "Impact", "90% CI"):
        table.add_column(column, justify="left" if column in ("screen_name", "first_time") else "right")
    for row in result.rows[:top]:
        table.add_row(*row.cells(), f"[{row.impact_lo:.2f}, {row.impact_hi:.2f}]")
    console.print(table)


@app.command("crlb")
@handle_errors
def crlb_command(
    ctx: typer.Context,
    data: str = typer.Option(..., "--data", "-d", help="Directory written by ingest"),
    out: str = typer.Option(..., "--out", "-o", help="CRLB JSON report"),
    params: Optional[str] = typer.Option(None, "--params", help="ModelParams JSON"),
    posterior: Optional[str] = typer.Option(None, "--posterior", help="Use posterior means from posterior.csv"),
    ridge: float = typer.Option(0.0, "--ridge", help="Add ridge * I before inverting"),
    general: bool = typer.Option(False, "--general", help="Jacobian outer product for any hops and covariates"),
    floor: float = typer.Option(1e-6, "--floor", help="Weak-design threshold for F11 and F22"),
):
    """Cramer-Rao lower bound of the model parameters at a design."""
    result = run_crlb(
        _stage(ctx),
        data,
        out,
        params_path=params,
        posterior_path=posterior,
        ridge=ridge,
        general=general,
        floor=floor,
    )

    table = Table(title=f"CRLB (condition number {result.bound.condition_number:.3e})")
    table.add_column("parameter")
    table.add_column("value", justify="right")
    table.add_column("bound on sd", justify="right")
    values = dict(zip(result.bound.parameter_names, result.params.to_vector()))
    for name, se in result.bound.standard_errors().items():
        table.add_row(name, f"{values[name]:.4f}", f"{se:.4g}")
    console.print(table)
    console.print(f"F11 = {result.design.f11:.4g}, F22 = {result.design.f22:.4g}")
    for flag in result.design.flags:
        console.print(f"warning: {flag}", style="yellow")


@app.command()
@handle_errors
def simulate(
    ctx: typer.Context,
    out: str = typer.Option(..., "--out", "-o", help="Output directory"),
    n: int = typer.Option(200, "--n", help="Number of accounts"),
    mean_degree: float = typer.Option(5.0, "--mean-degree"),
    weight_max: int = typer.Option(3, "--weight-max", help="Retweet counts per edge are uniform on 1..weight_max"),
    source_fraction: float = typer.Option(0.1, "--source-fraction"),
    hashtag: str = typer.Option("MacronLeaks", "--hashtag"),
    params: Optional[str] = typer.Option(None, "--params", help="True ModelParams JSON"),
    seed: int = typer.Option(0, "--seed"),
):
    """Write a synthetic dataset drawn from the outcome model."""
    settings = SimulationSettings(
        n=n, mean_degree=mean_degree, weight_max=weight_max, source_fraction=source_fraction, hashtag=hashtag
    )
    truth = load_params(params) if params else DEFAULT_TRUTH
    result = run_simulate(_stage(ctx, seed), out, settings, truth, seed, params_path=params)
    console.print(
        f"{len(result.dataset.records)} record(s), {result.dataset.graph.n_vertices} accounts, "
        f"{result.dataset.graph.edge_count} edges, {len(result.dataset.source_ids())} source(s) -> {out}"
    )


@app.command()
@handle_errors
def verify(
    manifest: str = typer.Option(..., "--manifest", "-m", help="manifest.json to check"),
):
    """Recompute the digests recorded in a manifest."""
    check = verify_manifest(manifest)
    if not check.ok:
        for path, problem in sorted(check.mismatched.items()):
            err_console.print(f"{problem}: {path}", markup=False)
        raise InputDataError(f"{len(check.mismatched)} file(s) do not match {manifest}")
    console.print(f"{manifest}: all digests match")


@app.command()
def version():
    """Print the tool version."""
    console.print(TOOL_VERSION)


if __name__ == "__main__":
    app()
