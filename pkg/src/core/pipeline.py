"""
Pipeline stages behind the command-line front end:
simulate -> ingest -> fit -> impact -> crlb.

Every stage builds its outputs in memory, writes them atomically and
records a manifest next to them.
"""

import logging
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np

from src.artifact_store import (
    config_hash,
    dumps_json,
    init_output_dir,
    input_digests,
    load_json,
    store_outputs,
    write_manifest,
)
from src.cli.models import RunManifest, SimulationSettings
from src.config import TOOL_VERSION
from src.core.errors import (
    ConfigurationError,
    ConvergenceError,
    EmptyNarrativeError,
    InputDataError,
    UnsupportedConfigurationError,
)
from src.core.estimand import ImpactEstimate, rank_impacts
from src.core.exposure import exposure_rows
from src.core.fisher import (
    CrlbResult,
    DesignDiagnostics,
    FisherInfo,
    crlb,
    design_diagnostics,
    fisher_information,
    fisher_information_general,
)
from src.core.graph import InfluenceGraph, build_influence_graph, pagerank, to_dot
from src.core.inference import DiagnosticsSummary, McmcConfig, PosteriorSamples, PriorSpec, diagnostics, fit
from src.core.network_builder import (
    CovariateMatrix,
    OutcomeVector,
    build_retweet_graph,
    compute_outcomes,
    extract_covariates,
    infer_sources,
)
from src.core.outcome_model import ModelConfig, ModelParams, NetworkData
from src.core.report import AccountStats, ReportRow, account_statistics, build_report
from src.parsers.narrative_filter import filter_narrative
from src.parsers.record_loader import load_narrative_spec, load_records
from src.parsers.table_io import (
    ACCOUNTS_FILE,
    COVARIATES_FILE,
    EDGES_FILE,
    OUTCOMES_FILE,
    SOURCES_FILE,
    accounts_csv,
    covariates_csv,
    edges_csv,
    exposure_csv,
    impact_csv,
    outcomes_csv,
    posterior_csv,
    read_accounts,
    read_network_data,
    read_posterior,
    report_csv,
    sources_csv,
)
from src.tools.simulate_dataset import SimulatedDataset, simulate_dataset

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
POSTERIOR_FILE = "posterior.csv"
DIAGNOSTICS_FILE = "diagnostics.json"
EXPOSURE_FILE = "exposure.csv"
REPORT_FILE = "report.csv"
GRAPH_DOT_FILE = "graph.dot"


@dataclass
class StageRun:
    """Provenance of one command invocation, committed with its outputs."""

    command: list[str]
    config: dict
    seed: Optional[int] = None
    started_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    clock: float = field(default_factory=time.perf_counter, repr=False)

    def commit(self, out_dir: str, outputs: dict[str, bytes], inputs: Sequence[str]) -> RunManifest:
        init_output_dir(out_dir)
        digests = store_outputs(outputs)
        manifest = RunManifest(
            command=self.command,
            config=self.config,
            config_hash=config_hash(self.config),
            input_digests=input_digests(inputs),
            output_digests=digests,
            seed=self.seed,
            tool_version=TOOL_VERSION,
            started_at=self.started_at,
            wall_time_s=time.perf_counter() - self.clock,
        )
        write_manifest(os.path.join(out_dir, MANIFEST_FILE), manifest)
        return manifest


def _parent_dir(path: str) -> str:
    return os.path.dirname(path) or "."


@dataclass
class IngestResult:
    graph: InfluenceGraph
    covariates: CovariateMatrix
    outcomes: OutcomeVector
    n_sources: int
    n_records: int
    n_skipped: int
    n_filtered: int
    manifest: RunManifest


def run_ingest(
    stage: StageRun,
    input_path: str,
    narrative_path: str,
    out_dir: str,
    explicit_sources: Optional[Sequence[str]] = None,
    exclude_retweets: bool = False,
    normalize_rows: bool = False,
    include_language: bool = True,
    write_dot: bool = False,
) -> IngestResult:
    """Records -> narrative filter -> graph, covariates, outcomes, sources, account statistics."""
    logger.info(f"Step 1: Loading records from {input_path}...")
    parsed = load_records(input_path)
    spec = load_narrative_spec(narrative_path)

    logger.info("Step 2: Filtering to the narrative...")
    records = filter_narrative(parsed.records, spec)
    if not records:
        raise EmptyNarrativeError(
            f"No records match the narrative ({len(parsed.records)} record(s) read, {parsed.skipped} skipped)"
        )
    logger.info(f"Kept {len(records)} of {len(parsed.records)} record(s)")

    logger.info("Step 3: Building the retweet graph...")
    g, index = build_retweet_graph(records)
    if normalize_rows:
        g = build_influence_graph(g.edges(), vertices=g.vertex_ids, normalize_rows=True)

    logger.info("Step 4: Deriving covariates, outcomes and sources...")
    x = extract_covariates(records, g, include_language=include_language)
    y = compute_outcomes(records, index, include_retweets=not exclude_retweets)
    z = infer_sources(records, g, explicit=explicit_sources)
    stats = account_statistics(records, g)

    logger.info("Step 5: Writing outputs...")
    outputs = {
        os.path.join(out_dir, EDGES_FILE): edges_csv(g),
        os.path.join(out_dir, COVARIATES_FILE): covariates_csv(g, x),
        os.path.join(out_dir, OUTCOMES_FILE): outcomes_csv(g, y),
        os.path.join(out_dir, SOURCES_FILE): sources_csv(g, z),
        os.path.join(out_dir, ACCOUNTS_FILE): accounts_csv(stats),
    }
    if write_dot:
        labels = {s.vertex_id: s.screen_name for s in stats}
        outputs[os.path.join(out_dir, GRAPH_DOT_FILE)] = to_dot(g, labels).encode("utf-8")
    manifest = stage.commit(out_dir, outputs, [input_path, narrative_path])

    return IngestResult(
        graph=g,
        covariates=x,
        outcomes=y,
        n_sources=int(z.z.sum()),
        n_records=len(parsed.records),
        n_skipped=parsed.skipped,
        n_filtered=len(records),
        manifest=manifest,
    )


def _data_inputs(data_dir: str) -> list[str]:
    return [
        os.path.join(data_dir, name)
        for name in (EDGES_FILE, COVARIATES_FILE, OUTCOMES_FILE, SOURCES_FILE, ACCOUNTS_FILE)
    ]


@dataclass
class FitResult:
    samples: PosteriorSamples
    summary: DiagnosticsSummary
    manifest: RunManifest


def run_fit(
    stage: StageRun,
    data_dir: str,
    out_dir: str,
    mcmc: McmcConfig,
    model_config: ModelConfig,
    priors: Optional[PriorSpec] = None,
    rhat_threshold: float = 1.05,
    dump_exposure: bool = False,
) -> FitResult:
    """Ingest outputs -> posterior draws and convergence diagnostics."""
    priors = priors or PriorSpec()

    logger.info(f"Step 1: Loading network data from {data_dir}...")
    data = read_network_data(data_dir)

    logger.info("Step 2: Sampling the posterior...")
    samples = fit(data, priors, mcmc, model_config)

    logger.info("Step 3: Computing diagnostics...")
    summary = diagnostics(samples, rhat_threshold=rhat_threshold)

    logger.info("Step 4: Writing outputs...")
    payload = {
        "diagnostics": summary.model_dump(mode="json"),
        "mcmc": mcmc.model_dump(mode="json"),
        "model": model_config.model_dump(mode="json"),
        "priors": priors.model_dump(mode="json"),
        "covariates": list(data.covariates.column_names),
    }
    outputs = {
        os.path.join(out_dir, POSTERIOR_FILE): posterior_csv(samples),
        os.path.join(out_dir, DIAGNOSTICS_FILE): dumps_json(payload),
    }
    if dump_exposure:
        rows = exposure_rows(data.exposure(model_config.n_hops), data.graph.vertex_ids)
        outputs[os.path.join(out_dir, EXPOSURE_FILE)] = exposure_csv(rows)
    manifest = stage.commit(out_dir, outputs, _data_inputs(data_dir))
    return FitResult(samples=samples, summary=summary, manifest=manifest)


def check_convergence(summary: DiagnosticsSummary, max_rhat: float) -> None:
    """Raise ConvergenceError when any split-R-hat exceeds max_rhat."""
    worst = summary.max_rhat
    if worst is not None and worst > max_rhat:
        offenders = [name for name, p in summary.parameters.items() if p.rhat is not None and p.rhat > max_rhat]
        raise ConvergenceError(
            f"R-hat {worst:.3f} exceeds {max_rhat} for: {', '.join(offenders)}",
            residual=worst,
        )


@dataclass
class ImpactResult:
    impacts: list[ImpactEstimate]
    rows: list[ReportRow]
    manifest: RunManifest


def _account_stats(data_dir: str, data: NetworkData) -> list[AccountStats]:
    path = os.path.join(data_dir, ACCOUNTS_FILE)
    if os.path.isfile(path):
        return read_accounts(path)
    logger.warning(f"{path} not found; report statistics fall back to outcome counts")
    return [
        AccountStats(vertex_id=vid, screen_name=vid, tweets=int(y), total_retweets=0, most_retweeted=0)
        for vid, y in zip(data.graph.vertex_ids, data.outcomes.y)
    ]


def _resolve_vertices(tokens: Sequence[str], g: InfluenceGraph, stats: list[AccountStats]) -> list[str]:
    by_screen_name = {s.screen_name.casefold(): s.vertex_id for s in stats}
    resolved = []
    for token in tokens:
        if token in g.index:
            resolved.append(token)
        elif token.lstrip("@").casefold() in by_screen_name:
            resolved.append(by_screen_name[token.lstrip("@").casefold()])
        else:
            raise InputDataError(f"Vertex not in graph: {token}")
    return resolved


def run_impact(
    stage: StageRun,
    data_dir: str,
    posterior_path: str,
    out_path: str,
    vertices: Optional[Sequence[str]] = None,
    observed_base: bool = False,
    n_jobs: int = 1,
    progress: bool = False,
) -> ImpactResult:
    """Posterior draws -> ranked impacts and the account report."""
    logger.info("Step 1: Loading network data and posterior draws...")
    data = read_network_data(data_dir)
    samples = read_posterior(posterior_path)
    if samples.n_covariates != data.covariates.n_covariates:
        raise InputDataError(
            f"Posterior has {samples.n_covariates} covariate effect(s), data has {data.covariates.n_covariates}"
        )
    stats = _account_stats(data_dir, data)
    subset = _resolve_vertices(vertices, data.graph, stats) if vertices else None

    logger.info("Step 2: Computing impacts...")
    impacts = rank_impacts(
        samples,
        data.graph,
        data.covariates,
        vertices=subset,
        base_z=data.sources if observed_base else None,
        config=ModelConfig(n_hops=samples.n_hops),
        n_jobs=n_jobs,
        progress=progress,
    )

    logger.info("Step 3: Building the report...")
    rows = build_report(impacts, stats, data.graph, pagerank(data.graph))

    logger.info("Step 4: Writing outputs...")
    out_dir = _parent_dir(out_path)
    screen_names = {s.vertex_id: s.screen_name for s in stats}
    outputs = {
        out_path: impact_csv(impacts, screen_names),
        os.path.join(out_dir, REPORT_FILE): report_csv(rows),
    }
    manifest = stage.commit(out_dir, outputs, [*_data_inputs(data_dir), posterior_path])
    return ImpactResult(impacts=impacts, rows=rows, manifest=manifest)


@dataclass
class CrlbOutcome:
    params: ModelParams
    information: FisherInfo
    bound: CrlbResult
    design: DesignDiagnostics
    manifest: RunManifest


def load_params(path: str) -> ModelParams:
    """ModelParams from JSON; a simulation truth file's "params" entry is accepted too."""
    payload = load_json(path)
    if isinstance(payload, dict) and "params" in payload:
        payload = payload["params"]
    return ModelParams.model_validate(payload)


def run_crlb(
    stage: StageRun,
    data_dir: str,
    out_path: str,
    params_path: Optional[str] = None,
    posterior_path: Optional[str] = None,
    ridge: float = 0.0,
    general: bool = False,
    floor: float = 1e-6,
) -> CrlbOutcome:
    """Fisher information at the given parameters -> CRLB report."""
    if (params_path is None) == (posterior_path is None):
        raise ConfigurationError("Pass exactly one of a parameter file or a posterior file")

    logger.info("Step 1: Loading network data and parameters...")
    data = read_network_data(data_dir)
    if params_path is not None:
        p = load_params(params_path)
    else:
        p = read_posterior(posterior_path).posterior_mean()
    s = data.exposure(p.n_hops)

    logger.info("Step 2: Computing the Fisher information...")
    if general:
        information = fisher_information_general(p, data.sources, s, data.covariates)
    else:
        if data.covariates.n_covariates != 1:
            raise UnsupportedConfigurationError(
                f"Closed-form bound needs one covariate, data has {data.covariates.n_covariates} "
                f"({', '.join(data.covariates.column_names)}); rerun with --general"
            )
        information = fisher_information(p, data.sources, s.hop(1), data.covariates)
    design = design_diagnostics(information, floor=floor)

    logger.info("Step 3: Inverting...")
    bound = crlb(information, ridge=ridge)

    logger.info("Step 4: Writing outputs...")
    payload = {
        "method": "general" if general else "closed_form",
        "params": p.model_dump(mode="json"),
        "parameter_names": list(bound.parameter_names),
        "fisher_information": information.matrix,
        "covariance_bound": bound.covariance_bound,
        "standard_errors": bound.standard_errors(),
        "condition_number": bound.condition_number,
        "ridge": ridge,
        "f11": design.f11,
        "f22": design.f22,
        "floor": floor,
        "flags": list(design.flags),
    }
    inputs = [*_data_inputs(data_dir), params_path or posterior_path]
    manifest = stage.commit(_parent_dir(out_path), {out_path: dumps_json(payload)}, inputs)
    return CrlbOutcome(params=p, information=information, bound=bound, design=design, manifest=manifest)


@dataclass
class SimulationResult:
    dataset: SimulatedDataset
    manifest: RunManifest


def run_simulate(
    stage: StageRun,
    out_dir: str,
    settings: SimulationSettings,
    params: ModelParams,
    seed: int,
    params_path: Optional[str] = None,
) -> SimulationResult:
    """Synthetic records plus the narrative, source list and ground truth."""
    dataset = simulate_dataset(settings, params, seed)

    present = dataset.narrative_accounts()
    sources = [vid for vid in dataset.source_ids() if vid in present]
    if len(sources) < len(dataset.source_ids()):
        logger.info(f"{len(dataset.source_ids()) - len(sources)} source(s) posted nothing and are left out of sources.txt")

    observed = dataset.observed_outcomes()
    lines = "".join(r.model_dump_json(exclude_none=True) + "\n" for r in dataset.records)
    truth = {
        "params": params.model_dump(mode="json"),
        "seed": seed,
        "settings": settings.model_dump(mode="json"),
        "sources": dataset.source_ids(),
        "n_vertices": dataset.graph.n_vertices,
        "edge_count": dataset.graph.edge_count,
        "total_outcome": int(np.sum(observed.y)),
        "seed_tweets": int(np.sum(observed.y - dataset.outcomes.y)),
    }
    outputs = {
        os.path.join(out_dir, "dataset.jsonl"): lines.encode("utf-8"),
        os.path.join(out_dir, "narrative.json"): dumps_json(dataset.narrative.model_dump(mode="json")),
        os.path.join(out_dir, "sources.txt"): "".join(f"{vid}\n" for vid in sources).encode("utf-8"),
        os.path.join(out_dir, "truth.json"): dumps_json(truth),
    }
    manifest = stage.commit(out_dir, outputs, [params_path] if params_path else [])
    return SimulationResult(dataset=dataset, manifest=manifest)
