import logging
import os
import sys

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
from src.cli.models import SimulationSettings
from src.config import LOG_FORMAT, LOG_LEVEL
from src.core.inference import McmcConfig
from src.core.outcome_model import ModelConfig
from src.core.pipeline import StageRun, run_crlb, run_fit, run_impact, run_ingest, run_simulate
from src.tools.simulate_dataset import DEFAULT_TRUTH


def run_demo(workdir: str = "demo_run", seed: int = 7, n: int = 100, iters: int = 1000) -> list:
    """Simulate a narrative, then run every pipeline stage on it. Returns the report rows."""
    raw_dir = os.path.join(workdir, "raw")
    data_dir = os.path.join(workdir, "data")
    fit_dir = os.path.join(workdir, "fit")

    # Step 1: Simulate
    print(f"[INFO] Simulating {n} accounts into {raw_dir}...")
    settings = SimulationSettings(n=n, mean_degree=4.0)
    run_simulate(StageRun(["demo", "simulate"], {"n": n}, seed), raw_dir, settings, DEFAULT_TRUTH, seed)

    # Step 2: Ingest with the simulated sources
    print("[INFO] Ingesting...")
    with open(os.path.join(raw_dir, "sources.txt"), "r", encoding="utf-8") as f:
        sources = [line.strip() for line in f if line.strip()]
    run_ingest(
        StageRun(["demo", "ingest"], {}),
        os.path.join(raw_dir, "dataset.jsonl"),
        os.path.join(raw_dir, "narrative.json"),
        data_dir,
        explicit_sources=sources,
        exclude_retweets=True,
    )

    # Step 3: Fit
    print("[INFO] Sampling the posterior...")
    mcmc = McmcConfig(n_chains=2, n_iters=iters, burn_in=iters // 2, thin=2, seed=seed)
    fitted = run_fit(StageRun(["demo", "fit"], mcmc.model_dump(), seed), data_dir, fit_dir, mcmc, ModelConfig())
    for name, p in fitted.summary.parameters.items():
        print(f"  {name:>10}: mean {p.mean:8.4f}  90% [{p.q05:.4f}, {p.q95:.4f}]")

    # Step 4: Impacts
    print("[INFO] Ranking impacts...")
    posterior = os.path.join(fit_dir, "posterior.csv")
    impacts = run_impact(StageRun(["demo", "impact"], {}), data_dir, posterior, os.path.join(workdir, "impact.csv"))
    print("\n--- Top accounts ---")
    for row in impacts.rows[:5]:
        print("  " + "  ".join(row.cells()))

    # Step 5: Precision bound at the posterior mean
    print("\n[INFO] Cramer-Rao bound at the posterior mean...")
    bound = run_crlb(StageRun(["demo", "crlb"], {}), data_dir, os.path.join(workdir, "crlb.json"),
                     posterior_path=posterior)
    for name, se in bound.bound.standard_errors().items():
        print(f"  {name:>10}: sd >= {se:.4g}")
    return impacts.rows


if __name__ == "__main__":
    logging.basicConfig(level=getattr(logging, LOG_LEVEL, logging.INFO), format=LOG_FORMAT)
    run_demo()
