"""
Simulation studies that check the sampler and the precision bounds
against data with known parameters.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from tqdm import tqdm

from src.cli.models import SimulationSettings
from src.core.estimand import rank_impacts
from src.core.fisher import crlb, fisher_information, fisher_information_general
from src.core.inference import McmcConfig, PriorSpec, diagnostics, fit
from src.core.outcome_model import ModelConfig, ModelParams, NetworkData, fit_maximum_likelihood, simulate_outcomes
from src.tools.simulate_dataset import simulate_dataset

logger = logging.getLogger(__name__)


class CoverageReport(BaseModel):
    n_runs: int
    covered: dict[str, int]
    max_rhat: list[Optional[float]] = Field(default_factory=list)

    def coverage(self, name: str) -> float:
        return self.covered[name] / self.n_runs


class CrlbConsistency(BaseModel):
    n_replicates: int
    tau_hat_mean: float
    tau_hat_variance: float
    crlb_tau: float

    @property
    def ratio(self) -> float:
        """Empirical variance of tau-hat over its lower bound."""
        return self.tau_hat_variance / self.crlb_tau


class NullCalibration(BaseModel):
    n_vertices: int
    covering_zero: int
    zero_tolerance: float

    @property
    def fraction(self) -> float:
        return self.covering_zero / self.n_vertices


def _true_values(params: ModelParams) -> dict[str, float]:
    values = {"tau": params.tau, "mu": params.mu, "sigma_eps": params.sigma_eps}
    values.update({f"gamma_{k + 1}": g for k, g in enumerate(params.gamma)})
    values.update({f"beta_{j + 1}": b for j, b in enumerate(params.beta)})
    return values


def coverage_study(
    params: ModelParams,
    seeds: Sequence[int],
    settings: Optional[SimulationSettings] = None,
    mcmc: Optional[McmcConfig] = None,
    priors: Optional[PriorSpec] = None,
    progress: bool = False,
) -> CoverageReport:
    """Count, per parameter, the seeds whose 90% credible interval covers the truth."""
    settings = settings or SimulationSettings()
    mcmc = mcmc or McmcConfig(n_chains=2, n_iters=2000, burn_in=1000, thin=2)
    model_config = ModelConfig(n_hops=params.n_hops)
    truth = _true_values(params)
    covered = dict.fromkeys(truth, 0)
    max_rhat = []

    for seed in tqdm(seeds, desc="coverage", disable=not progress):
        data = simulate_dataset(settings, params, seed).network_data()
        samples = fit(data, priors, mcmc.model_copy(update={"seed": seed}), model_config)
        summary = diagnostics(samples)
        for name, value in truth.items():
            p = summary.parameters[name]
            covered[name] += int(p.q05 <= value <= p.q95)
        max_rhat.append(summary.max_rhat)

    report = CoverageReport(n_runs=len(seeds), covered=covered, max_rhat=max_rhat)
    logger.info(f"Coverage over {report.n_runs} run(s): {report.covered}")
    return report


def crlb_consistency_study(
    params: ModelParams,
    n: int = 500,
    replicates: int = 200,
    seed: int = 0,
    mean_degree: float = 5.0,
    progress: bool = False,
) -> CrlbConsistency:
    """
    Fix one design, redraw outcomes, and compare the spread of the
    maximum-likelihood tau-hat with the (tau, tau) entry of the CRLB.
    """
    settings = SimulationSettings(n=n, mean_degree=mean_degree)
    design = simulate_dataset(settings, params, seed).network_data()
    model_config = ModelConfig(n_hops=params.n_hops)
    s = design.exposure(params.n_hops)

    if params.n_hops == 1 and params.n_covariates == 1:
        information = fisher_information(params, design.sources, s.hop(1), design.covariates)
    else:
        information = fisher_information_general(params, design.sources, s, design.covariates)
    bound = crlb(information)

    estimates = []
    for r in tqdm(range(replicates), desc="replicates", disable=not progress):
        y, _ = simulate_outcomes(params, design.graph, design.sources, design.covariates,
                                 model_config, rng_seed=seed + 1000 + r)
        replicate = NetworkData(graph=design.graph, sources=design.sources,
                                covariates=design.covariates, outcomes=y)
        estimates.append(fit_maximum_likelihood(replicate, model_config).tau)

    estimates = np.asarray(estimates)
    result = CrlbConsistency(
        n_replicates=replicates,
        tau_hat_mean=float(estimates.mean()),
        tau_hat_variance=float(estimates.var(ddof=1)),
        crlb_tau=float(bound.covariance_bound[0, 0]),
    )
    logger.info(f"Var(tau-hat) = {result.tau_hat_variance:.4g}, CRLB = {result.crlb_tau:.4g}, ratio {result.ratio:.3f}")
    return result


def null_calibration_study(
    params: ModelParams,
    seed: int = 0,
    settings: Optional[SimulationSettings] = None,
    mcmc: Optional[McmcConfig] = None,
    zero_tolerance: float = 1e-2,
) -> NullCalibration:
    """
    Fit data simulated without a source effect and count vertices whose 90%
    impact interval reaches zero.

    Impacts are nonnegative for every draw, so an interval counts as covering
    zero when its lower end is within ``zero_tolerance`` of it.
    """
    if params.tau != 0:
        logger.warning(f"Null calibration expects tau = 0, got {params.tau}")
    settings = settings or SimulationSettings()
    mcmc = mcmc or McmcConfig(n_chains=2, n_iters=2000, burn_in=1000, thin=2, seed=seed)
    data = simulate_dataset(settings, params, seed).network_data()
    samples = fit(data, None, mcmc, ModelConfig(n_hops=params.n_hops))
    impacts = rank_impacts(samples, data.graph, data.covariates)
    covering = sum(1 for e in impacts if e.zeta_lo <= zero_tolerance)
    result = NullCalibration(n_vertices=len(impacts), covering_zero=covering, zero_tolerance=zero_tolerance)
    logger.info(f"{result.covering_zero}/{result.n_vertices} impact interval(s) reach zero")
    return result
