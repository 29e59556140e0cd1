"""
Bayesian posterior sampling of the outcome model by Metropolis-within-Gibbs.

Each sweep updates tau, every gamma_k, every beta_j and mu with Gaussian
random-walk Metropolis steps, then all eps_i (vectorised, independent given
the rest), then draws sigma_eps^2 from its conjugate Inverse-Gamma full
conditional. Proposal scales adapt during burn-in only.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field, model_validator
from scipy import stats
from scipy.special import gammaln
from tqdm import tqdm

from src.core.errors import InputDataError, SamplerInitializationError
from src.core.outcome_model import (
    LatentEffects,
    ModelConfig,
    ModelParams,
    NetworkData,
    parameter_names,
    raw_predictor,
)

logger = logging.getLogger(__name__)

_INIT_RETRIES = 100


class PriorSpec(BaseModel):
    """
    tau ~ N(0, tau_scale^2) truncated to [0, inf); gamma_k ~ U(0, 1);
    beta_j ~ N(0, beta_scale^2); mu ~ N(0, mu_scale^2);
    sigma_eps^2 ~ Inverse-Gamma(sigma2_shape, sigma2_scale).
    """

    tau_scale: float = Field(default=10.0, gt=0)
    beta_scale: float = Field(default=10.0, gt=0)
    mu_scale: float = Field(default=10.0, gt=0)
    sigma2_shape: float = Field(default=2.0, gt=0)
    sigma2_scale: float = Field(default=1.0, gt=0)


class McmcConfig(BaseModel):
    n_chains: int = Field(default=4, ge=1)
    n_iters: int = Field(default=5000, ge=1)
    burn_in: int = Field(default=2500, ge=0)
    thin: int = Field(default=5, ge=1)
    seed: int = 0
    target_accept: float = Field(default=0.3, gt=0, lt=1)
    adapt_interval: int = Field(default=50, ge=1)
    initial_scale: float = Field(default=0.1, ge=0)
    init_scale: float = Field(default=0.1, gt=0, le=1)
    n_jobs: int = Field(default=1, ge=1)
    progress: bool = False

    @model_validator(mode="after")
    def _burn_in_before_end(self) -> "McmcConfig":
        if self.burn_in >= self.n_iters:
            raise ValueError(f"burn_in ({self.burn_in}) must be smaller than n_iters ({self.n_iters})")
        return self

    @property
    def draws_per_chain(self) -> int:
        return math.ceil((self.n_iters - self.burn_in) / self.thin)


@dataclass
class ChainState:
    tau: float
    gamma: np.ndarray
    beta: np.ndarray
    mu: float
    eps: np.ndarray
    sigma2: float

    def copy(self) -> "ChainState":
        return replace(self, gamma=self.gamma.copy(), beta=self.beta.copy(), eps=self.eps.copy())


@dataclass
class ProposalScales:
    tau: float
    gamma: np.ndarray
    beta: np.ndarray
    mu: float
    eps: np.ndarray

    @classmethod
    def uniform(cls, value: float, n_hops: int, n_covariates: int, n_vertices: int) -> "ProposalScales":
        return cls(
            tau=value,
            gamma=np.full(n_hops, value),
            beta=np.full(n_covariates, value),
            mu=value,
            eps=np.full(n_vertices, value),
        )


@dataclass(frozen=True)
class PosteriorTarget:
    """Data and priors of the posterior, on plain arrays."""

    z: np.ndarray
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    priors: PriorSpec
    eta_clamp: float
    log_factorial: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "log_factorial", float(np.sum(gammaln(self.y + 1.0))))

    @classmethod
    def from_data(cls, data: NetworkData, priors: PriorSpec, model_config: ModelConfig) -> "PosteriorTarget":
        s = data.exposure(model_config.n_hops)
        return cls(
            z=data.sources.z,
            s=s.s,
            x=data.covariates.x,
            y=data.outcomes.y.astype(float),
            priors=priors,
            eta_clamp=model_config.eta_clamp,
        )

    @property
    def n_vertices(self) -> int:
        return self.y.shape[0]

    @property
    def n_hops(self) -> int:
        return self.s.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.x.shape[1]

    def raw_eta(self, tau, gamma, beta, mu, eps) -> np.ndarray:
        return raw_predictor(tau, gamma, beta, mu, self.z, self.s, self.x, eps)

    def clamp(self, eta: np.ndarray) -> np.ndarray:
        return np.clip(eta, -self.eta_clamp, self.eta_clamp)

    def eta(self, tau, gamma, beta, mu, eps) -> np.ndarray:
        return self.clamp(self.raw_eta(tau, gamma, beta, mu, eps))

    def vertex_terms(self, eta: np.ndarray) -> np.ndarray:
        """Per-vertex log-likelihood without the log y! constant."""
        return self.y * eta - np.exp(eta)

    def log_likelihood(self, state: ChainState) -> float:
        eta = self.eta(state.tau, state.gamma, state.beta, state.mu, state.eps)
        return float(self.vertex_terms(eta).sum()) - self.log_factorial

    def log_prior(self, state: ChainState) -> float:
        pr = self.priors
        if state.tau < 0 or np.any(state.gamma < 0) or np.any(state.gamma > 1) or state.sigma2 <= 0:
            return -math.inf
        value = stats.halfnorm.logpdf(state.tau, scale=pr.tau_scale)
        value += np.sum(stats.norm.logpdf(state.beta, scale=pr.beta_scale))
        value += stats.norm.logpdf(state.mu, scale=pr.mu_scale)
        value += stats.invgamma.logpdf(state.sigma2, pr.sigma2_shape, scale=pr.sigma2_scale)
        value += np.sum(stats.norm.logpdf(state.eps, scale=math.sqrt(state.sigma2)))
        return float(value)

    def log_density(self, state: ChainState) -> float:
        prior = self.log_prior(state)
        if prior == -math.inf:
            return prior
        return self.log_likelihood(state) + prior


def log_posterior(
    p: ModelParams,
    eps: LatentEffects,
    data: NetworkData,
    priors: Optional[PriorSpec] = None,
    model_config: Optional[ModelConfig] = None,
) -> float:
    """Log-likelihood plus log prior densities; -inf outside the support."""
    priors = priors or PriorSpec()
    model_config = model_config or ModelConfig(n_hops=p.n_hops)
    if eps.eps.shape[0] != data.n_vertices:
        raise InputDataError(f"eps has {eps.eps.shape[0]} entries for {data.n_vertices} vertices")
    target = PosteriorTarget.from_data(data, priors, model_config)
    state = ChainState(
        tau=p.tau,
        gamma=p.gamma_array,
        beta=p.beta_array,
        mu=p.mu,
        eps=eps.eps,
        sigma2=p.sigma_eps ** 2,
    )
    return target.log_density(state)


def _metropolis_accept(delta: float, rng: np.random.Generator) -> bool:
    u = rng.random()
    return delta >= 0 or u < math.exp(delta)


def gibbs_sweep(
    state: ChainState,
    target: PosteriorTarget,
    scales: ProposalScales,
    rng: np.random.Generator,
) -> tuple[ChainState, dict[str, np.ndarray]]:
    """
    One full Metropolis-within-Gibbs sweep.

    Returns:
        tuple: (new state, accept flags keyed tau/gamma/beta/mu/eps)
    """
    state = state.copy()
    pr = target.priors
    eta = target.eta(state.tau, state.gamma, state.beta, state.mu, state.eps)
    loglik = float(target.vertex_terms(eta).sum())

    def propose(update, log_prior_change):
        nonlocal eta, loglik
        candidate = target.eta(*update, state.eps)
        candidate_loglik = float(target.vertex_terms(candidate).sum())
        if _metropolis_accept(candidate_loglik - loglik + log_prior_change, rng):
            eta, loglik = candidate, candidate_loglik
            return True
        return False

    flags: dict[str, np.ndarray] = {}

    # tau, truncated at 0
    proposal = state.tau + scales.tau * rng.standard_normal()
    if proposal >= 0:
        tau_prior = stats.halfnorm(scale=pr.tau_scale)
        change = float(tau_prior.logpdf(proposal) - tau_prior.logpdf(state.tau))
        accepted = propose((proposal, state.gamma, state.beta, state.mu), change)
    else:
        rng.random()
        accepted = False
    if accepted:
        state.tau = proposal
    flags["tau"] = np.array([accepted])

    gamma_flags = np.zeros(target.n_hops, dtype=bool)
    for k in range(target.n_hops):
        proposal = state.gamma[k] + scales.gamma[k] * rng.standard_normal()
        if 0.0 <= proposal <= 1.0:
            gamma = state.gamma.copy()
            gamma[k] = proposal
            if propose((state.tau, gamma, state.beta, state.mu), 0.0):
                state.gamma = gamma
                gamma_flags[k] = True
        else:
            rng.random()
    flags["gamma"] = gamma_flags

    beta_prior = stats.norm(scale=pr.beta_scale)
    beta_flags = np.zeros(target.n_covariates, dtype=bool)
    for j in range(target.n_covariates):
        proposal = state.beta[j] + scales.beta[j] * rng.standard_normal()
        beta = state.beta.copy()
        beta[j] = proposal
        change = float(beta_prior.logpdf(proposal) - beta_prior.logpdf(state.beta[j]))
        if propose((state.tau, state.gamma, beta, state.mu), change):
            state.beta = beta
            beta_flags[j] = True
    flags["beta"] = beta_flags

    proposal = state.mu + scales.mu * rng.standard_normal()
    mu_prior = stats.norm(scale=pr.mu_scale)
    change = float(mu_prior.logpdf(proposal) - mu_prior.logpdf(state.mu))
    accepted = propose((state.tau, state.gamma, state.beta, proposal), change)
    if accepted:
        state.mu = proposal
    flags["mu"] = np.array([accepted])

    # eps_i are conditionally independent given everything else
    raw = target.raw_eta(state.tau, state.gamma, state.beta, state.mu, None)
    eps_proposal = state.eps + scales.eps * rng.standard_normal(target.n_vertices)
    sigma = math.sqrt(state.sigma2)
    delta = (
        target.vertex_terms(target.clamp(raw + eps_proposal))
        - target.vertex_terms(target.clamp(raw + state.eps))
        + stats.norm.logpdf(eps_proposal, scale=sigma)
        - stats.norm.logpdf(state.eps, scale=sigma)
    )
    u = rng.random(target.n_vertices)
    eps_flags = (delta >= 0) | (u < np.exp(np.minimum(delta, 0.0)))
    state.eps = np.where(eps_flags, eps_proposal, state.eps)
    flags["eps"] = eps_flags

    shape = pr.sigma2_shape + 0.5 * target.n_vertices
    scale = pr.sigma2_scale + 0.5 * float(np.sum(state.eps ** 2))
    state.sigma2 = scale / rng.gamma(shape)

    return state, flags


def _initial_state(target: PosteriorTarget, config: McmcConfig, rng: np.random.Generator) -> ChainState:
    pr = target.priors
    c = config.init_scale
    for attempt in range(1, _INIT_RETRIES + 1):
        sigma2 = pr.sigma2_scale / rng.gamma(pr.sigma2_shape)
        state = ChainState(
            tau=abs(rng.normal(0.0, pr.tau_scale * c)),
            gamma=rng.uniform(0.0, 1.0, size=target.n_hops),
            beta=rng.normal(0.0, pr.beta_scale * c, size=target.n_covariates),
            mu=rng.normal(0.0, pr.mu_scale * c),
            eps=rng.normal(0.0, math.sqrt(sigma2) * c, size=target.n_vertices),
            sigma2=sigma2,
        )
        if math.isfinite(target.log_density(state)):
            return state
        logger.debug(f"Initial state attempt {attempt} has non-finite posterior")
    raise SamplerInitializationError(f"Non-finite posterior at initialization after {_INIT_RETRIES} retries")


@dataclass
class ChainResult:
    tau: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    mu: np.ndarray
    sigma_eps: np.ndarray
    eps: np.ndarray
    accepted: dict[str, np.ndarray]


def _adapt_scales(scales: ProposalScales, window: dict[str, np.ndarray], config: McmcConfig) -> None:
    """Scale x1.1 where the window acceptance beat the target, x0.9 elsewhere; resets the window."""
    factors = {
        name: np.where(counts / config.adapt_interval > config.target_accept, 1.1, 0.9)
        for name, counts in window.items()
    }
    scales.tau *= float(factors["tau"][0])
    scales.mu *= float(factors["mu"][0])
    scales.gamma = scales.gamma * factors["gamma"]
    scales.beta = scales.beta * factors["beta"]
    scales.eps = scales.eps * factors["eps"]
    for counts in window.values():
        counts[:] = 0.0


def _run_chain(chain: int, target: PosteriorTarget, config: McmcConfig) -> ChainResult:
    rng = np.random.default_rng(config.seed + chain)
    state = _initial_state(target, config, rng)
    scales = ProposalScales.uniform(config.initial_scale, target.n_hops, target.n_covariates, target.n_vertices)

    n_keep = config.draws_per_chain
    result = ChainResult(
        tau=np.empty(n_keep),
        gamma=np.empty((n_keep, target.n_hops)),
        beta=np.empty((n_keep, target.n_covariates)),
        mu=np.empty(n_keep),
        sigma_eps=np.empty(n_keep),
        eps=np.empty((n_keep, target.n_vertices)),
        accepted={},
    )
    window = {
        "tau": np.zeros(1),
        "gamma": np.zeros(target.n_hops),
        "beta": np.zeros(target.n_covariates),
        "mu": np.zeros(1),
        "eps": np.zeros(target.n_vertices),
    }
    totals = {name: np.zeros_like(value) for name, value in window.items()}

    iterations = tqdm(range(config.n_iters), desc=f"chain {chain}", position=chain,
                      disable=not config.progress, leave=False)
    kept = 0
    for it in iterations:
        state, flags = gibbs_sweep(state, target, scales, rng)
        if it < config.burn_in:
            for name, accepted in flags.items():
                window[name] += accepted
            if (it + 1) % config.adapt_interval == 0:
                _adapt_scales(scales, window, config)
            continue

        for name, accepted in flags.items():
            totals[name] += accepted
        if (it - config.burn_in) % config.thin == 0:
            result.tau[kept] = state.tau
            result.gamma[kept] = state.gamma
            result.beta[kept] = state.beta
            result.mu[kept] = state.mu
            result.sigma_eps[kept] = math.sqrt(state.sigma2)
            result.eps[kept] = state.eps
            kept += 1

    n_post = config.n_iters - config.burn_in
    result.accepted = {name: value / n_post for name, value in totals.items()}
    return result


@dataclass
class PosteriorSamples:
    """
    Retained draws per chain. Arrays are shaped (chains, draws[, dim]);
    eps is None when samples were loaded from a posterior CSV.
    """

    tau: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    mu: np.ndarray
    sigma_eps: np.ndarray
    eps: Optional[np.ndarray] = None
    acceptance_rates: dict[str, float] = field(default_factory=dict)
    config: Optional[McmcConfig] = None

    def __post_init__(self):
        if self.tau.ndim != 2:
            raise InputDataError("Posterior draws must be shaped (chains, draws)")

    @property
    def n_chains(self) -> int:
        return self.tau.shape[0]

    @property
    def draws_per_chain(self) -> int:
        return self.tau.shape[1]

    @property
    def n_draws(self) -> int:
        return self.tau.size

    @property
    def n_hops(self) -> int:
        return self.gamma.shape[2]

    @property
    def n_covariates(self) -> int:
        return self.beta.shape[2]

    def parameter_names(self) -> list[str]:
        return parameter_names(self.n_hops, self.n_covariates) + ["sigma_eps"]

    def by_parameter(self) -> dict[str, np.ndarray]:
        """(chains, draws) array for every scalar parameter."""
        columns = {"tau": self.tau}
        for k in range(self.n_hops):
            columns[f"gamma_{k + 1}"] = self.gamma[:, :, k]
        for j in range(self.n_covariates):
            columns[f"beta_{j + 1}"] = self.beta[:, :, j]
        columns["mu"] = self.mu
        columns["sigma_eps"] = self.sigma_eps
        return columns

    def flat(self) -> dict[str, np.ndarray]:
        """Draws pooled over chains, in chain-major order."""
        return {
            "tau": self.tau.reshape(-1),
            "gamma": self.gamma.reshape(-1, self.n_hops),
            "beta": self.beta.reshape(-1, self.n_covariates),
            "mu": self.mu.reshape(-1),
            "sigma_eps": self.sigma_eps.reshape(-1),
        }

    def draw(self, chain: int, index: int) -> tuple[ModelParams, Optional[LatentEffects]]:
        p = ModelParams(
            tau=float(self.tau[chain, index]),
            gamma=self.gamma[chain, index].tolist(),
            beta=self.beta[chain, index].tolist(),
            mu=float(self.mu[chain, index]),
            sigma_eps=float(self.sigma_eps[chain, index]),
        )
        eps = LatentEffects(self.eps[chain, index]) if self.eps is not None else None
        return p, eps

    def iter_draws(self):
        for chain in range(self.n_chains):
            for index in range(self.draws_per_chain):
                yield self.draw(chain, index)

    def posterior_mean(self) -> ModelParams:
        flat = self.flat()
        return ModelParams(
            tau=float(flat["tau"].mean()),
            gamma=np.clip(flat["gamma"].mean(axis=0), 0.0, 1.0).tolist(),
            beta=flat["beta"].mean(axis=0).tolist(),
            mu=float(flat["mu"].mean()),
            sigma_eps=float(flat["sigma_eps"].mean()),
        )


def _acceptance_summary(results: list[ChainResult], n_hops: int, n_covariates: int) -> dict[str, float]:
    pooled = {name: np.mean([r.accepted[name] for r in results], axis=0) for name in results[0].accepted}
    rates = {"tau": float(pooled["tau"][0])}
    for k in range(n_hops):
        rates[f"gamma_{k + 1}"] = float(pooled["gamma"][k])
    for j in range(n_covariates):
        rates[f"beta_{j + 1}"] = float(pooled["beta"][j])
    rates["mu"] = float(pooled["mu"][0])
    rates["eps"] = float(np.mean(pooled["eps"])) if pooled["eps"].size else 1.0
    return rates


def fit(
    data: NetworkData,
    priors: Optional[PriorSpec] = None,
    config: Optional[McmcConfig] = None,
    model_config: Optional[ModelConfig] = None,
) -> PosteriorSamples:
    """
    Run independent Metropolis-within-Gibbs chains and keep thinned
    post-burn-in draws.

    Args:
        data: Graph, sources, covariates and outcomes
        priors: Prior hyperparameters
        config: Chain count, lengths, seed and adaptation target
        model_config: Number of hops and predictor clamp

    Returns:
        PosteriorSamples: Draws merged in chain order
    """
    priors = priors or PriorSpec()
    config = config or McmcConfig()
    model_config = model_config or ModelConfig()
    target = PosteriorTarget.from_data(data, priors, model_config)

    logger.info(
        f"Sampling {config.n_chains} chain(s) x {config.n_iters} iterations "
        f"(burn-in {config.burn_in}, thin {config.thin}) on {data.n_vertices} vertices"
    )
    results = Parallel(n_jobs=config.n_jobs)(
        delayed(_run_chain)(chain, target, config) for chain in range(config.n_chains)
    )

    samples = PosteriorSamples(
        tau=np.stack([r.tau for r in results]),
        gamma=np.stack([r.gamma for r in results]),
        beta=np.stack([r.beta for r in results]),
        mu=np.stack([r.mu for r in results]),
        sigma_eps=np.stack([r.sigma_eps for r in results]),
        eps=np.stack([r.eps for r in results]),
        acceptance_rates=_acceptance_summary(results, target.n_hops, target.n_covariates),
        config=config,
    )
    logger.info(f"Retained {samples.n_draws} draws; acceptance {samples.acceptance_rates}")
    return samples


class ParameterSummary(BaseModel):
    mean: float
    sd: float
    q05: float
    q95: float
    rhat: Optional[float] = None
    ess: float
    zero_variance: bool = False
    flagged: bool = False
    acceptance_rate: Optional[float] = None


class DiagnosticsSummary(BaseModel):
    n_chains: int
    draws_per_chain: int
    rhat_threshold: float
    parameters: dict[str, ParameterSummary]
    acceptance_rates: dict[str, float]
    notices: list[str] = Field(default_factory=list)

    @property
    def max_rhat(self) -> Optional[float]:
        values = [p.rhat for p in self.parameters.values() if p.rhat is not None]
        return max(values) if values else None

    @property
    def flagged(self) -> list[str]:
        return [name for name, p in self.parameters.items() if p.flagged]


def split_rhat(chains: np.ndarray) -> tuple[float, bool]:
    """
    Split-R-hat of a (chains, draws) array.

    Returns:
        tuple: (R-hat, zero within-chain variance flag); R-hat is 1.0 when
        every split chain is constant at the same value
    """
    half = chains.shape[1] // 2
    splits = np.concatenate([chains[:, :half], chains[:, chains.shape[1] - half:]], axis=0)
    within = float(np.mean(np.var(splits, axis=1, ddof=1)))
    between = half * float(np.var(np.mean(splits, axis=1), ddof=1))
    if within <= 0.0:
        return (1.0 if between <= 0.0 else math.inf), True
    var_plus = (half - 1) / half * within + between / half
    return math.sqrt(var_plus / within), False


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    centered = x - x.mean()
    spectrum = np.fft.rfft(centered, n=2 * n)
    return np.fft.irfft(spectrum * np.conj(spectrum))[:n] / n


def effective_sample_size(chains: np.ndarray) -> float:
    """Multi-chain ESS with Geyer's initial positive sequence."""
    n_chains, n = chains.shape
    total = n_chains * n
    if n < 4:
        return float(total)
    acov = np.array([_autocovariance(c) for c in chains])
    within = float(np.mean(acov[:, 0] * n / (n - 1)))
    between = float(np.var(chains.mean(axis=1), ddof=1)) if n_chains > 1 else 0.0
    var_plus = within * (n - 1) / n + between
    if var_plus <= 0.0:
        return float(total)
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    pair_sum = 0.0
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair_sum += pair
        t += 2
    tau_hat = max(-1.0 + 2.0 * pair_sum, 1.0 / math.log10(max(total, 10)))
    return float(total / tau_hat)


def diagnostics(samples: PosteriorSamples, rhat_threshold: float = 1.05) -> DiagnosticsSummary:
    """Posterior means, sds, 90% intervals, split-R-hat, ESS and acceptance rates."""
    notices = []
    compute_rhat = samples.n_chains >= 2 and samples.draws_per_chain >= 4
    if not compute_rhat:
        notice = (
            "R-hat omitted: at least 2 chains are required"
            if samples.n_chains < 2
            else "R-hat omitted: fewer than 4 draws per chain"
        )
        notices.append(notice)
        logger.info(notice)

    summaries = {}
    for name, chains in samples.by_parameter().items():
        values = chains.reshape(-1)
        rhat, zero_variance = split_rhat(chains) if compute_rhat else (None, bool(np.ptp(values) == 0))
        summaries[name] = ParameterSummary(
            mean=float(values.mean()),
            sd=float(values.std(ddof=1)) if values.size > 1 else 0.0,
            q05=float(np.quantile(values, 0.05)),
            q95=float(np.quantile(values, 0.95)),
            rhat=rhat,
            ess=effective_sample_size(chains),
            zero_variance=zero_variance,
            flagged=rhat is not None and rhat > rhat_threshold,
            acceptance_rate=samples.acceptance_rates.get(name),
        )

    summary = DiagnosticsSummary(
        n_chains=samples.n_chains,
        draws_per_chain=samples.draws_per_chain,
        rhat_threshold=rhat_threshold,
        parameters=summaries,
        acceptance_rates=samples.acceptance_rates,
        notices=notices,
    )
    if summary.flagged:
        logger.warning(f"R-hat above {rhat_threshold} for: {', '.join(summary.flagged)}")
    return summary
