"""
Conditional Poisson GLM for the network potential outcomes.

    log lambda_i = tau Z_i + sum_n (tau prod_{k<=n} gamma_k) s^(n)_i
                   + beta^T x_i + mu + eps_i,    Y_i ~ Poisson(lambda_i)

Parameter vectors are ordered (tau, gamma_1..gamma_H, beta_1..beta_m, mu)
everywhere in this package.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import optimize
from scipy.special import gammaln

from src.config import DEFAULT_ETA_CLAMP
from src.core.errors import ConfigurationError, InputDataError
from src.core.exposure import ExposureTensor, exposure_profile
from src.core.graph import InfluenceGraph, SourceVector, build_influence_graph
from src.core.network_builder import CovariateMatrix, OutcomeVector

logger = logging.getLogger(__name__)

Covariates = Union[CovariateMatrix, np.ndarray]


class ModelParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    tau: float = Field(ge=0)
    gamma: list[float] = Field(min_length=1)
    beta: list[float] = Field(min_length=1)
    mu: float
    sigma_eps: float = Field(default=0.0, ge=0)

    @field_validator("tau", "mu", "sigma_eps")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("parameters must be finite")
        return value

    @field_validator("gamma")
    @classmethod
    def _unit_interval(cls, value: list[float]) -> list[float]:
        if any(not 0.0 <= g <= 1.0 for g in value):
            raise ValueError("each gamma_k must lie in [0, 1]")
        return value

    @field_validator("beta")
    @classmethod
    def _finite_beta(cls, value: list[float]) -> list[float]:
        if any(not math.isfinite(b) for b in value):
            raise ValueError("beta must be finite")
        return value

    @property
    def n_hops(self) -> int:
        return len(self.gamma)

    @property
    def n_covariates(self) -> int:
        return len(self.beta)

    @property
    def gamma_array(self) -> np.ndarray:
        return np.asarray(self.gamma, dtype=float)

    @property
    def beta_array(self) -> np.ndarray:
        return np.asarray(self.beta, dtype=float)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.tau], self.gamma_array, self.beta_array, [self.mu]])

    @classmethod
    def from_vector(cls, theta: np.ndarray, n_hops: int, sigma_eps: float = 0.0) -> "ModelParams":
        theta = np.asarray(theta, dtype=float)
        return cls(
            tau=float(theta[0]),
            gamma=[float(g) for g in theta[1:1 + n_hops]],
            beta=[float(b) for b in theta[1 + n_hops:-1]],
            mu=float(theta[-1]),
            sigma_eps=sigma_eps,
        )


def parameter_names(n_hops: int, n_covariates: int) -> list[str]:
    return (
        ["tau"]
        + [f"gamma_{k}" for k in range(1, n_hops + 1)]
        + [f"beta_{j}" for j in range(1, n_covariates + 1)]
        + ["mu"]
    )


@dataclass(frozen=True)
class LatentEffects:
    eps: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.eps).all():
            raise InputDataError("Latent effects must be finite")


class ModelConfig(BaseModel):
    n_hops: int = Field(default=1, ge=1)
    eta_clamp: float = Field(default=DEFAULT_ETA_CLAMP, gt=0)


@dataclass(frozen=True)
class NetworkData:
    """Graph, observed sources, covariates and outcomes of one narrative."""

    graph: InfluenceGraph
    sources: SourceVector
    covariates: CovariateMatrix
    outcomes: OutcomeVector

    def __post_init__(self):
        n = self.graph.n_vertices
        sizes = {
            "sources": len(self.sources),
            "covariates": self.covariates.x.shape[0],
            "outcomes": len(self.outcomes),
        }
        mismatched = {k: v for k, v in sizes.items() if v != n}
        if mismatched:
            raise InputDataError(f"Dimension mismatch with {n} vertices: {mismatched}")

    @property
    def n_vertices(self) -> int:
        return self.graph.n_vertices

    def exposure(self, n_hops: int) -> ExposureTensor:
        return exposure_profile(self.graph, self.sources, n_hops)


def _design(x: Covariates) -> np.ndarray:
    matrix = x.x if isinstance(x, CovariateMatrix) else np.asarray(x, dtype=float)
    return matrix.reshape(-1, 1) if matrix.ndim == 1 else matrix


def _check_dimensions(p: ModelParams, z: SourceVector, s: ExposureTensor, x: np.ndarray,
                      eps: Optional[np.ndarray] = None) -> None:
    n = len(z)
    if s.n_vertices != n or x.shape[0] != n or (eps is not None and eps.shape[0] != n):
        raise InputDataError(
            f"Dimension mismatch: z={n}, s={s.n_vertices}, x={x.shape[0]}"
            + (f", eps={eps.shape[0]}" if eps is not None else "")
        )
    if s.n_hops != p.n_hops:
        raise InputDataError(f"Exposure has {s.n_hops} hop(s) but gamma has {p.n_hops}")
    if x.shape[1] != p.n_covariates:
        raise InputDataError(f"Covariates have {x.shape[1]} column(s) but beta has {p.n_covariates}")


def hop_coefficients(tau: float, gamma: np.ndarray) -> np.ndarray:
    """tau * prod_{k<=n} gamma_k for n = 1..H."""
    return tau * np.cumprod(gamma)


def raw_predictor(tau: float, gamma: np.ndarray, beta: np.ndarray, mu: float,
                  z: np.ndarray, s: np.ndarray, x: np.ndarray, eps: Optional[np.ndarray] = None) -> np.ndarray:
    """Unclamped eta on plain arrays; s has shape (H, N)."""
    eta = tau * z + hop_coefficients(tau, gamma) @ s + x @ beta + mu
    if eps is not None:
        eta = eta + eps
    return eta


def clamp_predictor(eta: np.ndarray, eta_clamp: float) -> tuple[np.ndarray, int]:
    clamped = np.clip(eta, -eta_clamp, eta_clamp)
    return clamped, int(np.count_nonzero(clamped != eta))


def linear_predictor(
    p: ModelParams,
    z: SourceVector,
    s: ExposureTensor,
    x: Covariates,
    eps: Optional[LatentEffects] = None,
    config: Optional[ModelConfig] = None,
) -> np.ndarray:
    """eta_i clamped to [-eta_clamp, eta_clamp]."""
    config = config or ModelConfig(n_hops=p.n_hops)
    x = _design(x)
    eps_values = eps.eps if eps is not None else None
    _check_dimensions(p, z, s, x, eps_values)

    eta = raw_predictor(p.tau, p.gamma_array, p.beta_array, p.mu, z.z, s.s, x, eps_values)
    eta, n_clamped = clamp_predictor(eta, config.eta_clamp)
    if n_clamped:
        logger.warning(f"Clamped {n_clamped} linear predictor value(s) to +/-{config.eta_clamp}")
    return eta


def expected_outcomes(eta: np.ndarray) -> np.ndarray:
    """lambda = exp(eta)."""
    eta = np.asarray(eta, dtype=float)
    if not np.isfinite(eta).all():
        raise InputDataError("Linear predictor must be finite")
    return np.exp(eta)


def poisson_log_likelihood(eta: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(y * eta - np.exp(eta) - gammaln(y + 1.0)))


def log_likelihood(
    p: ModelParams,
    eps: Optional[LatentEffects],
    z: SourceVector,
    s: ExposureTensor,
    x: Covariates,
    y: OutcomeVector,
    config: Optional[ModelConfig] = None,
) -> float:
    """sum_i (y_i eta_i - exp(eta_i) - log y_i!)."""
    if len(y) != len(z):
        raise InputDataError(f"Outcome length {len(y)} does not match {len(z)} vertices")
    eta = linear_predictor(p, z, s, x, eps, config)
    return poisson_log_likelihood(eta, y.y)


def predictor_jacobian(p: ModelParams, z: SourceVector, s: ExposureTensor, x: Covariates) -> np.ndarray:
    """
    d eta_i / d theta as an N x P matrix, theta = (tau, gamma, beta, mu).

    The tau column is z_i + sum_n (prod_{k<=n} gamma_k) s^(n)_i, which is
    phi_i = Z_i + gamma_1 s^(1)_i for a single hop.
    """
    x = _design(x)
    _check_dimensions(p, z, s, x)
    gamma = p.gamma_array
    n_hops = p.n_hops
    columns = [z.z + np.cumprod(gamma) @ s.s]
    for k in range(n_hops):
        others = gamma.copy()
        others[k] = 1.0
        # gamma_k appears in every hop n >= k
        weights = p.tau * np.cumprod(others)
        weights[:k] = 0.0
        columns.append(weights @ s.s)
    columns.extend(x.T)
    columns.append(np.ones(len(z)))
    return np.column_stack(columns)


def log_likelihood_gradient(
    p: ModelParams,
    eps: Optional[LatentEffects],
    z: SourceVector,
    s: ExposureTensor,
    x: Covariates,
    y: OutcomeVector,
    config: Optional[ModelConfig] = None,
) -> np.ndarray:
    """Analytic d loglik / d theta; clamped vertices contribute nothing."""
    config = config or ModelConfig(n_hops=p.n_hops)
    design = _design(x)
    eps_values = eps.eps if eps is not None else None
    _check_dimensions(p, z, s, design, eps_values)
    eta = raw_predictor(p.tau, p.gamma_array, p.beta_array, p.mu, z.z, s.s, design, eps_values)
    inside = np.abs(eta) < config.eta_clamp
    residual = np.where(inside, y.y - np.exp(np.clip(eta, -config.eta_clamp, config.eta_clamp)), 0.0)
    return predictor_jacobian(p, z, s, design).T @ residual


def simulate_outcomes(
    p: ModelParams,
    g: InfluenceGraph,
    z: SourceVector,
    x: Covariates,
    config: Optional[ModelConfig] = None,
    rng_seed: Optional[int] = None,
) -> tuple[OutcomeVector, LatentEffects]:
    """Draw eps ~ N(0, sigma_eps^2) and y ~ Poisson(lambda)."""
    config = config or ModelConfig(n_hops=p.n_hops)
    rng = np.random.default_rng(rng_seed)
    s = exposure_profile(g, z, config.n_hops)
    eps = LatentEffects(rng.normal(0.0, p.sigma_eps, size=g.n_vertices))
    lam = expected_outcomes(linear_predictor(p, z, s, x, eps, config))
    return OutcomeVector(rng.poisson(lam)), eps


def simulate_graph(n: int, mean_out_degree: float, weight_max: int = 1,
                   rng_seed: Optional[int] = None) -> InfluenceGraph:
    """
    Directed Erdos-Renyi graph with edge probability mean_out_degree / (n - 1)
    and integer weights uniform on {1..weight_max}.
    """
    if n < 1:
        raise ConfigurationError(f"Graph size must be >= 1, got {n}")
    if weight_max < 1:
        raise ConfigurationError(f"weight_max must be >= 1, got {weight_max}")
    width = len(str(n - 1))
    vertex_ids = [f"v{i:0{width}d}" for i in range(n)]
    if n == 1:
        return build_influence_graph([], vertices=vertex_ids)

    prob = mean_out_degree / (n - 1)
    if not 0.0 <= prob <= 1.0:
        raise ConfigurationError(f"Edge probability {prob} outside [0, 1]")

    rng = np.random.default_rng(rng_seed)
    edges = []
    for i in range(n):
        k = rng.binomial(n - 1, prob)
        targets = rng.choice(n - 1, size=k, replace=False)
        targets = targets + (targets >= i)
        weights = rng.integers(1, weight_max + 1, size=k)
        edges.extend((vertex_ids[i], vertex_ids[j], float(w)) for j, w in zip(targets, weights))
    return build_influence_graph(edges, vertices=vertex_ids)


def fit_maximum_likelihood(data: NetworkData, config: Optional[ModelConfig] = None) -> ModelParams:
    """
    Maximum-likelihood (tau, gamma, beta, mu) with eps = 0, by bounded
    L-BFGS-B on the negative log-likelihood.
    """
    config = config or ModelConfig()
    s = data.exposure(config.n_hops)
    x = data.covariates.x
    y = data.outcomes.y
    n_hops, m = config.n_hops, x.shape[1]

    def unpack(theta: np.ndarray) -> ModelParams:
        return ModelParams.from_vector(np.clip(theta, lower, upper), n_hops)

    def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
        p = unpack(theta)
        eta = raw_predictor(p.tau, p.gamma_array, p.beta_array, p.mu, data.sources.z, s.s, x)
        eta = np.clip(eta, -config.eta_clamp, config.eta_clamp)
        value = -float(np.sum(y * eta - np.exp(eta)))
        grad = -log_likelihood_gradient(p, None, data.sources, s, x, data.outcomes, config)
        return value, grad

    lower = np.array([0.0] + [0.0] * n_hops + [-np.inf] * m + [-np.inf])
    upper = np.array([np.inf] + [1.0] * n_hops + [np.inf] * m + [np.inf])
    start = np.concatenate([[0.5], np.full(n_hops, 0.5), np.zeros(m), [math.log(y.mean() + 0.5)]])
    bounds = [(lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None) for lo, hi in zip(lower, upper)]

    result = optimize.minimize(objective, start, jac=True, method="L-BFGS-B", bounds=bounds)
    if not result.success:
        logger.warning(f"Maximum-likelihood fit stopped early: {result.message}")
    return unpack(result.x)
