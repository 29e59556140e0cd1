"""
Fisher information and Cramer-Rao lower bounds for the outcome model.

For one hop and one scalar covariate (eps = 0) the information matrix in
parameter order (tau, gamma_1, beta, mu) is

    F = sum_i lambda_i g_i g_i^T,   g_i = (phi_i, tau s_i, x_i, 1),
    phi_i = Z_i + gamma_1 s_i.

Other designs use the same outer product with the full predictor Jacobian.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.core.errors import InputDataError, SingularDesignError, UnsupportedConfigurationError
from src.core.exposure import ExposureTensor
from src.core.graph import SourceVector
from src.core.outcome_model import (
    ModelConfig,
    ModelParams,
    expected_outcomes,
    linear_predictor,
    parameter_names,
    predictor_jacobian,
)

logger = logging.getLogger(__name__)

SINGULAR_CONDITION = 1e12


@dataclass(frozen=True)
class FisherInfo:
    matrix: np.ndarray
    phi: np.ndarray
    lambdas: np.ndarray
    parameter_names: tuple[str, ...] = ("tau", "gamma_1", "beta_1", "mu")

    def __post_init__(self):
        f = self.matrix
        if f.ndim != 2 or f.shape[0] != f.shape[1] or f.shape[0] != len(self.parameter_names):
            raise InputDataError(f"Fisher matrix shape {f.shape} does not match parameters")

    @property
    def f11(self) -> float:
        return float(self.matrix[0, 0])

    @property
    def f22(self) -> float:
        return float(self.matrix[1, 1])

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "FisherInfo":
        """Wrap a bare 4x4 matrix, e.g. for fixtures."""
        return cls(matrix=np.asarray(matrix, dtype=float), phi=np.empty(0), lambdas=np.empty(0))


@dataclass(frozen=True)
class CrlbResult:
    covariance_bound: np.ndarray
    condition_number: float
    f11: float
    f22: float
    ridge: float
    parameter_names: tuple[str, ...]

    def standard_errors(self) -> dict[str, float]:
        return {
            name: float(np.sqrt(max(v, 0.0)))
            for name, v in zip(self.parameter_names, np.diag(self.covariance_bound))
        }


@dataclass(frozen=True)
class DesignDiagnostics:
    f11: float
    f22: float
    floor: float
    flags: tuple[str, ...]

    @property
    def weak(self) -> bool:
        return bool(self.flags)


def _scalar_covariate(x) -> np.ndarray:
    x = np.asarray(getattr(x, "x", x), dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise UnsupportedConfigurationError(
                f"Closed-form Fisher information needs one covariate, got {x.shape[1]}; "
                "use fisher_information_general for multi-covariate designs"
            )
        x = x[:, 0]
    return x


def fisher_information(p: ModelParams, z: SourceVector, s1: np.ndarray, x) -> FisherInfo:
    """
    Closed-form Fisher information of the 1-hop, scalar-covariate model.

    Args:
        p: Parameters with one gamma and one beta
        z: Source vector
        s1: 1-hop log-exposure s^(1)
        x: Scalar covariate per vertex (vector or N x 1 matrix)

    Returns:
        FisherInfo: F in order (tau, gamma_1, beta, mu), phi and lambda
    """
    if p.n_hops != 1 or p.n_covariates != 1:
        raise UnsupportedConfigurationError(
            f"Closed-form Fisher information needs 1 hop and 1 covariate "
            f"(got {p.n_hops} hop(s), {p.n_covariates} covariate(s)); "
            "use fisher_information_general instead"
        )
    x = _scalar_covariate(x)
    s1 = np.asarray(s1, dtype=float)
    if s1.ndim != 1:
        raise UnsupportedConfigurationError("Closed-form Fisher information needs a single exposure hop")
    if s1.shape[0] != len(z) or x.shape[0] != len(z):
        raise InputDataError(f"Dimension mismatch: z={len(z)}, s={s1.shape[0]}, x={x.shape[0]}")

    tau, gamma1 = p.tau, p.gamma[0]
    lam = expected_outcomes(
        linear_predictor(p, z, ExposureTensor(s1[None, :]), x.reshape(-1, 1), None, ModelConfig(n_hops=1))
    )
    phi = z.z + gamma1 * s1
    ts = tau * s1

    f = np.empty((4, 4))
    f[0, 0] = np.sum(lam * phi ** 2)
    f[0, 1] = np.sum(lam * phi * ts)
    f[0, 2] = np.sum(lam * phi * x)
    f[0, 3] = np.sum(lam * phi)
    f[1, 1] = np.sum(lam * ts ** 2)
    f[1, 2] = np.sum(lam * ts * x)
    f[1, 3] = np.sum(lam * ts)
    f[2, 2] = np.sum(lam * x ** 2)
    f[2, 3] = np.sum(lam * x)
    f[3, 3] = np.sum(lam)
    lower = np.tril_indices(4, -1)
    f[lower] = f.T[lower]
    return FisherInfo(matrix=f, phi=phi, lambdas=lam)


def outer_product_information(jacobian: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """sum_i lambda_i J_i J_i^T."""
    return (jacobian * lambdas[:, None]).T @ jacobian


def fisher_information_general(p: ModelParams, z: SourceVector, s: ExposureTensor, x) -> FisherInfo:
    """Fisher information for any number of hops and covariates (eps = 0)."""
    jacobian = predictor_jacobian(p, z, s, x)
    lam = expected_outcomes(linear_predictor(p, z, s, x, None, ModelConfig(n_hops=p.n_hops)))
    return FisherInfo(
        matrix=outer_product_information(jacobian, lam),
        phi=jacobian[:, 0],
        lambdas=lam,
        parameter_names=tuple(parameter_names(p.n_hops, p.n_covariates)),
    )


def partition_information(p: ModelParams, z: SourceVector, s1: np.ndarray, x,
                          blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Sum of closed-form F over vertex blocks; equals F of the union for a partition."""
    x = _scalar_covariate(x)
    s1 = np.asarray(s1, dtype=float)
    total = np.zeros((4, 4))
    for block in blocks:
        block = np.asarray(block)
        total += fisher_information(p, SourceVector(z.z[block]), s1[block], x[block]).matrix
    return total


def _deficient_directions(matrix: np.ndarray, names: Sequence[str]) -> list[str]:
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    largest = max(float(np.abs(eigenvalues).max()), np.finfo(float).tiny)
    directions = []
    for value, vector in zip(eigenvalues, eigenvectors.T):
        if abs(value) <= largest / SINGULAR_CONDITION:
            terms = [f"{c:+.3f}*{name}" for c, name in zip(vector, names) if abs(c) > 1e-3]
            directions.append(" ".join(terms))
    return directions


def crlb(f: FisherInfo, ridge: float = 0.0) -> CrlbResult:
    """
    Cramer-Rao lower bound F^-1 (or (F + ridge I)^-1).

    Raises:
        SingularDesignError: when the condition number exceeds 1e12
    """
    if ridge < 0:
        raise InputDataError(f"Ridge must be nonnegative, got {ridge}")
    matrix = f.matrix + ridge * np.eye(f.matrix.shape[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        condition = float(np.linalg.cond(matrix))
    if not np.isfinite(condition) or condition > SINGULAR_CONDITION:
        directions = _deficient_directions(matrix, f.parameter_names)
        logger.error(f"Singular design (condition number {condition:.3e}); deficient directions: {directions}")
        raise SingularDesignError(
            f"Fisher information is singular (condition number {condition:.3e}); "
            f"deficient directions: {'; '.join(directions) or 'unknown'}",
            condition_number=condition,
            directions=directions,
        )
    bound = np.linalg.inv(matrix)
    bound = 0.5 * (bound + bound.T)
    return CrlbResult(
        covariance_bound=bound,
        condition_number=condition,
        f11=f.f11,
        f22=f.f22,
        ridge=ridge,
        parameter_names=f.parameter_names,
    )


def design_diagnostics(f: FisherInfo, floor: float = 1e-6) -> DesignDiagnostics:
    """F11 and F22, the information on tau and gamma_1, with weak-design flags."""
    flags = []
    if f.f11 < floor:
        flags.append(f"F11 below {floor:g}: little information on tau")
    if f.f22 < floor:
        flags.append(f"F22 below {floor:g}: little information on gamma_1")
    for flag in flags:
        logger.warning(flag)
    return DesignDiagnostics(f11=f.f11, f22=f.f22, floor=floor, flags=tuple(flags))
