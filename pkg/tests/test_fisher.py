import math

import numpy as np
import pytest

from src.core.errors import SingularDesignError, UnsupportedConfigurationError
from src.core.exposure import exposure_profile
from src.core.fisher import (
    FisherInfo,
    crlb,
    design_diagnostics,
    fisher_information,
    fisher_information_general,
    outer_product_information,
    partition_information,
)
from src.core.graph import SourceVector, build_influence_graph
from src.core.outcome_model import ModelParams, predictor_jacobian, raw_predictor
from tests.conftest import random_graph


def _params(tau=0.5, gamma=0.5, beta=0.0, mu=0.0) -> ModelParams:
    return ModelParams(tau=tau, gamma=[gamma], beta=[beta], mu=mu)


def _random_design(rng, n):
    g = random_graph(rng, n, density=0.15)
    z = SourceVector((rng.random(n) < 0.3).astype(float))
    x = rng.normal(size=n)
    p = _params(tau=float(rng.uniform(0.2, 1.0)), gamma=float(rng.uniform(0.2, 0.8)),
                beta=float(rng.uniform(-0.3, 0.3)), mu=float(rng.uniform(-1.0, 0.5)))
    return p, z, exposure_profile(g, z, 1), x


def test_single_vertex_without_signal_informs_only_mu():
    f = fisher_information(_params(mu=0.3), SourceVector([0.0]), np.array([0.0]), np.array([0.0]))
    expected = np.zeros((4, 4))
    expected[3, 3] = math.exp(0.3)
    np.testing.assert_allclose(f.matrix, expected)


def test_single_vertex_example():
    f = fisher_information(_params(), SourceVector([1.0]), np.array([1.0]), np.array([1.0]))
    g = np.array([1.5, 0.5, 1.0, 1.0])
    np.testing.assert_allclose(f.matrix, math.exp(0.75) * np.outer(g, g), rtol=1e-12)
    assert f.phi.tolist() == [1.5]

    with pytest.raises(SingularDesignError) as excinfo:
        crlb(f)
    assert excinfo.value.directions
    assert excinfo.value.condition_number > 1e12


@pytest.mark.parametrize("seed", range(5))
def test_closed_form_matches_the_jacobian_outer_product(seed):
    rng = np.random.default_rng(seed)
    p, z, s, x = _random_design(rng, int(rng.integers(5, 101)))
    closed = fisher_information(p, z, s.hop(1), x).matrix
    general = fisher_information_general(p, z, s, x.reshape(-1, 1))
    lam = general.lambdas
    np.testing.assert_allclose(closed, general.matrix, rtol=1e-12, atol=1e-12 * np.abs(closed).max())
    np.testing.assert_allclose(
        general.matrix, outer_product_information(predictor_jacobian(p, z, s, x.reshape(-1, 1)), lam)
    )

    assert np.allclose(closed, closed.T)
    assert np.linalg.eigvalsh(closed).min() > -1e-9 * np.abs(closed).max()


@pytest.mark.parametrize("seed", range(50))
def test_matches_the_hessian_of_the_expected_log_likelihood(seed):
    rng = np.random.default_rng(seed)
    p, z, s, x = _random_design(rng, 40)
    design = x.reshape(-1, 1)
    lam0 = np.exp(raw_predictor(p.tau, p.gamma_array, p.beta_array, p.mu, z.z, s.s, design))

    def gradient(theta):
        q = ModelParams.from_vector(theta, 1)
        eta = raw_predictor(q.tau, q.gamma_array, q.beta_array, q.mu, z.z, s.s, design)
        return predictor_jacobian(q, z, s, design).T @ (lam0 - np.exp(eta))

    theta = p.to_vector()
    h = 1e-6
    hessian = np.column_stack([
        (gradient(theta + h * e) - gradient(theta - h * e)) / (2 * h) for e in np.eye(4)
    ])
    f = fisher_information(p, z, s.hop(1), x).matrix
    assert np.linalg.norm(-hessian - f) / np.linalg.norm(f) < 1e-6


def test_partition_information_adds_up():
    rng = np.random.default_rng(3)
    p, z, s, x = _random_design(rng, 30)
    order = rng.permutation(30)
    blocks = [order[:7], order[7:19], order[19:]]
    full = fisher_information(p, z, s.hop(1), x).matrix
    np.testing.assert_allclose(partition_information(p, z, s.hop(1), x, blocks), full, rtol=1e-12)


def test_identity_information():
    result = crlb(FisherInfo.from_matrix(np.eye(4)))
    np.testing.assert_allclose(result.covariance_bound, np.eye(4))
    assert result.condition_number == pytest.approx(1.0)
    assert result.standard_errors() == {name: 1.0 for name in ("tau", "gamma_1", "beta_1", "mu")}
    assert not design_diagnostics(FisherInfo.from_matrix(np.eye(4))).weak


def test_small_design_bound_is_the_inverse():
    z = SourceVector([1.0, 0.0, 0.0, 1.0])
    s1 = np.array([0.0, 1.0, 2.0, 0.5])
    x = np.array([0.0, 1.0, -1.0, 2.0])
    f = fisher_information(_params(), z, s1, x)
    result = crlb(f)
    np.testing.assert_allclose(result.covariance_bound, np.linalg.solve(f.matrix, np.eye(4)), rtol=1e-9, atol=1e-12)
    assert (result.f11, result.f22) == (f.f11, f.f22)


def test_ridge_makes_a_singular_design_invertible():
    f = fisher_information(_params(), SourceVector([1.0]), np.array([1.0]), np.array([1.0]))
    result = crlb(f, ridge=1.0)
    assert result.ridge == 1.0
    assert np.isfinite(result.covariance_bound).all()


def test_no_sources_and_no_spillover_flags_tau():
    z = SourceVector.zeros(5)
    f = fisher_information(_params(gamma=0.0), z, np.zeros(5), np.arange(5.0))
    assert f.f11 == 0.0
    diagnostics = design_diagnostics(f)
    assert diagnostics.weak
    assert any(flag.startswith("F11") for flag in diagnostics.flags)


def test_hub_source_carries_more_spillover_information():
    g = build_influence_graph([("hub", f"leaf{k}", 1.0) for k in range(10)])
    x = np.log1p(np.array([10.0] + [0.0] * 10))
    p = _params(tau=1.0)

    def f22(source):
        z = SourceVector.from_ids(g, [source])
        return fisher_information(p, z, exposure_profile(g, z, 1).hop(1), x).f22

    assert f22("hub") > f22("leaf0")
    assert f22("leaf0") == 0.0


def test_closed_form_rejects_richer_models():
    z = SourceVector([1.0, 0.0])
    with pytest.raises(UnsupportedConfigurationError):
        fisher_information(ModelParams(tau=1.0, gamma=[0.5, 0.5], beta=[0.0], mu=0.0), z, np.zeros(2), np.zeros(2))
    with pytest.raises(UnsupportedConfigurationError):
        fisher_information(
            ModelParams(tau=1.0, gamma=[0.5], beta=[0.0, 0.0], mu=0.0), z, np.zeros(2), np.zeros((2, 2))
        )


def test_general_information_for_two_hops():
    rng = np.random.default_rng(4)
    g = random_graph(rng, 25, density=0.2)
    z = SourceVector((rng.random(25) < 0.3).astype(float))
    p = ModelParams(tau=0.8, gamma=[0.5, 0.4], beta=[0.1, -0.2], mu=-0.2)
    f = fisher_information_general(p, z, exposure_profile(g, z, 2), rng.normal(size=(25, 2)))
    assert f.parameter_names == ("tau", "gamma_1", "gamma_2", "beta_1", "beta_2", "mu")
    assert f.matrix.shape == (6, 6)
    np.testing.assert_allclose(f.matrix, f.matrix.T)
    assert np.linalg.eigvalsh(f.matrix).min() > -1e-9 * np.abs(f.matrix).max()
