import logging
import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.core.errors import ConfigurationError, InputDataError
from src.core.exposure import ExposureTensor, exposure_profile
from src.core.graph import SourceVector, build_influence_graph, degrees
from src.core.network_builder import OutcomeVector
from src.core.outcome_model import (
    LatentEffects,
    ModelParams,
    NetworkData,
    expected_outcomes,
    fit_maximum_likelihood,
    linear_predictor,
    log_likelihood,
    log_likelihood_gradient,
    parameter_names,
    predictor_jacobian,
    simulate_graph,
    simulate_outcomes,
)
from src.tools.simulate_dataset import draw_sources, popularity_covariates
from tests.conftest import random_graph


def _one(value: float) -> np.ndarray:
    return np.array([[value]])


def test_predictor_is_mu_plus_eps_without_effects():
    p = ModelParams(tau=0.0, gamma=[0.0], beta=[0.0], mu=0.0)
    eta = linear_predictor(p, SourceVector([0.0]), ExposureTensor(_one(0.0)), _one(0.0))
    assert eta.tolist() == [0.0]


def test_predictor_example():
    p = ModelParams(tau=1.0, gamma=[0.5], beta=[0.2], mu=-1.0)
    s = ExposureTensor(_one(math.log(3.0)))
    eta = linear_predictor(p, SourceVector([0.0]), s, _one(2.0))
    assert eta[0] == pytest.approx(0.5 * math.log(3.0) + 0.4 - 1.0, abs=1e-12)
    assert eta[0] == pytest.approx(-0.0507, abs=1e-4)


def test_predictor_for_a_bare_source():
    p = ModelParams(tau=1.0, gamma=[0.0], beta=[0.0], mu=0.0)
    eta = linear_predictor(p, SourceVector([1.0]), ExposureTensor(_one(0.0)), _one(0.0))
    assert eta.tolist() == [1.0]


def test_predictor_is_clamped_with_a_warning(caplog):
    p = ModelParams(tau=0.0, gamma=[0.0], beta=[0.0], mu=100.0)
    with caplog.at_level(logging.WARNING):
        eta = linear_predictor(p, SourceVector([0.0]), ExposureTensor(_one(0.0)), _one(0.0))
    assert eta.tolist() == [30.0]
    assert "Clamped 1" in caplog.text


def test_predictor_dimension_checks():
    p = ModelParams(tau=1.0, gamma=[0.5], beta=[0.1], mu=0.0)
    with pytest.raises(InputDataError):
        linear_predictor(p, SourceVector([0.0, 1.0]), ExposureTensor(_one(0.0)), _one(0.0))
    with pytest.raises(InputDataError):
        linear_predictor(p, SourceVector([0.0]), ExposureTensor(np.zeros((2, 1))), _one(0.0))


def test_params_validation():
    with pytest.raises(ValidationError):
        ModelParams(tau=-1.0, gamma=[0.5], beta=[0.0], mu=0.0)
    with pytest.raises(ValidationError):
        ModelParams(tau=1.0, gamma=[1.5], beta=[0.0], mu=0.0)
    with pytest.raises(ValidationError):
        ModelParams(tau=1.0, gamma=[], beta=[0.0], mu=0.0)


def test_parameter_vector_order():
    p = ModelParams(tau=1.0, gamma=[0.5, 0.25], beta=[0.3, -0.2], mu=-0.5)
    assert p.to_vector().tolist() == [1.0, 0.5, 0.25, 0.3, -0.2, -0.5]
    assert ModelParams.from_vector(p.to_vector(), n_hops=2) == p
    assert parameter_names(2, 2) == ["tau", "gamma_1", "gamma_2", "beta_1", "beta_2", "mu"]


def test_expected_outcomes():
    assert expected_outcomes(np.array([0.0])).tolist() == [1.0]
    assert expected_outcomes(np.array([math.log(2.0)]))[0] == pytest.approx(2.0)
    with pytest.raises(InputDataError):
        expected_outcomes(np.array([math.nan]))


@pytest.mark.parametrize("y, expected", [(0, -1.0), (1, -1.0)])
def test_log_likelihood_single_vertex(y, expected):
    p = ModelParams(tau=0.0, gamma=[0.0], beta=[0.0], mu=0.0)
    value = log_likelihood(p, None, SourceVector([0.0]), ExposureTensor(_one(0.0)), _one(0.0), OutcomeVector([y]))
    assert value == pytest.approx(expected, abs=1e-12)


def _random_instance(rng: np.random.Generator):
    n = int(rng.integers(5, 31))
    hops = int(rng.integers(1, 4))
    m = int(rng.integers(1, 3))
    g = random_graph(rng, n, density=0.2)
    z = SourceVector((rng.random(n) < 0.3).astype(float))
    s = exposure_profile(g, z, hops)
    x = rng.normal(size=(n, m))
    y = OutcomeVector(rng.poisson(2.0, size=n))
    p = ModelParams(
        tau=float(rng.uniform(0.1, 1.5)),
        gamma=rng.uniform(0.1, 0.9, size=hops).tolist(),
        beta=rng.uniform(-0.5, 0.5, size=m).tolist(),
        mu=float(rng.uniform(-1.0, 1.0)),
    )
    return p, z, s, x, y


@pytest.mark.parametrize("seed", range(10))
def test_log_likelihood_matches_scalar_sum(seed):
    rng = np.random.default_rng(seed)
    p, z, s, x, y = _random_instance(rng)
    eps = LatentEffects(rng.normal(0.0, 0.2, size=len(z)))

    coefficients = p.tau * np.cumprod(p.gamma)
    expected = 0.0
    for i in range(len(z)):
        eta = p.tau * z.z[i] + float(coefficients @ s.s[:, i]) + float(x[i] @ p.beta_array) + p.mu + eps.eps[i]
        expected += y.y[i] * eta - math.exp(eta) - math.lgamma(y.y[i] + 1)
    assert log_likelihood(p, eps, z, s, x, y) == pytest.approx(expected, rel=1e-10)


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(2024)
    step = 1e-5
    for _ in range(50):
        p, z, s, x, y = _random_instance(rng)
        theta = p.to_vector()

        def value(t):
            return log_likelihood(ModelParams.from_vector(t, p.n_hops), None, z, s, x, y)

        numeric = np.array([
            (value(theta + step * e) - value(theta - step * e)) / (2 * step)
            for e in np.eye(theta.size)
        ])
        analytic = log_likelihood_gradient(p, None, z, s, x, y)
        error = np.linalg.norm(numeric - analytic) / max(np.linalg.norm(analytic), 1.0)
        assert error < 1e-5


def test_single_hop_tau_column_is_phi():
    rng = np.random.default_rng(8)
    g = random_graph(rng, 10)
    z = SourceVector((rng.random(10) < 0.3).astype(float))
    s = exposure_profile(g, z, 1)
    p = ModelParams(tau=0.7, gamma=[0.4], beta=[0.1], mu=0.0)
    jacobian = predictor_jacobian(p, z, s, np.zeros((10, 1)))
    np.testing.assert_allclose(jacobian[:, 0], z.z + 0.4 * s.hop(1))
    np.testing.assert_allclose(jacobian[:, 1], 0.7 * s.hop(1))
    np.testing.assert_allclose(jacobian[:, 3], 1.0)


def test_simulated_outcomes_have_unit_mean_without_effects():
    n = 100_000
    g = build_influence_graph([], vertices=[f"v{i}" for i in range(n)])
    p = ModelParams(tau=0.0, gamma=[0.0], beta=[0.0], mu=0.0)
    y, eps = simulate_outcomes(p, g, SourceVector.zeros(n), np.zeros((n, 1)), rng_seed=1)
    assert abs(y.y.mean() - 1.0) < 4 * math.sqrt(1.0 / n)
    assert not eps.eps.any()


def test_simulation_is_deterministic_per_seed():
    g = simulate_graph(50, 3.0, 2, rng_seed=4)
    z = draw_sources(50, 0.1, np.random.default_rng(5))
    x = popularity_covariates(g)
    p = ModelParams(tau=1.0, gamma=[0.5], beta=[0.3], mu=-0.5, sigma_eps=0.1)
    first, eps_first = simulate_outcomes(p, g, z, x, rng_seed=9)
    second, eps_second = simulate_outcomes(p, g, z, x, rng_seed=9)
    assert first.y.tolist() == second.y.tolist()
    assert eps_first.eps.tolist() == eps_second.eps.tolist()


def test_strong_source_effect_separates_sources():
    ids = [f"v{i}" for i in range(10)]
    g = build_influence_graph([], vertices=ids)
    z = SourceVector([1.0, 0.0] * 5)
    p = ModelParams(tau=3.0, gamma=[0.5], beta=[0.0], mu=0.0)
    y, _ = simulate_outcomes(p, g, z, np.zeros((10, 1)), rng_seed=0)
    assert y.y[z.z == 1].mean() > y.y[z.z == 0].mean() + 10


def test_simulate_graph_shapes_and_degree():
    single = simulate_graph(1, 5.0, rng_seed=0)
    assert single.n_vertices == 1 and single.edge_count == 0

    a = simulate_graph(30, 4.0, 3, rng_seed=12)
    b = simulate_graph(30, 4.0, 3, rng_seed=12)
    assert a.vertex_ids == b.vertex_ids
    assert (a.influence != b.influence).nnz == 0
    assert set(a.influence.data) <= {1.0, 2.0, 3.0}

    means = [degrees(simulate_graph(200, 5.0, rng_seed=seed)).out_degree.mean() for seed in range(20)]
    assert abs(np.mean(means) - 5.0) < 0.5


def test_simulate_graph_rejects_impossible_degree():
    with pytest.raises(ConfigurationError):
        simulate_graph(3, 5.0)


def test_maximum_likelihood_beats_the_truth():
    g = simulate_graph(400, 5.0, 3, rng_seed=21)
    z = draw_sources(400, 0.1, np.random.default_rng(22))
    x = popularity_covariates(g)
    truth = ModelParams(tau=1.0, gamma=[0.5], beta=[0.3], mu=-0.5)
    y, _ = simulate_outcomes(truth, g, z, x, rng_seed=23)
    data = NetworkData(graph=g, sources=z, covariates=x, outcomes=y)

    estimate = fit_maximum_likelihood(data)
    s = data.exposure(1)
    assert log_likelihood(estimate, None, z, s, x, y) >= log_likelihood(truth, None, z, s, x, y) - 1e-6
    assert 0.0 <= estimate.gamma[0] <= 1.0
