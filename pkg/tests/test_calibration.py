import numpy as np
import pytest

from src.cli.models import SimulationSettings
from src.core.errors import ConfigurationError
from src.core.graph import degrees
from src.core.inference import McmcConfig
from src.core.outcome_model import ModelParams
from src.tools.calibration import coverage_study, crlb_consistency_study, null_calibration_study
from src.tools.simulate_dataset import DEFAULT_TRUTH, simulate_dataset


def test_simulated_dataset_is_consistent():
    dataset = simulate_dataset(SimulationSettings(n=60, mean_degree=3.0), DEFAULT_TRUTH, seed=5)
    originals = [r for r in dataset.records if r.hashtags and not r.is_retweet]
    retweets = [r for r in dataset.records if r.is_retweet]
    observed = dataset.observed_outcomes().y
    assert len(originals) == int(observed.sum())
    assert len(retweets) == int(dataset.graph.influence.sum())
    assert len(dataset.source_ids()) == 6
    assert len({r.tweet_id for r in dataset.records}) == len(dataset.records)

    seeded = observed - dataset.outcomes.y
    out_degree = degrees(dataset.graph).out_degree
    assert set(seeded.tolist()) <= {0, 1}
    np.testing.assert_array_equal(seeded == 1, (dataset.outcomes.y == 0) & (out_degree > 0))


def test_every_retweet_references_a_simulated_tweet():
    dataset = simulate_dataset(SimulationSettings(n=60, mean_degree=3.0), DEFAULT_TRUTH, seed=5)
    authors = {r.tweet_id: r.user_id for r in dataset.records if not r.is_retweet}
    for r in dataset.records:
        if r.is_retweet:
            assert authors[r.retweet_of.tweet_id] == r.retweet_of.user_id


def test_simulation_needs_a_single_covariate():
    params = ModelParams(tau=1.0, gamma=[0.5], beta=[0.3, 0.1], mu=0.0)
    with pytest.raises(ConfigurationError):
        simulate_dataset(SimulationSettings(n=10), params, seed=0)


@pytest.mark.slow
def test_credible_intervals_cover_the_truth():
    report = coverage_study(DEFAULT_TRUTH, seeds=range(20), settings=SimulationSettings(n=200))
    for name in ("tau", "gamma_1", "beta_1", "mu"):
        assert report.covered[name] >= 15, (name, report.covered)


@pytest.mark.slow
def test_maximum_likelihood_variance_approaches_the_bound():
    params = ModelParams(tau=1.0, gamma=[0.5], beta=[0.3], mu=-0.5)
    result = crlb_consistency_study(params, n=500, replicates=200, seed=0)
    assert 0.7 < result.ratio < 1.5
    assert abs(result.tau_hat_mean - params.tau) < 3 * np.sqrt(result.crlb_tau)


@pytest.mark.slow
def test_null_effect_intervals_reach_zero():
    params = ModelParams(tau=0.0, gamma=[0.5], beta=[0.3], mu=-0.5, sigma_eps=0.1)
    mcmc = McmcConfig(n_chains=2, n_iters=2000, burn_in=1000, thin=2, seed=0)
    result = null_calibration_study(params, seed=0, settings=SimulationSettings(n=200), mcmc=mcmc)
    assert result.fraction >= 0.85
