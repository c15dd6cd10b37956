import math

import numpy as np
import pytest

from fewbench.model import (
    HierarchicalBinomialModel,
    build_design,
    empty_design,
)
from fewbench.sampler import (
    InitializationError,
    PosteriorDraws,
    SamplerConfig,
    SamplerFailure,
    find_reasonable_step_size,
    sample_posterior,
)
from fewbench.simulate import GenerativeTruth, simulate_records

QUICK = SamplerConfig(chains=2, draws=300, tune=300)


def tiny_model(beta=0.0, seed=1):
    truth = GenerativeTruth(beta=beta, sigma_u=0.3, sigma_v=0.3, sigma_w=0.1,
                            lm_count=1, task_count=8, subsample_count=4,
                            n=100, seed=seed)
    return HierarchicalBinomialModel(build_design(simulate_records(truth), "bias"))


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(chains=0)
    with pytest.raises(ValueError):
        SamplerConfig(target_accept=1.0)
    with pytest.raises(ValueError):
        SamplerConfig(path_length=0.0)
    with pytest.raises(ValueError):
        SamplerConfig(tune=-1)


def test_sampling_is_bit_reproducible():
    model = tiny_model()
    a = sample_posterior(model, QUICK, seed=77)
    b = sample_posterior(model, QUICK, seed=77)
    assert np.array_equal(a.samples, b.samples)
    assert a.step_sizes == b.step_sizes
    assert np.array_equal(a.divergence_flags, b.divergence_flags)
    c = sample_posterior(model, QUICK, seed=78)
    assert not np.array_equal(a.samples, c.samples)


def test_prior_sampling_matches_prior_moments():
    # With no observations the posterior is the prior, whose unconstrained
    # coordinates are independent; check location and spread.
    model = HierarchicalBinomialModel(empty_design())
    config = SamplerConfig(chains=2, draws=2000, tune=400)
    draws = sample_posterior(model, config, seed=5)
    mu = draws.parameter("mu").ravel()
    alpha = draws.parameter("alpha").ravel()
    assert abs(mu.mean()) < 0.15
    assert 0.88 < mu.std() < 1.12
    assert abs(alpha.mean()) < 0.8
    assert 4.3 < alpha.std() < 5.7
    sigma_u = np.exp(draws.parameter("log_sigma_u").ravel())
    # HalfNormal(1) median is 0.6745
    assert 0.5 < np.median(sigma_u) < 0.85


def test_positive_effect_is_recovered():
    draws = sample_posterior(tiny_model(beta=1.5), QUICK, seed=11)
    beta = draws.parameter("beta").ravel()
    lo, hi = np.quantile(beta, [0.055, 0.945])
    assert lo > 0.0
    assert 0.8 < beta.mean() < 2.2


def test_null_effect_interval_covers_zero():
    draws = sample_posterior(tiny_model(beta=0.0), QUICK, seed=12)
    beta = draws.parameter("beta").ravel()
    lo, hi = np.quantile(beta, [0.055, 0.945])
    assert lo < 0.0 < hi


def test_well_conditioned_fit_mixes():
    draws = sample_posterior(tiny_model(beta=0.3), QUICK, seed=13)
    names = list(draws.param_names)
    rhat = draws.rhat()
    for name in ("mu", "alpha", "beta"):
        assert rhat[names.index(name)] < 1.03
    assert draws.divergences <= 2


def test_initialization_error_when_no_finite_start():
    class Hopeless(HierarchicalBinomialModel):
        def log_posterior_and_grad(self, theta):
            theta = self._check_theta(theta)
            return -math.inf, np.zeros(self.layout.size)

    model = Hopeless(empty_design())
    with pytest.raises(InitializationError):
        sample_posterior(model, SamplerConfig(chains=1, draws=10, tune=0), seed=0)


def test_failure_when_every_draw_diverges():
    # An impossible divergence threshold marks all transitions divergent.
    model = tiny_model()
    config = SamplerConfig(chains=1, draws=5, tune=0,
                           divergence_threshold=-math.inf)
    with pytest.raises(SamplerFailure, match="divergent"):
        sample_posterior(model, config, seed=3)


def test_draws_accessors():
    model = tiny_model()
    draws = sample_posterior(model, SamplerConfig(chains=2, draws=50, tune=100), seed=4)
    dim = model.layout.size
    assert draws.samples.shape == (2, 50, dim)
    assert draws.parameter("beta").shape == (2, 50)
    assert draws.flat().shape == (100, dim)
    assert draws.divergences == int(draws.divergence_flags.sum())
    assert len(draws.step_sizes) == 2
    assert all(s > 0 for s in draws.step_sizes)
    with pytest.raises(KeyError):
        draws.parameter("nope")
    assert isinstance(draws, PosteriorDraws)


def test_step_size_search_returns_moderate_step():
    model = tiny_model()
    theta = np.zeros(model.layout.size)
    value, grad = model.log_posterior_and_grad(theta)
    inv_mass = np.ones(model.layout.size)
    from fewbench.rng import derive_rng

    step = find_reasonable_step_size(
        model, theta, value, grad, inv_mass, derive_rng(0, "step-test")
    )
    assert 1e-6 < step < 1e3
