import numpy as np
import pytest

from fewbench.model import (
    HierarchicalBinomialModel,
    PriorScales,
    build_design,
)
from fewbench.predictive import (
    PredictiveSamples,
    posterior_predictive,
    prior_predictive,
    rate_matrix,
    sample_prior_parameters,
    thinning_indices,
)
from fewbench.rng import derive_rng
from fewbench.sampler import PosteriorDraws, SamplerConfig
from fewbench.simulate import GenerativeTruth, simulate_records


def small_design(n=50, tasks=6, subs=2, seed=3):
    truth = GenerativeTruth(lm_count=1, task_count=tasks, subsample_count=subs,
                            n=n, seed=seed)
    return build_design(simulate_records(truth), "bias")


def fake_draws(model, thetas_flat, chains=2):
    """Wrap explicit parameter vectors as sampler output."""
    per_chain = thetas_flat.shape[0] // chains
    samples = thetas_flat[: chains * per_chain].reshape(chains, per_chain, -1)
    return PosteriorDraws(
        samples=samples,
        divergence_flags=np.zeros(samples.shape[:2], dtype=bool),
        step_sizes=(0.1,) * chains,
        param_names=tuple(model.layout.param_names()),
        seed=0,
        config=SamplerConfig(chains=chains, draws=per_chain, tune=0),
    )


def test_thinning_indices_even_coverage():
    assert thinning_indices(10, 4).tolist() == [0, 2, 5, 7]
    assert thinning_indices(8, 8).tolist() == list(range(8))
    assert thinning_indices(5, 1).tolist() == [0]
    idx = thinning_indices(4000, 1000)
    assert idx[0] == 0 and idx[-1] == 3996
    assert np.all(np.diff(idx) > 0)


def test_rate_matrix_at_zero_parameters():
    design = small_design()
    model = HierarchicalBinomialModel(design)
    thetas = np.zeros((3, model.layout.size))
    rates = rate_matrix(design, model.layout, thetas)
    assert rates.shape == (3, design.rows)
    assert np.all(rates == 0.5)


def test_rate_matrix_matches_scalar_path():
    design = small_design()
    model = HierarchicalBinomialModel(design)
    rng = np.random.default_rng(2)
    thetas = rng.normal(scale=0.7, size=(20, model.layout.size))
    rates = rate_matrix(design, model.layout, thetas)
    for s in range(20):
        expected = model.success_rates(thetas[s])
        assert np.allclose(rates[s], expected, rtol=1e-12, atol=0.0)


def test_posterior_predictive_from_known_parameters():
    design = small_design(n=100)
    model = HierarchicalBinomialModel(design)
    thetas = np.zeros((400, model.layout.size))
    draws = fake_draws(model, thetas)
    pred = posterior_predictive(draws, design, model.layout, count=400, seed=1)
    assert pred.kind == "posterior"
    assert pred.counts.shape == (400, design.rows)
    assert pred.sample_count == 400
    # theta == 0 means every rate is exactly 1/2
    mean = pred.counts.mean()
    assert abs(mean - 50.0) < 1.0
    assert pred.counts.min() >= 0 and pred.counts.max() <= 100


def test_posterior_predictive_thins_evenly():
    design = small_design()
    model = HierarchicalBinomialModel(design)
    # Make draw index recoverable from mu: theta_i has mu = i.
    thetas = np.zeros((100, model.layout.size))
    thetas[:, model.layout.MU] = np.arange(100.0)
    draws = fake_draws(model, thetas, chains=1)
    pred = posterior_predictive(draws, design, model.layout, count=10, seed=0)
    # Thinning picks mu = 0, 10, ..., 90; from mu = 50 on the success rate
    # rounds to exactly 1.0, so those samples must be saturated counts.
    assert np.all(pred.counts[-5:] == design.n[None, :])


def test_posterior_predictive_with_replacement_when_oversampled():
    design = small_design()
    model = HierarchicalBinomialModel(design)
    thetas = np.zeros((10, model.layout.size))
    draws = fake_draws(model, thetas, chains=2)
    pred = posterior_predictive(draws, design, model.layout, count=64, seed=5)
    assert pred.counts.shape == (64, design.rows)


def test_predictive_determinism_and_seed_sensitivity():
    design = small_design()
    model = HierarchicalBinomialModel(design)
    thetas = np.random.default_rng(0).normal(size=(40, model.layout.size)) * 0.3
    draws = fake_draws(model, thetas)
    a = posterior_predictive(draws, design, model.layout, count=40, seed=7)
    b = posterior_predictive(draws, design, model.layout, count=40, seed=7)
    c = posterior_predictive(draws, design, model.layout, count=40, seed=8)
    assert np.array_equal(a.counts, b.counts)
    assert not np.array_equal(a.counts, c.counts)


def test_prior_predictive_default_scales_fill_the_middle():
    design = small_design(n=50)
    pred = prior_predictive(design, count=2000, seed=9)
    counts = pred.counts
    assert pred.kind == "prior"
    middle = float(((counts >= 15) & (counts <= 35)).mean())
    assert middle > 0.15
    assert float((counts == 0).mean()) < 0.2
    assert float((counts == 50).mean()) < 0.2


def test_prior_predictive_huge_scales_form_extreme_basins():
    # Inflating the random-effect scales by x100 pushes nearly all mass to
    # all-wrong or all-right counts -- the diagnostic shape that motivates
    # moderate priors.
    design = small_design(n=50)
    wide = PriorScales(sigma_u=100.0, sigma_v=100.0, sigma_w=100.0)
    pred = prior_predictive(design, count=2000, seed=9, prior_scales=wide)
    counts = pred.counts
    assert float((counts == 0).mean()) > 0.4
    assert float((counts == 50).mean()) > 0.4
    assert float(((counts >= 15) & (counts <= 35)).mean()) < 0.05


def test_sample_prior_parameters_moments():
    design = small_design()
    model = HierarchicalBinomialModel(design)
    thetas = sample_prior_parameters(model.layout, 4000, derive_rng(0, "pp"))
    lay = model.layout
    assert abs(thetas[:, lay.MU].std() - 1.0) < 0.05
    assert abs(thetas[:, lay.ALPHA].std() - 5.0) < 0.25
    sigma_w = np.exp(thetas[:, lay.log_sigma_w])
    # HalfNormal(c) median is 0.6745 c
    assert abs(np.median(sigma_w) - 0.6745 * 3.5355) < 0.25


def test_count_validation():
    design = small_design()
    model = HierarchicalBinomialModel(design)
    with pytest.raises(ValueError):
        prior_predictive(design, count=0)
    draws = fake_draws(model, np.zeros((10, model.layout.size)))
    with pytest.raises(ValueError):
        posterior_predictive(draws, design, model.layout, count=0)


def test_samples_shape_is_validated():
    design = small_design()
    with pytest.raises(ValueError):
        PredictiveSamples(
            counts=np.zeros((5, design.rows + 1), dtype=int),
            design=design, seed=0, kind="prior",
        )
