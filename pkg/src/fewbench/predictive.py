"""Prior and posterior predictive simulation of accuracy counts.

Predictive samples replay the observation process on the fitted design:
for a parameter draw theta, every design row gets a fresh count
``Binomial(n, rate(theta))``. Posterior predictive draws thin the
concatenated post-warmup chains evenly; if more predictive samples are
requested than parameter draws exist, draws are re-used by sampling
indices with replacement (noted here because it correlates predictive
samples).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import ModelDesign, ParamLayout, PriorScales
from .rng import derive_rng
from .sampler import PosteriorDraws


@dataclass(frozen=True)
class PredictiveSamples:
    """Simulated counts, one row of the design per column."""

    counts: np.ndarray  # (samples, rows) integer
    design: ModelDesign
    seed: int
    kind: str  # "prior" or "posterior"

    @property
    def sample_count(self) -> int:
        return int(self.counts.shape[0])

    def __post_init__(self) -> None:
        if self.counts.ndim != 2 or self.counts.shape[1] != self.design.rows:
            raise ValueError(
                f"counts shape {self.counts.shape} does not match design rows "
                f"{self.design.rows}"
            )


def rate_matrix(design: ModelDesign, layout: ParamLayout, thetas: np.ndarray) -> np.ndarray:
    """Success rates for many parameter vectors at once, shape (S, rows)."""
    thetas = np.asarray(thetas, dtype=float)
    z = design.z.astype(float)
    x = design.x.astype(float)
    eta = (
        thetas[:, layout.MU][:, None]
        + thetas[:, layout.ALPHA][:, None] * z[None, :]
        + thetas[:, layout.BETA][:, None] * x[None, :]
    )
    sigma_u = np.exp(thetas[:, layout.LOG_SIGMA_U])
    eta += sigma_u[:, None] * thetas[:, layout.u_slice][:, design.task]
    if layout.include_v:
        sigma_v = np.exp(thetas[:, layout.log_sigma_v])
        eta += sigma_v[:, None] * thetas[:, layout.v_slice][:, design.v_index]
    sigma_w = np.exp(thetas[:, layout.log_sigma_w])
    eta += sigma_w[:, None] * thetas[:, layout.w_slice][:, design.w_index]
    return expit(eta)


def thinning_indices(total: int, count: int) -> np.ndarray:
    """Evenly spaced draw indices covering 0..total-1 (count <= total)."""
    return np.floor(np.arange(count) * (total / count)).astype(int)


def posterior_predictive(
    draws: PosteriorDraws,
    design: ModelDesign,
    layout: ParamLayout,
    count: int = 4000,
    seed: int = 0,
) -> PredictiveSamples:
    """Simulate counts from evenly thinned posterior draws."""
    if count < 1:
        raise ValueError("count must be >= 1")
    flat = draws.flat()
    total = flat.shape[0]
    rng = derive_rng(seed, "predictive")
    if count <= total:
        indices = thinning_indices(total, count)
    else:
        indices = rng.integers(0, total, size=count)
    rates = rate_matrix(design, layout, flat[indices])
    counts = rng.binomial(design.n[None, :], rates)
    return PredictiveSamples(counts=counts, design=design, seed=seed, kind="posterior")


def sample_prior_parameters(
    layout: ParamLayout,
    count: int,
    rng: np.random.Generator,
    prior_scales: PriorScales = PriorScales(),
) -> np.ndarray:
    """Draw unconstrained parameter vectors from the prior."""
    sc = prior_scales
    thetas = np.empty((count, layout.size))
    thetas[:, layout.MU] = rng.normal(0.0, sc.mu, size=count)
    thetas[:, layout.ALPHA] = rng.normal(0.0, sc.alpha, size=count)
    thetas[:, layout.BETA] = rng.normal(0.0, sc.beta, size=count)
    thetas[:, layout.LOG_SIGMA_U] = np.log(
        np.abs(rng.normal(0.0, sc.sigma_u, size=count))
    )
    if layout.include_v:
        thetas[:, layout.log_sigma_v] = np.log(
            np.abs(rng.normal(0.0, sc.sigma_v, size=count))
        )
    thetas[:, layout.log_sigma_w] = np.log(
        np.abs(rng.normal(0.0, sc.sigma_w, size=count))
    )
    thetas[:, layout.u_slice] = rng.standard_normal((count, layout.task_count))
    if layout.include_v:
        thetas[:, layout.v_slice] = rng.standard_normal((count, layout.v_count))
    thetas[:, layout.w_slice] = rng.standard_normal((count, 2 * layout.task_count))
    return thetas


def prior_predictive(
    design: ModelDesign,
    count: int = 4000,
    seed: int = 0,
    prior_scales: PriorScales = PriorScales(),
    include_v: bool = True,
) -> PredictiveSamples:
    """Simulate counts with parameters drawn from the prior."""
    if count < 1:
        raise ValueError("count must be >= 1")
    layout = ParamLayout(
        task_count=design.task_count,
        subsamples_per_task=design.subsamples_per_task,
        include_v=include_v,
    )
    rng = derive_rng(seed, "prior-predictive")
    thetas = sample_prior_parameters(layout, count, rng, prior_scales)
    rates = rate_matrix(design, layout, thetas)
    counts = rng.binomial(design.n[None, :], rates)
    return PredictiveSamples(counts=counts, design=design, seed=seed, kind="prior")
