"""Gradient-based posterior sampling for the hierarchical model.

Hamiltonian Monte Carlo with jittered trajectory lengths and a diagonal
mass matrix. During warmup the mass matrix tracks posterior variances
through a pair of streaming (Welford) estimators: the foreground one,
seeded with a unit-variance pseudo-observation weight, supplies the
current metric every iteration, while the background one accumulates
fresh draws and periodically replaces the foreground, forgetting the
early burn-in. The step size follows Nesterov dual averaging toward a
target acceptance rate, running continuously over the whole warmup so
metric changes are absorbed by feedback instead of restarts.

Chains run sequentially, each on its own counter-based RNG stream, so
results are reproducible bit-for-bit for a given seed and config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import effective_sample_size, split_rhat
from .model import DomainError, HierarchicalBinomialModel
from .rng import derive_rng


class InitializationError(RuntimeError):
    """No finite starting point found after the allowed retries."""


class SamplerFailure(RuntimeError):
    """Sampling could not proceed (e.g. step-size search diverged)."""


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    draws: int = 1000
    tune: int = 500
    target_accept: float = 0.8
    path_length: float = 6.0
    max_leapfrog: int = 256
    divergence_threshold: float = 1000.0
    init_jitter: float = 0.5
    max_init_retries: int = 10

    def __post_init__(self) -> None:
        if self.chains < 1 or self.draws < 1 or self.tune < 0:
            raise ValueError("chains and draws must be >= 1 and tune >= 0")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.path_length <= 0.0 or self.max_leapfrog < 1:
            raise ValueError("path_length must be positive and max_leapfrog >= 1")

    def to_dict(self) -> dict:
        return {
            "chains": self.chains,
            "draws": self.draws,
            "tune": self.tune,
            "target_accept": self.target_accept,
            "path_length": self.path_length,
            "max_leapfrog": self.max_leapfrog,
            "divergence_threshold": self.divergence_threshold,
            "init_jitter": self.init_jitter,
            "max_init_retries": self.max_init_retries,
        }


@dataclass(frozen=True)
class PosteriorDraws:
    """Post-warmup draws plus everything needed to audit the run."""

    samples: np.ndarray  # (chains, draws, dim)
    divergence_flags: np.ndarray  # (chains, draws) bool
    step_sizes: tuple[float, ...]
    param_names: tuple[str, ...]
    seed: int
    config: SamplerConfig

    @property
    def divergences(self) -> int:
        return int(self.divergence_flags.sum())

    def parameter(self, name: str) -> np.ndarray:
        """Draws of one parameter, shape (chains, draws)."""
        try:
            index = self.param_names.index(name)
        except ValueError:
            raise KeyError(f"unknown parameter {name!r}") from None
        return self.samples[:, :, index]

    def flat(self) -> np.ndarray:
        """All chains concatenated, shape (chains*draws, dim)."""
        return self.samples.reshape(-1, self.samples.shape[-1])

    def rhat(self) -> np.ndarray:
        return np.array(
            [split_rhat(self.samples[:, :, d]) for d in range(self.samples.shape[-1])]
        )

    def ess(self) -> np.ndarray:
        return np.array(
            [
                effective_sample_size(self.samples[:, :, d])
                for d in range(self.samples.shape[-1])
            ]
        )


# Cadence (in warmup iterations) at which the background variance
# estimator replaces the foreground one.
_ESTIMATOR_SWAP_WINDOW = 101


class _RunningVariance:
    """Streaming mean/variance accumulator over parameter vectors.

    Supports a pseudo-observation prior: constructing with a variance and
    a positive weight behaves as if that many observations at the given
    spread had already been seen, which keeps early estimates sane.
    """

    def __init__(
        self,
        dim: int,
        mean: np.ndarray | None = None,
        variance: np.ndarray | None = None,
        weight: float = 0.0,
    ) -> None:
        self.mean = np.zeros(dim) if mean is None else np.array(mean, dtype=float)
        self.m2 = np.zeros(dim) if variance is None else variance * weight
        self.weight = float(weight)

    def add(self, x: np.ndarray) -> None:
        self.weight += 1.0
        delta = x - self.mean
        self.mean += delta / self.weight
        self.m2 += delta * (x - self.mean)

    def variance(self) -> np.ndarray:
        return self.m2 / max(self.weight, 1.0)


@dataclass
class _DualAveraging:
    """Nesterov dual averaging of log step size (restartable)."""

    target: float
    initial_step: float
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75
    mu: float = field(init=False)
    count: int = field(init=False, default=0)
    h_bar: float = field(init=False, default=0.0)
    log_step_bar: float = field(init=False, default=0.0)
    log_step: float = field(init=False)

    def __post_init__(self) -> None:
        self.mu = math.log(10.0 * self.initial_step)
        self.log_step = math.log(self.initial_step)

    def update(self, accept_stat: float) -> float:
        self.count += 1
        m = self.count
        frac = 1.0 / (m + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept_stat)
        self.log_step = self.mu - math.sqrt(m) / self.gamma * self.h_bar
        eta = m ** -self.kappa
        self.log_step_bar = eta * self.log_step + (1.0 - eta) * self.log_step_bar
        return math.exp(self.log_step)

    @property
    def adapted_step(self) -> float:
        return math.exp(self.log_step_bar) if self.count else self.initial_step


def _kinetic(momentum: np.ndarray, inv_mass: np.ndarray) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        return 0.5 * float(np.dot(momentum * momentum, inv_mass))


def _leapfrog_once(
    model: HierarchicalBinomialModel,
    theta: np.ndarray,
    grad: np.ndarray,
    momentum: np.ndarray,
    step: float,
    inv_mass: np.ndarray,
) -> tuple[np.ndarray, float, np.ndarray, np.ndarray] | None:
    """One leapfrog step; None when the target is non-finite there."""
    with np.errstate(over="ignore", invalid="ignore"):
        p_half = momentum + 0.5 * step * grad
        theta_new = theta + step * inv_mass * p_half
    if not np.all(np.isfinite(theta_new)):
        return None
    try:
        value, grad_new = model.log_posterior_and_grad(theta_new)
    except DomainError:
        return None
    if not math.isfinite(value) or not np.all(np.isfinite(grad_new)):
        return None
    p_new = p_half + 0.5 * step * grad_new
    return theta_new, value, grad_new, p_new


def find_reasonable_step_size(
    model: HierarchicalBinomialModel,
    theta: np.ndarray,
    logp: float,
    grad: np.ndarray,
    inv_mass: np.ndarray,
    rng: np.random.Generator,
    init_step: float = 1.0,
) -> float:
    """Double/halve an initial step size until one leapfrog step lands
    near acceptance probability 1/2."""
    step = init_step
    momentum = rng.standard_normal(theta.shape[0]) / np.sqrt(inv_mass)
    h0 = -logp + _kinetic(momentum, inv_mass)

    def log_accept(eps: float) -> float:
        result = _leapfrog_once(model, theta, grad, momentum, eps, inv_mass)
        if result is None:
            return -math.inf
        _, value, _, p_new = result
        return min(0.0, h0 - (-value + _kinetic(p_new, inv_mass)))

    direction = 1.0 if log_accept(step) > math.log(0.5) else -1.0
    for _ in range(100):
        if direction * log_accept(step) <= direction * math.log(0.5):
            return step
        step *= 2.0**direction
        if not 1e-10 < step < 1e7:
            raise SamplerFailure(f"step-size search left ({1e-10}, {1e7})")
    raise SamplerFailure("step-size search did not terminate")


@dataclass
class _ChainResult:
    samples: np.ndarray
    divergent: np.ndarray
    step_size: float


def _initial_point(
    model: HierarchicalBinomialModel, config: SamplerConfig, rng: np.random.Generator
) -> tuple[np.ndarray, float, np.ndarray]:
    dim = model.layout.size
    for _ in range(config.max_init_retries + 1):
        theta = rng.uniform(-config.init_jitter, config.init_jitter, size=dim)
        try:
            value, grad = model.log_posterior_and_grad(theta)
        except DomainError:
            continue
        if math.isfinite(value) and np.all(np.isfinite(grad)):
            return theta, value, grad
    raise InitializationError(
        f"no finite log-posterior after {config.max_init_retries + 1} starts"
    )


def _run_chain(
    model: HierarchicalBinomialModel,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> _ChainResult:
    dim = model.layout.size
    theta, logp, grad = _initial_point(model, config, rng)
    inv_mass = np.ones(dim)

    step = find_reasonable_step_size(model, theta, logp, grad, inv_mass, rng)
    averager = _DualAveraging(config.target_accept, step)
    # Foreground estimator starts as a unit metric with pseudo-weight 10;
    # the background starts empty and takes over every swap window.
    foreground = _RunningVariance(dim, mean=theta, variance=np.ones(dim), weight=10.0)
    background = _RunningVariance(dim)

    samples = np.empty((config.draws, dim))
    divergent = np.zeros(config.draws, dtype=bool)

    for iteration in range(config.tune + config.draws):
        tuning = iteration < config.tune
        if iteration == config.tune and config.tune > 0:
            step = averager.adapted_step
        momentum = rng.standard_normal(dim) / np.sqrt(inv_mass)
        h0 = -logp + _kinetic(momentum, inv_mass)

        steps_cap = max(1, min(config.max_leapfrog, math.ceil(config.path_length / step)))
        # Full-range jitter: breaks the periodic return a fixed trajectory
        # length can lock into on near-Gaussian ridges.
        n_steps = int(rng.integers(1, steps_cap + 1))

        cur_theta, cur_logp, cur_grad, cur_p = theta, logp, grad, momentum
        diverged = False
        for _ in range(n_steps):
            result = _leapfrog_once(model, cur_theta, cur_grad, cur_p, step, inv_mass)
            if result is None:
                diverged = True
                break
            cur_theta, cur_logp, cur_grad, cur_p = result

        if diverged:
            accept_stat = 0.0
        else:
            h1 = -cur_logp + _kinetic(cur_p, inv_mass)
            energy_error = h1 - h0
            if not math.isfinite(energy_error) or energy_error > config.divergence_threshold:
                diverged = True
                accept_stat = 0.0
            else:
                accept_stat = 1.0 if energy_error <= 0.0 else math.exp(-energy_error)
                if math.log(rng.uniform()) < -energy_error:
                    theta, logp, grad = cur_theta, cur_logp, cur_grad

        if tuning:
            # Dual averaging runs continuously across the whole warmup;
            # metric drift is absorbed by the accept-rate feedback instead
            # of averager restarts, which keeps chains off pathological
            # step sizes a point re-initialization can pick.
            step = averager.update(accept_stat)
            foreground.add(theta)
            background.add(theta)
            inv_mass = np.maximum(foreground.variance(), 1e-10)
            if (iteration + 1) % _ESTIMATOR_SWAP_WINDOW == 0:
                foreground = background
                background = _RunningVariance(dim)
        else:
            index = iteration - config.tune
            samples[index] = theta
            divergent[index] = diverged

    return _ChainResult(samples=samples, divergent=divergent, step_size=step)


def sample_posterior(
    model: HierarchicalBinomialModel, config: SamplerConfig, seed: int
) -> PosteriorDraws:
    """Draw from the model posterior; deterministic in (seed, config)."""
    chain_results = []
    for chain in range(config.chains):
        rng = derive_rng(seed, "chain", chain)
        chain_results.append(_run_chain(model, config, rng))
    flags = np.stack([c.divergent for c in chain_results])
    if bool(flags.all()):
        raise SamplerFailure("every post-warmup draw was divergent")
    return PosteriorDraws(
        samples=np.stack([c.samples for c in chain_results]),
        divergence_flags=flags,
        step_sizes=tuple(c.step_size for c in chain_results),
        param_names=tuple(model.layout.param_names()),
        seed=seed,
        config=config,
    )
