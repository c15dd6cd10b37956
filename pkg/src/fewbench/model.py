"""Hierarchical binomial-logit model of paired accuracy counts.

Observation model, for LM type i, task j, subsample k, condition l:

    Y ~ Binomial(n, rate),  logit(rate) = mu + alpha*z_i + U_j + V_jk + W_jl + beta*x_l

with priors mu ~ N(0,1), alpha ~ N(0,5), beta ~ N(0,1), U_j ~ N(0, sigma_U),
V_jk ~ N(0, sigma_V), W_jl ~ N(0, sigma_W), sigma_U, sigma_V ~ HalfNormal(1)
and sigma_W ~ HalfNormal(3.5355), all scale parameters interpreted as
standard deviations.

The unconstrained parameterization is non-centered: random effects are
stored as standardized deviates (U_j = sigma_U * u_j, etc.) and the scales
as log(sigma), with the log-Jacobian included in the prior density. This
keeps the small-sigma funnel tractable for gradient-based sampling.

``include_v=False`` drops the nested subsample effect V (and its scale)
entirely; the de-replicated meta-analysis uses this reduced form because a
single subsample per task cannot separate V from U.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, gammaln

from .dataio import AccuracyRecord

_LOG_2PI = math.log(2.0 * math.pi)
# HalfNormal(sigma; c): sqrt(2/pi)/c * exp(-sigma^2 / (2 c^2)) on sigma > 0.
_LOG_HALF_NORMAL_CONST = 0.5 * math.log(2.0) - 0.5 * math.log(math.pi)


def _exp(x: float) -> float:
    """exp saturating to inf instead of raising, so extreme log-scale
    proposals fall through the divergence path rather than crashing."""
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


class DesignError(ValueError):
    """Observation table violates the paired-design contract."""


class DomainError(ValueError):
    """Non-finite parameter value."""


@dataclass(frozen=True)
class PriorScales:
    """Prior standard deviations; defaults follow the analysis model."""

    mu: float = 1.0
    alpha: float = 5.0
    beta: float = 1.0
    sigma_u: float = 1.0
    sigma_v: float = 1.0
    sigma_w: float = 3.5355


@dataclass(frozen=True)
class ModelDesign:
    """Dense, validated observation table for one experiment configuration.

    One row per (LM type, task, subsample, condition). ``task`` and
    ``subsample`` are dense indices; ``v_index`` flattens (task, subsample)
    pairs; ``w_index`` flattens (task, condition) pairs. The same (task,
    subsample) pair shares one V effect across LM types and conditions.
    """

    n: np.ndarray
    z: np.ndarray
    task: np.ndarray
    subsample: np.ndarray
    x: np.ndarray
    y: np.ndarray
    task_count: int
    subsamples_per_task: tuple[int, ...]
    lm_types: tuple[str, ...] = ()
    task_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        arrays = (self.n, self.z, self.task, self.subsample, self.x, self.y)
        lengths = {a.shape for a in arrays}
        if len(lengths) != 1:
            raise DesignError("design arrays must share one length")
        if self.rows == 0:
            if self.task_count != 0 or self.subsamples_per_task:
                raise DesignError("empty design must have zero tasks")
            return
        if self.y.min() < 0 or np.any(self.y > self.n):
            raise DesignError("counts must satisfy 0 <= y <= n")
        if not set(np.unique(self.z)) <= {0, 1}:
            raise DesignError("z must be coded 0/1")
        if not set(np.unique(self.x)) <= {0, 1}:
            raise DesignError("x must be coded 0/1")
        if len(self.subsamples_per_task) != self.task_count:
            raise DesignError("subsamples_per_task must list every task")
        present = np.unique(self.task)
        if self.task_count != len(present) or present[0] != 0 or present[-1] != self.task_count - 1:
            raise DesignError("task indices must be dense 0..J-1")
        for j in range(self.task_count):
            ks = np.unique(self.subsample[self.task == j])
            if len(ks) != self.subsamples_per_task[j] or ks[0] != 0 or ks[-1] != len(ks) - 1:
                raise DesignError(f"subsample indices for task {j} must be dense 0..K_j-1")
        # Paired: each (z, task, subsample) cell holds exactly one row per condition.
        cells: dict[tuple[int, int, int], list[int]] = {}
        for z_i, j, k, x_l in zip(self.z, self.task, self.subsample, self.x):
            cells.setdefault((int(z_i), int(j), int(k)), []).append(int(x_l))
        for cell, xs in cells.items():
            if sorted(xs) != [0, 1]:
                raise DesignError(f"cell {cell} must appear with x=0 and x=1 exactly once")

    @property
    def rows(self) -> int:
        return int(self.n.shape[0])

    @property
    def v_offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.subsamples_per_task))).astype(int)

    @property
    def v_count(self) -> int:
        return int(sum(self.subsamples_per_task))

    @property
    def v_index(self) -> np.ndarray:
        if self.rows == 0:
            return np.zeros(0, dtype=int)
        return self.v_offsets[self.task] + self.subsample

    @property
    def w_index(self) -> np.ndarray:
        return 2 * self.task + self.x

    def uniform_n(self) -> int:
        """The common per-row trial count; raises if rows disagree."""
        values = np.unique(self.n)
        if len(values) != 1:
            raise DesignError(f"design mixes test sizes {values.tolist()}")
        return int(values[0])


def empty_design() -> ModelDesign:
    """A design with no observations; the posterior is then the prior."""
    zeros = np.zeros(0, dtype=int)
    return ModelDesign(
        n=zeros, z=zeros, task=zeros, subsample=zeros, x=zeros, y=zeros,
        task_count=0, subsamples_per_task=(),
    )


FRAMING_COLUMNS = {
    "boost": ("correct_base", "correct_extra"),
    "bias": ("correct_extra", "correct_test"),
}


def build_design(records: Sequence[AccuracyRecord], framing: str) -> ModelDesign:
    """Turn accuracy records into a paired design under a framing.

    ``framing="boost"`` contrasts no-pretraining against pretraining on
    independent text (control = correct_base, treatment = correct_extra);
    ``framing="bias"`` contrasts independent-text against test-text
    pretraining (control = correct_extra, treatment = correct_test).

    LM types are coded z=0 for the first type seen, z=1 for the second;
    more than two is an error. Task and per-task subsample indices follow
    first appearance, which makes the design a pure function of record
    order. All records must share one (m, n) configuration.
    """
    if framing not in FRAMING_COLUMNS:
        raise ValueError(f"framing must be one of {sorted(FRAMING_COLUMNS)}, got {framing!r}")
    if not records:
        raise DesignError("no records")
    configs = {(r.m, r.n) for r in records}
    if len(configs) > 1:
        raise DesignError(
            f"records mix (m, n) configurations {sorted(configs)}; fit one at a time"
        )
    control_col, treatment_col = FRAMING_COLUMNS[framing]

    lm_order: dict[str, int] = {}
    task_order: dict[str, int] = {}
    sub_order: dict[tuple[int, int], int] = {}
    for r in records:
        if r.lm_type not in lm_order:
            lm_order[r.lm_type] = len(lm_order)
        if r.task_id not in task_order:
            task_order[r.task_id] = len(task_order)
        j = task_order[r.task_id]
        if (j, r.subsample_index) not in sub_order:
            sub_order[(j, r.subsample_index)] = sum(1 for (jj, _) in sub_order if jj == j)
    if len(lm_order) > 2:
        raise DesignError(
            f"{len(lm_order)} LM types present but the model holds a single 0/1 "
            f"LM indicator; filter to at most two"
        )

    n, z, task, sub, x, y = [], [], [], [], [], []
    for r in records:
        j = task_order[r.task_id]
        k = sub_order[(j, r.subsample_index)]
        for x_l, col in ((0, control_col), (1, treatment_col)):
            n.append(r.n)
            z.append(lm_order[r.lm_type])
            task.append(j)
            sub.append(k)
            x.append(x_l)
            y.append(getattr(r, col))
    subsamples_per_task = tuple(
        sum(1 for (jj, _) in sub_order if jj == j) for j in range(len(task_order))
    )
    return ModelDesign(
        n=np.asarray(n, dtype=int),
        z=np.asarray(z, dtype=int),
        task=np.asarray(task, dtype=int),
        subsample=np.asarray(sub, dtype=int),
        x=np.asarray(x, dtype=int),
        y=np.asarray(y, dtype=int),
        task_count=len(task_order),
        subsamples_per_task=subsamples_per_task,
        lm_types=tuple(lm_order),
        task_ids=tuple(task_order),
    )


@dataclass(frozen=True)
class ParamLayout:
    """Flat-vector layout of the unconstrained parameters."""

    task_count: int
    subsamples_per_task: tuple[int, ...]
    include_v: bool = True

    @property
    def v_count(self) -> int:
        return sum(self.subsamples_per_task) if self.include_v else 0

    @property
    def fixed_count(self) -> int:
        return 6 if self.include_v else 5

    @property
    def size(self) -> int:
        return self.fixed_count + self.task_count + self.v_count + 2 * self.task_count

    # Scalar positions.
    MU, ALPHA, BETA, LOG_SIGMA_U = 0, 1, 2, 3

    @property
    def log_sigma_v(self) -> int:
        if not self.include_v:
            raise KeyError("layout excludes the subsample effect")
        return 4

    @property
    def log_sigma_w(self) -> int:
        return 5 if self.include_v else 4

    @property
    def u_slice(self) -> slice:
        return slice(self.fixed_count, self.fixed_count + self.task_count)

    @property
    def v_slice(self) -> slice:
        start = self.fixed_count + self.task_count
        return slice(start, start + self.v_count)

    @property
    def w_slice(self) -> slice:
        start = self.fixed_count + self.task_count + self.v_count
        return slice(start, start + 2 * self.task_count)

    def param_names(self) -> list[str]:
        names = ["mu", "alpha", "beta", "log_sigma_u"]
        if self.include_v:
            names.append("log_sigma_v")
        names.append("log_sigma_w")
        names += [f"u[{j}]" for j in range(self.task_count)]
        if self.include_v:
            for j, count in enumerate(self.subsamples_per_task):
                names += [f"v[{j},{k}]" for k in range(count)]
        names += [f"w[{j},{l}]" for j in range(self.task_count) for l in (0, 1)]
        return names


@dataclass(frozen=True)
class ParamVector:
    """Named view of one unconstrained parameter vector."""

    mu: float
    alpha: float
    beta: float
    log_sigma_u: float
    log_sigma_w: float
    u_std: np.ndarray
    w_std: np.ndarray
    log_sigma_v: float | None = None
    v_std: np.ndarray | None = None

    @property
    def sigma_u(self) -> float:
        return _exp(self.log_sigma_u)

    @property
    def sigma_v(self) -> float:
        if self.log_sigma_v is None:
            raise KeyError("parameter vector excludes the subsample effect")
        return _exp(self.log_sigma_v)

    @property
    def sigma_w(self) -> float:
        return _exp(self.log_sigma_w)


def _normal_logpdf(value: np.ndarray | float, sd: float) -> np.ndarray | float:
    return -0.5 * (np.asarray(value) / sd) ** 2 - math.log(sd) - 0.5 * _LOG_2PI


def _half_normal_log_with_jacobian(log_sigma: float, scale: float) -> float:
    # Density in sigma plus the d(sigma)/d(log sigma) = sigma Jacobian.
    sigma_sq = _exp(2.0 * log_sigma)
    return (
        _LOG_HALF_NORMAL_CONST
        - math.log(scale)
        - sigma_sq / (2.0 * scale * scale)
        + log_sigma
    )


def _half_normal_grad_log_sigma(log_sigma: float, scale: float) -> float:
    # d/d(log sigma) of the term above is 1 - (sigma/scale)^2; a single exp
    # lets extreme proposals saturate to -inf instead of overflowing.
    return 1.0 - _exp(2.0 * (log_sigma - math.log(scale)))


class HierarchicalBinomialModel:
    """Log-posterior and gradient of the paired-counts model on a design."""

    def __init__(
        self,
        design: ModelDesign,
        include_v: bool = True,
        prior_scales: PriorScales = PriorScales(),
    ) -> None:
        self.design = design
        self.prior_scales = prior_scales
        self.layout = ParamLayout(
            task_count=design.task_count,
            subsamples_per_task=design.subsamples_per_task,
            include_v=include_v,
        )
        self._n = design.n.astype(float)
        self._y = design.y.astype(float)
        self._z = design.z.astype(float)
        self._x = design.x.astype(float)
        self._j_idx = design.task.astype(int)
        self._v_idx = design.v_index if include_v else None
        self._w_idx = design.w_index.astype(int)
        # The sampler calls the fused value+gradient path millions of times;
        # cache the layout slices so it skips the property recomputation.
        self._u_slice = self.layout.u_slice
        self._v_slice = self.layout.v_slice
        self._w_slice = self.layout.w_slice
        self._rows = design.rows
        # Binomial coefficient term is parameter-free; fold it in once.
        self._log_choose = float(
            np.sum(
                gammaln(self._n + 1) - gammaln(self._y + 1) - gammaln(self._n - self._y + 1)
            )
        )

    def _check_theta(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.layout.size,):
            raise DomainError(
                f"expected parameter vector of length {self.layout.size}, got {theta.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise DomainError("parameter vector contains non-finite entries")
        return theta

    def unpack(self, theta: np.ndarray) -> ParamVector:
        theta = self._check_theta(theta)
        lay = self.layout
        return ParamVector(
            mu=float(theta[lay.MU]),
            alpha=float(theta[lay.ALPHA]),
            beta=float(theta[lay.BETA]),
            log_sigma_u=float(theta[lay.LOG_SIGMA_U]),
            log_sigma_v=float(theta[lay.log_sigma_v]) if lay.include_v else None,
            log_sigma_w=float(theta[lay.log_sigma_w]),
            u_std=theta[lay.u_slice].copy(),
            v_std=theta[lay.v_slice].copy() if lay.include_v else None,
            w_std=theta[lay.w_slice].copy(),
        )

    def pack(self, pv: ParamVector) -> np.ndarray:
        lay = self.layout
        theta = np.empty(lay.size)
        theta[lay.MU] = pv.mu
        theta[lay.ALPHA] = pv.alpha
        theta[lay.BETA] = pv.beta
        theta[lay.LOG_SIGMA_U] = pv.log_sigma_u
        if lay.include_v:
            if pv.log_sigma_v is None or pv.v_std is None:
                raise ValueError("layout includes V but the vector omits it")
            theta[lay.log_sigma_v] = pv.log_sigma_v
            theta[lay.v_slice] = pv.v_std
        theta[lay.log_sigma_w] = pv.log_sigma_w
        theta[lay.u_slice] = pv.u_std
        theta[lay.w_slice] = pv.w_std
        return theta

    def linear_predictor(self, theta: np.ndarray) -> np.ndarray:
        theta = self._check_theta(theta)
        lay = self.layout
        sigma_u = _exp(theta[lay.LOG_SIGMA_U])
        sigma_w = _exp(theta[lay.log_sigma_w])
        eta = (
            theta[lay.MU]
            + theta[lay.ALPHA] * self._z
            + theta[lay.BETA] * self._x
            + sigma_u * theta[lay.u_slice][self._j_idx]
            + sigma_w * theta[lay.w_slice][self._w_idx]
        )
        if lay.include_v:
            sigma_v = _exp(theta[lay.log_sigma_v])
            eta = eta + sigma_v * theta[lay.v_slice][self._v_idx]
        return eta

    def success_rates(self, theta: np.ndarray) -> np.ndarray:
        return expit(self.linear_predictor(theta))

    def log_prior(self, theta: np.ndarray) -> float:
        theta = self._check_theta(theta)
        lay, sc = self.layout, self.prior_scales
        total = float(_normal_logpdf(theta[lay.MU], sc.mu))
        total += float(_normal_logpdf(theta[lay.ALPHA], sc.alpha))
        total += float(_normal_logpdf(theta[lay.BETA], sc.beta))
        total += _half_normal_log_with_jacobian(theta[lay.LOG_SIGMA_U], sc.sigma_u)
        if lay.include_v:
            total += _half_normal_log_with_jacobian(theta[lay.log_sigma_v], sc.sigma_v)
        total += _half_normal_log_with_jacobian(theta[lay.log_sigma_w], sc.sigma_w)
        for sl in (lay.u_slice, lay.v_slice, lay.w_slice):
            block = theta[sl]
            total += float(-0.5 * np.dot(block, block) - 0.5 * _LOG_2PI * block.size)
        return total

    def log_likelihood(self, theta: np.ndarray) -> float:
        if self.design.rows == 0:
            return 0.0
        # y*log(rate) + (n-y)*log(1-rate) == y*eta - n*softplus(eta).
        with np.errstate(over="ignore", invalid="ignore"):
            eta = self.linear_predictor(theta)
            total = self._log_choose + float(
                np.sum(self._y * eta - self._n * np.logaddexp(0.0, eta))
            )
        # An infinite linear predictor (overflowed random effects) yields nan
        # here; treat such states as having no posterior mass.
        return total if math.isfinite(total) else -math.inf

    def log_posterior(self, theta: np.ndarray) -> float:
        return self.log_prior(theta) + self.log_likelihood(theta)

    def log_posterior_and_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        """Fused value + gradient; the sampler's hot path."""
        theta = self._check_theta(theta)
        lay, sc = self.layout, self.prior_scales
        mu = float(theta[lay.MU])
        alpha = float(theta[lay.ALPHA])
        beta = float(theta[lay.BETA])
        log_sigma_u = float(theta[lay.LOG_SIGMA_U])
        log_sigma_w = float(theta[lay.log_sigma_w])
        # np.float64 scalars: products with huge sigmas saturate to inf
        # (flagged below) rather than raising OverflowError mid-trajectory.
        sigma_u = np.float64(_exp(log_sigma_u))
        sigma_w = np.float64(_exp(log_sigma_w))
        u_std = theta[self._u_slice]
        w_std = theta[self._w_slice]

        with np.errstate(over="ignore", invalid="ignore"):
            grad = np.empty(lay.size)
            value = (
                float(_normal_logpdf(mu, sc.mu))
                + float(_normal_logpdf(alpha, sc.alpha))
                + float(_normal_logpdf(beta, sc.beta))
                + _half_normal_log_with_jacobian(log_sigma_u, sc.sigma_u)
                + _half_normal_log_with_jacobian(log_sigma_w, sc.sigma_w)
                - 0.5 * float(np.dot(u_std, u_std))
                - 0.5 * float(np.dot(w_std, w_std))
                - 0.5 * _LOG_2PI * (u_std.size + w_std.size)
            )
            # Prior gradients (including the half-normal + Jacobian pieces).
            grad[lay.MU] = -mu / sc.mu**2
            grad[lay.ALPHA] = -alpha / sc.alpha**2
            grad[lay.BETA] = -beta / sc.beta**2
            grad[lay.LOG_SIGMA_U] = _half_normal_grad_log_sigma(log_sigma_u, sc.sigma_u)
            grad[lay.log_sigma_w] = _half_normal_grad_log_sigma(log_sigma_w, sc.sigma_w)
            grad[self._u_slice] = -u_std
            grad[self._w_slice] = -w_std
            if lay.include_v:
                log_sigma_v = float(theta[lay.log_sigma_v])
                sigma_v = np.float64(_exp(log_sigma_v))
                v_std = theta[self._v_slice]
                value += (
                    _half_normal_log_with_jacobian(log_sigma_v, sc.sigma_v)
                    - 0.5 * float(np.dot(v_std, v_std))
                    - 0.5 * _LOG_2PI * v_std.size
                )
                grad[lay.log_sigma_v] = _half_normal_grad_log_sigma(
                    log_sigma_v, sc.sigma_v
                )
                grad[self._v_slice] = -v_std

            if self._rows:
                eta = (
                    mu
                    + alpha * self._z
                    + beta * self._x
                    + sigma_u * u_std[self._j_idx]
                    + sigma_w * w_std[self._w_idx]
                )
                if lay.include_v:
                    eta += sigma_v * v_std[self._v_idx]
                value += self._log_choose + float(
                    np.sum(self._y * eta - self._n * np.logaddexp(0.0, eta))
                )
                resid = self._y - self._n * expit(eta)
                grad[lay.MU] += resid.sum()
                grad[lay.ALPHA] += float(np.dot(resid, self._z))
                grad[lay.BETA] += float(np.dot(resid, self._x))
                u_resid = np.bincount(self._j_idx, weights=resid, minlength=lay.task_count)
                w_resid = np.bincount(
                    self._w_idx, weights=resid, minlength=2 * lay.task_count
                )
                grad[self._u_slice] += sigma_u * u_resid
                grad[self._w_slice] += sigma_w * w_resid
                grad[lay.LOG_SIGMA_U] += sigma_u * np.dot(u_std, u_resid)
                grad[lay.log_sigma_w] += sigma_w * np.dot(w_std, w_resid)
                if lay.include_v:
                    v_resid = np.bincount(
                        self._v_idx, weights=resid, minlength=lay.v_count
                    )
                    grad[self._v_slice] += sigma_v * v_resid
                    grad[lay.log_sigma_v] += sigma_v * np.dot(v_std, v_resid)
        if not math.isfinite(value):
            # Non-finite targets are rejected wholesale; signal with -inf.
            return -math.inf, grad
        return value, grad

    def grad_log_posterior(self, theta: np.ndarray) -> np.ndarray:
        return self.log_posterior_and_grad(theta)[1]
