"""De-replication meta-analysis: what single-subsample studies conclude.

The full dataset holds many subsamples per task; a "slice" keeps exactly
one subsample triple per task, mimicking a study that ran each benchmark
once. Refitting the hierarchical model on many random slices yields a
distribution of posterior means for the pretraining-bias coefficient,
and ``prob_outside`` reports how often a slice-level conclusion lands
outside a practical-equivalence interval around zero.

With one subsample per task the subsample effect V is not separable
from the task effect U, so slice fits use the reduced model without V.
Slice fits also default to lighter sampler settings (2 chains x 500
draws after 300 tuning steps) so hundreds of refits stay cheap; both
are overridable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataio import AccuracyRecord
from .effects import CI_LEVEL, _order_statistic_interval
from .model import HierarchicalBinomialModel, build_design
from .rng import derive_rng, derive_seed_sequence
from .sampler import InitializationError, SamplerConfig, SamplerFailure, sample_posterior

DEFAULT_THRESHOLD = 0.04
REDUCED_FIT_CONFIG = SamplerConfig(chains=2, draws=500, tune=300)


class MissingTaskError(ValueError):
    """An expected task has no records to slice from."""


@dataclass(frozen=True)
class SliceSpec:
    slice_count: int = 500
    per_task_triples: int = 1
    seed: int = 0
    fit_config: SamplerConfig = REDUCED_FIT_CONFIG

    def __post_init__(self) -> None:
        if self.slice_count < 1:
            raise ValueError("slice_count must be >= 1")
        if self.per_task_triples != 1:
            raise ValueError("per_task_triples is fixed at 1")


@dataclass(frozen=True)
class MetaResult:
    posterior_means_beta: tuple[float, ...]
    threshold: float
    prob_outside: float
    ci_excludes_zero_count: int
    slice_count: int
    failed_slice_count: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.prob_outside <= 1.0:
            raise ValueError("prob_outside must lie in [0, 1]")

    def prob_outside_at(self, threshold: float) -> float:
        """Fraction of slice posterior means with |mean| > threshold."""
        means = np.asarray(self.posterior_means_beta)
        if means.size == 0:
            return 0.0
        return float(np.count_nonzero(np.abs(means) > threshold)) / means.size

    def empirical_cdf(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted posterior means and the empirical CDF at each of them."""
        means = np.sort(np.asarray(self.posterior_means_beta))
        if means.size == 0:
            return means, means
        return means, np.arange(1, means.size + 1) / means.size

    def to_dict(self, means_file: str | None = None) -> dict:
        return {
            "slice_count": self.slice_count,
            "threshold": self.threshold,
            "prob_outside": self.prob_outside,
            "ci_excludes_zero_count": self.ci_excludes_zero_count,
            "fitted_slice_count": len(self.posterior_means_beta),
            "failed_slice_count": self.failed_slice_count,
            "means_file": means_file,
        }


def odds_ratio(beta: float) -> float:
    """Accuracy-odds multiplier implied by a logit-scale coefficient."""
    if not math.isfinite(beta):
        raise ValueError("beta must be finite")
    return math.exp(beta)


def dereplicate_slices(
    records: list[AccuracyRecord],
    spec: SliceSpec,
    expected_tasks: list[str] | None = None,
) -> list[list[AccuracyRecord]]:
    """Random one-subsample-per-task slices of the record set.

    Each slice picks, per task and uniformly at random, one of that
    task's observed subsample indices, then keeps every record matching
    the (task, chosen subsample) pair — so both LM types survive into
    the slice when present. Slices are mutually independent and the
    whole procedure is deterministic per seed.
    """
    if not records:
        raise ValueError("no records to slice")
    by_task: dict[str, dict[int, list[AccuracyRecord]]] = {}
    for record in records:
        by_task.setdefault(record.task_id, {}).setdefault(
            record.subsample_index, []
        ).append(record)
    if expected_tasks is not None:
        for task_id in expected_tasks:
            if task_id not in by_task:
                raise MissingTaskError(f"task {task_id!r} has no records")
    task_ids = sorted(by_task)
    slices: list[list[AccuracyRecord]] = []
    for slice_index in range(spec.slice_count):
        rng = derive_rng(spec.seed, "slice", slice_index)
        chosen: list[AccuracyRecord] = []
        for task_id in task_ids:
            indices = sorted(by_task[task_id])
            pick = indices[int(rng.integers(0, len(indices)))]
            chosen.extend(by_task[task_id][pick])
        slices.append(chosen)
    return slices


def _slice_seed(seed: int, slice_index: int) -> int:
    return int(derive_seed_sequence(seed, "meta-fit", slice_index).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SliceFit:
    slice_index: int
    posterior_mean_beta: float
    ci_low: float
    ci_high: float

    @property
    def ci_excludes_zero(self) -> bool:
        return self.ci_low > 0.0 or self.ci_high < 0.0


def fit_one_slice(
    records: list[AccuracyRecord],
    slice_index: int,
    fit_config: SamplerConfig,
    seed: int,
) -> SliceFit:
    """Reduced-model fit of one slice under the test-text-bias framing."""
    design = build_design(records, framing="bias")
    model = HierarchicalBinomialModel(design, include_v=False)
    draws = sample_posterior(model, fit_config, seed=_slice_seed(seed, slice_index))
    beta = draws.parameter("beta").reshape(-1)
    ci_low, ci_high = _order_statistic_interval(beta, CI_LEVEL)
    return SliceFit(
        slice_index=slice_index,
        posterior_mean_beta=float(beta.mean()),
        ci_low=ci_low,
        ci_high=ci_high,
    )


def meta_fit(
    slices: list[list[AccuracyRecord]],
    fit_config: SamplerConfig = REDUCED_FIT_CONFIG,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int = 0,
) -> MetaResult:
    """Fit every slice and summarize where slice-level conclusions land.

    A slice whose sampler fails to initialize or diverges irrecoverably
    is skipped and counted in ``failed_slice_count`` rather than
    fabricated.
    """
    if not slices:
        raise ValueError("no slices to fit")
    fits: list[SliceFit] = []
    failed = 0
    for slice_index, slice_records in enumerate(slices):
        try:
            fits.append(fit_one_slice(slice_records, slice_index, fit_config, seed))
        except (InitializationError, SamplerFailure):
            failed += 1
    means = tuple(f.posterior_mean_beta for f in fits)
    prob_outside = (
        float(np.count_nonzero(np.abs(np.asarray(means)) > threshold)) / len(means)
        if means
        else 0.0
    )
    return MetaResult(
        posterior_means_beta=means,
        threshold=threshold,
        prob_outside=prob_outside,
        ci_excludes_zero_count=sum(f.ci_excludes_zero for f in fits),
        slice_count=len(slices),
        failed_slice_count=failed,
    )
