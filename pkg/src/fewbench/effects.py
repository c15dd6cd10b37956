"""Accuracy-difference effect estimates from predictive samples.

Per predictive sample the effect is the mean treatment accuracy minus
the mean control accuracy. Both marginal (averaged over everything) and
conditional (one LM type and task, averaged over subsamples) effects are
computed as an integer sum of paired count differences divided once by
(pair count * n). That single-division form makes pooling exact: a
weighted mean of conditional effects with weights equal to their pair
counts reproduces the marginal effect bit-for-bit, because the integer
numerators add without rounding (see ``pool_effects``).

Intervals are 89% equal-tailed and taken as order statistics of the
effect samples (lower order statistic at the 5.5% tail, upper at 94.5%),
so they are reproducible without interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .predictive import PredictiveSamples

CI_LEVEL = 0.89


class PairingError(ValueError):
    """Treatment and control rows do not line up one-to-one."""


@dataclass(frozen=True)
class EffectSummary:
    """Distribution of an average accuracy difference.

    ``numerators`` holds the per-sample integer sums of paired count
    differences; ``samples`` equals ``numerators / (pair_count * n)``
    with one float division per entry.
    """

    kind: str  # "marginal" or "conditional"
    samples: np.ndarray
    numerators: np.ndarray
    pair_count: int
    n: int
    mean: float
    ci_low: float
    ci_high: float
    level: float = CI_LEVEL
    lm: str | None = None
    task: str | None = None

    def __post_init__(self) -> None:
        if not self.ci_low <= self.ci_high:
            raise ValueError("ci_low must not exceed ci_high")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lm": self.lm,
            "task": self.task,
            "mean": self.mean,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "level": self.level,
        }


def _order_statistic_interval(samples: np.ndarray, level: float) -> tuple[float, float]:
    tail = (1.0 - level) / 2.0
    low = float(np.quantile(samples, tail, method="lower"))
    high = float(np.quantile(samples, 1.0 - tail, method="higher"))
    return low, high


def _summarize(
    numerators: np.ndarray,
    pair_count: int,
    n: int,
    kind: str,
    lm: str | None = None,
    task: str | None = None,
) -> EffectSummary:
    samples = numerators / float(pair_count * n)
    low, high = _order_statistic_interval(samples, CI_LEVEL)
    return EffectSummary(
        kind=kind,
        samples=samples,
        numerators=numerators,
        pair_count=pair_count,
        n=n,
        mean=float(samples.mean()),
        ci_low=low,
        ci_high=high,
        lm=lm,
        task=task,
    )


def _paired_numerators(pred: PredictiveSamples, row_mask: np.ndarray) -> tuple[np.ndarray, int]:
    """Integer per-sample sums of (treatment - control) over masked rows."""
    design = pred.design
    treat = row_mask & (design.x == 1)
    control = row_mask & (design.x == 0)
    treat_cells = sorted(
        zip(design.z[treat], design.task[treat], design.subsample[treat])
    )
    control_cells = sorted(
        zip(design.z[control], design.task[control], design.subsample[control])
    )
    if treat_cells != control_cells or len(treat_cells) != len(set(treat_cells)):
        raise PairingError("treatment and control rows must pair on (lm, task, subsample)")
    if not treat_cells:
        raise PairingError("no rows selected")
    numerators = pred.counts[:, treat].sum(axis=1) - pred.counts[:, control].sum(axis=1)
    return numerators, len(treat_cells)


def marginal_effect(pred: PredictiveSamples) -> EffectSummary:
    """Average accuracy difference over every LM type, task, and subsample."""
    n = pred.design.uniform_n()
    mask = np.ones(pred.design.rows, dtype=bool)
    numerators, pairs = _paired_numerators(pred, mask)
    return _summarize(numerators, pairs, n, kind="marginal")


def conditional_effect(pred: PredictiveSamples, lm_index: int, task_index: int) -> EffectSummary:
    """Average accuracy difference for one (LM type, task), over subsamples."""
    design = pred.design
    n = design.uniform_n()
    z_values = set(np.unique(design.z).tolist())
    if lm_index not in z_values:
        raise IndexError(f"no LM type with index {lm_index}")
    if not 0 <= task_index < design.task_count:
        raise IndexError(f"no task with index {task_index}")
    mask = (design.z == lm_index) & (design.task == task_index)
    numerators, pairs = _paired_numerators(pred, mask)
    lm = design.lm_types[lm_index] if lm_index < len(design.lm_types) else str(lm_index)
    task = design.task_ids[task_index] if design.task_ids else str(task_index)
    return _summarize(numerators, pairs, n, kind="conditional", lm=lm, task=task)


def all_conditional_effects(pred: PredictiveSamples) -> list[EffectSummary]:
    """Conditional effects for every (LM type, task) present in the design."""
    design = pred.design
    out = []
    for lm_index in sorted(set(np.unique(design.z).tolist())):
        for task_index in range(design.task_count):
            out.append(conditional_effect(pred, lm_index, task_index))
    return out


def pool_effects(effects: list[EffectSummary]) -> EffectSummary:
    """Pair-count-weighted mean of effects, exact by integer pooling.

    Because each input stores its integer numerator and its weight is its
    own pair count, the weighted mean reduces to summed numerators over
    summed pairs -- the same single division the marginal effect uses, so
    pooling every conditional effect reproduces the marginal effect
    bitwise.
    """
    if not effects:
        raise ValueError("nothing to pool")
    n_values = {e.n for e in effects}
    if len(n_values) != 1:
        raise ValueError(f"effects mix test sizes {sorted(n_values)}")
    lengths = {e.numerators.shape[0] for e in effects}
    if len(lengths) != 1:
        raise ValueError("effects hold different sample counts")
    numerators = np.sum([e.numerators for e in effects], axis=0)
    pairs = sum(e.pair_count for e in effects)
    return _summarize(numerators, pairs, n_values.pop(), kind="marginal")
