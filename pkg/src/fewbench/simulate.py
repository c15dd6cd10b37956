"""Synthetic accuracy records from the hierarchical binomial-logit model.

Draws task effects U_j, nested subsample effects V_jk, and task-by-condition
interaction effects W_jl from centered normals, forms

    logit(rate) = mu + alpha * z_i + U_j + V_jk + W_jl + beta * x_l

with z the LM-type indicator and x the condition indicator (0 = control,
1 = treatment), and draws correct-prediction counts Binomial(n, rate).
The random effects are shared exactly as in the paired design: U_j and V_jk
are common to both conditions and both LM types, so simulated records carry
the same dependence structure real paired trials do.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dataio import AccuracyRecord
from .rng import derive_rng


@dataclass(frozen=True)
class GenerativeTruth:
    """Fixed parameter values driving one simulated experiment sweep."""

    mu: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    sigma_u: float = 0.0
    sigma_v: float = 0.0
    sigma_w: float = 0.0
    lm_count: int = 1
    task_count: int = 25
    subsample_count: int = 20
    n: int = 200
    m: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.sigma_u, self.sigma_v, self.sigma_w) < 0:
            raise ValueError("sigma_u, sigma_v, sigma_w must be non-negative")
        if min(self.lm_count, self.task_count, self.subsample_count, self.n) < 1:
            raise ValueError("lm_count, task_count, subsample_count, n must be >= 1")
        if self.lm_count > 2:
            raise ValueError("at most 2 LM types (a single 0/1 indicator is modeled)")


def lm_type_name(i: int) -> str:
    return f"lm{i}"


def task_name(j: int) -> str:
    return f"task{j:03d}"


def success_probabilities(truth: GenerativeTruth) -> np.ndarray:
    """Per-cell success rates, shape (lm_count, task_count, subsample_count, 2).

    Deterministic per seed; uses the same random-effect draws as
    :func:`simulate_records`, which consumes this grid.
    """
    rng = derive_rng(truth.seed, "simulate")
    I, J, K = truth.lm_count, truth.task_count, truth.subsample_count
    u = truth.sigma_u * rng.standard_normal(J)
    v = truth.sigma_v * rng.standard_normal((J, K))
    w = truth.sigma_w * rng.standard_normal((J, 2))
    z = np.arange(I, dtype=float)
    x = np.arange(2, dtype=float)
    eta = (
        truth.mu
        + truth.alpha * z[:, None, None, None]
        + u[None, :, None, None]
        + v[None, :, :, None]
        + w[None, :, None, :]
        + truth.beta * x[None, None, None, :]
    )
    return expit(eta)


def simulate_records(
    truth: GenerativeTruth, framing: str = "bias"
) -> list[AccuracyRecord]:
    """Simulate one paired record per (lm_type, task, subsample).

    The two simulated conditions fill the (control, treatment) count columns
    selected by ``framing``: ``"boost"`` packs them into
    (correct_base, correct_extra), ``"bias"`` into
    (correct_extra, correct_test). The leftover third column duplicates its
    neighbour so the unframed difference is zero; analyses only ever read
    the framed pair.
    """
    if framing not in ("boost", "bias"):
        raise ValueError(f"framing must be 'boost' or 'bias', got {framing!r}")
    rates = success_probabilities(truth)
    rng = derive_rng(truth.seed, "simulate", "counts")
    counts = rng.binomial(truth.n, rates)
    records: list[AccuracyRecord] = []
    for j in range(truth.task_count):
        for k in range(truth.subsample_count):
            for i in range(truth.lm_count):
                control = int(counts[i, j, k, 0])
                treatment = int(counts[i, j, k, 1])
                if framing == "boost":
                    base, extra, test = control, treatment, treatment
                else:
                    base, extra, test = control, control, treatment
                records.append(
                    AccuracyRecord(
                        lm_type=lm_type_name(i),
                        task_id=task_name(j),
                        subsample_index=k,
                        m=truth.m,
                        n=truth.n,
                        correct_base=base,
                        correct_extra=extra,
                        correct_test=test,
                    )
                )
    return records
