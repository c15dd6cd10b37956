"""Frequentist companions to the hierarchical fit.

One-sided paired sign-flip test: under the null that per-subsample
accuracy differences are symmetric about zero, every ±1 sign assignment
of the observed differences is equally likely, so the p-value is the
share of assignments whose mean is at least the observed mean. Small
vectors are enumerated exactly; larger ones fall back to Monte Carlo
with the standard add-one correction. Assignments are compared on sums,
which orders identically to means for a fixed-length vector.

Also here: Benjamini-Hochberg step-up FDR adjustment and Spearman rank
correlation with per-task permuted-null distributions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .rng import derive_rng

EXHAUSTIVE_LIMIT = 4096
MIN_MC_PERMUTATIONS = 100


class ConfigurationError(ValueError):
    """Test parameters outside their allowed range."""


class UndefinedCorrelationError(ValueError):
    """Rank correlation undefined (an input has zero rank variance)."""


@dataclass(frozen=True)
class PairedDiffs:
    """Per-subsample accuracy differences for one task and configuration."""

    diffs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.diffs:
            raise ValueError("diffs must be nonempty")
        if not all(math.isfinite(d) for d in self.diffs):
            raise ValueError("diffs must be finite")


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_raw: float
    n_permutations: int
    exhaustive: bool
    p_adjusted: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_raw <= 1.0:
            raise ValueError("p_raw must lie in [0, 1]")
        if self.p_adjusted is not None and not 0.0 <= self.p_adjusted <= 1.0:
            raise ValueError("p_adjusted must lie in [0, 1]")


def _as_diff_array(diffs: Sequence[float] | PairedDiffs) -> np.ndarray:
    if isinstance(diffs, PairedDiffs):
        diffs = diffs.diffs
    arr = np.asarray(list(diffs), dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("diffs must be a nonempty vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError("diffs must be finite")
    return arr


def signflip_test(
    diffs: Sequence[float] | PairedDiffs,
    n_permutations: int = 100_000,
    seed: int = 0,
    method: str = "auto",
) -> TestResult:
    """One-sided paired sign-flip permutation test (H1: mean > 0).

    Enumerates all 2^k assignments when that count is at most 4096,
    otherwise draws ``n_permutations`` random assignments. Ties with the
    observed mean count toward rejection, which keeps the test
    conservative and puts the all-positive assignment itself in the
    rejection region (so exhaustive p is never below 2^-k).

    ``method`` pins one branch: "exhaustive" errors when 2^k exceeds the
    enumeration limit, "monte-carlo" samples even when enumeration would
    be feasible (useful for cross-checking the two).
    """
    if method not in ("auto", "exhaustive", "monte-carlo"):
        raise ConfigurationError(f"unknown method {method!r}")
    arr = _as_diff_array(diffs)
    k = arr.size
    observed_sum = float(arr.sum())
    statistic = observed_sum / k

    if 2**k > EXHAUSTIVE_LIMIT and method == "exhaustive":
        raise ConfigurationError(
            f"exhaustive enumeration needs 2^k <= {EXHAUSTIVE_LIMIT}, got k={k}"
        )
    if 2**k <= EXHAUSTIVE_LIMIT and method != "monte-carlo":
        count = 2**k
        bits = (np.arange(count)[:, None] >> np.arange(k)[None, :]) & 1
        signs = 1 - 2 * bits.astype(float)
        sums = signs @ arr
        p_raw = float(np.count_nonzero(sums >= observed_sum)) / count
        return TestResult(
            statistic=statistic, p_raw=p_raw, n_permutations=count, exhaustive=True
        )

    if n_permutations < MIN_MC_PERMUTATIONS:
        raise ConfigurationError(
            f"n_permutations must be >= {MIN_MC_PERMUTATIONS} for Monte Carlo, "
            f"got {n_permutations}"
        )
    rng = derive_rng(seed, "signflip")
    signs = rng.integers(0, 2, size=(n_permutations, k)).astype(float) * 2.0 - 1.0
    sums = signs @ arr
    hits = int(np.count_nonzero(sums >= observed_sum))
    p_raw = (1.0 + hits) / (n_permutations + 1.0)
    return TestResult(
        statistic=statistic, p_raw=p_raw, n_permutations=n_permutations, exhaustive=False
    )


def bh_adjust(p_values: Sequence[float]) -> list[float]:
    """Benjamini-Hochberg step-up adjusted p-values, in input order.

    adj_(i) = min_{j >= i} p_(j) * M / j over the sorted values, capped
    at 1.
    """
    arr = np.asarray(list(p_values), dtype=float)
    if arr.size == 0:
        return []
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise ValueError("p-values must lie in [0, 1]")
    m = arr.size
    order = np.argsort(arr, kind="stable")
    ranked = arr[order] * m / np.arange(1, m + 1)
    adjusted_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    adjusted_sorted = np.minimum(adjusted_sorted, 1.0)
    out = np.empty(m)
    out[order] = adjusted_sorted
    return out.tolist()


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties."""
    x_arr = np.asarray(list(x), dtype=float)
    y_arr = np.asarray(list(y), dtype=float)
    if x_arr.shape != y_arr.shape or x_arr.ndim != 1:
        raise ValueError("inputs must be equal-length vectors")
    if x_arr.size < 2:
        raise ValueError("need at least two pairs")
    rx = rankdata(x_arr)
    ry = rankdata(y_arr)
    if np.ptp(rx) == 0.0 or np.ptp(ry) == 0.0:
        raise UndefinedCorrelationError("an input has zero rank variance")
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    value = float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))
    return max(-1.0, min(1.0, value))


def observed_correlations(
    pairs_by_task: dict[str, tuple[Sequence[float], Sequence[float]]]
) -> dict[str, float]:
    """Per-task Spearman correlation of the two paired lists.

    Tasks with fewer than two pairs or zero rank variance are skipped
    with a warning.
    """
    out: dict[str, float] = {}
    for task_id, (x, y) in pairs_by_task.items():
        try:
            out[task_id] = spearman(x, y)
        except (ValueError, UndefinedCorrelationError) as exc:
            warnings.warn(f"task {task_id!r} skipped: {exc}", stacklevel=2)
    return out


def permuted_correlation_nulls(
    pairs_by_task: dict[str, tuple[Sequence[float], Sequence[float]]],
    n_draws: int = 10,
    seed: int = 0,
) -> list[np.ndarray]:
    """Null distributions of per-task correlations under independence.

    For each draw, the second list of every task is shuffled (breaking
    the pairing while keeping both marginals) and the per-task Spearman
    correlations are recomputed; each draw yields one null distribution
    of per-task correlations. Tasks that cannot produce a correlation
    are skipped with a warning, consistently across draws.
    """
    usable: list[tuple[str, np.ndarray, np.ndarray]] = []
    for task_id, (x, y) in pairs_by_task.items():
        x_arr = np.asarray(list(x), dtype=float)
        y_arr = np.asarray(list(y), dtype=float)
        if (
            x_arr.size < 2
            or x_arr.shape != y_arr.shape
            or np.ptp(rankdata(x_arr)) == 0.0
            or np.ptp(rankdata(y_arr)) == 0.0
        ):
            warnings.warn(
                f"task {task_id!r} skipped: needs >= 2 pairs with rank variance",
                stacklevel=2,
            )
            continue
        usable.append((task_id, x_arr, y_arr))
    draws = []
    for draw_index in range(n_draws):
        values = []
        for task_id, x_arr, y_arr in usable:
            rng = derive_rng(seed, "corr-null", draw_index, task_id)
            values.append(spearman(x_arr, rng.permutation(y_arr)))
        draws.append(np.asarray(values))
    return draws
