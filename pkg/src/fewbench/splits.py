"""Repeated, seeded subsampling of (extra, train, test) triples.

Each repeat draws three pairwise-disjoint sets from the corpus pool:

* ``extra`` — n unlabeled texts, optionally used for continued pretraining;
* ``train`` — m labeled texts for classification training, stratified by
  class so that every class is represented;
* ``test`` — n labeled texts for scoring, drawn uniformly (not stratified).

Sampling order is fixed as extra -> test -> train, and each repeat derives
its own counter-based RNG stream from (master_seed, task_id, repeat_index),
so splits are reproducible and independent of how many repeats ran before.
Documents may recur across repeats: every repeat resamples from the full
pool.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import CorpusDocument
from .rng import derive_rng

# Test-set sizes with a default repeat count; anything else needs an override.
DEFAULT_REPEATS = {50: 100, 100: 100, 200: 50, 500: 20}


class UnsupportedTestSizeError(ValueError):
    """n has no default repeat count and no override was supplied."""


class InfeasiblePlanError(ValueError):
    """Corpus too small for the requested split sizes."""


class StratificationError(ValueError):
    """Stratified train allocation cannot be satisfied."""


def repeat_schedule(n: int, override: int | None = None) -> int:
    """Number of independent subsample repeats to run for test size n.

    Defaults: 100 repeats for n in {50, 100}, 50 for n=200, 20 for n=500.
    Other n require an explicit ``override``.
    """
    if override is not None:
        if override < 1:
            raise ValueError(f"repeat override must be >= 1, got {override}")
        return override
    try:
        return DEFAULT_REPEATS[n]
    except KeyError:
        raise UnsupportedTestSizeError(
            f"no default repeat count for n={n}; supported n: "
            f"{sorted(DEFAULT_REPEATS)}; pass an explicit override"
        ) from None


@dataclass(frozen=True)
class ExperimentPlan:
    m: int
    n: int
    repeats: int
    master_seed: int
    task_id: str

    def __post_init__(self) -> None:
        if self.m < 1 or self.n < 1:
            raise ValueError(f"m and n must be >= 1, got m={self.m}, n={self.n}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class SplitTriple:
    task_id: str
    m: int
    n: int
    repeat_index: int
    extra_ids: tuple[str, ...]
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        extra, train, test = set(self.extra_ids), set(self.train_ids), set(self.test_ids)
        if len(extra) != len(self.extra_ids) or len(train) != len(self.train_ids) or len(
            test
        ) != len(self.test_ids):
            raise ValueError("split contains repeated doc_ids")
        if extra & train or extra & test or train & test:
            raise ValueError("extra/train/test sets must be pairwise disjoint")
        if len(self.extra_ids) != self.n or len(self.test_ids) != self.n:
            raise ValueError("extra and test must each have exactly n docs")
        if len(self.train_ids) != self.m:
            raise ValueError("train must have exactly m docs")


def stratified_allocation(class_counts: dict[str, int], m: int) -> dict[str, int]:
    """Largest-remainder seat allocation of m train slots across classes.

    Seats are proportional to corpus class frequencies; fractional leftovers
    go to the largest remainders (lexicographic label tie-break), and every
    class is then guaranteed at least one seat by moving seats from the
    currently largest allocation.
    """
    if not class_counts:
        raise ValueError("no classes")
    if m < len(class_counts):
        raise StratificationError(
            f"m={m} is smaller than the class count {len(class_counts)}"
        )
    total = sum(class_counts.values())
    labels = sorted(class_counts)
    ideal = {c: m * class_counts[c] / total for c in labels}
    alloc = {c: math.floor(ideal[c]) for c in labels}
    leftover = m - sum(alloc.values())
    by_remainder = sorted(labels, key=lambda c: (-(ideal[c] - alloc[c]), c))
    for c in by_remainder[:leftover]:
        alloc[c] += 1
    # Guarantee representation: steal from the largest allocation.
    zeros = [c for c in labels if alloc[c] == 0]
    for c in zeros:
        donor = max(labels, key=lambda d: (alloc[d], d))
        alloc[donor] -= 1
        alloc[c] += 1
    return alloc


def draw_one_split(
    corpus: list[CorpusDocument], plan: ExperimentPlan, repeat_index: int
) -> SplitTriple:
    """Draw the (extra, train, test) triple for one repeat of the plan."""
    pool = len(corpus)
    need = 2 * plan.n + plan.m
    if pool < need:
        raise InfeasiblePlanError(
            f"corpus has {pool} docs but plan needs 2n+m={need} "
            f"(n={plan.n}, m={plan.m}); short by {need - pool}"
        )
    class_counts: dict[str, int] = {}
    for doc in corpus:
        class_counts[doc.label] = class_counts.get(doc.label, 0) + 1
    if len(class_counts) < 2:
        raise InfeasiblePlanError("corpus must contain at least 2 label classes")
    alloc = stratified_allocation(class_counts, plan.m)

    rng = derive_rng(plan.master_seed, "split", plan.task_id, repeat_index)
    indices = np.arange(pool)
    extra_idx = rng.choice(indices, size=plan.n, replace=False)
    remaining = np.setdiff1d(indices, extra_idx, assume_unique=True)
    test_idx = rng.choice(remaining, size=plan.n, replace=False)
    remaining = np.setdiff1d(remaining, test_idx, assume_unique=True)

    by_class: dict[str, list[int]] = {c: [] for c in class_counts}
    for i in remaining:
        by_class[corpus[i].label].append(int(i))
    train_idx: list[int] = []
    for label in sorted(alloc):
        want = alloc[label]
        have = by_class[label]
        if len(have) < want:
            raise StratificationError(
                f"class {label!r} has {len(have)} docs left after drawing "
                f"extra/test but train needs {want}"
            )
        chosen = rng.choice(np.asarray(have), size=want, replace=False)
        train_idx.extend(int(i) for i in chosen)

    ids = lambda idx: tuple(corpus[int(i)].doc_id for i in idx)
    return SplitTriple(
        task_id=plan.task_id,
        m=plan.m,
        n=plan.n,
        repeat_index=repeat_index,
        extra_ids=ids(extra_idx),
        train_ids=ids(train_idx),
        test_ids=ids(test_idx),
    )


def draw_splits(corpus: list[CorpusDocument], plan: ExperimentPlan) -> list[SplitTriple]:
    """All ``plan.repeats`` independent split triples, in repeat order."""
    return [draw_one_split(corpus, plan, k) for k in range(plan.repeats)]


def split_manifest_dict(split: SplitTriple) -> dict:
    return {
        "task_id": split.task_id,
        "m": split.m,
        "n": split.n,
        "repeat_index": split.repeat_index,
        "extra_ids": list(split.extra_ids),
        "train_ids": list(split.train_ids),
        "test_ids": list(split.test_ids),
    }


def write_split_manifest(split: SplitTriple, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(split_manifest_dict(split), indent=2) + "\n", encoding="utf-8"
    )


def read_split_manifest(path: str | Path) -> SplitTriple:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return SplitTriple(
        task_id=payload["task_id"],
        m=int(payload["m"]),
        n=int(payload["n"]),
        repeat_index=int(payload["repeat_index"]),
        extra_ids=tuple(payload["extra_ids"]),
        train_ids=tuple(payload["train_ids"]),
        test_ids=tuple(payload["test_ids"]),
    )
