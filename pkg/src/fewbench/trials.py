"""Paired trial orchestration against an external trainer process.

For every split, three conditions run on identical train/test data:
``base`` (no adaptive pretraining), ``extra`` (pretraining on the held
out unlabeled texts), and ``test`` (pretraining on the unlabeled test
texts). The trainer is any executable honoring a file contract:

* pretrain file (conditions extra/test only): JSONL ``{doc_id, text}``
* train file (unless zero-shot): JSONL ``{doc_id, text, label}``
* test file: JSONL ``{doc_id, text}`` — labels never leave the harness
* result file, written by the trainer: JSONL ``{doc_id,
  predicted_label}``, exactly one line per test doc, any order.

The command template may reference ``{mode}``, ``{pretrain_file}``,
``{train_file}``, ``{test_file}``, ``{result_file}``, ``{epochs}``,
``{seed}``; unset placeholders (pretrain in base mode, train in
zero-shot mode) expand to the empty string and the resulting empty
tokens are dropped, so templates that need conditional arguments should
read the ``PE_*`` environment variables instead, which are only set
when defined: ``PE_MODE``, ``PE_PRETRAIN_FILE``, ``PE_TRAIN_FILE``,
``PE_TEST_FILE``, ``PE_RESULT_FILE``, ``PE_EPOCHS``, ``PE_SEED``.

Every trial owns a private directory; a sidecar metadata file records
the split fingerprint so that (a) re-runs reuse finished trials whose
inputs are unchanged and (b) record assembly can assert all three
conditions really saw the same split. Failed trials are logged and the
repeat yields no record — counts are never fabricated.
"""

from __future__ import annotations

import hashlib
import json
import os
import shlex
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import AccuracyRecord, CorpusDocument
from .rng import derive_seed_sequence
from .splits import ExperimentPlan, SplitTriple, draw_splits, split_manifest_dict

CONDITIONS = ("base", "extra", "test")


class TrialFailure(RuntimeError):
    """Trainer exited nonzero or timed out."""


class ProtocolError(RuntimeError):
    """Trainer output violates the result-file contract."""


class ExperimentError(RuntimeError):
    """No repeat produced a complete record."""


@dataclass(frozen=True)
class TrainerContract:
    command_template: str
    epochs: int = 0
    zero_shot: bool = False
    timeout_seconds: float = 600.0
    max_parallel: int = 1

    def __post_init__(self) -> None:
        if not self.command_template.strip():
            raise ValueError("command_template must be nonempty")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.timeout_seconds <= 0:
            raise ValueError("timeout_seconds must be positive")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    text = "".join(json.dumps(row) + "\n" for row in rows)
    path.write_bytes(text.encode("utf-8"))


def split_fingerprint(split: SplitTriple) -> str:
    """Stable hash of the split content, shared by its three conditions."""
    payload = json.dumps(split_manifest_dict(split), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def trial_seed(master_seed: int, task_id: str, repeat_index: int, condition: str) -> int:
    seq = derive_seed_sequence(master_seed, "trial", task_id, repeat_index, condition)
    return int(seq.generate_state(1, np.uint64)[0])


def _pretrain_ids(split: SplitTriple, condition: str) -> tuple[str, ...] | None:
    if condition == "base":
        return None
    if condition == "extra":
        return split.extra_ids
    if condition == "test":
        return split.test_ids
    raise ValueError(f"unknown condition {condition!r}")


def score_result(
    result_path: Path, split: SplitTriple, corpus_map: dict[str, CorpusDocument]
) -> int:
    """Count correct predictions in a trainer result file.

    Requires exactly one prediction per test doc (any order), no
    duplicate or unknown doc ids, and predicted labels drawn from the
    corpus label set.
    """
    if not result_path.exists():
        raise ProtocolError(f"result file {result_path} missing")
    known_labels = {doc.label for doc in corpus_map.values()}
    predictions: dict[str, str] = {}
    with result_path.open(encoding="utf-8") as handle:
        for ordinal, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"result line {ordinal}: invalid JSON: {exc}") from None
            if not isinstance(row, dict) or {"doc_id", "predicted_label"} - row.keys():
                raise ProtocolError(
                    f"result line {ordinal}: needs doc_id and predicted_label"
                )
            doc_id = str(row["doc_id"])
            if doc_id in predictions:
                raise ProtocolError(f"result line {ordinal}: duplicate doc_id {doc_id!r}")
            predictions[doc_id] = str(row["predicted_label"])
    expected = set(split.test_ids)
    if set(predictions) != expected:
        missing = sorted(expected - set(predictions))[:3]
        extra = sorted(set(predictions) - expected)[:3]
        raise ProtocolError(
            f"result ids do not match test ids (missing {missing}, unexpected {extra})"
        )
    unknown = sorted({p for p in predictions.values() if p not in known_labels})
    if unknown:
        raise ProtocolError(f"unknown predicted labels {unknown[:5]}")
    return sum(
        1 for doc_id, label in predictions.items() if corpus_map[doc_id].label == label
    )


def run_trial(
    split: SplitTriple,
    contract: TrainerContract,
    condition: str,
    corpus: list[CorpusDocument],
    work_dir: Path,
    seed: int,
) -> int:
    """Run one trainer invocation and score its predictions.

    Writes the condition's input files into ``work_dir``, executes the
    expanded command template there, and returns the number of correct
    predictions on the split's test docs.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}, got {condition!r}")
    corpus_map = {doc.doc_id: doc for doc in corpus}
    work_dir.mkdir(parents=True, exist_ok=True)

    test_path = work_dir / "test.jsonl"
    _write_jsonl(
        test_path,
        [{"doc_id": d, "text": corpus_map[d].text} for d in split.test_ids],
    )
    paths = {
        "mode": condition,
        "test_file": str(test_path),
        "result_file": str(work_dir / "result.jsonl"),
        "epochs": str(contract.epochs),
        "seed": str(seed),
        "pretrain_file": "",
        "train_file": "",
    }
    pretrain_ids = _pretrain_ids(split, condition)
    if pretrain_ids is not None:
        pretrain_path = work_dir / "pretrain.jsonl"
        _write_jsonl(
            pretrain_path,
            [{"doc_id": d, "text": corpus_map[d].text} for d in pretrain_ids],
        )
        paths["pretrain_file"] = str(pretrain_path)
    if not contract.zero_shot:
        train_path = work_dir / "train.jsonl"
        _write_jsonl(
            train_path,
            [
                {"doc_id": d, "text": corpus_map[d].text, "label": corpus_map[d].label}
                for d in split.train_ids
            ],
        )
        paths["train_file"] = str(train_path)

    command = [tok for tok in shlex.split(contract.command_template.format(**paths)) if tok]
    env = dict(os.environ)
    env["PE_MODE"] = condition
    env["PE_TEST_FILE"] = paths["test_file"]
    env["PE_RESULT_FILE"] = paths["result_file"]
    env["PE_EPOCHS"] = paths["epochs"]
    env["PE_SEED"] = paths["seed"]
    env.pop("PE_PRETRAIN_FILE", None)
    env.pop("PE_TRAIN_FILE", None)
    if paths["pretrain_file"]:
        env["PE_PRETRAIN_FILE"] = paths["pretrain_file"]
    if paths["train_file"]:
        env["PE_TRAIN_FILE"] = paths["train_file"]

    try:
        proc = subprocess.run(
            command,
            cwd=work_dir,
            env=env,
            capture_output=True,
            text=True,
            timeout=contract.timeout_seconds,
        )
    except subprocess.TimeoutExpired:
        raise TrialFailure(
            f"trainer timed out after {contract.timeout_seconds}s in {work_dir}"
        ) from None
    except OSError as exc:
        raise TrialFailure(f"trainer could not start: {exc}") from None
    if proc.returncode != 0:
        tail = proc.stderr.strip().splitlines()[-5:]
        raise TrialFailure(
            f"trainer exited {proc.returncode} in {work_dir}: " + " | ".join(tail)
        )
    return score_result(Path(paths["result_file"]), split, corpus_map)


def _trial_meta_path(trial_dir: Path) -> Path:
    return trial_dir / "trial_meta.json"


def _reusable_count(
    trial_dir: Path,
    fingerprint: str,
    seed: int,
    split: SplitTriple,
    corpus_map: dict[str, CorpusDocument],
) -> int | None:
    """Score of a previously finished trial, if its inputs are unchanged."""
    meta_path = _trial_meta_path(trial_dir)
    if not meta_path.exists():
        return None
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    if meta.get("split_sha256") != fingerprint or meta.get("seed") != seed:
        return None
    try:
        return score_result(trial_dir / "result.jsonl", split, corpus_map)
    except ProtocolError:
        return None


def _run_condition(
    split: SplitTriple,
    contract: TrainerContract,
    condition: str,
    corpus: list[CorpusDocument],
    trial_dir: Path,
    fingerprint: str,
    seed: int,
) -> int:
    corpus_map = {doc.doc_id: doc for doc in corpus}
    reused = _reusable_count(trial_dir, fingerprint, seed, split, corpus_map)
    if reused is not None:
        return reused
    count = run_trial(split, contract, condition, corpus, trial_dir, seed)
    _trial_meta_path(trial_dir).write_text(
        json.dumps(
            {"condition": condition, "split_sha256": fingerprint, "seed": seed},
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return count


def run_experiment(
    corpus: list[CorpusDocument],
    plan: ExperimentPlan,
    contract: TrainerContract,
    lm_type: str,
    output_dir: Path,
) -> list[AccuracyRecord]:
    """All repeats x conditions of one plan, assembled into records.

    Each repeat directory holds the split manifest plus one subdirectory
    per condition; repeats whose three trials all succeed yield one
    paired record. Interrupted runs resume by reusing any finished trial
    whose split fingerprint and seed still match.
    """
    splits = draw_splits(corpus, plan)
    output_dir.mkdir(parents=True, exist_ok=True)
    failures: list[str] = []

    jobs = []
    for repeat_index, split in enumerate(splits):
        repeat_dir = output_dir / f"repeat{repeat_index:03d}"
        repeat_dir.mkdir(exist_ok=True)
        fingerprint = split_fingerprint(split)
        (repeat_dir / "split.json").write_text(
            json.dumps(split_manifest_dict(split), sort_keys=True) + "\n",
            encoding="utf-8",
        )
        for condition in CONDITIONS:
            jobs.append((repeat_index, split, condition, repeat_dir / condition, fingerprint))

    def worker(job) -> int:
        repeat_index, split, condition, trial_dir, fingerprint = job
        seed = trial_seed(plan.master_seed, plan.task_id, repeat_index, condition)
        return _run_condition(
            split, contract, condition, corpus, trial_dir, fingerprint, seed
        )

    outcomes: dict[tuple[int, str], int | str] = {}
    with ThreadPoolExecutor(max_workers=contract.max_parallel) as pool:
        futures = {pool.submit(worker, job): job for job in jobs}
        for future, job in futures.items():
            repeat_index, _, condition, _, _ = job
            try:
                outcomes[(repeat_index, condition)] = future.result()
            except (TrialFailure, ProtocolError) as exc:
                outcomes[(repeat_index, condition)] = f"{type(exc).__name__}: {exc}"

    records: list[AccuracyRecord] = []
    for repeat_index, split in enumerate(splits):
        counts = {}
        bad = False
        for condition in CONDITIONS:
            outcome = outcomes[(repeat_index, condition)]
            if isinstance(outcome, str):
                failures.append(f"repeat{repeat_index:03d}/{condition}: {outcome}")
                bad = True
            else:
                counts[condition] = outcome
        if bad:
            continue
        records.append(
            AccuracyRecord(
                lm_type=lm_type,
                task_id=plan.task_id,
                subsample_index=repeat_index,
                m=plan.m,
                n=plan.n,
                correct_base=counts["base"],
                correct_extra=counts["extra"],
                correct_test=counts["test"],
            )
        )
    if failures:
        (output_dir / "failures.log").write_text(
            "".join(line + "\n" for line in failures), encoding="utf-8"
        )
    if not records:
        raise ExperimentError(
            f"all {len(splits)} repeats failed; see {output_dir / 'failures.log'}"
        )
    return records
