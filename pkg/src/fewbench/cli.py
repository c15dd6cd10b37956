"""Command-line pipeline: plan, run, simulate, fit, effects, permtest,
meta, correlate, report.

Every subcommand writes only into its output directory and always emits
a ``manifest.json`` there recording the full configuration, the seeds in
play, and a SHA-256 per artifact, so any emitted number can be traced to
the config that produced it. Outputs contain no timestamps or absolute
paths in their numeric artifacts; running a subcommand twice with the
same inputs and seeds produces byte-identical files.

Exit codes: 0 on success, 1 on validation or runtime failure (with a
single-line JSON error object on stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .effects import conditional_effect, marginal_effect
from .freqtests import bh_adjust, permuted_correlation_nulls, signflip_test, spearman
from .meta import (
    DEFAULT_THRESHOLD,
    REDUCED_FIT_CONFIG,
    SliceSpec,
    dereplicate_slices,
    meta_fit,
)
from .model import FRAMING_COLUMNS, HierarchicalBinomialModel, build_design
from .predictive import posterior_predictive
from .report import report_means, write_report_csv
from .sampler import PosteriorDraws, SamplerConfig, sample_posterior
from .simulate import GenerativeTruth, simulate_records
from .splits import ExperimentPlan, draw_splits, repeat_schedule, write_split_manifest
from .trials import TrainerContract, run_experiment

DRAWS_CSV_HEADER = "chain,draw,param,value"


class CliError(Exception):
    """Validation failure surfaced as exit code 1 with a JSON error."""

    def __init__(self, message: str, kind: str = "validation") -> None:
        super().__init__(message)
        self.kind = kind


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    out_dir: Path, subcommand: str, config: dict, artifact_names: list[str]
) -> None:
    artifacts = {name: _sha256(out_dir / name) for name in sorted(artifact_names)}
    payload = {"subcommand": subcommand, "config": config, "artifacts": artifacts}
    (out_dir / "manifest.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _json_safe(value: float) -> float | None:
    value = float(value)
    return value if math.isfinite(value) else None


def _out_dir(raw: str) -> Path:
    out = Path(raw)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_records(path: str) -> list[dataio.AccuracyRecord]:
    source = Path(path)
    if not source.exists():
        raise CliError(f"records file {source} does not exist", kind="missing-input")
    try:
        records, ingest = dataio.parse_accuracy_records(source)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if ingest.rows_rejected:
        row, reason = ingest.rejection_reasons[0]
        raise CliError(
            f"{source}: {ingest.rows_rejected} invalid row(s); first at data row "
            f"{row}: {reason}"
        )
    if not records:
        raise CliError(f"{source}: no records")
    return records


def _load_corpus(path: str) -> list[dataio.CorpusDocument]:
    source = Path(path)
    if not source.exists():
        raise CliError(f"corpus file {source} does not exist", kind="missing-input")
    try:
        docs, ingest = dataio.parse_corpus(source)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if ingest.rows_rejected:
        row, reason = ingest.rejection_reasons[0]
        raise CliError(
            f"{source}: {ingest.rows_rejected} invalid row(s); first at row "
            f"{row}: {reason}"
        )
    return docs


def write_draws_csv(path: Path, draws: PosteriorDraws) -> None:
    # Parameter names such as v[0,1] contain commas, so fields go through
    # a real CSV writer (with LF endings for byte-stable output).
    chains, n_draws, dim = draws.samples.shape
    names = draws.param_names
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(DRAWS_CSV_HEADER.split(","))
        for chain in range(chains):
            for draw in range(n_draws):
                row = draws.samples[chain, draw]
                writer.writerows(
                    (chain, draw, names[p], repr(float(row[p]))) for p in range(dim)
                )


def read_draws_csv(path: Path) -> tuple[np.ndarray, tuple[str, ...]]:
    """Samples array (chains, draws, dim) and param names, from draws CSV.

    Expects the writer's canonical ordering: draws grouped by (chain,
    draw) with parameters repeating in one fixed order.
    """
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != DRAWS_CSV_HEADER.split(","):
            raise CliError(f"{path}: expected header {DRAWS_CSV_HEADER!r}")
        names: list[str] = []
        blocks: list[np.ndarray] = []
        current: list[float] = []
        current_key: tuple[int, int] | None = None
        first_block = True
        for row in reader:
            if len(row) != 4:
                raise CliError(f"{path}: malformed draws row {row!r}")
            key = (int(row[0]), int(row[1]))
            if key != current_key:
                if current_key is not None:
                    blocks.append(np.asarray(current))
                    if len(current) != len(names):
                        raise CliError(f"{path}: ragged draw block at {current_key}")
                    first_block = False
                current = []
                current_key = key
            if first_block and current_key == (0, 0):
                names.append(row[2])
            current.append(float(row[3]))
        if current_key is None:
            raise CliError(f"{path}: no draws")
        blocks.append(np.asarray(current))
    dim = len(names)
    total = len(blocks)
    n_chains = current_key[0] + 1
    if total % n_chains:
        raise CliError(f"{path}: {total} blocks do not split into {n_chains} chains")
    n_draws = total // n_chains
    samples = np.stack(blocks).reshape(n_chains, n_draws, dim)
    return samples, tuple(names)


def _diagnostics_payload(draws: PosteriorDraws) -> dict:
    rhat_all = draws.rhat()
    ess_all = draws.ess()
    focus = [
        name
        for name in ("mu", "alpha", "beta", "log_sigma_u", "log_sigma_v", "log_sigma_w")
        if name in draws.param_names
    ]
    index = {name: draws.param_names.index(name) for name in focus}
    rhat = {name: _json_safe(rhat_all[i]) for name, i in index.items()}
    ess = {name: _json_safe(ess_all[i]) for name, i in index.items()}
    with np.errstate(invalid="ignore"):
        rhat["max"] = _json_safe(np.nanmax(rhat_all))
        ess["min"] = _json_safe(np.nanmin(ess_all))
    return {
        "rhat": rhat,
        "ess": ess,
        "divergences": draws.divergences,
        "seed": draws.seed,
        "config": draws.config.to_dict(),
    }


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_plan(args: argparse.Namespace) -> None:
    corpus = _load_corpus(args.corpus)
    repeats = args.repeats
    if repeats is None:
        try:
            repeats = repeat_schedule(args.n)
        except ValueError as exc:
            raise CliError(f"{exc}; pass --repeats explicitly") from None
    task_id = args.task_id or Path(args.corpus).stem
    try:
        plan = ExperimentPlan(
            m=args.m, n=args.n, repeats=repeats, master_seed=args.seed, task_id=task_id
        )
        splits = draw_splits(corpus, plan)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = _out_dir(args.out)
    splits_dir = out / "splits"
    splits_dir.mkdir(exist_ok=True)
    artifact_names = []
    for split in splits:
        name = f"splits/repeat{split.repeat_index:03d}.json"
        write_split_manifest(split, out / name)
        artifact_names.append(name)
    plan_payload = {
        "m": plan.m,
        "n": plan.n,
        "repeats": plan.repeats,
        "seed": plan.master_seed,
        "task_id": plan.task_id,
        "corpus": str(Path(args.corpus).resolve()),
    }
    (out / "plan.json").write_text(
        json.dumps(plan_payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    artifact_names.append("plan.json")
    _write_manifest(out, "plan", plan_payload, artifact_names)


def _cmd_run(args: argparse.Namespace) -> None:
    plan_dir = Path(args.plan_dir)
    plan_path = plan_dir / "plan.json"
    if not plan_path.exists():
        raise CliError(f"{plan_path} not found; run `plan` first", kind="missing-input")
    plan_payload = json.loads(plan_path.read_text(encoding="utf-8"))
    corpus = _load_corpus(plan_payload["corpus"])
    plan = ExperimentPlan(
        m=int(plan_payload["m"]),
        n=int(plan_payload["n"]),
        repeats=int(plan_payload["repeats"]),
        master_seed=int(plan_payload["seed"]),
        task_id=str(plan_payload["task_id"]),
    )
    contract = TrainerContract(
        command_template=args.trainer_cmd,
        epochs=args.epochs,
        zero_shot=args.zero_shot,
        timeout_seconds=args.timeout,
        max_parallel=args.jobs,
    )
    out = _out_dir(args.out if args.out else str(plan_dir / "run"))
    records = run_experiment(corpus, plan, contract, args.lm_type, out / "trials")
    dataio.write_accuracy_records(records, out / "records.csv")
    config = {
        "plan": plan_payload,
        "trainer_cmd": args.trainer_cmd,
        "epochs": args.epochs,
        "zero_shot": args.zero_shot,
        "jobs": args.jobs,
        "timeout": args.timeout,
        "lm_type": args.lm_type,
    }
    artifact_names = ["records.csv"]
    if (out / "trials" / "failures.log").exists():
        artifact_names.append("trials/failures.log")
    _write_manifest(out, "run", config, artifact_names)


def _cmd_simulate(args: argparse.Namespace) -> None:
    try:
        truth = GenerativeTruth(
            mu=args.mu,
            alpha=args.alpha,
            beta=args.beta,
            sigma_u=args.sigma_u,
            sigma_v=args.sigma_v,
            sigma_w=args.sigma_w,
            lm_count=args.lm_types,
            task_count=args.tasks,
            subsample_count=args.subsamples,
            n=args.n,
            m=args.m,
            seed=args.seed,
        )
        records = simulate_records(truth, framing=args.framing)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = _out_dir(args.out)
    dataio.write_accuracy_records(records, out / "records.csv")
    config = {
        "mu": args.mu,
        "alpha": args.alpha,
        "beta": args.beta,
        "sigma_u": args.sigma_u,
        "sigma_v": args.sigma_v,
        "sigma_w": args.sigma_w,
        "tasks": args.tasks,
        "subsamples": args.subsamples,
        "n": args.n,
        "m": args.m,
        "lm_types": args.lm_types,
        "framing": args.framing,
        "seed": args.seed,
    }
    _write_manifest(out, "simulate", config, ["records.csv"])


def _sampler_config(args: argparse.Namespace) -> SamplerConfig:
    try:
        return SamplerConfig(
            chains=args.chains,
            draws=args.draws,
            tune=args.tune,
            target_accept=args.target_accept,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _cmd_fit(args: argparse.Namespace) -> None:
    records = _load_records(args.records)
    try:
        design = build_design(records, framing=args.framing)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    config = _sampler_config(args)
    model = HierarchicalBinomialModel(design)
    draws = sample_posterior(model, config, seed=args.seed)
    out = _out_dir(args.out)
    write_draws_csv(out / "draws.csv", draws)
    (out / "diagnostics.json").write_text(
        json.dumps(_diagnostics_payload(draws), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    fit_payload = {
        "records": args.records,
        "framing": args.framing,
        "seed": args.seed,
        "sampler": config.to_dict(),
    }
    (out / "fit.json").write_text(
        json.dumps(fit_payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    _write_manifest(out, "fit", fit_payload, ["draws.csv", "diagnostics.json", "fit.json"])


def _cmd_effects(args: argparse.Namespace) -> None:
    draws_dir = Path(args.draws_dir)
    fit_path = draws_dir / "fit.json"
    if not fit_path.exists():
        raise CliError(f"{fit_path} not found; run `fit` first", kind="missing-input")
    fit_payload = json.loads(fit_path.read_text(encoding="utf-8"))
    records = _load_records(fit_payload["records"])
    try:
        design = build_design(records, framing=fit_payload["framing"])
    except ValueError as exc:
        raise CliError(str(exc)) from None
    samples, names = read_draws_csv(draws_dir / "draws.csv")
    model = HierarchicalBinomialModel(design)
    if tuple(model.layout.param_names()) != names:
        raise CliError(
            "draws parameters do not match the records/framing design; "
            "was fit run on different records?"
        )
    sampler_config = SamplerConfig(**fit_payload["sampler"])
    draws = PosteriorDraws(
        samples=samples,
        divergence_flags=np.zeros(samples.shape[:2], dtype=bool),
        step_sizes=(),
        param_names=names,
        seed=int(fit_payload["seed"]),
        config=sampler_config,
    )
    pred = posterior_predictive(
        draws, design, model.layout, count=args.samples, seed=int(fit_payload["seed"])
    )
    if args.kind == "marginal":
        summary = marginal_effect(pred)
    else:
        if args.task_index is None:
            raise CliError("--task-index is required for --kind conditional")
        try:
            summary = conditional_effect(pred, args.lm_index, args.task_index)
        except IndexError as exc:
            raise CliError(str(exc)) from None
    out = _out_dir(args.out)
    samples_name = "effect_samples.csv"
    (out / samples_name).write_bytes(
        ("effect\n" + "\n".join(repr(float(v)) for v in summary.samples) + "\n").encode(
            "utf-8"
        )
    )
    payload = summary.to_dict()
    payload["samples_file"] = samples_name
    (out / "effect.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    config = {
        "draws_dir": args.draws_dir,
        "kind": args.kind,
        "lm_index": args.lm_index,
        "task_index": args.task_index,
        "samples": args.samples,
        "fit": fit_payload,
    }
    _write_manifest(out, "effects", config, ["effect.json", samples_name])


def _framing_diffs(
    records: list[dataio.AccuracyRecord], framing: str
) -> dict[tuple[int, int, str, str], list[float]]:
    """Per-(m, n, lm_type, task) accuracy differences, in subsample order."""
    control_col, treatment_col = FRAMING_COLUMNS[framing]
    grouped: dict[tuple[int, int, str, str], list[dataio.AccuracyRecord]] = {}
    for record in records:
        grouped.setdefault(
            (record.m, record.n, record.lm_type, record.task_id), []
        ).append(record)
    out = {}
    for key, cell in grouped.items():
        cell.sort(key=lambda r: r.subsample_index)
        out[key] = [
            (getattr(r, treatment_col) - getattr(r, control_col)) / r.n for r in cell
        ]
    return out


def _cmd_permtest(args: argparse.Namespace) -> None:
    records = _load_records(args.records)
    if args.framing not in FRAMING_COLUMNS:
        raise CliError(f"unknown framing {args.framing!r}")
    diffs_by_key = _framing_diffs(records, args.framing)
    results = {}
    for key in sorted(diffs_by_key):
        try:
            results[key] = signflip_test(
                diffs_by_key[key], n_permutations=args.permutations, seed=args.seed
            )
        except ValueError as exc:
            raise CliError(str(exc)) from None
    # FDR family: all tasks within one (m, n, lm_type) setting.
    families: dict[tuple[int, int, str], list[tuple[int, int, str, str]]] = {}
    for key in sorted(results):
        families.setdefault(key[:3], []).append(key)
    adjusted: dict[tuple[int, int, str, str], float] = {}
    for family_keys in families.values():
        values = bh_adjust([results[k].p_raw for k in family_keys])
        adjusted.update(zip(family_keys, values))
    out = _out_dir(args.out)
    lines = ["m,n,lm_type,task_id,statistic,p_raw,p_adjusted,n_permutations,exhaustive"]
    for key in sorted(results):
        m, n, lm_type, task_id = key
        r = results[key]
        lines.append(
            f"{m},{n},{lm_type},{task_id},{r.statistic!r},{r.p_raw!r},"
            f"{adjusted[key]!r},{r.n_permutations},{'true' if r.exhaustive else 'false'}"
        )
    (out / "permtest.csv").write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    config = {
        "records": args.records,
        "framing": args.framing,
        "permutations": args.permutations,
        "seed": args.seed,
    }
    _write_manifest(out, "permtest", config, ["permtest.csv"])


def _cmd_meta(args: argparse.Namespace) -> None:
    records = _load_records(args.records)
    fit_config = SamplerConfig(
        chains=args.chains, draws=args.draws, tune=args.tune
    )
    try:
        spec = SliceSpec(slice_count=args.slices, seed=args.seed, fit_config=fit_config)
        slices = dereplicate_slices(records, spec)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    result = meta_fit(slices, fit_config, threshold=args.threshold, seed=args.seed)
    out = _out_dir(args.out)
    means_name = "means.csv"
    (out / means_name).write_bytes(
        (
            "posterior_mean_beta\n"
            + "".join(repr(float(v)) + "\n" for v in result.posterior_means_beta)
        ).encode("utf-8")
    )
    (out / "meta.json").write_text(
        json.dumps(result.to_dict(means_name), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    config = {
        "records": args.records,
        "slices": args.slices,
        "threshold": args.threshold,
        "seed": args.seed,
        "fit": fit_config.to_dict(),
    }
    _write_manifest(out, "meta", config, ["meta.json", means_name])


def _cmd_correlate(args: argparse.Namespace) -> None:
    records = _load_records(args.records)
    lm_types: list[str] = []
    for record in records:
        if record.lm_type not in lm_types:
            lm_types.append(record.lm_type)
    if len(lm_types) != 2:
        raise CliError(
            f"correlate needs exactly two lm_types, found {lm_types}"
        )
    lm_x, lm_y = lm_types
    by_task: dict[str, dict[str, dict[int, float]]] = {}
    for record in records:
        value = (record.correct_test - record.correct_extra) / record.n
        by_task.setdefault(record.task_id, {}).setdefault(record.lm_type, {})[
            record.subsample_index
        ] = value
    pairs_by_task: dict[str, tuple[list[float], list[float]]] = {}
    skipped: list[str] = []
    for task_id in sorted(by_task):
        sides = by_task[task_id]
        common = sorted(set(sides.get(lm_x, {})) & set(sides.get(lm_y, {})))
        if len(common) < 2:
            skipped.append(task_id)
            continue
        pairs_by_task[task_id] = (
            [sides[lm_x][k] for k in common],
            [sides[lm_y][k] for k in common],
        )
    observed: dict[str, float] = {}
    for task_id, (xs, ys) in sorted(pairs_by_task.items()):
        try:
            observed[task_id] = spearman(xs, ys)
        except ValueError:
            skipped.append(task_id)
    usable = {t: pairs_by_task[t] for t in observed}
    nulls = permuted_correlation_nulls(usable, n_draws=args.draws_null, seed=args.seed)
    out = _out_dir(args.out)
    obs_lines = ["task_id,spearman"]
    for task_id in sorted(observed):
        obs_lines.append(f"{task_id},{observed[task_id]!r}")
    (out / "correlations.csv").write_bytes(("\n".join(obs_lines) + "\n").encode("utf-8"))
    null_lines = ["draw,task_id,spearman"]
    task_order = sorted(observed)
    for draw_index, values in enumerate(nulls):
        for task_id, value in zip(task_order, values):
            null_lines.append(f"{draw_index},{task_id},{float(value)!r}")
    (out / "nulls.csv").write_bytes(("\n".join(null_lines) + "\n").encode("utf-8"))
    payload = {
        "lm_x": lm_x,
        "lm_y": lm_y,
        "task_count": len(observed),
        "skipped_tasks": sorted(set(skipped)),
        "n_draws": args.draws_null,
        "observed_file": "correlations.csv",
        "nulls_file": "nulls.csv",
    }
    (out / "correlate.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    config = {
        "records": args.records,
        "draws_null": args.draws_null,
        "seed": args.seed,
    }
    _write_manifest(
        out, "correlate", config, ["correlations.csv", "nulls.csv", "correlate.json"]
    )


def _cmd_report(args: argparse.Namespace) -> None:
    records = _load_records(args.records)
    rows, notes = report_means(records)
    out = _out_dir(args.out)
    write_report_csv(rows, out / "report.csv")
    for note in notes:
        print(note, file=sys.stderr)
    config = {"records": args.records, "notes": notes}
    _write_manifest(out, "report", config, ["report.csv"])


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fewbench",
        description="Paired pretraining-bias experiments on few-shot "
        "classification benchmarks: design, trials, hierarchical fit, and "
        "meta-analysis.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("plan", help="draw seeded extra/train/test splits")
    p.add_argument("--m", type=int, required=True, help="train-set size")
    p.add_argument("--n", type=int, required=True, help="extra/test-set size")
    p.add_argument("--repeats", type=int, default=None,
                   help="repeat count (default: the schedule for n)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corpus", required=True, help="labeled corpus (CSV or JSONL)")
    p.add_argument("--task-id", default=None,
                   help="task label for records (default: corpus file stem)")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_plan)

    p = sub.add_parser("run", help="run trainer trials for a plan")
    p.add_argument("--plan-dir", required=True)
    p.add_argument("--trainer-cmd", required=True,
                   help="command template; see the trial-runner docs for "
                   "placeholders and PE_* environment variables")
    p.add_argument("--epochs", type=int, default=0)
    p.add_argument("--zero-shot", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--timeout", type=float, default=600.0)
    p.add_argument("--lm-type", default="lm")
    p.add_argument("--out", default=None,
                   help="output directory (default: <plan-dir>/run)")
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser("simulate", help="draw synthetic accuracy records")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--sigma-u", type=float, default=0.0)
    p.add_argument("--sigma-v", type=float, default=0.0)
    p.add_argument("--sigma-w", type=float, default=0.0)
    p.add_argument("--tasks", type=int, default=25)
    p.add_argument("--subsamples", type=int, default=20)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--lm-types", type=int, default=1)
    p.add_argument("--framing", choices=sorted(FRAMING_COLUMNS), default="bias",
                   help="which column pair carries the beta contrast")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("fit", help="sample the hierarchical model posterior")
    p.add_argument("--records", required=True)
    p.add_argument("--framing", choices=sorted(FRAMING_COLUMNS), required=True)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--tune", type=int, default=500)
    p.add_argument("--target-accept", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("effects", help="posterior-predictive accuracy differences")
    p.add_argument("--draws-dir", required=True)
    p.add_argument("--kind", choices=["marginal", "conditional"], required=True)
    p.add_argument("--lm-index", type=int, default=0)
    p.add_argument("--task-index", type=int, default=None)
    p.add_argument("--samples", type=int, default=4000,
                   help="posterior predictive sample count")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_effects)

    p = sub.add_parser("permtest", help="paired sign-flip tests with FDR control")
    p.add_argument("--records", required=True)
    p.add_argument("--framing", choices=sorted(FRAMING_COLUMNS), required=True)
    p.add_argument("--permutations", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_permtest)

    p = sub.add_parser("meta", help="de-replication slice refits")
    p.add_argument("--records", required=True)
    p.add_argument("--slices", type=int, default=500)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--chains", type=int, default=REDUCED_FIT_CONFIG.chains)
    p.add_argument("--draws", type=int, default=REDUCED_FIT_CONFIG.draws)
    p.add_argument("--tune", type=int, default=REDUCED_FIT_CONFIG.tune)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_meta)

    p = sub.add_parser("correlate", help="cross-LM rank correlation of biases")
    p.add_argument("--records", required=True)
    p.add_argument("--draws-null", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_correlate)

    p = sub.add_parser("report", help="mean boost/bias table per configuration")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_report)

    return parser


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.handler(args)
    except CliError as exc:
        _emit_error(exc.kind, str(exc))
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
