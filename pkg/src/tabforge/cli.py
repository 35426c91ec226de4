"""Command line pipeline: extend, generate, validate, evaluate,
simulate, mix, stats.

Every command reads --in (a corpus file), writes into the --out
directory, and runs offline against stub clients and executors when
asked to. Settings resolve as defaults, then the --config file, then
explicit flags. Exit codes: 0 clean, 1 ran but some instances or
checks failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import corpus as corpus_mod
from . import crossval, evaluation, gateway, prompts, reports, theory
from .corpus import AnswerPayload, Instance, OperationTag, load_corpus, save_corpus
from .gateway import BatchPolicy, CompletionRequest, complete, drive_batch
from .tables import TableError, parse_table, serialize_table

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_CONFIG = 2


class ConfigError(ValueError):
    pass


_DEFAULTS: dict = {
    "tau": 0.9,
    "delta": 0.8,
    "cluster_share": 0.5,
    "dual_threshold": 0.9,
    "inner_n": 10,
    "coded_n": 50,
    "judge_threshold": 7,
    "chart_threshold": 5,
    "ratio": "1:1",
    "seed": 0,
    "batch_size": 128,
    "max_in_flight": 4,
    "timeout_ms": 10000,
    "retries": 2,
    "backoff_ms": 100,
    "trials": 200000,
    "pairs": 200,
    "pair_trials": 20000,
    "grid": "",
    "group_by": "source",
    "questions_per_table": 3,
    "no_figures": False,
}


@dataclass
class Settings:
    tau: float
    delta: float
    cluster_share: float
    dual_threshold: float
    inner_n: int
    coded_n: int
    judge_threshold: int
    chart_threshold: int
    ratio: tuple[int, int]
    seed: int
    batch_size: int
    max_in_flight: int
    timeout_ms: int
    retries: int
    backoff_ms: int
    trials: int
    pairs: int
    pair_trials: int
    grid: tuple[tuple[float, int], ...]
    group_by: str
    questions_per_table: int
    figures: bool

    @property
    def policy(self) -> BatchPolicy:
        return BatchPolicy(
            max_in_flight=self.max_in_flight,
            per_call_timeout_ms=self.timeout_ms,
            retries=self.retries,
            retry_backoff_ms=self.backoff_ms,
        )


def _parse_ratio(text: str) -> tuple[int, int]:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError as err:
        raise ConfigError(f"bad ratio {text!r}, expected like 1:1") from err


def _parse_grid(text: str) -> tuple[tuple[float, int], ...]:
    if not text:
        return theory.DEFAULT_GRID
    points = []
    try:
        for part in text.split(","):
            p, k = part.split(":")
            points.append((float(p), int(k)))
    except ValueError as err:
        raise ConfigError(f"bad grid {text!r}, expected like 0.6:3,0.8:5") from err
    return tuple(points)


def build_settings(args: argparse.Namespace) -> Settings:
    merged = dict(_DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}") from err
        unknown = set(loaded) - set(merged)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(loaded)
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            merged[key] = value
    return Settings(
        tau=float(merged["tau"]),
        delta=float(merged["delta"]),
        cluster_share=float(merged["cluster_share"]),
        dual_threshold=float(merged["dual_threshold"]),
        inner_n=int(merged["inner_n"]),
        coded_n=int(merged["coded_n"]),
        judge_threshold=int(merged["judge_threshold"]),
        chart_threshold=int(merged["chart_threshold"]),
        ratio=_parse_ratio(str(merged["ratio"])),
        seed=int(merged["seed"]),
        batch_size=int(merged["batch_size"]),
        max_in_flight=int(merged["max_in_flight"]),
        timeout_ms=int(merged["timeout_ms"]),
        retries=int(merged["retries"]),
        backoff_ms=int(merged["backoff_ms"]),
        trials=int(merged["trials"]),
        pairs=int(merged["pairs"]),
        pair_trials=int(merged["pair_trials"]),
        grid=_parse_grid(str(merged["grid"])),
        group_by=str(merged["group_by"]),
        questions_per_table=int(merged["questions_per_table"]),
        figures=not merged["no_figures"],
    )


def make_client(spec: str | None):
    if not spec:
        raise ConfigError("this command needs --client (stub:<fixture> or a registered name)")
    if spec.startswith("stub:"):
        path = spec[len("stub:"):]
        try:
            return gateway.StubCompletionClient.from_jsonl(path)
        except (OSError, json.JSONDecodeError, KeyError) as err:
            raise ConfigError(f"cannot load client fixture {path}: {err}") from err
    try:
        return gateway.registered_client(spec)
    except gateway.ClientError as err:
        raise ConfigError(str(err)) from err


def make_executor(spec: str | None):
    if not spec:
        raise ConfigError(
            "this command needs --executor (stub:<fixture>, echo, or live)"
        )
    if spec.startswith("stub:"):
        path = spec[len("stub:"):]
        try:
            return gateway.MapExecutor.from_jsonl(path)
        except (OSError, json.JSONDecodeError, KeyError) as err:
            raise ConfigError(f"cannot load executor fixture {path}: {err}") from err
    if spec == "echo":
        return gateway.EchoExecutor()
    if spec == "live":
        return gateway.SubprocessExecutor()
    raise ConfigError(f"unknown executor {spec!r}")


def _load_input(args: argparse.Namespace) -> list[Instance]:
    if not args.in_path:
        raise ConfigError("this command needs --in")
    try:
        return load_corpus(args.in_path)
    except OSError as err:
        raise ConfigError(f"cannot read {args.in_path}: {err}") from err
    except corpus_mod.CorpusError as err:
        raise ConfigError(f"bad corpus {args.in_path}: {err}") from err


def _out_dir(args: argparse.Namespace) -> Path:
    if not args.out:
        raise ConfigError("this command needs --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fig_dir(out: Path) -> Path:
    fig = out / "figures"
    fig.mkdir(exist_ok=True)
    return fig


def _error_records(results, instances) -> list[dict]:
    out = []
    for inst, res in zip(instances, results):
        if not res.ok:
            out.append(
                {"type": "error", "instance_id": inst.id, "error": str(res.error)}
            )
    return out


def cmd_extend(args: argparse.Namespace, cfg: Settings) -> int:
    """Sample a reasoning trace per instance and keep the ones that
    check out against the benchmark answer."""
    instances = _load_input(args)
    out = _out_dir(args)
    client = make_client(args.client)
    needs_executor = any(i.scenario == "spreadsheet_embedded" for i in instances)
    executor = make_executor(args.executor) if needs_executor else None

    def worker(inst: Instance) -> crossval.ExtensionRecord:
        prompt = prompts.render_prompt("extend_reasoning", inst)
        reasoning = complete(
            client, CompletionRequest(prompt=prompt, tag=f"extend:{inst.id}"), cfg.policy
        )[0]
        kind = "textual" if inst.scenario == "document_embedded" else "coded"
        return crossval.validate_extension(
            reasoning,
            inst.answer.body,
            kind,
            judge=client,
            executor=executor,
            judge_threshold=cfg.judge_threshold,
            question=inst.question,
            instance_id=inst.id,
            tables=inst.tables,
            timeout_ms=cfg.timeout_ms,
        )

    results = drive_batch(instances, cfg.policy, worker)
    accepted: list[Instance] = []
    records: list[dict] = []
    for inst, res in zip(instances, results):
        if not res.ok:
            continue
        rec: crossval.ExtensionRecord = res.value
        records.append(
            {
                "type": "extension",
                "instance_id": rec.instance_id,
                "judge_score": rec.judge_score,
                "accepted": rec.accepted,
                "exec_status": rec.exec_status,
                "reasoning_text": rec.reasoning_text,
            }
        )
        if rec.accepted:
            accepted.append(
                replace(inst, reasoning=rec.reasoning_text, judge_score=rec.judge_score)
            )
    records.extend(_error_records(results, instances))
    save_corpus(accepted, out / "corpus.jsonl")
    reports.write_records(out / "records.jsonl", records)
    n_errors = sum(not r.ok for r in results)
    reports.write_text(
        out / "summary.txt",
        reports.validation_summary_text(
            len(instances), len(accepted), n_errors, "reasoning extension"
        ),
    )
    return EXIT_FAILURES if n_errors else EXIT_OK


def cmd_generate(args: argparse.Namespace, cfg: Settings) -> int:
    """Write new questions against the seed instances' tables: merge
    seeds go through the instruction templates, everything else through
    the question-generation prompt."""
    seeds = _load_input(args)
    out = _out_dir(args)
    client = make_client(args.client)
    rng = random.Random(cfg.seed)
    # Pre-draw template choices so worker threads stay pure.
    merge_plans: dict[str, list[tuple[str, tuple[str, ...]]]] = {}
    slotless = [t for t in prompts.MERGE_TEMPLATES if not t.needs_condition]
    for inst in seeds:
        if inst.operation.major != "merge":
            continue
        plans = []
        headers = sorted({h for t in inst.tables for h in t.headers})
        for _ in range(cfg.questions_per_table):
            template = rng.choice(slotless)
            n_cols = rng.randint(1, min(4, len(headers)))
            cols = tuple(rng.sample(headers, n_cols))
            plans.append((template.id, cols))
        merge_plans[inst.id] = plans

    def worker(inst: Instance) -> list[Instance]:
        generated: list[Instance] = []
        if inst.operation.major == "merge":
            for i, (template_id, cols) in enumerate(merge_plans[inst.id]):
                template = prompts.TEMPLATES_BY_ID[template_id]
                question = prompts.instantiate_merge(
                    template,
                    columns=cols if template.needs_columns else None,
                    tables=inst.tables,
                )
                generated.append(
                    replace(
                        inst,
                        id=f"{inst.id}-g{i}",
                        question=question,
                        provenance="generated",
                    )
                )
            return generated
        prompt = prompts.render_prompt("generate_questions", inst)
        output = complete(
            client, CompletionRequest(prompt=prompt, tag=f"generate:{inst.id}"), cfg.policy
        )[0]
        for i, (major, sub, question) in enumerate(
            prompts.parse_generated_questions(output)
        ):
            if inst.scenario == "document_embedded" and major == "update":
                continue
            generated.append(
                replace(
                    inst,
                    id=f"{inst.id}-g{i}",
                    operation=OperationTag(major=major, sub=sub),
                    question=question,
                    provenance="generated",
                )
            )
        return generated

    results = drive_batch(seeds, cfg.policy, worker)
    out_instances = [inst for res in results if res.ok for inst in res.value]
    save_corpus(out_instances, out / "corpus.jsonl")
    records = _error_records(results, seeds)
    reports.write_records(out / "records.jsonl", records)
    n_errors = sum(not r.ok for r in results)
    reports.write_text(
        out / "summary.txt",
        f"question generation\n\nseeds: {len(seeds)}\n"
        f"generated: {len(out_instances)}\nerrors: {n_errors}\n",
    )
    return EXIT_FAILURES if n_errors else EXIT_OK


def _validated_payload(inst: Instance, text: str) -> AnswerPayload:
    if inst.operation.major in ("update", "merge"):
        try:
            parse_table(text.strip())
            return AnswerPayload(kind="table", body=text.strip() + "\n")
        except TableError:
            pass
    return AnswerPayload(kind="text", body=text.strip())


def cmd_validate(args: argparse.Namespace, cfg: Settings) -> int:
    """Sample answers over both routes and keep cross-validated
    instances: majority voting for document-embedded, two independent
    code runs for spreadsheet-embedded."""
    instances = _load_input(args)
    out = _out_dir(args)
    client = make_client(args.client)
    executor = make_executor(args.executor)

    def run_code(inst: Instance, code: str) -> crossval.CandidateAnswer:
        request = gateway.execution_request_for(
            code, [serialize_table(t) for t in inst.tables], timeout_ms=cfg.timeout_ms
        )
        return crossval.candidate_from_execution(code, executor.execute(request))

    def worker(inst: Instance) -> tuple[dict, Instance | None]:
        if inst.scenario == "document_embedded":
            inner_prompt = prompts.render_answer_prompt(inst, "parameter_inferred")
            inner_texts = complete(
                client,
                CompletionRequest(
                    prompt=inner_prompt, n_samples=cfg.inner_n, tag=f"inner:{inst.id}"
                ),
                cfg.policy,
            )
            code_prompt = prompts.render_answer_prompt(inst, "code_executed")
            codes = complete(
                client,
                CompletionRequest(
                    prompt=code_prompt, n_samples=cfg.coded_n, tag=f"code:{inst.id}"
                ),
                cfg.policy,
            )
            inner = [
                crossval.CandidateAnswer(channel="parameter_inferred", text=t)
                for t in inner_texts
            ]
            coded = [run_code(inst, code) for code in codes]
            rec = crossval.cross_way_validate(
                inner,
                coded,
                tau=cfg.tau,
                delta=cfg.delta,
                min_cluster_share=cfg.cluster_share,
                instance_id=inst.id,
            )
            record = {
                "type": "cross_way",
                "instance_id": rec.instance_id,
                "reference_answer": rec.reference_answer,
                "reference_support": rec.reference_support,
                "agreement": rec.agreement,
                "selected_answer": rec.selected_answer,
                "accepted": rec.accepted,
                "diagnostics": rec.diagnostics,
            }
            if not rec.accepted:
                return record, None
            validated = replace(
                inst,
                answer=AnswerPayload(kind="text", body=rec.selected_answer.strip()),
                prediction=AnswerPayload(kind="text", body=rec.reference_answer.strip()),
                prediction_channel="code_executed",
            )
            return record, validated

        code_prompt = prompts.render_answer_prompt(inst, "code_executed")
        code_a, code_b = complete(
            client,
            CompletionRequest(prompt=code_prompt, n_samples=2, tag=f"dual:{inst.id}"),
            cfg.policy,
        )
        cand_a, cand_b = run_code(inst, code_a), run_code(inst, code_b)
        mode = (
            "table_exact"
            if inst.operation.major in ("update", "merge")
            else "text_rouge"
        )
        consistent, sim = crossval.dual_code_validate(
            cand_a, cand_b, mode=mode, threshold=cfg.dual_threshold
        )
        record = {
            "type": "dual_code",
            "instance_id": inst.id,
            "mode": mode,
            "consistent": consistent,
            "similarity": sim,
            "statuses": [cand_a.exec_status, cand_b.exec_status],
        }
        if not consistent:
            return record, None
        if inst.operation.major == "chart":
            answer = AnswerPayload(kind="code", body=code_a)
            prediction = AnswerPayload(kind="code", body=code_b)
        else:
            answer = _validated_payload(inst, cand_a.text)
            prediction = _validated_payload(inst, cand_b.text)
        validated = replace(
            inst,
            answer=answer,
            reasoning=code_a,
            prediction=prediction,
            prediction_channel="code_executed",
        )
        return record, validated

    results = drive_batch(instances, cfg.policy, worker)
    records = [res.value[0] for res in results if res.ok]
    accepted = [res.value[1] for res in results if res.ok and res.value[1] is not None]
    records.extend(_error_records(results, instances))
    save_corpus(accepted, out / "accepted.jsonl")
    reports.write_records(out / "records.jsonl", records)
    n_errors = sum(not r.ok for r in results)
    reports.write_text(
        out / "summary.txt",
        reports.validation_summary_text(
            len(instances), len(accepted), n_errors, "cross-route validation"
        ),
    )
    return EXIT_FAILURES if n_errors else EXIT_OK


def cmd_evaluate(args: argparse.Namespace, cfg: Settings) -> int:
    """Score attached predictions, aggregate accuracy, and optionally
    compare the judge against human labels."""
    instances = _load_input(args)
    out = _out_dir(args)
    judge_client = make_client(args.client) if args.client else None

    def worker(inst: Instance) -> evaluation.Verdict:
        return evaluation.evaluate(
            inst,
            judge_client=judge_client,
            judge_text_threshold=cfg.judge_threshold,
            judge_code_threshold=cfg.chart_threshold,
        )

    results = drive_batch(instances, cfg.policy, worker)
    verdicts = [res.value for res in results if res.ok]
    verdict_records = [
        {
            "instance_id": v.instance_id,
            "method": v.method,
            "raw_score": v.raw_score,
            "threshold": v.threshold,
            "correct": v.correct,
        }
        for v in verdicts
    ]
    verdict_records.extend(_error_records(results, instances))
    reports.write_records(out / "verdicts.jsonl", verdict_records)

    n_errors = sum(not r.ok for r in results)
    if verdicts:
        report = evaluation.accuracy(verdicts, group_by=cfg.group_by, instances=instances)
        reports.write_text(out / "accuracy.txt", reports.accuracy_report_text(report))
        header, rows = reports.accuracy_report_rows(report)
        reports.write_csv(out / "accuracy.csv", header, rows)
        if cfg.figures:
            reports.plot_accuracy(report, _fig_dir(out) / "accuracy.png")
    if args.human:
        human: dict[str, bool] = {}
        try:
            with open(args.human, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    human[rec["instance_id"]] = bool(rec["correct"])
        except (OSError, json.JSONDecodeError, KeyError) as err:
            raise ConfigError(f"cannot read human labels {args.human}: {err}") from err
        meta = evaluation.meta_evaluate(
            verdicts, human, scenarios={i.id: i.scenario for i in instances}
        )
        reports.write_text(out / "meta.txt", reports.meta_report_text(meta))
    return EXIT_FAILURES if n_errors else EXIT_OK


def cmd_simulate(args: argparse.Namespace, cfg: Settings) -> int:
    """Run the bound checks and write the report with its figure."""
    out = _out_dir(args)
    try:
        report = theory.verify_theorems(
            grid=cfg.grid,
            trials=cfg.trials,
            seed=cfg.seed,
            n_pairs=cfg.pairs,
            pair_trials=cfg.pair_trials,
        )
    except theory.GridError as err:
        raise ConfigError(str(err)) from err
    reports.write_text(out / "theorems.txt", reports.theorem_report_text(report))
    header, rows = reports.theorem_report_rows(report)
    reports.write_csv(out / "theorems.csv", header, rows)
    if cfg.figures:
        reports.plot_theorem_report(report, _fig_dir(out) / "bounds.png")
    return EXIT_OK if report.passed else EXIT_FAILURES


def cmd_mix(args: argparse.Namespace, cfg: Settings) -> int:
    """Blend the two scenario sides of a corpus and write batches."""
    instances = _load_input(args)
    out = _out_dir(args)
    doc = [i for i in instances if i.scenario == "document_embedded"]
    sheet = [i for i in instances if i.scenario == "spreadsheet_embedded"]
    try:
        batches = corpus_mod.mix_corpus(
            doc, sheet, ratio=cfg.ratio, seed=cfg.seed, batch_size=cfg.batch_size
        )
    except corpus_mod.CorpusError as err:
        raise ConfigError(str(err)) from err
    batch_dir = out / "batches"
    batch_dir.mkdir(exist_ok=True)
    for i, batch in enumerate(batches):
        save_corpus(batch, batch_dir / f"batch_{i:05d}.jsonl")
    total = sum(len(b) for b in batches)
    reports.write_text(
        out / "summary.txt",
        f"training mix\n\nratio: {cfg.ratio[0]}:{cfg.ratio[1]}\n"
        f"document: {len(doc)} available\nspreadsheet: {len(sheet)} available\n"
        f"mixed: {total}\nbatches: {len(batches)} of size {cfg.batch_size}\n"
        f"final batch: {len(batches[-1])}\n",
    )
    return EXIT_OK


def cmd_stats(args: argparse.Namespace, cfg: Settings) -> int:
    """Write the per-source manifest for a corpus."""
    instances = _load_input(args)
    out = _out_dir(args)
    manifest = corpus_mod.corpus_stats(instances)
    reports.write_text(out / "manifest.txt", reports.manifest_text(manifest))
    header, rows = reports.manifest_rows(manifest)
    reports.write_csv(out / "manifest.csv", header, rows)
    if cfg.figures:
        reports.plot_manifest(manifest, _fig_dir(out) / "sources.png")
    return EXIT_OK


COMMANDS = {
    "extend": cmd_extend,
    "generate": cmd_generate,
    "validate": cmd_validate,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "mix": cmd_mix,
    "stats": cmd_stats,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabforge",
        description="Construct, validate, and evaluate tabular-task training data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").split("\n")[0].strip())
        p.add_argument("--in", dest="in_path", help="input corpus (one JSON object per line)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--config", help="JSON settings file (flags override it)")
        p.add_argument("--client", help="completion client: stub:<fixture> or registered name")
        p.add_argument("--executor", help="code executor: stub:<fixture>, echo, or live")
        p.add_argument("--human", help="human labels for meta-evaluation (evaluate only)")
        p.add_argument("--tau", type=float, help="clustering threshold")
        p.add_argument("--delta", type=float, help="inner-vs-reference agreement threshold")
        p.add_argument("--cluster-share", dest="cluster_share", type=float)
        p.add_argument("--dual-threshold", dest="dual_threshold", type=float)
        p.add_argument("--inner-n", dest="inner_n", type=int, help="parameter-inferred samples")
        p.add_argument("--coded-n", dest="coded_n", type=int, help="code-route samples")
        p.add_argument("--judge-threshold", dest="judge_threshold", type=int)
        p.add_argument("--chart-threshold", dest="chart_threshold", type=int)
        p.add_argument("--ratio", help="document:spreadsheet mix ratio, like 1:1")
        p.add_argument("--seed", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--max-in-flight", dest="max_in_flight", type=int)
        p.add_argument("--timeout-ms", dest="timeout_ms", type=int)
        p.add_argument("--retries", type=int)
        p.add_argument("--backoff-ms", dest="backoff_ms", type=int)
        p.add_argument("--grid", help="simulation grid, like 0.6:3,0.8:5")
        p.add_argument("--trials", type=int)
        p.add_argument("--pairs", type=int)
        p.add_argument("--pair-trials", dest="pair_trials", type=int)
        p.add_argument("--group-by", dest="group_by", choices=evaluation.GROUP_KEYS)
        p.add_argument("--questions-per-table", dest="questions_per_table", type=int)
        p.add_argument("--no-figures", dest="no_figures", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = build_settings(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
