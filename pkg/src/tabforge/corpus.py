"""Instance corpus: the record model, JSONL persistence, training-data
mixing, and manifest statistics.

An instance pins one task: a question over one or two tables, the
expected answer payload, and bookkeeping about where it came from.
Corpora live as one JSON object per line with tables embedded as
delimited-text strings, so files stay diffable and stream-friendly.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .tables import (
    DOCUMENT_TOKEN_LIMIT,
    Table,
    TableError,
    parse_table,
    serialize_table,
    token_count,
)

SCENARIOS = ("document_embedded", "spreadsheet_embedded")
MAJOR_OPERATIONS = ("query", "update", "chart", "merge")
QUERY_SUBS = ("filter", "aggregate", "group", "sort", "compute", "sub_query")
UPDATE_SUBS = ("update", "delete", "insert")
PROVENANCES = ("benchmark_extended", "generated")
ERROR_TAGS = (
    "question_understanding",
    "computational",
    "intermediate_answer",
    "incomplete_answer",
    "data_type",
    "unrunnable_code",
)
ANSWER_KINDS = ("text", "table", "code")
CHANNELS = ("parameter_inferred", "code_executed")

DEFAULT_MIX_RATIO = (1, 1)
DEFAULT_BATCH_SIZE = 128


class CorpusError(ValueError):
    pass


class ParseError(CorpusError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class InvariantViolation(CorpusError):
    def __init__(self, instance_id: str, which: str):
        super().__init__(f"instance {instance_id!r}: {which}")
        self.instance_id = instance_id
        self.which = which


class EmptySide(CorpusError):
    pass


class RatioUnsatisfiable(CorpusError):
    pass


@dataclass(frozen=True)
class OperationTag:
    major: str
    sub: str | None = None

    def __post_init__(self) -> None:
        if self.major not in MAJOR_OPERATIONS:
            raise ValueError(f"unknown operation {self.major!r}")
        if self.sub is not None:
            allowed = {"query": QUERY_SUBS, "update": UPDATE_SUBS}.get(self.major, ())
            if self.sub not in allowed:
                raise ValueError(
                    f"subcategory {self.sub!r} does not belong to {self.major!r}"
                )

    def label(self) -> str:
        return f"{self.major}-{self.sub}" if self.sub else self.major

    @classmethod
    def from_label(cls, label: str) -> "OperationTag":
        major, _, sub = label.partition("-")
        return cls(major=major, sub=sub or None)


@dataclass(frozen=True)
class AnswerPayload:
    kind: str
    body: str

    def __post_init__(self) -> None:
        if self.kind not in ANSWER_KINDS:
            raise ValueError(f"unknown answer kind {self.kind!r}")
        if self.kind == "table":
            try:
                parse_table(self.body)
            except TableError as err:
                raise ValueError(f"table answer does not parse: {err}") from err
        if self.kind == "code" and not self.body.strip():
            raise ValueError("code answer must not be empty")


@dataclass(frozen=True)
class Instance:
    id: str
    scenario: str
    operation: OperationTag
    question: str
    tables: tuple[Table, ...]
    answer: AnswerPayload
    provenance: str
    source: str = ""
    context_text: str | None = None
    judge_score: int | None = None
    error_tag: str | None = None
    reasoning: str | None = None
    prediction: AnswerPayload | None = None
    prediction_channel: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tables", tuple(self.tables))
        fail: Callable[[str], None] = lambda which: _raise(self.id, which)
        if not self.id:
            fail("empty id")
        if self.scenario not in SCENARIOS:
            fail(f"unknown scenario {self.scenario!r}")
        if self.provenance not in PROVENANCES:
            fail(f"unknown provenance {self.provenance!r}")
        if not isinstance(self.answer, AnswerPayload):
            fail("missing answer payload")
        expected_tables = 2 if self.operation.major == "merge" else 1
        if len(self.tables) != expected_tables:
            fail(
                f"{self.operation.major} needs {expected_tables} table(s), "
                f"got {len(self.tables)}"
            )
        if self.scenario == "document_embedded":
            if len(self.tables) != 1:
                fail("document-embedded instances carry exactly one table")
            if self.operation.major == "update":
                fail("update does not apply to document-embedded instances")
            if token_count(self.tables[0], self.context_text) >= DOCUMENT_TOKEN_LIMIT:
                fail(
                    "document-embedded table plus context must stay under "
                    f"{DOCUMENT_TOKEN_LIMIT} tokens"
                )
        if self.judge_score is not None and not 1 <= self.judge_score <= 10:
            fail(f"judge_score {self.judge_score} outside 1..10")
        if self.error_tag is not None and self.error_tag not in ERROR_TAGS:
            fail(f"unknown error tag {self.error_tag!r}")
        if self.prediction_channel is not None and self.prediction_channel not in CHANNELS:
            fail(f"unknown channel {self.prediction_channel!r}")


def _raise(instance_id: str, which: str) -> None:
    raise InvariantViolation(instance_id, which)


def _payload_to_record(p: AnswerPayload | None) -> dict | None:
    return None if p is None else {"kind": p.kind, "body": p.body}


def _payload_from_record(rec: dict | None) -> AnswerPayload | None:
    return None if rec is None else AnswerPayload(kind=rec["kind"], body=rec["body"])


def instance_to_record(inst: Instance) -> dict:
    return {
        "id": inst.id,
        "scenario": inst.scenario,
        "operation": {"major": inst.operation.major, "sub": inst.operation.sub},
        "source": inst.source,
        "question": inst.question,
        "context": inst.context_text,
        "tables": [
            {"name": t.name, "text": serialize_table(t)} for t in inst.tables
        ],
        "answer": _payload_to_record(inst.answer),
        "provenance": inst.provenance,
        "judge_score": inst.judge_score,
        "error_tag": inst.error_tag,
        "reasoning": inst.reasoning,
        "prediction": _payload_to_record(inst.prediction),
        "prediction_channel": inst.prediction_channel,
    }


def instance_from_record(rec: dict) -> Instance:
    op = rec["operation"]
    return Instance(
        id=rec["id"],
        scenario=rec["scenario"],
        operation=OperationTag(major=op["major"], sub=op.get("sub")),
        question=rec["question"],
        tables=tuple(
            parse_table(t["text"], name=t.get("name")) for t in rec["tables"]
        ),
        answer=_payload_from_record(rec["answer"]),
        provenance=rec["provenance"],
        source=rec.get("source", ""),
        context_text=rec.get("context"),
        judge_score=rec.get("judge_score"),
        error_tag=rec.get("error_tag"),
        reasoning=rec.get("reasoning"),
        prediction=_payload_from_record(rec.get("prediction")),
        prediction_channel=rec.get("prediction_channel"),
    )


def save_corpus(instances: Iterable[Instance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(
                json.dumps(instance_to_record(inst), sort_keys=True, ensure_ascii=False)
            )
            fh.write("\n")


def load_corpus(path: str | Path) -> list[Instance]:
    """Load a corpus file; bad JSON or shape raises ParseError with the
    line number, a well-formed record that breaks an instance invariant
    raises InvariantViolation."""
    out: list[Instance] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise ParseError(line_no, f"bad JSON: {err}") from err
            if not isinstance(rec, dict):
                raise ParseError(line_no, "record is not an object")
            try:
                out.append(instance_from_record(rec))
            except InvariantViolation:
                raise
            except (KeyError, TypeError, ValueError, TableError) as err:
                raise ParseError(line_no, str(err)) from err
    return out


@dataclass(frozen=True)
class ManifestEntry:
    scenario: str
    source: str
    operation: str
    count: int


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]
    total: int

    def source_counts(self) -> dict[str, int]:
        out: Counter[str] = Counter()
        for e in self.entries:
            out[e.source] += e.count
        return dict(sorted(out.items()))

    def scenario_counts(self) -> dict[str, int]:
        out: Counter[str] = Counter()
        for e in self.entries:
            out[e.scenario] += e.count
        return dict(sorted(out.items()))

    def operation_counts(self) -> dict[str, int]:
        out: Counter[str] = Counter()
        for e in self.entries:
            out[e.operation] += e.count
        return dict(sorted(out.items()))


def corpus_stats(instances: Sequence[Instance]) -> Manifest:
    """Counts per (scenario, source, operation), plus the grand total."""
    counts: Counter[tuple[str, str, str]] = Counter()
    for inst in instances:
        counts[(inst.scenario, inst.source, inst.operation.label())] += 1
    entries = tuple(
        ManifestEntry(scenario=s, source=src, operation=op, count=c)
        for (s, src, op), c in sorted(counts.items())
    )
    return Manifest(entries=entries, total=len(instances))


def mix_corpus(
    doc: Sequence[Instance],
    sheet: Sequence[Instance],
    ratio: tuple[int, int] = DEFAULT_MIX_RATIO,
    seed: int = 0,
    batch_size: int = DEFAULT_BATCH_SIZE,
    counts: tuple[int, int] | None = None,
) -> list[list[Instance]]:
    """Blend the two scenario corpora at an exact ratio and batch them.

    The larger side is subsampled without replacement (seed-controlled)
    until doc:sheet hits the ratio exactly, rounding both sides down
    when needed. The blend is then shuffled with the same seed and cut
    into batches; only the final batch may run short. Passing absolute
    counts skips the ratio arithmetic and fails when a side falls short.
    """
    if not doc:
        raise EmptySide("no document-embedded instances to mix")
    if not sheet:
        raise EmptySide("no spreadsheet-embedded instances to mix")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if counts is not None:
        n_doc, n_sheet = counts
        if n_doc > len(doc) or n_sheet > len(sheet):
            raise RatioUnsatisfiable(
                f"asked for {n_doc}+{n_sheet} but only {len(doc)}+{len(sheet)} available"
            )
        if n_doc < 0 or n_sheet < 0:
            raise ValueError("counts must be nonnegative")
    else:
        a, b = ratio
        if a < 1 or b < 1:
            raise ValueError(f"ratio parts must be positive, got {ratio}")
        m = min(len(doc) // a, len(sheet) // b)
        if m == 0:
            raise RatioUnsatisfiable(
                f"ratio {a}:{b} unsatisfiable with {len(doc)}+{len(sheet)} instances"
            )
        n_doc, n_sheet = m * a, m * b
    rng = random.Random(seed)
    picked_doc = list(doc) if n_doc == len(doc) else rng.sample(list(doc), n_doc)
    picked_sheet = (
        list(sheet) if n_sheet == len(sheet) else rng.sample(list(sheet), n_sheet)
    )
    mixed = picked_doc + picked_sheet
    rng.shuffle(mixed)
    return [mixed[i : i + batch_size] for i in range(0, len(mixed), batch_size)]


def filter_instances(
    instances: Sequence[Instance],
    predicate: Callable[[Instance], bool] | None = None,
) -> list[Instance]:
    """Pluggable pre-filter (for example dropping vague questions);
    the default predicate keeps everything."""
    if predicate is None:
        return list(instances)
    return [inst for inst in instances if predicate(inst)]


REWRITE_FRACTION = 0.9


def rewrite_questions(
    instances: Sequence[Instance],
    client,
    fraction: float = REWRITE_FRACTION,
    seed: int = 0,
) -> list[Instance]:
    """Rewrite a seed-chosen fraction of questions through a completion
    client, leaving the rest untouched. Used to vary phrasing across a
    corpus without touching answers."""
    from .gateway import CompletionRequest, complete

    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    rng = random.Random(seed)
    n_rewrite = round(fraction * len(instances))
    chosen = set(rng.sample(range(len(instances)), n_rewrite))
    out: list[Instance] = []
    for i, inst in enumerate(instances):
        if i not in chosen:
            out.append(inst)
            continue
        prompt = (
            "Rewrite the following instruction so it reads differently but "
            "asks for exactly the same thing. Reply with the rewritten "
            f"instruction only.\n\n{inst.question}"
        )
        new_q = complete(client, CompletionRequest(prompt=prompt, tag=f"rewrite:{inst.id}"))[0]
        out.append(replace(inst, question=new_q.strip()))
    return out
