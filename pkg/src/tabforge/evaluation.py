"""Categorized evaluation of predictions against instances.

Every (operation, prediction kind) pair routes to exactly one method:
update and merge predictions are complete tables checked by exact
canonical match, chart predictions are code scored by a judge at
threshold 5, and query predictions are either exact-matched (when the
answer came out of executed code) or judge-scored at threshold 7 (when
the model answered directly). Thresholds are inclusive.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import Instance, AnswerPayload
from .gateway import CompletionClient, CompletionRequest, complete
from .prompts import render_prompt
from .tables import TableError, exact_answer_match, parse_table, tables_exact_match

METHODS = ("exact_match_table", "exact_match_scalar", "judge_text", "judge_code")
JUDGE_TEXT_THRESHOLD = 7
JUDGE_CODE_THRESHOLD = 5
GROUP_KEYS = ("none", "scenario", "source", "operation")


class EvaluationError(ValueError):
    pass


class JudgeParseError(EvaluationError):
    pass


class RatingNotFound(JudgeParseError):
    pass


class RatingOutOfRange(JudgeParseError):
    pass


class IncompatiblePrediction(EvaluationError):
    pass


class EmptyGroup(EvaluationError):
    pass


class IdMismatch(EvaluationError):
    pass


@dataclass(frozen=True)
class Verdict:
    instance_id: str
    method: str
    raw_score: int | None
    threshold: int | None
    correct: bool

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.method.startswith("judge"):
            if self.raw_score is None or self.threshold is None:
                raise ValueError("judge verdicts carry a score and a threshold")


_RATING = re.compile(r"Rating:\s*\[\[(\d+)\]\]")


def parse_rating(judge_output: str) -> int:
    """Pull the score out of judge output.

    The last 'Rating: [[N]]' occurrence wins; the bare format reminder
    'Rating: [[score]]' never matches. N outside 1..10 is an error.
    """
    matches = _RATING.findall(judge_output)
    if not matches:
        raise RatingNotFound("no 'Rating: [[N]]' in judge output")
    score = int(matches[-1])
    if not 1 <= score <= 10:
        raise RatingOutOfRange(f"rating {score} outside 1..10")
    return score


def _parses_as_table(text: str) -> bool:
    try:
        parse_table(text)
        return True
    except TableError:
        return False


def route(
    instance: Instance,
    prediction: AnswerPayload,
    channel: str | None = None,
) -> str:
    """Pick the evaluation method for a prediction.

    channel only matters for query predictions of kind text: it says
    whether the text is the printout of executed code (exact match) or
    a direct model answer (judge). Incompatible pairings raise.
    """
    op = instance.operation.major
    kind = prediction.kind
    if op in ("update", "merge"):
        if kind == "table" or (kind == "text" and _parses_as_table(prediction.body)):
            return "exact_match_table"
        raise IncompatiblePrediction(
            f"{op} predictions must be tables or parse as tables, got kind={kind!r}"
        )
    if op == "chart":
        if kind == "code":
            return "judge_code"
        raise IncompatiblePrediction(f"chart predictions must be code, got {kind!r}")
    # query
    if kind == "table":
        return "exact_match_table"
    if kind == "code":
        raise IncompatiblePrediction(
            "execute query code first and evaluate its printed output"
        )
    if channel == "code_executed":
        return (
            "exact_match_table" if instance.answer.kind == "table" else "exact_match_scalar"
        )
    return "judge_text"


def evaluate(
    instance: Instance,
    prediction: AnswerPayload | None = None,
    judge_client: CompletionClient | None = None,
    channel: str | None = None,
    judge_text_threshold: int = JUDGE_TEXT_THRESHOLD,
    judge_code_threshold: int = JUDGE_CODE_THRESHOLD,
    row_order_sensitive: bool = True,
) -> Verdict:
    """Score one prediction. Falls back to the prediction attached to
    the instance when none is passed explicitly."""
    if prediction is None:
        prediction = instance.prediction
        if channel is None:
            channel = instance.prediction_channel
    if prediction is None:
        raise EvaluationError(f"instance {instance.id} has no prediction to evaluate")
    method = route(instance, prediction, channel)
    if method == "exact_match_table":
        correct = _table_match(instance, prediction, row_order_sensitive)
        return Verdict(instance.id, method, None, None, correct)
    if method == "exact_match_scalar":
        correct = exact_answer_match(prediction.body, instance.answer.body)
        return Verdict(instance.id, method, None, None, correct)
    threshold = judge_text_threshold if method == "judge_text" else judge_code_threshold
    if judge_client is None:
        raise EvaluationError(f"method {method} needs a judge client")
    prompt = render_prompt(
        "judge", (instance.question, instance.answer.body, prediction.body)
    )
    output = complete(
        judge_client, CompletionRequest(prompt=prompt, tag=f"judge:{instance.id}")
    )[0]
    score = parse_rating(output)
    return Verdict(instance.id, method, score, threshold, score >= threshold)


def _table_match(
    instance: Instance, prediction: AnswerPayload, row_order_sensitive: bool
) -> bool:
    try:
        expected = parse_table(instance.answer.body)
        got = parse_table(prediction.body)
    except TableError:
        return False
    return tables_exact_match(expected, got, row_order_sensitive=row_order_sensitive)


@dataclass(frozen=True)
class GroupAccuracy:
    name: str
    n: int
    n_correct: int
    accuracy: float


@dataclass(frozen=True)
class AccuracyReport:
    group_by: str
    groups: tuple[GroupAccuracy, ...]
    overall_n: int
    overall_correct: int
    overall: float
    average: float  # unweighted mean over groups


def accuracy(
    verdicts: Sequence[Verdict],
    group_by: str = "none",
    instances: Sequence[Instance] | None = None,
) -> AccuracyReport:
    """Fraction correct per group plus the unweighted group average.

    Grouping by scenario, source, or operation needs the instances so
    verdicts can be joined back to their metadata by id.
    """
    if group_by not in GROUP_KEYS:
        raise ValueError(f"unknown group key {group_by!r}")
    if not verdicts:
        raise EmptyGroup("no verdicts to aggregate")
    lookup: dict[str, Instance] = {}
    if group_by != "none":
        if instances is None:
            raise EvaluationError(f"grouping by {group_by} needs the instances")
        lookup = {inst.id: inst for inst in instances}
    buckets: dict[str, list[Verdict]] = defaultdict(list)
    for v in verdicts:
        if group_by == "none":
            key = "all"
        else:
            inst = lookup.get(v.instance_id)
            if inst is None:
                raise IdMismatch(f"no instance for verdict {v.instance_id!r}")
            if group_by == "scenario":
                key = inst.scenario
            elif group_by == "source":
                key = inst.source or "unknown"
            else:
                key = inst.operation.major
        buckets[key].append(v)
    groups = []
    for name in sorted(buckets):
        vs = buckets[name]
        n_correct = sum(v.correct for v in vs)
        groups.append(
            GroupAccuracy(name=name, n=len(vs), n_correct=n_correct, accuracy=n_correct / len(vs))
        )
    total = len(verdicts)
    total_correct = sum(v.correct for v in verdicts)
    return AccuracyReport(
        group_by=group_by,
        groups=tuple(groups),
        overall_n=total,
        overall_correct=total_correct,
        overall=total_correct / total,
        average=sum(g.accuracy for g in groups) / len(groups),
    )


@dataclass(frozen=True)
class ScenarioMetaEval:
    n: int
    fp_count: int
    fn_count: int
    false_positive_rate: float
    false_negative_rate: float


@dataclass(frozen=True)
class MetaEvalReport:
    n: int
    fp_count: int
    fn_count: int
    false_positive_rate: float
    false_negative_rate: float
    per_scenario: dict[str, ScenarioMetaEval]


def _as_bool_map(side) -> dict[str, bool]:
    if isinstance(side, Mapping):
        return {str(k): bool(v) for k, v in side.items()}
    out: dict[str, bool] = {}
    for item in side:
        if isinstance(item, Verdict):
            out[item.instance_id] = item.correct
        else:
            instance_id, correct = item
            out[str(instance_id)] = bool(correct)
    return out


def meta_evaluate(
    judge_verdicts: Iterable,
    human_verdicts: Iterable,
    scenarios: Mapping[str, str] | None = None,
) -> MetaEvalReport:
    """Judge-vs-human disagreement rates over paired instances.

    A false positive is judge-correct on a human-incorrect instance, a
    false negative the reverse; both rates divide by the number of
    paired instances. Either side can be Verdicts, (id, bool) pairs, or
    an id -> bool mapping; the id sets must match exactly.
    """
    judge = _as_bool_map(judge_verdicts)
    human = _as_bool_map(human_verdicts)
    if set(judge) != set(human):
        only_j = sorted(set(judge) - set(human))[:3]
        only_h = sorted(set(human) - set(judge))[:3]
        raise IdMismatch(
            f"id sets differ (judge-only {only_j}, human-only {only_h})"
        )
    if not judge:
        raise EmptyGroup("no paired verdicts")

    def rates(ids: Iterable[str]) -> tuple[int, int, int]:
        ids = list(ids)
        fp = sum(judge[i] and not human[i] for i in ids)
        fn = sum(human[i] and not judge[i] for i in ids)
        return len(ids), fp, fn

    n, fp, fn = rates(judge)
    per_scenario: dict[str, ScenarioMetaEval] = {}
    if scenarios:
        by_scenario: dict[str, list[str]] = defaultdict(list)
        for i in judge:
            by_scenario[scenarios.get(i, "unknown")].append(i)
        for name in sorted(by_scenario):
            sn, sfp, sfn = rates(by_scenario[name])
            per_scenario[name] = ScenarioMetaEval(
                n=sn,
                fp_count=sfp,
                fn_count=sfn,
                false_positive_rate=sfp / sn,
                false_negative_rate=sfn / sn,
            )
    return MetaEvalReport(
        n=n,
        fp_count=fp,
        fn_count=fn,
        false_positive_rate=fp / n,
        false_negative_rate=fn / n,
        per_scenario=per_scenario,
    )
