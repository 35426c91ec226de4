"""Cross-route answer validation.

Answers arrive over two routes: parameter_inferred (the model answers
straight from the shown data) and code_executed (the model writes a
program whose printed output is the answer). Agreement between routes
is what admits an instance into the training corpus:

  * cross_way_validate votes over the executed answers, takes the
    centroid of the largest cluster as the reference, and accepts when
    the best-aligned inner answer agrees strongly enough and the
    cluster carries a majority.
  * dual_code_validate compares two independent code runs.
  * validate_extension checks an extended reasoning trace against a
    trusted benchmark answer, by judge score for prose and by executing
    the code for programs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .evaluation import parse_rating
from .gateway import (
    CompletionRequest,
    Executor,
    ExecutionResult,
    complete,
    execution_request_for,
    DEFAULT_TIMEOUT_MS,
)
from .prompts import render_prompt
from .tables import Table, TableError, exact_answer_match, parse_table, serialize_table, tables_exact_match
from .textsim import (
    DEFAULT_CLUSTER_TAU,
    cluster_by_threshold,
    rouge_l,
    similarity_matrix,
    tokenize,
)

CHANNELS = ("parameter_inferred", "code_executed")
EXEC_STATUSES = ("ok", "error", "timeout")
DUAL_MODES = ("table_exact", "text_rouge")

DEFAULT_AGREEMENT_DELTA = 0.8
DEFAULT_CLUSTER_SHARE = 0.5
DEFAULT_DUAL_THRESHOLD = 0.9
DEFAULT_JUDGE_THRESHOLD = 7


class ValidationError(ValueError):
    pass


class EmptyInnerSet(ValidationError):
    pass


class NoExecutableAnswers(ValidationError):
    pass


@dataclass(frozen=True)
class CandidateAnswer:
    channel: str
    text: str
    code: str | None = None
    exec_status: str | None = None

    def __post_init__(self) -> None:
        if self.channel not in CHANNELS:
            raise ValidationError(f"unknown channel {self.channel!r}")
        if self.exec_status is not None and self.exec_status not in EXEC_STATUSES:
            raise ValidationError(f"unknown exec status {self.exec_status!r}")
        if self.channel == "code_executed":
            if self.code is None or self.exec_status is None:
                raise ValidationError(
                    "code_executed answers need both code and exec_status"
                )
        if self.exec_status == "ok" and not self.text.strip():
            raise ValidationError("an ok execution must have printed something")


def candidate_from_execution(code: str, result: ExecutionResult) -> CandidateAnswer:
    """Turn an execution into a candidate; a clean run that printed
    nothing counts as an error."""
    status = result.status
    if status == "ok" and not result.stdout.strip():
        status = "error"
    return CandidateAnswer(
        channel="code_executed",
        text=result.stdout if status == "ok" else "",
        code=code,
        exec_status=status,
    )


@dataclass(frozen=True)
class ValidationRecord:
    instance_id: str
    reference_answer: str
    reference_support: int
    agreement: float
    selected_answer: str | None
    accepted: bool
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExtensionRecord:
    instance_id: str
    reasoning_text: str
    judge_score: int | None
    accepted: bool
    exec_status: str | None = None


def cross_way_validate(
    inner: Sequence[CandidateAnswer],
    coded: Sequence[CandidateAnswer],
    tau: float = DEFAULT_CLUSTER_TAU,
    delta: float = DEFAULT_AGREEMENT_DELTA,
    min_cluster_share: float = DEFAULT_CLUSTER_SHARE,
    instance_id: str = "",
) -> ValidationRecord:
    """Reconcile inner answers against executed answers.

    Failed executions are dropped up front. The remaining executed
    answers vote: single-link clusters at tau, the largest cluster's
    centroid becomes the reference. The inner answer closest to the
    reference is selected; the instance is accepted when that agreement
    reaches delta and the winning cluster holds at least
    min_cluster_share of the executed answers.
    """
    if not inner:
        raise EmptyInnerSet("no parameter-inferred answers")
    for c in inner:
        if c.channel != "parameter_inferred":
            raise ValidationError("inner answers must be parameter_inferred")
    for c in coded:
        if c.channel != "code_executed":
            raise ValidationError("coded answers must be code_executed")
    ok_texts = [c.text for c in coded if c.exec_status == "ok"]
    if not ok_texts:
        raise NoExecutableAnswers("every code run failed")

    m = similarity_matrix(ok_texts)
    clusters = cluster_by_threshold(m, tau)
    top = clusters[0]
    reference = ok_texts[top.centroid_index]
    share = top.size / len(ok_texts)

    ref_tokens = tokenize(reference)
    best_idx = 0
    best_sim = -1.0
    for i, c in enumerate(inner):
        sim = rouge_l(tokenize(c.text), ref_tokens)
        if sim > best_sim:
            best_idx, best_sim = i, sim
    accepted = best_sim >= delta and share >= min_cluster_share
    return ValidationRecord(
        instance_id=instance_id,
        reference_answer=reference,
        reference_support=top.size,
        agreement=best_sim,
        selected_answer=inner[best_idx].text,
        accepted=accepted,
        diagnostics={
            "n_inner": len(inner),
            "n_coded": len(coded),
            "n_coded_ok": len(ok_texts),
            "cluster_sizes": [c.size for c in clusters],
            "reference_share": share,
        },
    )


def dual_code_validate(
    a: CandidateAnswer,
    b: CandidateAnswer,
    mode: str = "table_exact",
    threshold: float = DEFAULT_DUAL_THRESHOLD,
) -> tuple[bool, float]:
    """Compare two executed answers; (consistent, similarity).

    Either run failing makes the pair inconsistent with similarity 0.
    table_exact parses both outputs as tables and requires an exact
    canonical match; text_rouge thresholds the ROUGE-L score. Symmetric
    in its arguments.
    """
    if mode not in DUAL_MODES:
        raise ValidationError(f"unknown mode {mode!r}")
    for c in (a, b):
        if c.channel != "code_executed":
            raise ValidationError("dual-code validation needs code_executed answers")
    if a.exec_status != "ok" or b.exec_status != "ok":
        return False, 0.0
    if mode == "table_exact":
        try:
            ta, tb = parse_table(a.text), parse_table(b.text)
        except TableError:
            return False, 0.0
        match = tables_exact_match(ta, tb)
        return match, 1.0 if match else 0.0
    sim = rouge_l(tokenize(a.text), tokenize(b.text))
    return sim >= threshold, sim


def validate_extension(
    reasoning: str,
    benchmark_answer: str,
    kind: str,
    judge=None,
    executor: Executor | None = None,
    judge_threshold: int = DEFAULT_JUDGE_THRESHOLD,
    question: str = "",
    instance_id: str = "",
    tables: Sequence[Table] = (),
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> ExtensionRecord:
    """Check an extended reasoning trace against the benchmark answer.

    kind=textual scores the trace with a judge client and accepts at
    judge_threshold (inclusive). kind=coded executes the trace as code
    and accepts only an ok run whose output matches the benchmark
    answer exactly. Execution failures come back as rejections with the
    status recorded, never as exceptions.
    """
    if not benchmark_answer.strip():
        raise ValidationError("benchmark answer must not be empty")
    if kind == "textual":
        if judge is None:
            raise ValidationError("textual validation needs a judge client")
        prompt = render_prompt("judge", (question, benchmark_answer, reasoning))
        output = complete(
            judge, CompletionRequest(prompt=prompt, tag=f"judge:{instance_id}")
        )[0]
        score = parse_rating(output)
        return ExtensionRecord(
            instance_id=instance_id,
            reasoning_text=reasoning,
            judge_score=score,
            accepted=score >= judge_threshold,
        )
    if kind == "coded":
        if executor is None:
            raise ValidationError("coded validation needs an executor")
        request = execution_request_for(
            reasoning, [serialize_table(t) for t in tables], timeout_ms=timeout_ms
        )
        result = executor.execute(request)
        accepted = result.status == "ok" and exact_answer_match(
            result.stdout, benchmark_answer
        )
        return ExtensionRecord(
            instance_id=instance_id,
            reasoning_text=reasoning,
            judge_score=None,
            accepted=accepted,
            exec_status=result.status,
        )
    raise ValidationError(f"unknown extension kind {kind!r}")
