"""Prompt templates and merge-instruction templates.

Everything the pipeline says to a model lives here: question
generation, reasoning extension, answer sampling for both routes, and
judge scoring. Exposure rules are enforced at render time: a
document-embedded instance shows its full table plus context, a
spreadsheet-embedded instance never shows more than the first ten rows.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .corpus import Instance
from .tables import PREVIEW_ROWS, Table, preview_table, serialize_table

ROLES = ("generate_questions", "extend_reasoning", "judge")


class ScenarioMismatch(ValueError):
    pass


class MissingSlot(ValueError):
    pass


class UnknownColumn(ValueError):
    pass


@dataclass(frozen=True)
class MergeTemplate:
    id: str
    pattern: str
    join_kind: str  # inner | outer

    def __post_init__(self) -> None:
        if self.join_kind not in ("inner", "outer"):
            raise ValueError(f"unknown join kind {self.join_kind!r}")
        if self.join_kind == "outer" and "fill in the blanks with NAN" not in self.pattern:
            raise ValueError("outer templates must mention filling blanks with NAN")
        if self.join_kind == "inner" and not (
            "keeping only the successfully merged portions" in self.pattern
            or "keep only the rows that are successfully merged" in self.pattern
        ):
            raise ValueError("inner templates must mention keeping merged rows only")

    @property
    def needs_condition(self) -> bool:
        return "{condition}" in self.pattern

    @property
    def needs_columns(self) -> bool:
        return "{columns}" in self.pattern


MERGE_TEMPLATES = (
    MergeTemplate(
        "inner_bare",
        "Merge two tables and keep only the rows that are successfully merged.",
        "inner",
    ),
    MergeTemplate(
        "outer_bare",
        "Merge the two tables and fill in the blanks with NAN.",
        "outer",
    ),
    MergeTemplate(
        "inner_condition",
        "Merge all rows in the two tables that {condition}, merging by entries "
        "with the same column name, keeping only the successfully merged portions.",
        "inner",
    ),
    MergeTemplate(
        "outer_condition",
        "Merge all rows in the two tables that {condition}, merging by entries "
        "with the same column name, and fill in the blanks with NAN.",
        "outer",
    ),
    MergeTemplate(
        "inner_columns",
        "Merge all rows in the two tables, show the value of {columns}, merging "
        "by entries with the same column name, keeping only the successfully "
        "merged portions.",
        "inner",
    ),
    MergeTemplate(
        "outer_columns",
        "Merge all rows in the two tables, show the value of {columns}, merging "
        "by entries with the same column name, and fill in the blanks with NAN.",
        "outer",
    ),
    MergeTemplate(
        "inner_condition_columns",
        "Merge all rows in the two tables that {condition}, show the value of "
        "{columns}, merging by entries with the same column name, keeping only "
        "the successfully merged portions.",
        "inner",
    ),
    MergeTemplate(
        "outer_condition_columns",
        "Merge all rows in the two tables that {condition}, show the value of "
        "{columns}, merging by entries with the same column name, and fill in "
        "the blanks with NAN.",
        "outer",
    ),
)

TEMPLATES_BY_ID = {t.id: t for t in MERGE_TEMPLATES}


def format_column_list(columns: list[str] | tuple[str, ...]) -> str:
    """Render column names as "A, B, C and D"."""
    cols = list(columns)
    if not cols:
        raise MissingSlot("column list is empty")
    if len(cols) == 1:
        return cols[0]
    return ", ".join(cols[:-1]) + " and " + cols[-1]


def instantiate_merge(
    template: MergeTemplate,
    condition: str | None = None,
    columns: list[str] | tuple[str, ...] | None = None,
    tables: tuple[Table, ...] | None = None,
) -> str:
    """Fill a merge template's slots; slot values the template does not
    use are ignored. With tables supplied, requested columns must exist
    in at least one of them."""
    values: dict[str, str] = {}
    if template.needs_condition:
        if not condition:
            raise MissingSlot(f"template {template.id} needs a condition")
        values["condition"] = condition
    if template.needs_columns:
        if not columns:
            raise MissingSlot(f"template {template.id} needs column names")
        if tables is not None:
            known = {h for t in tables for h in t.headers}
            missing = [c for c in columns if c not in known]
            if missing:
                raise UnknownColumn(
                    f"columns not present in any input table: {', '.join(missing)}"
                )
        values["columns"] = format_column_list(columns)
    return template.pattern.format(**values)


def _template_regex(template: MergeTemplate) -> re.Pattern[str]:
    pattern = re.escape(template.pattern)
    pattern = pattern.replace(re.escape("{condition}"), r"(?P<condition>.+?)")
    pattern = pattern.replace(re.escape("{columns}"), r"(?P<columns>.+?)")
    return re.compile(pattern + r"\Z")


def match_merge_instruction(text: str) -> tuple[MergeTemplate, dict[str, str]] | None:
    """Recover (template, slot text) from an instantiated instruction.

    Templates with more slots are tried first so a condition never
    swallows a column clause.
    """
    by_specificity = sorted(
        MERGE_TEMPLATES,
        key=lambda t: (t.needs_condition + t.needs_columns),
        reverse=True,
    )
    for template in by_specificity:
        m = _template_regex(template).match(text)
        if m:
            return template, m.groupdict()
    return None


def _render_table(t: Table, full: bool) -> str:
    shown = t if full else preview_table(t, PREVIEW_ROWS)
    text = serialize_table(shown)
    if not full and t.n_rows > PREVIEW_ROWS:
        text += f"... ({t.n_rows - PREVIEW_ROWS} more rows not shown)\n"
    return text


def _data_block(inst: Instance) -> str:
    full = inst.scenario == "document_embedded"
    if len(inst.tables) == 2:
        return (
            "[Table 1]\n" + _render_table(inst.tables[0], full)
            + "\n[Table 2]\n" + _render_table(inst.tables[1], full)
        )
    block = "[Table]\n" + _render_table(inst.tables[0], full)
    if full and inst.context_text:
        block += "\n[Document Text]\n" + inst.context_text + "\n"
    return block


_QUESTION_GEN_HEADER = """[Task Description]
You are given tabular data and must write new instructions against it.
Produce one instruction per line, each prefixed with its category tag
in the form [major category-subcategory], for example [Query-Filter].

Categories:
- Query: ask for values derivable from the data. Subcategories:
  Filter, Aggregate, Group, Sort, Compute, Sub query.
- Update: change the data itself. Subcategories: Update, Delete,
  Insert. {update_rule}
- Chart: ask for a chart drawn from the data. No subcategory; tag it
  [Chart].

Write instructions a person working with this data would actually ask.
Each one must be answerable from the given data alone.
"""

_DOC_EXPOSURE = """For document-embedded data the full table is shown together with the
surrounding text. Start your output with a [Table Description] section
that summarizes what the table holds before listing the instructions.
(Only document-embedded data needs this part.)
"""

_SHEET_EXPOSURE = """For spreadsheet-embedded data only the first 10 rows of the table are
shown; assume the file holds more rows shaped the same way.
"""


def render_question_generation(inst: Instance) -> str:
    doc = inst.scenario == "document_embedded"
    update_rule = (
        "Update DOES NOT apply to document-embedded data; never emit it here."
        if doc
        else "All update subcategories apply."
    )
    header = _QUESTION_GEN_HEADER.format(update_rule=update_rule)
    exposure = _DOC_EXPOSURE if doc else _SHEET_EXPOSURE
    return header + "\n" + exposure + "\n" + _data_block(inst)


_EXTENSION_TEXT = """[Task Description]
You are given tabular data, a question about it, and the verified final
answer. Write the step-by-step reasoning that derives exactly that
answer from the data: name the cells or groups you use, show any
arithmetic, and finish by stating the final answer.

{data}
[Question]
{question}

[Verified Answer]
{answer}

[Reasoning]
"""

_EXTENSION_CODE = """[Task Description]
You are given a data file, a question about it, and the verified final
answer. Write a self-contained Python program that reads the file,
derives exactly that answer, and prints it as the last thing on stdout.
Add a short comment before each step. Do not hard-code the answer.

{paths}
{data}
[Question]
{question}

[Verified Answer]
{answer}

[Python Code Solution]
"""


def render_extension(inst: Instance) -> str:
    if inst.scenario == "document_embedded":
        return _EXTENSION_TEXT.format(
            data=_data_block(inst),
            question=inst.question,
            answer=inst.answer.body,
        )
    return _EXTENSION_CODE.format(
        paths=_path_block(inst),
        data=_data_block(inst),
        question=inst.question,
        answer=inst.answer.body,
    )


def _path_block(inst: Instance) -> str:
    if len(inst.tables) == 2:
        return '[Path 1]: "data1.csv"\n[Path 2]: "data2.csv"\n(you need to read two files)'
    return '[Path]: "data.csv"'


_JUDGE_PROMPT = """[Instruction]
Act as an impartial judge of the answer an AI assistant gave to the
question below. Judge correctness against the reference answer first,
then helpfulness, relevance, and completeness. Ignore answer length,
phrasing differences, and the order in which content appears.

Score on a 1 to 10 scale:
1-2: no usable answer, or contradicts the data outright.
3-4: fragments of an answer with major errors or omissions.
5-6: partially right but with mistakes the reference answer avoids.
7-8: matches the reference answer in substance; minor flaws at most.
9-10: matches the reference answer and adds genuine value beyond it.

Give a short explanation first. Then output your score on its own line
in exactly this format:

Rating: [[score]]

[Question]
{question}

[Reference Answer]
{reference}

[Assistant's Answer]
{assistant}
"""


def render_judge(question: str, reference: str, assistant: str) -> str:
    return _JUDGE_PROMPT.format(
        question=question, reference=reference, assistant=assistant
    )


_INNER_ANSWER = """[Task Description]
Answer the question from the data below. Reason internally, then reply
with the final answer only: a value, a list, or a delimited table when
the question asks for one. No explanations.

{data}
[Question]
{question}

[Answer]
"""

_CODE_ANSWER = """[Task Description]
You are an agent that writes Python code to answer a question about
tabular data stored on disk. Write a self-contained program: import
what you need, read the file(s), compute the answer, and print it as
the last thing on stdout (print a delimited table when the question
asks for a table). Add a short comment before each step.

{paths}
{data}
[Instruction]
{question}

[Python Code Solution]
"""


def render_answer_prompt(inst: Instance, channel: str) -> str:
    """Prompt for sampling answers over one route.

    parameter_inferred answers straight from the shown data,
    code_executed writes a program against the conventional file names.
    """
    if channel == "parameter_inferred":
        return _INNER_ANSWER.format(data=_data_block(inst), question=inst.question)
    if channel == "code_executed":
        return _CODE_ANSWER.format(
            paths=_path_block(inst),
            data=_code_data_block(inst),
            question=inst.question,
        )
    raise ValueError(f"unknown channel {channel!r}")


def _code_data_block(inst: Instance) -> str:
    # Code prompts always preview: the program reads the real file anyway.
    if len(inst.tables) == 2:
        return (
            "[Data Example 1]\n" + _render_table(inst.tables[0], full=False)
            + "\n[Data Example 2]\n" + _render_table(inst.tables[1], full=False)
        )
    return "[Data Example]\n" + _render_table(inst.tables[0], full=False)


def render_prompt(role: str, payload) -> str:
    """Render one of the pipeline prompts.

    generate_questions and extend_reasoning take an Instance; judge
    takes a (question, reference_answer, assistant_answer) triple.
    """
    if role == "judge":
        if not (isinstance(payload, (tuple, list)) and len(payload) == 3):
            raise ScenarioMismatch(
                "judge rendering needs (question, reference, assistant)"
            )
        return render_judge(*payload)
    if not isinstance(payload, Instance):
        raise ScenarioMismatch(f"{role} rendering needs an Instance")
    if role == "generate_questions":
        return render_question_generation(payload)
    if role == "extend_reasoning":
        return render_extension(payload)
    raise ValueError(f"unknown role {role!r}")


_GENERATED_LINE = re.compile(
    r"^\[(Query|Update|Chart)(?:\s*-\s*([A-Za-z_ ]+))?\]\s*:?\s*(.+)$", re.IGNORECASE
)

_SUB_ALIASES = {
    "sub query": "sub_query",
    "subquery": "sub_query",
    "sub_query": "sub_query",
}


def parse_generated_questions(text: str) -> list[tuple[str, str | None, str]]:
    """Pull (major, sub, instruction) triples out of generator output.

    Lines that do not carry a category tag (including any table
    description section) are skipped.
    """
    out = []
    for line in text.splitlines():
        m = _GENERATED_LINE.match(line.strip())
        if not m:
            continue
        major = m.group(1).lower()
        sub = m.group(2)
        if sub is not None:
            sub = sub.strip().lower()
            sub = _SUB_ALIASES.get(sub, sub)
        out.append((major, sub, m.group(3).strip()))
    return out
