"""Merge instruction templates, pipeline prompt rendering, output parsing."""

import pytest

from tabforge.corpus import AnswerPayload, Instance, OperationTag
from tabforge.prompts import (
    MERGE_TEMPLATES,
    TEMPLATES_BY_ID,
    MissingSlot,
    ScenarioMismatch,
    UnknownColumn,
    format_column_list,
    instantiate_merge,
    match_merge_instruction,
    parse_generated_questions,
    render_answer_prompt,
    render_judge,
    render_prompt,
)
from tabforge.tables import Table, parse_table

# The eight instruction shapes, frozen byte-for-byte.
GOLDEN = [
    (
        "inner_bare",
        None,
        None,
        "Merge two tables and keep only the rows that are successfully merged.",
    ),
    (
        "outer_bare",
        None,
        None,
        "Merge the two tables and fill in the blanks with NAN.",
    ),
    (
        "inner_condition",
        "the value of 'final-weight' is greater than 168294",
        None,
        "Merge all rows in the two tables that the value of 'final-weight' is "
        "greater than 168294, merging by entries with the same column name, "
        "keeping only the successfully merged portions.",
    ),
    (
        "outer_condition",
        "the value of MedInc is not greater than 3.5469 and the value of "
        "AveOccup is not less than 2.816011574632264",
        None,
        "Merge all rows in the two tables that the value of MedInc is not "
        "greater than 3.5469 and the value of AveOccup is not less than "
        "2.816011574632264, merging by entries with the same column name, "
        "and fill in the blanks with NAN.",
    ),
    (
        "inner_columns",
        None,
        ("HIRE_DT", "ANNUAL_RT", "NAME"),
        "Merge all rows in the two tables, show the value of HIRE_DT, "
        "ANNUAL_RT and NAME, merging by entries with the same column name, "
        "keeping only the successfully merged portions.",
    ),
    (
        "outer_columns",
        None,
        ("weight", "cylinders", "displacement", "mpg"),
        "Merge all rows in the two tables, show the value of weight, "
        "cylinders, displacement and mpg, merging by entries with the same "
        "column name, and fill in the blanks with NAN.",
    ),
    (
        "inner_condition_columns",
        "the value of 'female' is greater than 0",
        ("union", "female", "black", "wage"),
        "Merge all rows in the two tables that the value of 'female' is "
        "greater than 0, show the value of union, female, black and wage, "
        "merging by entries with the same column name, keeping only the "
        "successfully merged portions.",
    ),
    (
        "outer_condition_columns",
        "the value of 'FREQUENCY' is not 'A'",
        ("TIME", "Value", "FREQUENCY", "LOCATION"),
        "Merge all rows in the two tables that the value of 'FREQUENCY' is "
        "not 'A', show the value of TIME, Value, FREQUENCY and LOCATION, "
        "merging by entries with the same column name, and fill in the "
        "blanks with NAN.",
    ),
]


class TestMergeTemplates:
    def test_eight_shapes(self):
        assert len(MERGE_TEMPLATES) == 8
        assert {t.join_kind for t in MERGE_TEMPLATES} == {"inner", "outer"}

    @pytest.mark.parametrize("template_id,condition,columns,expected", GOLDEN)
    def test_golden_instantiation(self, template_id, condition, columns, expected):
        template = TEMPLATES_BY_ID[template_id]
        got = instantiate_merge(template, condition=condition, columns=columns)
        assert got == expected

    def test_missing_condition(self):
        with pytest.raises(MissingSlot):
            instantiate_merge(TEMPLATES_BY_ID["inner_condition"])

    def test_missing_columns(self):
        with pytest.raises(MissingSlot):
            instantiate_merge(TEMPLATES_BY_ID["outer_columns"])
        with pytest.raises(MissingSlot):
            instantiate_merge(TEMPLATES_BY_ID["outer_columns"], columns=())

    def test_unknown_column_with_tables(self):
        tables = (parse_table("x,y\n1,2\n"), parse_table("y,z\n3,4\n"))
        instantiate_merge(
            TEMPLATES_BY_ID["outer_columns"], columns=("x", "z"), tables=tables
        )
        with pytest.raises(UnknownColumn):
            instantiate_merge(
                TEMPLATES_BY_ID["outer_columns"], columns=("x", "w"), tables=tables
            )

    @pytest.mark.parametrize("template_id,condition,columns,expected", GOLDEN)
    def test_match_recovers_template_and_slots(
        self, template_id, condition, columns, expected
    ):
        got = match_merge_instruction(expected)
        assert got is not None
        template, slots = got
        assert template.id == template_id
        if condition:
            assert slots["condition"] == condition
        if columns:
            assert slots["columns"] == format_column_list(columns)

    def test_match_rejects_non_merge_text(self):
        assert match_merge_instruction("What is the total revenue?") is None
        assert match_merge_instruction("") is None

    def test_format_column_list(self):
        assert format_column_list(["a"]) == "a"
        assert format_column_list(["a", "b"]) == "a and b"
        assert format_column_list(["a", "b", "c"]) == "a, b and c"
        with pytest.raises(MissingSlot):
            format_column_list([])


def sheet_instance(n_rows=15):
    t = Table(headers=("name", "score"), rows=tuple((f"r{i}", str(i)) for i in range(n_rows)))
    return Instance(
        id="s1",
        scenario="spreadsheet_embedded",
        operation=OperationTag(major="query", sub="aggregate"),
        question="What is the total score?",
        tables=(t,),
        answer=AnswerPayload(kind="text", body="105"),
        provenance="benchmark_extended",
        source="WikiSQL",
    )


def doc_instance():
    t = parse_table("city,pop\nParis,2.1\nLyon,0.5\n")
    return Instance(
        id="d1",
        scenario="document_embedded",
        operation=OperationTag(major="query", sub="filter"),
        question="Which city has the larger population?",
        tables=(t,),
        answer=AnswerPayload(kind="text", body="Paris"),
        provenance="benchmark_extended",
        source="WikiTQ",
        context_text="Two French cities are compared in the table.",
    )


def merge_instance():
    return Instance(
        id="m1",
        scenario="spreadsheet_embedded",
        operation=OperationTag(major="merge", sub=None),
        question="Merge the two tables and fill in the blanks with NAN.",
        tables=(parse_table("k,v\n1,a\n"), parse_table("k,w\n1,b\n")),
        answer=AnswerPayload(kind="table", body="k,v,w\n1,a,b\n"),
        provenance="generated",
        source="created",
    )


class TestQuestionGeneration:
    def test_spreadsheet_shows_only_ten_rows(self):
        prompt = render_prompt("generate_questions", sheet_instance(15))
        assert "first 10 rows" in prompt
        assert "r9" in prompt
        assert "r10" not in prompt.replace("(5 more rows not shown)", "")
        assert "5 more rows not shown" in prompt

    def test_document_shows_full_table_and_description_section(self):
        prompt = render_prompt("generate_questions", doc_instance())
        assert "[Table Description]" in prompt
        assert "Lyon" in prompt
        assert "[Document Text]" in prompt
        assert "DOES NOT apply to document-embedded" in prompt

    def test_spreadsheet_allows_update(self):
        prompt = render_prompt("generate_questions", sheet_instance())
        assert "All update subcategories apply." in prompt

    def test_category_tags_documented(self):
        prompt = render_prompt("generate_questions", sheet_instance())
        assert "[Query-Filter]" in prompt
        assert "[Chart]" in prompt


class TestExtensionPrompts:
    def test_document_is_textual(self):
        prompt = render_prompt("extend_reasoning", doc_instance())
        assert "[Reasoning]" in prompt
        assert "data.csv" not in prompt
        assert "Paris" in prompt  # verified answer shown

    def test_spreadsheet_is_coded(self):
        prompt = render_prompt("extend_reasoning", sheet_instance())
        assert "[Python Code Solution]" in prompt
        assert '[Path]: "data.csv"' in prompt

    def test_merge_lists_two_paths(self):
        prompt = render_prompt("extend_reasoning", merge_instance())
        assert '[Path 1]: "data1.csv"' in prompt
        assert '[Path 2]: "data2.csv"' in prompt
        assert "(you need to read two files)" in prompt


class TestJudgePrompt:
    def test_contains_rating_template_line(self):
        prompt = render_judge("q?", "ref", "got")
        assert "Rating: [[score]]" in prompt

    def test_block_order(self):
        prompt = render_judge("the-question", "the-reference", "the-assistant")
        q = prompt.index("[Question]")
        r = prompt.index("[Reference Answer]")
        a = prompt.index("[Assistant's Answer]")
        assert q < r < a
        assert prompt.index("the-question") < prompt.index("the-reference")

    def test_render_prompt_judge_takes_triple(self):
        out = render_prompt("judge", ("q", "ref", "ans"))
        assert "Rating: [[score]]" in out
        with pytest.raises(ScenarioMismatch):
            render_prompt("judge", doc_instance())

    def test_instance_roles_reject_non_instance(self):
        with pytest.raises(ScenarioMismatch):
            render_prompt("generate_questions", ("not", "an", "instance"))

    def test_unknown_role(self):
        with pytest.raises(ValueError):
            render_prompt("summarize", doc_instance())


class TestAnswerPrompts:
    def test_parameter_inferred_shows_data_inline(self):
        prompt = render_answer_prompt(doc_instance(), "parameter_inferred")
        assert "Paris,2.1" in prompt
        assert "[Answer]" in prompt
        assert "data.csv" not in prompt

    def test_code_route_names_file(self):
        prompt = render_answer_prompt(sheet_instance(), "code_executed")
        assert '[Path]: "data.csv"' in prompt
        assert "[Python Code Solution]" in prompt

    def test_code_route_always_previews(self):
        prompt = render_answer_prompt(sheet_instance(40), "code_executed")
        assert "30 more rows not shown" in prompt

    def test_merge_code_route(self):
        prompt = render_answer_prompt(merge_instance(), "code_executed")
        assert '[Path 1]: "data1.csv"' in prompt
        assert "(you need to read two files)" in prompt

    def test_unknown_channel(self):
        with pytest.raises(ValueError):
            render_answer_prompt(doc_instance(), "telepathy")


class TestParseGeneratedQuestions:
    def test_mixed_output(self):
        text = """[Table Description] Sales by region, one row per quarter.
[Query-Filter] Show the rows where region is East.
[Query - Sub query] Which region beat the average of all regions?
[Update-Insert] Add a row for Q5 with value 0.
[Chart] Plot value by quarter.
some trailing chatter that is not an instruction
"""
        got = parse_generated_questions(text)
        assert got == [
            ("query", "filter", "Show the rows where region is East."),
            ("query", "sub_query", "Which region beat the average of all regions?"),
            ("update", "insert", "Add a row for Q5 with value 0."),
            ("chart", None, "Plot value by quarter."),
        ]

    def test_case_insensitive_tags(self):
        got = parse_generated_questions("[QUERY-AGGREGATE] Sum the totals.")
        assert got == [("query", "aggregate", "Sum the totals.")]

    def test_colon_after_tag(self):
        # generators often write "[Query-Filter]: ..." even though the
        # prompt's example omits the colon; both must parse the same
        got = parse_generated_questions(
            "[Query-Filter]: Show the rows where region is East.\n"
            "[Chart]:Plot value by quarter.\n"
        )
        assert got == [
            ("query", "filter", "Show the rows where region is East."),
            ("chart", None, "Plot value by quarter."),
        ]

    def test_empty_output(self):
        assert parse_generated_questions("") == []
        assert parse_generated_questions("no tags here at all") == []
