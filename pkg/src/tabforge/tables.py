"""Table data model and delimited-text handling.

A Table is an immutable rectangular grid of string cells under a header
row. Comparison always runs on canonical cell forms, so formatting noise
(surrounding whitespace, "3.50" vs "3.5") never breaks an exact match.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from decimal import Decimal, DecimalException

DELIMITERS = {"comma": ",", "tab": "\t"}
PREVIEW_ROWS = 10
DOCUMENT_TOKEN_LIMIT = 500

_WS_RUN = re.compile(r"\s+")
_TOKEN = re.compile(r"\w+|[^\w\s]")


class TableError(ValueError):
    """Base error for table construction and parsing."""


class EmptyInput(TableError):
    pass


class RaggedRow(TableError):
    """A record is wider than the header row.

    row_index counts records from the top of the input, header at 0.
    """

    def __init__(self, row_index: int):
        super().__init__(f"record {row_index} is wider than the header row")
        self.row_index = row_index


class UnbalancedQuote(TableError):
    def __init__(self, position: int):
        super().__init__(f"quote opened at offset {position} is never closed")
        self.position = position


class DuplicateHeaderWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Table:
    headers: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...] = ()
    name: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "headers", tuple(self.headers))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        if not self.headers:
            raise TableError("a table needs at least one header cell")
        width = len(self.headers)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise TableError(
                    f"row {i} has {len(row)} cells, the header has {width}"
                )

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.headers)

    def duplicate_headers(self) -> tuple[str, ...]:
        seen: set[str] = set()
        dups: list[str] = []
        for h in self.headers:
            if h in seen and h not in dups:
                dups.append(h)
            seen.add(h)
        return tuple(dups)


@dataclass(frozen=True)
class CanonicalTable:
    """Result of canonicalize_table; same shape as Table, cells normalized."""

    headers: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class TablePreview:
    headers: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    truncated: bool
    total_rows: int


def _scan_records(text: str, delim: str) -> list[list[str]]:
    records: list[list[str]] = []
    record: list[str] = []
    buf: list[str] = []
    in_quotes = False
    quote_open_pos = -1
    field_has_data = False
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if in_quotes:
            if c == '"':
                if i + 1 < n and text[i + 1] == '"':
                    buf.append('"')
                    i += 2
                    continue
                in_quotes = False
                i += 1
                continue
            buf.append(c)
            i += 1
            continue
        if c == '"' and not buf and not field_has_data:
            in_quotes = True
            field_has_data = True
            quote_open_pos = i
            i += 1
            continue
        if c == delim:
            record.append("".join(buf))
            buf = []
            field_has_data = False
            i += 1
            continue
        if c in "\r\n":
            # A line with no data, no delimiter, and no quotes is blank:
            # skip it. A quoted empty field ("") still counts as data.
            if record or buf or field_has_data:
                record.append("".join(buf))
                buf = []
                field_has_data = False
                records.append(record)
                record = []
            if c == "\r" and i + 1 < n and text[i + 1] == "\n":
                i += 2
            else:
                i += 1
            continue
        buf.append(c)
        field_has_data = True
        i += 1
    if in_quotes:
        raise UnbalancedQuote(quote_open_pos)
    if buf or record or field_has_data:
        record.append("".join(buf))
        records.append(record)
    return records


def parse_table(text: str, dialect: str = "comma", name: str | None = None) -> Table:
    """Parse delimited text into a Table.

    The first record is the header. Short rows are padded with empty
    cells, rows wider than the header raise RaggedRow. Quoting follows
    the usual delimited-text rules: fields may be wrapped in double
    quotes, embedded quotes are doubled, quoted fields may contain
    delimiters and line breaks. Both LF and CRLF are accepted. Blank
    data lines are skipped.
    """
    if dialect not in DELIMITERS:
        raise ValueError(f"unknown dialect {dialect!r}")
    if not text:
        raise EmptyInput("no input text")
    records = _scan_records(text, DELIMITERS[dialect])
    if not records:
        raise EmptyInput("no records in input")
    headers = records[0]
    width = len(headers)
    rows: list[list[str]] = []
    for idx, rec in enumerate(records[1:], start=1):
        if len(rec) > width:
            raise RaggedRow(idx)
        rows.append(rec + [""] * (width - len(rec)))
    table = Table(headers=tuple(headers), rows=tuple(tuple(r) for r in rows), name=name)
    dups = table.duplicate_headers()
    if dups:
        warnings.warn(
            f"duplicate header names: {', '.join(dups)}", DuplicateHeaderWarning,
            stacklevel=2,
        )
    return table


def _quote_field(field: str, delim: str) -> str:
    if '"' in field or delim in field or "\n" in field or "\r" in field:
        return '"' + field.replace('"', '""') + '"'
    return field


def serialize_table(t: Table | CanonicalTable, dialect: str = "comma") -> str:
    """Render a table back to delimited text, LF line endings, one trailing LF."""
    if dialect not in DELIMITERS:
        raise ValueError(f"unknown dialect {dialect!r}")
    delim = DELIMITERS[dialect]
    # A lone empty field would render as a blank line, which readers
    # skip; quote it so the record survives a round trip.
    def line(cells) -> str:
        return delim.join(_quote_field(c, delim) for c in cells) or '""'

    lines = [line(t.headers)]
    for row in t.rows:
        lines.append(line(row))
    return "\n".join(lines) + "\n"


def _canonical_number(text: str) -> str | None:
    if not text:
        return None
    try:
        d = Decimal(text)
        if not d.is_finite():
            return None
        out = format(d.normalize(), "f")
    except (DecimalException, ValueError):
        return None
    if out == "-0":
        return "0"
    return out


def canonical_cell(cell: str) -> str:
    """Trim, collapse internal whitespace, re-render finite numbers canonically."""
    cell = _WS_RUN.sub(" ", cell.strip())
    num = _canonical_number(cell)
    return num if num is not None else cell


def canonicalize_table(t: Table | CanonicalTable) -> CanonicalTable:
    """Canonical form: every cell canonicalized, headers also lowercased."""
    headers = tuple(canonical_cell(h).lower() for h in t.headers)
    rows = tuple(tuple(canonical_cell(c) for c in row) for row in t.rows)
    return CanonicalTable(headers=headers, rows=rows)


def _cells_equal(a: str, b: str, tol: float) -> bool:
    if a == b:
        return True
    try:
        da, db = Decimal(a), Decimal(b)
    except DecimalException:
        return False
    if not (da.is_finite() and db.is_finite()):
        return False
    return abs(da - db) <= Decimal(repr(tol))


def _rows_equal(ra: tuple[str, ...], rb: tuple[str, ...], tol: float) -> bool:
    return len(ra) == len(rb) and all(_cells_equal(x, y, tol) for x, y in zip(ra, rb))


def tables_exact_match(
    a: Table | CanonicalTable,
    b: Table | CanonicalTable,
    row_order_sensitive: bool = True,
    numeric_tolerance: float | None = None,
) -> bool:
    """Equality on canonical forms.

    Headers must match as sequences. Rows compare as sequences by
    default, as multisets when row_order_sensitive is false. With
    numeric_tolerance set, two cells that both parse as finite numbers
    compare within that absolute tolerance (order-insensitive mode then
    compares rows after sorting both sides, which is approximate).
    """
    ca, cb = canonicalize_table(a), canonicalize_table(b)
    if ca.headers != cb.headers:
        return False
    rows_a, rows_b = ca.rows, cb.rows
    if len(rows_a) != len(rows_b):
        return False
    if not row_order_sensitive:
        rows_a, rows_b = tuple(sorted(rows_a)), tuple(sorted(rows_b))
    if numeric_tolerance is None:
        return rows_a == rows_b
    return all(_rows_equal(x, y, numeric_tolerance) for x, y in zip(rows_a, rows_b))


def exact_answer_match(predicted: str, expected: str) -> bool:
    """Canonical equality for answers that are either scalars or printed tables."""
    pa, pb = predicted.strip(), expected.strip()
    if "\n" in pa and "\n" in pb:
        try:
            return tables_exact_match(parse_table(pa), parse_table(pb))
        except TableError:
            pass
    return canonical_cell(pa) == canonical_cell(pb)


def preview(t: Table, n: int = PREVIEW_ROWS) -> TablePreview:
    """First n rows of a table, flagged when anything was cut off."""
    if n < 1:
        raise ValueError("preview needs at least one row")
    return TablePreview(
        headers=t.headers,
        rows=t.rows[:n],
        truncated=t.n_rows > n,
        total_rows=t.n_rows,
    )


def preview_table(t: Table, n: int = PREVIEW_ROWS) -> Table:
    p = preview(t, n)
    return Table(headers=p.headers, rows=p.rows, name=t.name)


def text_token_count(text: str) -> int:
    """Token count: word runs plus each punctuation character on its own."""
    return len(_TOKEN.findall(text))


def token_count(t: Table | None, context: str | None = None) -> int:
    """Tokens in the serialized table plus the context text.

    "a,b\\n1,2" counts as six tokens: a , b 1 , 2.
    """
    total = 0
    if t is not None:
        total += text_token_count(serialize_table(t))
    if context:
        total += text_token_count(context)
    return total


def fits_document_budget(
    t: Table | None, context: str | None = None, limit: int = DOCUMENT_TOKEN_LIMIT
) -> bool:
    return token_count(t, context) < limit
