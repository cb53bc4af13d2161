"""Diary tables: validation, recency windowing, and Markdown serialization.

The diary file format is delimiter-separated text with a first header line of
``name:kind`` tokens, e.g. ``date:date,mood:score,exercise:hours,goal_rest:goal``.
Kind markers may be omitted where a header-name rule applies: a header named
``date`` is the date column, and a header with a name part equal to ``goal``
is a goal column.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass

from .errors import WorkbenchError

COLUMN_KINDS = ("date", "score", "hours", "goal")
SCORE_MIN, SCORE_MAX = 1, 5
HOURS_MAX = 24.0
DEFAULT_WINDOW_DAYS = 21

_KIND_DESCRIPTIONS = {
    "date": "calendar day of the entry (ISO-8601)",
    "score": "five-point scale, 1 (lowest) to 5 (highest)",
    "hours": "hours spent, 0 to 24",
    "goal": "whether the goal was met (true/false)",
}

_NAME_RE = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_ -]*$")


class DiaryError(WorkbenchError):
    """Invalid diary input."""


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    description: str


@dataclass(frozen=True)
class DiaryRow:
    date: dt.date
    values: dict  # column name -> value, None for missing; date column excluded


@dataclass(frozen=True)
class DiaryTable:
    user_id: str
    columns: tuple[ColumnSpec, ...]
    rows: tuple[DiaryRow, ...]  # ascending by date, dates unique

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> ColumnSpec | None:
        for spec in self.columns:
            if spec.name == name:
                return spec
        return None


def _name_has_goal_token(name: str) -> bool:
    return "goal" in re.split(r"[^a-z0-9]+", name.lower())


def _infer_kind(name: str) -> str | None:
    if name.lower() == "date":
        return "date"
    if _name_has_goal_token(name):
        return "goal"
    return None


def _parse_header_token(token: str) -> ColumnSpec:
    name, sep, kind = token.partition(":")
    name = name.strip()
    kind = kind.strip()
    if not _NAME_RE.match(name):
        raise DiaryError(f"invalid column name {name!r}")
    if sep:
        if kind not in COLUMN_KINDS:
            raise DiaryError(f"column {name!r}: unknown column kind {kind!r}")
    else:
        inferred = _infer_kind(name)
        if inferred is None:
            raise DiaryError(f"column {name!r}: unknown column kind (no marker and no name rule)")
        kind = inferred
    if _name_has_goal_token(name) and kind != "goal":
        raise DiaryError(f"column {name!r}: name contains 'goal' so its kind must be goal")
    return ColumnSpec(name=name, kind=kind, description=_KIND_DESCRIPTIONS[kind])


def _parse_cell(cell: str, spec: ColumnSpec, line_no: int):
    cell = cell.strip()
    if cell == "":
        return None
    where = f"column {spec.name!r}, line {line_no}"
    if spec.kind == "date":
        try:
            return dt.date.fromisoformat(cell)
        except ValueError:
            raise DiaryError(f"{where}: invalid ISO date {cell!r}") from None
    if spec.kind == "score":
        try:
            value = int(cell)
        except ValueError:
            raise DiaryError(f"{where}: score must be an integer, got {cell!r}") from None
        if not SCORE_MIN <= value <= SCORE_MAX:
            raise DiaryError(f"{where}: score out of range [1,5], got {value}")
        return value
    if spec.kind == "hours":
        try:
            value = float(cell)
        except ValueError:
            raise DiaryError(f"{where}: hours must be a number, got {cell!r}") from None
        if not 0 <= value <= HOURS_MAX:
            raise DiaryError(f"{where}: hours out of range [0,24], got {value}")
        return value
    if spec.kind == "goal":
        lowered = cell.lower()
        if lowered == "true":
            return True
        if lowered == "false":
            return False
        raise DiaryError(f"{where}: goal column must be boolean (true/false), got {cell!r}")
    raise DiaryError(f"{where}: unknown column kind {spec.kind!r}")


def parse_diary_text(text: str) -> tuple[list[str], list[list[str]]]:
    """Split diary file text into header tokens and raw row cells."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise DiaryError("diary file has no header line")
    header = [cell.strip() for cell in lines[0].split(",")]
    rows = [[cell.strip() for cell in line.split(",")] for line in lines[1:]]
    return header, rows


def validate_table(header: list[str], rows: list[list[str]], user_id: str = "user") -> DiaryTable:
    """Build a DiaryTable from raw header tokens and row cells, enforcing all invariants."""
    if not header:
        raise DiaryError("diary table needs at least one column")
    columns = tuple(_parse_header_token(token) for token in header)
    names = [c.name for c in columns]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise DiaryError(f"duplicate column names: {', '.join(dupes)}")
    date_cols = [c for c in columns if c.kind == "date"]
    if len(date_cols) != 1:
        raise DiaryError("diary table needs exactly one date column")
    date_col = date_cols[0]

    parsed_rows = []
    seen_dates: set[dt.date] = set()
    for offset, cells in enumerate(rows):
        line_no = offset + 2
        if len(cells) != len(columns):
            raise DiaryError(f"line {line_no}: expected {len(columns)} cells, got {len(cells)}")
        values = {}
        row_date = None
        for cell, spec in zip(cells, columns):
            value = _parse_cell(cell, spec, line_no)
            if spec.kind == "date":
                row_date = value
            else:
                values[spec.name] = value
        if row_date is None:
            raise DiaryError(f"line {line_no}: missing date")
        if row_date in seen_dates:
            raise DiaryError(f"duplicate date {row_date.isoformat()}")
        seen_dates.add(row_date)
        parsed_rows.append(DiaryRow(date=row_date, values=values))

    parsed_rows.sort(key=lambda r: r.date)
    # date column stays first in serialization regardless of input position
    ordered = (date_col,) + tuple(c for c in columns if c.kind != "date")
    return DiaryTable(user_id=user_id, columns=ordered, rows=tuple(parsed_rows))


def loads_diary(text: str, user_id: str = "user") -> DiaryTable:
    header, rows = parse_diary_text(text)
    return validate_table(header, rows, user_id=user_id)


def load_diary(path, user_id: str | None = None) -> DiaryTable:
    from pathlib import Path

    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise DiaryError(f"cannot read diary file {p}: {exc}") from exc
    return loads_diary(text, user_id=user_id or p.stem)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, dt.date):
        return value.isoformat()
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() else str(value)
    return str(value)


def dumps_diary(table: DiaryTable) -> str:
    """Write a table back to the diary file format (round-trips through validate_table)."""
    lines = [",".join(f"{c.name}:{c.kind}" for c in table.columns)]
    for row in table.rows:
        cells = []
        for spec in table.columns:
            cells.append(_format_cell(row.date if spec.kind == "date" else row.values.get(spec.name)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def truncate_recent(table: DiaryTable, max_days: int = DEFAULT_WINDOW_DAYS) -> DiaryTable:
    """Restrict the table to its most recent max_days distinct dates."""
    if max_days < 1:
        raise DiaryError(f"max_days must be positive, got {max_days}")
    if len(table.rows) <= max_days:
        return table
    return DiaryTable(user_id=table.user_id, columns=table.columns, rows=table.rows[-max_days:])


def serialize_markdown(table: DiaryTable) -> str:
    """Serialize to a pipe table in chronological order, followed by a column legend."""
    names = list(table.column_names)
    lines = [
        "| " + " | ".join(names) + " |",
        "| " + " | ".join("---" for _ in names) + " |",
    ]
    for row in table.rows:
        cells = []
        for spec in table.columns:
            cells.append(_format_cell(row.date if spec.kind == "date" else row.values.get(spec.name)))
        lines.append("| " + " | ".join(cells) + " |")
    legend = ["", "Columns:"]
    for spec in table.columns:
        legend.append(f"- {spec.name} ({spec.kind}): {spec.description}")
    return "\n".join(lines + legend)
