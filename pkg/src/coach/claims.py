"""Structured claim language and deterministic evaluation against a diary table.

Grammar:
    AGG(col, window) CMP value          AGG in {mean, min, max, count_true}
    count_geq(col, window, t) CMP value
    trend(col, window, direction)       direction in {increasing, decreasing}
    window: all | last:<N> | <date>..<date>      CMP: < <= = >= >

Free-text claims from live completions stay on the human-annotation path; this
formal language makes the reliability metrics machine-checkable at desk scale.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass

from .diary import DiaryTable
from .errors import WorkbenchError
from .prompting import CANONICAL_TOPICS

AGGREGATES = ("mean", "min", "max", "count_true", "count_geq", "trend")
COMPARATORS = ("<=", ">=", "<", ">", "=")
DIRECTIONS = ("increasing", "decreasing")

_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")
_DATE_RE = re.compile(r"\d{4}-\d{2}-\d{2}")


class ClaimError(WorkbenchError):
    """Claim cannot be evaluated against the table."""


class ClaimSyntaxError(ClaimError):
    """Claim text does not parse; carries the character position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


@dataclass(frozen=True)
class Window:
    kind: str  # "all" | "last" | "range"
    days: int | None = None
    start: dt.date | None = None
    end: dt.date | None = None


@dataclass(frozen=True)
class StructuredClaim:
    aggregate: str
    column: str
    window: Window
    comparator: str | None = None
    threshold: float | None = None
    cell_threshold: float | None = None  # count_geq only
    direction: str | None = None  # trend only


@dataclass(frozen=True)
class ClaimVerdict:
    supported: bool
    evidence: tuple
    note: str


def _skip_ws(s: str, i: int) -> int:
    while i < len(s) and s[i].isspace():
        i += 1
    return i


def _parse_window(text: str, position: int) -> Window:
    if text == "all":
        return Window(kind="all")
    if text.startswith("last:"):
        tail = text[len("last:"):]
        if not tail.isdigit() or int(tail) < 1:
            raise ClaimSyntaxError(f"last:<N> needs a positive integer, got {text!r}", position)
        return Window(kind="last", days=int(tail))
    if ".." in text:
        start_text, _, end_text = text.partition("..")
        if not (_DATE_RE.fullmatch(start_text) and _DATE_RE.fullmatch(end_text)):
            raise ClaimSyntaxError(f"date range needs <date>..<date>, got {text!r}", position)
        start, end = dt.date.fromisoformat(start_text), dt.date.fromisoformat(end_text)
        if start > end:
            raise ClaimSyntaxError(f"window start {start} is after end {end}", position)
        return Window(kind="range", start=start, end=end)
    raise ClaimSyntaxError(f"malformed window {text!r} (use all, last:<N>, or <date>..<date>)", position)


def _parse_number(text: str, position: int) -> float:
    if not _NUMBER_RE.fullmatch(text):
        raise ClaimSyntaxError(f"expected a number, got {text!r}", position)
    return float(text)


def parse_claim(expr: str) -> StructuredClaim:
    s = expr
    i = _skip_ws(s, 0)
    j = i
    while j < len(s) and (s[j].isalnum() or s[j] == "_"):
        j += 1
    if j == i:
        raise ClaimSyntaxError("expected an aggregate name", i)
    aggregate = s[i:j]
    if aggregate not in AGGREGATES:
        raise ClaimSyntaxError(f"unknown aggregate {aggregate!r}", i)

    i = _skip_ws(s, j)
    if i >= len(s) or s[i] != "(":
        raise ClaimSyntaxError("expected '(' after the aggregate name", i)
    close = s.find(")", i)
    if close < 0:
        raise ClaimSyntaxError("missing ')'", len(s))
    raw_args = s[i + 1:close].split(",")
    args = [a.strip() for a in raw_args]
    args_pos = i + 1

    expected_args = 3 if aggregate in ("count_geq", "trend") else 2
    if len(args) != expected_args or any(not a for a in args):
        raise ClaimSyntaxError(
            f"{aggregate} takes {expected_args} arguments (got {len(args)})", args_pos)

    column = args[0]
    window = _parse_window(args[1], args_pos)

    rest_pos = _skip_ws(s, close + 1)
    rest = s[rest_pos:]

    if aggregate == "trend":
        if args[2] not in DIRECTIONS:
            raise ClaimSyntaxError(f"trend direction must be increasing or decreasing, got {args[2]!r}", args_pos)
        if rest.strip():
            raise ClaimSyntaxError(f"unexpected text after trend claim: {rest.strip()!r}", rest_pos)
        return StructuredClaim(aggregate=aggregate, column=column, window=window, direction=args[2])

    cell_threshold = None
    if aggregate == "count_geq":
        cell_threshold = _parse_number(args[2], args_pos)

    comparator = None
    for cmp_token in COMPARATORS:
        if rest.startswith(cmp_token):
            comparator = cmp_token
            break
    if comparator is None:
        raise ClaimSyntaxError("expected a comparator (<, <=, =, >=, >)", rest_pos)
    value_pos = _skip_ws(s, rest_pos + len(comparator))
    value_text = s[value_pos:].strip()
    threshold = _parse_number(value_text, value_pos)

    return StructuredClaim(
        aggregate=aggregate, column=column, window=window,
        comparator=comparator, threshold=threshold, cell_threshold=cell_threshold,
    )


def _fmt_num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def to_text(claim: StructuredClaim) -> str:
    """Canonical writer; parse_claim(to_text(c)) round-trips."""
    w = claim.window
    if w.kind == "all":
        window = "all"
    elif w.kind == "last":
        window = f"last:{w.days}"
    else:
        window = f"{w.start.isoformat()}..{w.end.isoformat()}"
    if claim.aggregate == "trend":
        return f"trend({claim.column}, {window}, {claim.direction})"
    if claim.aggregate == "count_geq":
        head = f"count_geq({claim.column}, {window}, {_fmt_num(claim.cell_threshold)})"
    else:
        head = f"{claim.aggregate}({claim.column}, {window})"
    return f"{head} {claim.comparator} {_fmt_num(claim.threshold)}"


_CMP_FN = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


def _window_rows(claim: StructuredClaim, table: DiaryTable):
    w = claim.window
    if w.kind == "all":
        rows = list(table.rows)
    elif w.kind == "last":
        rows = list(table.rows[-w.days:])
    else:
        rows = [r for r in table.rows if w.start <= r.date <= w.end]
    if not rows:
        raise ClaimError("window does not intersect the table dates")
    return rows


def evaluate_claim(claim: StructuredClaim, table: DiaryTable) -> ClaimVerdict:
    """Aggregate the non-missing window cells and apply the comparator (or trend sign)."""
    spec = table.column(claim.column)
    if spec is None:
        raise ClaimError(f"unknown column {claim.column!r}")
    if claim.aggregate == "count_true":
        if spec.kind != "goal":
            raise ClaimError(f"count_true requires a goal column, {claim.column!r} is {spec.kind}")
    elif spec.kind not in ("score", "hours"):
        raise ClaimError(f"{claim.aggregate} requires a score or hours column, {claim.column!r} is {spec.kind}")

    rows = _window_rows(claim, table)
    evidence = tuple((r.date, r.values.get(claim.column)) for r in rows
                     if r.values.get(claim.column) is not None)
    if not evidence:
        raise ClaimError(f"window contains no non-missing cells for {claim.column!r}")
    values = [v for _, v in evidence]

    if claim.aggregate == "trend":
        if len(evidence) < 2:
            raise ClaimError("trend needs at least two non-missing cells")
        first = evidence[0][0]
        xs = [(d - first).days for d, _ in evidence]
        n = len(xs)
        sx, sy = sum(xs), sum(values)
        sxy = sum(x * y for x, y in zip(xs, values))
        sxx = sum(x * x for x in xs)
        numerator = n * sxy - sx * sy
        denominator = n * sxx - sx * sx  # > 0: distinct dates
        slope = numerator / denominator
        supported = numerator > 0 if claim.direction == "increasing" else numerator < 0
        return ClaimVerdict(supported=supported, evidence=evidence,
                            note=f"least-squares slope of {claim.column} = {slope:.4g} over {n} days")

    if claim.aggregate == "mean":
        result = sum(values) / len(values)
    elif claim.aggregate == "min":
        result = min(values)
    elif claim.aggregate == "max":
        result = max(values)
    elif claim.aggregate == "count_true":
        result = sum(1 for v in values if v is True)
    else:  # count_geq
        result = sum(1 for v in values if v >= claim.cell_threshold)

    supported = _CMP_FN[claim.comparator](result, claim.threshold)
    note = (f"{claim.aggregate}({claim.column}) = {_fmt_num(float(result))} over "
            f"{len(values)} non-missing cells; compared {claim.comparator} {_fmt_num(claim.threshold)}")
    return ClaimVerdict(supported=supported, evidence=evidence, note=note)


def relevant_columns(topic: str, mapping=None) -> set[str]:
    """Columns configured as relevant for a canonical query topic."""
    topics = dict(mapping if mapping is not None else CANONICAL_TOPICS)
    if topic not in topics:
        known = ", ".join(sorted(topics))
        raise ClaimError(f"unknown topic {topic!r} (configured: {known})")
    return set(topics[topic])
