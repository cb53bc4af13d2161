"""Shared random generators and independent brute-force oracles.

The oracles deliberately avoid the package's own computation paths: agreement
is recomputed by direct pair enumeration, claims by a from-scratch evaluator
(trend via exact rational covariance), retrieval by an independently coded
full scan. Generated hours are multiples of 0.5 so sums and products stay
exactly representable in doubles.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction

from coach.diary import DiaryTable, loads_diary

WORDS = (
    "rest sleep mood energy walk routine evening morning gentle steady small "
    "step balance diary pattern week habit calm breathing pace note daylight "
    "water stretch break friend support plan goal track"
).split()

SCORE_COLUMNS = ("mood", "sleep", "energy")
HOURS_COLUMNS = ("exercise", "work", "social", "chores")
GOAL_COLUMNS = ("goal_rest", "goal_walk")


# --- diary tables -------------------------------------------------------------

def random_table(rng: random.Random, max_days: int = 31, missing_rate: float = 0.15) -> DiaryTable:
    """Random valid diary built through the public file format and validator."""
    import datetime as dt

    score_cols = rng.sample(SCORE_COLUMNS, rng.randint(1, len(SCORE_COLUMNS)))
    hours_cols = rng.sample(HOURS_COLUMNS, rng.randint(1, 2))
    goal_cols = rng.sample(GOAL_COLUMNS, rng.randint(1, 2))
    header = ["date:date"]
    header += [f"{c}:score" for c in score_cols]
    header += [f"{c}:hours" for c in hours_cols]
    header += [f"{c}:goal" for c in goal_cols]

    n_days = rng.randint(1, max_days)
    start = dt.date(2025, 1, 1) + dt.timedelta(days=rng.randint(0, 200))
    offsets = sorted(rng.sample(range(max_days * 2), n_days))
    lines = [",".join(header)]
    for off in offsets:
        cells = [(start + dt.timedelta(days=off)).isoformat()]
        for _ in score_cols:
            cells.append("" if rng.random() < missing_rate else str(rng.randint(1, 5)))
        for _ in hours_cols:
            cells.append("" if rng.random() < missing_rate else str(rng.randint(0, 48) * 0.5))
        for _ in goal_cols:
            cells.append("" if rng.random() < missing_rate else rng.choice(["true", "false"]))
        lines.append(",".join(cells))
    return loads_diary("\n".join(lines) + "\n", user_id="rnd")


# --- marked responses ----------------------------------------------------------

def random_sentence(rng: random.Random) -> str:
    words = rng.choices(WORDS, k=rng.randint(3, 8))
    return (" ".join(words)).capitalize() + "."


def random_marked_parts(rng: random.Random):
    from coach.engine import ContextStatement, DataClaim

    claims = tuple(DataClaim(label=i, text=random_sentence(rng))
                   for i in range(1, rng.randint(1, 6) + 1))
    statements = tuple(ContextStatement(label=chr(ord("A") + i), text=random_sentence(rng))
                       for i in range(rng.randint(1, 5)))
    return claims, statements


# --- agreement oracle ----------------------------------------------------------

def alpha_pair_enumeration(matrix, distance) -> float | None:
    """Krippendorff's alpha by direct pair enumeration (no coincidence matrix).

    Observed disagreement averages within-item pairs; expected disagreement
    averages pairs across all pooled values. Returns None when expected
    disagreement is zero (alpha undefined).
    """
    units = [[v for v in row if v is not None] for row in matrix]
    units = [u for u in units if len(u) >= 2]
    n = sum(len(u) for u in units)
    if n == 0:
        return None
    observed = 0.0
    for unit in units:
        within = 0.0
        for i, vi in enumerate(unit):
            for j, vj in enumerate(unit):
                if i != j:
                    within += distance(vi, vj)
        observed += within / (len(unit) - 1)
    observed /= n
    pooled = [v for unit in units for v in unit]
    expected = 0.0
    for i, vi in enumerate(pooled):
        for j, vj in enumerate(pooled):
            if i != j:
                expected += distance(vi, vj)
    expected /= n * (n - 1)
    if expected == 0.0:
        return None
    return 1.0 - observed / expected


def nominal_distance(a, b) -> float:
    return 0.0 if a == b else 1.0


# --- claim oracle ----------------------------------------------------------------

def brute_force_claim_eval(claim, table: DiaryTable):
    """Independent claim evaluator; returns (supported, evidence) or a raised error.

    Windows resolve by explicit date enumeration; aggregates by explicit loops;
    trend by exact rational covariance about the means.
    """
    spec = next((c for c in table.columns if c.name == claim.column), None)
    assert spec is not None, "oracle called with an unknown column"

    if claim.window.kind == "all":
        rows = list(table.rows)
    elif claim.window.kind == "last":
        dates = sorted((r.date for r in table.rows), reverse=True)[:claim.window.days]
        keep = set(dates)
        rows = [r for r in table.rows if r.date in keep]
    else:
        rows = [r for r in table.rows if claim.window.start <= r.date <= claim.window.end]

    evidence = []
    for row in rows:
        value = row.values.get(claim.column)
        if value is not None:
            evidence.append((row.date, value))

    if not evidence:
        return None  # both routes must reject

    values = [v for _, v in evidence]

    if claim.aggregate == "trend":
        if len(values) < 2:
            return None
        first = evidence[0][0]
        xs = [Fraction((d - first).days) for d, _ in evidence]
        ys = [Fraction(v) for v in values]  # scores are ints, hours exact halves
        n = len(xs)
        x_mean = sum(xs) / n
        y_mean = sum(ys) / n
        covariance = sum((x - x_mean) * (y - y_mean) for x, y in zip(xs, ys))
        supported = covariance > 0 if claim.direction == "increasing" else covariance < 0
        return supported, tuple(evidence)

    if claim.aggregate == "mean":
        total = 0.0
        for v in values:
            total = total + v
        result = total / len(values)
    elif claim.aggregate == "min":
        result = values[0]
        for v in values[1:]:
            if v < result:
                result = v
    elif claim.aggregate == "max":
        result = values[0]
        for v in values[1:]:
            if v > result:
                result = v
    elif claim.aggregate == "count_true":
        result = 0
        for v in values:
            if v is True:
                result += 1
    else:
        result = 0
        for v in values:
            if v >= claim.cell_threshold:
                result += 1

    t = claim.threshold
    supported = {
        "<": result < t, "<=": result <= t, "=": result == t,
        ">=": result >= t, ">": result > t,
    }[claim.comparator]
    return supported, tuple(evidence)


def random_claim(rng: random.Random, table: DiaryTable):
    """Random structured claim over the table's own columns (kind-compatible)."""
    from coach.claims import StructuredClaim, Window

    numeric = [c for c in table.columns if c.kind in ("score", "hours")]
    goals = [c for c in table.columns if c.kind == "goal"]
    choices = ["mean", "min", "max", "count_geq", "trend"] if numeric else []
    if goals:
        choices.append("count_true")
    aggregate = rng.choice(choices)
    spec = rng.choice(goals if aggregate == "count_true" else numeric)

    kind = rng.choice(["all", "last", "range"])
    if kind == "all":
        window = Window(kind="all")
    elif kind == "last":
        window = Window(kind="last", days=rng.randint(1, len(table.rows) + 3))
    else:
        lo, hi = sorted(rng.sample(range(len(table.rows)), 2)) if len(table.rows) > 1 else (0, 0)
        window = Window(kind="range", start=table.rows[lo].date, end=table.rows[hi].date)

    if aggregate == "trend":
        return StructuredClaim(aggregate=aggregate, column=spec.name, window=window,
                               direction=rng.choice(["increasing", "decreasing"]))
    comparator = rng.choice(["<", "<=", "=", ">=", ">"])
    if aggregate in ("count_true", "count_geq"):
        threshold = float(rng.randint(0, len(table.rows)))
    elif spec.kind == "score":
        threshold = rng.randint(1, 5) + rng.choice([0.0, 0.5, -0.5])
    else:
        threshold = rng.randint(0, 24) + rng.choice([0.0, 0.5])
    cell_threshold = None
    if aggregate == "count_geq":
        cell_threshold = float(rng.randint(1, 5)) if spec.kind == "score" else rng.randint(0, 24) + 0.5
    return StructuredClaim(aggregate=aggregate, column=spec.name, window=window,
                           comparator=comparator, threshold=float(threshold),
                           cell_threshold=cell_threshold)


# --- retrieval oracle ------------------------------------------------------------

def brute_force_top_k(index, query_values, k: int):
    """Independent full-scan retrieval: own cosine, own sort, own truncation."""
    def cos(a, b):
        dot = 0.0
        na = 0.0
        nb = 0.0
        for x, y in zip(a, b):
            dot += x * y
            na += x * x
            nb += y * y
        return dot / (math.sqrt(na) * math.sqrt(nb))

    scored = []
    for chunk, emb in zip(index.chunks, index.embeddings):
        scored.append((chunk.chunk_id, cos(emb.values, query_values)))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:min(k, len(scored))]
