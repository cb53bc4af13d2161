"""Evaluation statistics: Likert summaries, binary ratios, chance-corrected
agreement (Krippendorff's alpha, Cohen's kappa), specific agreement, and
consensus merging.

Conventions:
- Standard deviation is the population form (divide by n).
- Likert agreement uses the ordinal alpha metric; binary judgments use nominal.
- For the hallucination variable, value 1 records "not traceable to the
  retrieved chunks", so binary_ratio is uniformly positives/total and directly
  yields the hallucination rate.
- Statistics that are mathematically undefined are returned flagged, never
  silently reported as 0.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

from .errors import WorkbenchError

PERSPECTIVES = ("user", "expert", "developer")
LIKERT_VARIABLES = ("alignment", "follow_up", "tone", "length", "correctness")
BINARY_VARIABLES = ("faithfulness", "completeness", "hallucination")
PERSPECTIVE_VARIABLES = {
    "user": ("alignment", "follow_up", "tone", "length"),
    "expert": ("correctness", "tone", "length"),
    "developer": ("faithfulness", "completeness", "hallucination"),
}
STRICTNESS_CHANNELS = ("strict", "lenient")


class MetricsError(WorkbenchError):
    """Invalid annotation data or statistic misuse."""


@dataclass(frozen=True)
class AnnotationRecord:
    annotator_id: str
    perspective: str
    item_id: str
    variable: str
    value: int
    remark: str | None = None
    strictness: str | None = None  # hallucination only
    timestamp: str | None = None

    def __post_init__(self):
        if self.perspective not in PERSPECTIVES:
            raise MetricsError(f"unknown perspective {self.perspective!r}")
        if self.variable not in PERSPECTIVE_VARIABLES[self.perspective]:
            raise MetricsError(
                f"variable {self.variable!r} is not a {self.perspective} variable")
        if isinstance(self.value, bool) or not isinstance(self.value, int):
            raise MetricsError(f"value must be an integer, got {self.value!r}")
        if self.variable in LIKERT_VARIABLES:
            if not 1 <= self.value <= 5:
                raise MetricsError(f"{self.variable} takes a 1-5 Likert value, got {self.value}")
        else:
            if self.value not in (0, 1):
                raise MetricsError(f"{self.variable} takes a binary 0/1 value, got {self.value}")
        if self.variable == "hallucination":
            if self.strictness is None:
                object.__setattr__(self, "strictness", "strict")
            elif self.strictness not in STRICTNESS_CHANNELS:
                raise MetricsError(f"strictness must be strict or lenient, got {self.strictness!r}")
        elif self.strictness is not None:
            raise MetricsError(f"strictness only applies to hallucination, not {self.variable!r}")


@dataclass(frozen=True)
class AnnotatorSummary:
    annotator_id: str
    n: int
    mean: float
    std: float


@dataclass(frozen=True)
class MetricSummary:
    variable: str
    n: int
    mean: float
    std: float
    per_annotator: tuple[AnnotatorSummary, ...] | None = None


@dataclass(frozen=True)
class RatioMetric:
    variable: str
    numerator: int
    denominator: int
    ratio: float


@dataclass(frozen=True)
class AgreementResult:
    statistic: str  # alpha | kappa | ppa | npa
    value: float | None
    level: str  # nominal | ordinal
    n_items: int
    n_annotators: int
    defined: bool = True


def _mean_std(values) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / n)
    return mean, std


def _single_variable(records) -> str:
    variables = {r.variable for r in records}
    if len(variables) != 1:
        raise MetricsError(f"records mix variables: {', '.join(sorted(variables))}")
    return variables.pop()


def likert_summary(records, per_annotator: bool = False) -> MetricSummary:
    """Mean and population standard deviation of one Likert variable's records."""
    records = list(records)
    if not records:
        raise MetricsError("no records to summarize")
    variable = _single_variable(records)
    if variable not in LIKERT_VARIABLES:
        raise MetricsError(f"{variable!r} is not a Likert variable")
    mean, std = _mean_std([r.value for r in records])
    breakdown = None
    if per_annotator:
        grouped = defaultdict(list)
        for r in records:
            grouped[r.annotator_id].append(r.value)
        breakdown = tuple(
            AnnotatorSummary(annotator_id=a, n=len(vs), mean=_mean_std(vs)[0], std=_mean_std(vs)[1])
            for a, vs in sorted(grouped.items())
        )
    return MetricSummary(variable=variable, n=len(records), mean=mean, std=std,
                         per_annotator=breakdown)


def binary_ratio(records) -> RatioMetric:
    """Positives over total for one binary variable (one strictness channel at a time)."""
    records = list(records)
    if not records:
        raise MetricsError("no records to summarize")
    variable = _single_variable(records)
    if variable not in BINARY_VARIABLES:
        raise MetricsError(f"{variable!r} is not a binary variable")
    if variable == "hallucination" and len({r.strictness for r in records}) > 1:
        raise MetricsError("hallucination records mix strict and lenient channels")
    numerator = sum(r.value for r in records)
    denominator = len(records)
    return RatioMetric(variable=variable, numerator=numerator, denominator=denominator,
                       ratio=numerator / denominator)


def cohen_kappa(a, b) -> AgreementResult:
    """Chance-corrected agreement between two annotators paired by item.

    kappa = (p_o - p_e) / (1 - p_e) with p_e from the product of the annotators'
    marginal label distributions. When p_e = 1 (both annotators constant and
    equal) the statistic is undefined and flagged as such.
    """
    a, b = list(a), list(b)
    if len(a) != len(b):
        raise MetricsError(f"label sequences differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise MetricsError("no paired labels")
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    categories = set(a) | set(b)
    p_e = sum((a.count(c) / n) * (b.count(c) / n) for c in categories)
    if p_e == 1.0:
        return AgreementResult(statistic="kappa", value=None, level="nominal",
                               n_items=n, n_annotators=2, defined=False)
    kappa = (p_o - p_e) / (1.0 - p_e)
    return AgreementResult(statistic="kappa", value=kappa, level="nominal",
                           n_items=n, n_annotators=2)


def _ordinal_delta_sq(values, margins) -> dict[tuple, float]:
    """Krippendorff's ordinal squared distance from coincidence-matrix margins."""
    deltas = {}
    for i, c in enumerate(values):
        for k in values[i + 1:]:
            between = sum(margins[g] for g in values if c <= g <= k)
            d = between - (margins[c] + margins[k]) / 2.0
            deltas[(c, k)] = d * d
    return deltas


def krippendorff_alpha(matrix, level: str = "nominal") -> AgreementResult:
    """Agreement for any number of annotators with missing cells allowed.

    matrix: rows are items, columns are annotators, None marks a missing cell.
    Items rated by fewer than two annotators contribute nothing. Uses the
    coincidence-matrix formulation:

        alpha = 1 - (n - 1) * sum_{c<k} o_ck * d2(c,k) / sum_{c<k} n_c * n_k * d2(c,k)
    """
    if level not in ("nominal", "ordinal"):
        raise MetricsError(f"level must be nominal or ordinal, got {level!r}")
    n_annotators = max((len(row) for row in matrix), default=0)
    units = [[v for v in row if v is not None] for row in matrix]
    units = [u for u in units if len(u) >= 2]
    if not units:
        raise MetricsError("no pairable values (every item needs >= 2 annotators)")

    coincidence = defaultdict(float)
    for unit in units:
        m = len(unit)
        for i, vi in enumerate(unit):
            for j, vj in enumerate(unit):
                if i != j:
                    coincidence[(vi, vj)] += 1.0 / (m - 1)
    margins = defaultdict(float)
    for (c, _k), weight in coincidence.items():
        margins[c] += weight
    n = sum(margins.values())
    values = sorted(margins)

    if level == "ordinal":
        delta_sq = _ordinal_delta_sq(values, margins)
    else:
        delta_sq = {(c, k): 1.0 for i, c in enumerate(values) for k in values[i + 1:]}

    numerator = sum(coincidence.get((c, k), 0.0) * d2 for (c, k), d2 in delta_sq.items())
    denominator = sum(margins[c] * margins[k] * d2 for (c, k), d2 in delta_sq.items())
    if denominator == 0.0:
        return AgreementResult(statistic="alpha", value=None, level=level,
                               n_items=len(units), n_annotators=n_annotators, defined=False)
    alpha = 1.0 - (n - 1.0) * numerator / denominator
    return AgreementResult(statistic="alpha", value=alpha, level=level,
                           n_items=len(units), n_annotators=n_annotators)


def specific_agreement(a, b) -> tuple[AgreementResult, AgreementResult]:
    """Positive and negative specific agreement for two annotators' binary labels.

    PPA = 2*a_pp / (2*a_pp + a_pn + a_np); NPA mirrors it on the negative class.
    A side with a zero denominator is flagged undefined rather than reported 0.
    """
    a, b = list(a), list(b)
    if len(a) != len(b):
        raise MetricsError(f"label sequences differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise MetricsError("no paired labels")
    for v in (*a, *b):
        if v not in (0, 1):
            raise MetricsError(f"specific agreement needs binary 0/1 labels, got {v!r}")
    n = len(a)
    a_pp = sum(1 for x, y in zip(a, b) if x == 1 and y == 1)
    a_pn = sum(1 for x, y in zip(a, b) if x == 1 and y == 0)
    a_np = sum(1 for x, y in zip(a, b) if x == 0 and y == 1)
    a_nn = n - a_pp - a_pn - a_np

    def side(statistic: str, agree2: int) -> AgreementResult:
        denominator = agree2 + a_pn + a_np
        if denominator == 0:
            return AgreementResult(statistic=statistic, value=None, level="nominal",
                                   n_items=n, n_annotators=2, defined=False)
        return AgreementResult(statistic=statistic, value=agree2 / denominator, level="nominal",
                               n_items=n, n_annotators=2)

    return side("ppa", 2 * a_pp), side("npa", 2 * a_nn)


def consensus_merge(a, b, resolutions) -> dict:
    """Merge two judgment sets over the same items; disagreements need a resolution.

    Rejects resolutions for items the annotators already agree on, to catch
    annotation drift.
    """
    a, b, resolutions = dict(a), dict(b), dict(resolutions)
    if set(a) != set(b):
        only_a = sorted(set(a) - set(b))
        only_b = sorted(set(b) - set(a))
        raise MetricsError(f"judgment sets cover different items (only first: {only_a}, only second: {only_b})")
    disagreements = {item for item in a if a[item] != b[item]}
    unresolved = sorted(disagreements - set(resolutions))
    if unresolved:
        raise MetricsError(f"unresolved disagreements on items: {', '.join(unresolved)}")
    extraneous = sorted(set(resolutions) - disagreements)
    if extraneous:
        raise MetricsError(f"resolutions given for non-disagreeing items: {', '.join(extraneous)}")
    return {item: (resolutions[item] if item in disagreements else a[item]) for item in a}
