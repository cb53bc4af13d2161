"""Report assembly: per-variable summaries, per-perspective grand averages,
rescaled reliability ratios, agreement statistics, and SVG chart rendering.

Reliability ratios are mapped onto the 1-5 answer axis with r -> 1 + 4r, with
hallucination inverted (lower is better) so all panels share one axis. The
rescaling lives in one operation so it can be swapped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from collections import defaultdict

from .errors import WorkbenchError
from .metrics import (
    PERSPECTIVE_VARIABLES,
    AgreementResult,
    AnnotationRecord,
    MetricsError,
    binary_ratio,
    cohen_kappa,
    krippendorff_alpha,
    likert_summary,
    specific_agreement,
)

RELEVANCE_VARIABLES = ("alignment", "follow_up", "tone", "length")
QUALITY_VARIABLES = ("correctness", "tone", "length")
RELIABILITY_SLOTS = (
    ("faithfulness", None),
    ("completeness", None),
    ("hallucination", "strict"),
    ("hallucination", "lenient"),
)


class ReportError(WorkbenchError):
    """Report cannot be assembled."""


@dataclass(frozen=True)
class QuorumReport:
    relevance: dict
    quality: dict
    reliability: dict
    agreement: tuple
    generated_at: str | None = None
    corpus_version: int | None = None

    def to_dict(self) -> dict:
        return {
            "relevance": self.relevance,
            "quality": self.quality,
            "reliability": self.reliability,
            "agreement": list(self.agreement),
            "generated_at": self.generated_at,
            "corpus_version": self.corpus_version,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QuorumReport":
        return cls(
            relevance=data["relevance"],
            quality=data["quality"],
            reliability=data["reliability"],
            agreement=tuple(data["agreement"]),
            generated_at=data.get("generated_at"),
            corpus_version=data.get("corpus_version"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "QuorumReport":
        return cls.from_dict(json.loads(text))


def rescale_ratio(r: float, invert: bool) -> float:
    """Map a [0,1] ratio onto the 1-5 axis; invert for lower-is-better ratios."""
    if not 0.0 <= r <= 1.0:
        raise ReportError(f"ratio out of [0,1]: {r}")
    adjusted = 1.0 - r if invert else r
    return 1.0 + 4.0 * adjusted


def perspective_summary(values) -> float:
    """Unweighted grand average of one perspective's per-variable values."""
    values = list(values)
    if not values:
        raise ReportError("no variables to average")
    return sum(values) / len(values)


def _summary_dict(summary) -> dict:
    entry = {"variable": summary.variable, "n": summary.n, "mean": summary.mean, "std": summary.std}
    if summary.per_annotator is not None:
        entry["per_annotator"] = [
            {"annotator_id": a.annotator_id, "n": a.n, "mean": a.mean, "std": a.std}
            for a in summary.per_annotator
        ]
    return entry


def _agreement_dict(perspective: str, variable: str, result: AgreementResult) -> dict:
    return {
        "perspective": perspective,
        "variable": variable,
        "statistic": result.statistic,
        "level": result.level,
        "value": result.value,
        "n_items": result.n_items,
        "n_annotators": result.n_annotators,
        "defined": result.defined,
    }


def _likert_panel(records, perspective: str, variables, per_annotator: bool) -> dict:
    entries = []
    means = []
    for variable in variables:
        matching = [r for r in records if r.perspective == perspective and r.variable == variable]
        if not matching:
            entries.append({"variable": variable, "no_data": True})
            continue
        summary = likert_summary(matching, per_annotator=per_annotator)
        entries.append(_summary_dict(summary))
        means.append(summary.mean)
    grand = perspective_summary(means) if means else None
    return {"perspective": perspective, "variables": entries, "grand_average": grand}


def _reliability_values(records, consensus, variable: str, strictness: str | None):
    """Judgment values for one ratio slot: consensus values if merged, else pooled records."""
    merged = consensus.get((variable, strictness))
    if merged:
        return list(merged.values())
    return [
        r.value for r in records
        if r.perspective == "developer" and r.variable == variable
        and (strictness is None or r.strictness == strictness)
    ]


def _reliability_panel(records, consensus, strictness: str) -> dict:
    entries = []
    rescaled_for_grand = []
    for variable, channel in RELIABILITY_SLOTS:
        values = _reliability_values(records, consensus, variable, channel)
        entry: dict = {"variable": variable}
        if channel is not None:
            entry["strictness"] = channel
        if not values:
            entry["no_data"] = True
            entries.append(entry)
            continue
        numerator = sum(values)
        denominator = len(values)
        ratio = numerator / denominator
        rescaled = rescale_ratio(ratio, invert=(variable == "hallucination"))
        entry.update(numerator=numerator, denominator=denominator, ratio=ratio, rescaled=rescaled)
        entries.append(entry)
        if channel is None or channel == strictness:
            rescaled_for_grand.append(rescaled)
    grand = perspective_summary(rescaled_for_grand) if rescaled_for_grand else None
    return {
        "perspective": "developer",
        "strictness_channel": strictness,
        "variables": entries,
        "grand_average": grand,
    }


def _likert_matrix(records):
    """items x annotators matrix (None for missing) from one variable's records."""
    annotators = sorted({r.annotator_id for r in records})
    by_item: dict[str, dict[str, int]] = defaultdict(dict)
    for r in records:
        by_item[r.item_id][r.annotator_id] = r.value  # duplicate submissions: last wins
    return [[by_item[item].get(a) for a in annotators] for item in sorted(by_item)], annotators


def _agreement_entries(records, strictness: str) -> list[dict]:
    entries: list[dict] = []

    for perspective in ("user", "expert"):
        for variable in PERSPECTIVE_VARIABLES[perspective]:
            matching = [r for r in records if r.perspective == perspective and r.variable == variable]
            matrix, annotators = _likert_matrix(matching) if matching else ([], [])
            if len(annotators) < 2:
                continue
            try:
                result = krippendorff_alpha(matrix, level="ordinal")
            except MetricsError:
                continue
            entries.append(_agreement_dict(perspective, variable, result))

    dev = [r for r in records if r.perspective == "developer"
           and (r.variable != "hallucination" or r.strictness == strictness)]
    annotators = sorted({r.annotator_id for r in dev})

    for variable in PERSPECTIVE_VARIABLES["developer"]:
        matching = [r for r in dev if r.variable == variable]
        matrix, var_annotators = _likert_matrix(matching) if matching else ([], [])
        if len(var_annotators) < 2:
            continue
        try:
            result = krippendorff_alpha(matrix, level="nominal")
        except MetricsError:
            continue
        entries.append(_agreement_dict("developer", variable, result))

    if len(annotators) == 2:
        first, second = annotators
        by_key: dict[tuple, dict[str, int]] = defaultdict(dict)
        for r in dev:
            by_key[(r.item_id, r.variable)][r.annotator_id] = r.value
        pooled = sorted(k for k, v in by_key.items() if first in v and second in v)
        if pooled:
            a = [by_key[k][first] for k in pooled]
            b = [by_key[k][second] for k in pooled]
            entries.append(_agreement_dict("developer", "all", cohen_kappa(a, b)))
        for variable in PERSPECTIVE_VARIABLES["developer"]:
            keys = [k for k in pooled if k[1] == variable]
            if not keys:
                continue
            a = [by_key[k][first] for k in keys]
            b = [by_key[k][second] for k in keys]
            ppa, npa = specific_agreement(a, b)
            entries.append(_agreement_dict("developer", variable, ppa))
            entries.append(_agreement_dict("developer", variable, npa))

    return entries


def build_report(records, consensus=None, strictness: str = "strict",
                 corpus_version: int | None = None) -> QuorumReport:
    """Assemble the four-panel report from annotation records (+ optional consensus)."""
    if strictness not in ("strict", "lenient"):
        raise ReportError(f"strictness must be strict or lenient, got {strictness!r}")
    records = list(records)
    consensus = dict(consensus or {})
    if not records and not consensus:
        raise ReportError("no annotation data")
    timestamps = [r.timestamp for r in records if r.timestamp]
    return QuorumReport(
        relevance=_likert_panel(records, "user", RELEVANCE_VARIABLES, per_annotator=False),
        quality=_likert_panel(records, "expert", QUALITY_VARIABLES, per_annotator=True),
        reliability=_reliability_panel(records, consensus, strictness),
        agreement=tuple(_agreement_entries(records, strictness)),
        generated_at=max(timestamps) if timestamps else None,
        corpus_version=corpus_version,
    )


def empty_report(strictness: str = "strict", corpus_version: int | None = None) -> QuorumReport:
    """All-panels-"no data" report for an empty annotation store."""
    def no_data(perspective, variables):
        return {
            "perspective": perspective,
            "variables": [{"variable": v, "no_data": True} for v in variables],
            "grand_average": None,
        }

    reliability = no_data("developer", [])
    reliability["strictness_channel"] = strictness
    reliability["variables"] = [
        {"variable": v, "no_data": True} if c is None
        else {"variable": v, "strictness": c, "no_data": True}
        for v, c in RELIABILITY_SLOTS
    ]
    return QuorumReport(
        relevance=no_data("user", RELEVANCE_VARIABLES),
        quality=no_data("expert", QUALITY_VARIABLES),
        reliability=reliability,
        agreement=(),
        generated_at=None,
        corpus_version=corpus_version,
    )


def report_or_empty(records, consensus=None, strictness: str = "strict",
                    corpus_version: int | None = None) -> QuorumReport:
    try:
        return build_report(records, consensus=consensus, strictness=strictness,
                            corpus_version=corpus_version)
    except ReportError:
        return empty_report(strictness=strictness, corpus_version=corpus_version)


def metric_summaries(records, consensus=None, strictness: str = "strict") -> dict:
    """Flat metric computations (for `coach eval`): Likert summaries, ratios, agreement."""
    records = list(records)
    consensus = dict(consensus or {})
    likert = []
    for perspective, variables in (("user", RELEVANCE_VARIABLES), ("expert", QUALITY_VARIABLES)):
        for variable in variables:
            matching = [r for r in records if r.perspective == perspective and r.variable == variable]
            if not matching:
                continue
            entry = _summary_dict(likert_summary(matching, per_annotator=True))
            entry["perspective"] = perspective
            likert.append(entry)
    ratios = []
    for variable, channel in RELIABILITY_SLOTS:
        values = _reliability_values(records, consensus, variable, channel)
        if not values:
            continue
        entry = {"variable": variable, "numerator": sum(values), "denominator": len(values),
                 "ratio": sum(values) / len(values)}
        if channel is not None:
            entry["strictness"] = channel
        ratios.append(entry)
    return {"likert": likert, "ratios": ratios,
            "agreement": _agreement_entries(records, strictness)}


# --- chart rendering ---------------------------------------------------------

_PANEL_W, _PANEL_H = 370.0, 260.0
_MARGIN = 20.0
_AXIS_LEFT, _AXIS_TOP, _AXIS_BOTTOM = 46.0, 44.0, 36.0


def _panel_bars(report: QuorumReport) -> list[tuple[str, list[tuple[str, float | None]]]]:
    averages = [
        ("relevance", report.relevance.get("grand_average")),
        ("quality", report.quality.get("grand_average")),
        ("reliability", report.reliability.get("grand_average")),
    ]

    def likert_bars(panel):
        return [
            (e["variable"], None if e.get("no_data") else e["mean"])
            for e in panel["variables"]
        ]

    reliability_bars = []
    for e in report.reliability["variables"]:
        label = e["variable"]
        if e.get("strictness"):
            label = f"{label} ({e['strictness']})"
        reliability_bars.append((label, None if e.get("no_data") else e["rescaled"]))

    return [
        ("Averages", averages),
        ("Relevance", likert_bars(report.relevance)),
        ("Quality", likert_bars(report.quality)),
        ("Reliability", reliability_bars),
    ]


def _render_panel(out: list[str], x0: float, y0: float, title: str, bars) -> None:
    out.append(f'<rect x="{x0:.1f}" y="{y0:.1f}" width="{_PANEL_W:.1f}" height="{_PANEL_H:.1f}" '
               'fill="white" stroke="#444444" stroke-width="1"/>')
    out.append(f'<text x="{x0 + _PANEL_W / 2:.1f}" y="{y0 + 24:.1f}" text-anchor="middle" '
               f'font-size="16" font-weight="bold">{title}</text>')
    plot_x = x0 + _AXIS_LEFT
    plot_top = y0 + _AXIS_TOP
    plot_bottom = y0 + _PANEL_H - _AXIS_BOTTOM
    plot_h = plot_bottom - plot_top
    plot_w = _PANEL_W - _AXIS_LEFT - 16.0

    for tick in range(1, 6):
        ty = plot_bottom - (tick - 1) / 4.0 * plot_h
        out.append(f'<line x1="{plot_x:.1f}" y1="{ty:.1f}" x2="{plot_x + plot_w:.1f}" y2="{ty:.1f}" '
                   'stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{plot_x - 8:.1f}" y="{ty + 4:.1f}" text-anchor="end" font-size="11">{tick}</text>')

    values = [v for _, v in bars if v is not None]
    if not values:
        out.append(f'<text x="{x0 + _PANEL_W / 2:.1f}" y="{(plot_top + plot_bottom) / 2:.1f}" '
                   'text-anchor="middle" font-size="14" fill="#888888">no data</text>')
        return

    slot = plot_w / len(bars)
    bar_w = slot * 0.6
    for i, (label, value) in enumerate(bars):
        cx = plot_x + slot * (i + 0.5)
        if value is None:
            out.append(f'<text x="{cx:.1f}" y="{(plot_top + plot_bottom) / 2:.1f}" text-anchor="middle" '
                       'font-size="10" fill="#888888">no data</text>')
        else:
            h = (value - 1.0) / 4.0 * plot_h
            out.append(f'<rect x="{cx - bar_w / 2:.1f}" y="{plot_bottom - h:.1f}" width="{bar_w:.1f}" '
                       f'height="{h:.1f}" fill="#4a7ebb"/>')
            out.append(f'<text x="{cx:.1f}" y="{plot_bottom - h - 5:.1f}" text-anchor="middle" '
                       f'font-size="11">{value:.2f}</text>')
        out.append(f'<text x="{cx:.1f}" y="{plot_bottom + 14:.1f}" text-anchor="middle" '
                   f'font-size="10">{label}</text>')


def render_charts(report: QuorumReport) -> str:
    """Deterministic standalone SVG with one grouped-bar panel per report section."""
    width = 2 * _PANEL_W + 3 * _MARGIN
    height = 2 * _PANEL_H + 3 * _MARGIN
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}" font-family="sans-serif">',
        f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="#fafafa"/>',
    ]
    panels = _panel_bars(report)
    for i, (title, bars) in enumerate(panels):
        x0 = _MARGIN + (i % 2) * (_PANEL_W + _MARGIN)
        y0 = _MARGIN + (i // 2) * (_PANEL_H + _MARGIN)
        _render_panel(out, x0, y0, title, bars)
    out.append("</svg>")
    return "\n".join(out) + "\n"
