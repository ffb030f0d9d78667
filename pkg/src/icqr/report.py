"""Serialize method reports as text tables, versioned JSON, or long-form CSV."""

from __future__ import annotations

import csv
import io
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .bench import STAT_NAMES, WIDTH_QUANTILE_LEVELS, MethodReport, SummaryStats

SCHEMA_VERSION = 1
FORMATS = ("table", "json", "csv")

_HEADER = ("Method", "min", "max", "mean", "std", "Q1", "median", "Q3", "IQR")


def _table(reports, attr: str, title: str) -> str:
    rows = [[r.method] + [f"{getattr(getattr(r, attr), s):.6f}" for s in STAT_NAMES] for r in reports]
    widths = [max(len(_HEADER[i]), *(len(row[i]) for row in rows)) for i in range(len(_HEADER))]
    line = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))
    body = [title, line(_HEADER), "-" * (sum(widths) + 2 * (len(widths) - 1))]
    body += [line(row) for row in rows]
    return "\n".join(body)


def format_table(reports: list[MethodReport]) -> str:
    parts = [
        _table(reports, "width_stats", "Interval width summary statistics"),
        _table(reports, "coverage_stats", "Coverage summary statistics"),
    ]
    grouped = [r for r in reports if r.group_coverage]
    if grouped:
        keys = list(grouped[0].group_coverage)
        lines = ["Mean coverage by group", "Method  " + "  ".join(f"{k:>8}" for k in keys)]
        for r in grouped:
            lines.append(f"{r.method:<6}  " + "  ".join(f"{r.group_coverage.get(k, float('nan')):8.4f}" for k in keys))
        parts.append("\n".join(lines))
    return "\n\n".join(parts) + "\n"


def to_json_dict(reports: list[MethodReport], config: dict | None = None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config or {},
        "reports": [asdict(r) for r in reports],
    }


def from_json_dict(doc: dict) -> list[MethodReport]:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema_version {doc.get('schema_version')!r}")
    out = []
    for r in doc["reports"]:
        r = dict(r)
        r["width_stats"] = SummaryStats(**r["width_stats"])
        r["coverage_stats"] = SummaryStats(**r["coverage_stats"])
        out.append(MethodReport(**r))
    return out


def format_csv(reports: list[MethodReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "quantity", "statistic", "value"])
    for r in reports:
        for quantity, stats in (("width", r.width_stats), ("coverage", r.coverage_stats)):
            for name in STAT_NAMES:
                w.writerow([r.method, quantity, name, repr(getattr(stats, name))])
    return buf.getvalue()


def format_width_quantiles(reports: list[MethodReport]) -> str:
    """Plot-ready CSV: one row per quantile level, one column per method."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantile", *(r.method for r in reports)])
    for i, level in enumerate(WIDTH_QUANTILE_LEVELS):
        w.writerow([f"{level:.2f}", *(repr(r.width_quantiles[i]) for r in reports)])
    return buf.getvalue()


def render(reports: list[MethodReport], fmt: str, config: dict | None = None) -> str:
    if not reports:
        raise ValueError("no reports to emit")
    if fmt == "table":
        return format_table(reports)
    if fmt == "json":
        return json.dumps(to_json_dict(reports, config), indent=2) + "\n"
    if fmt == "csv":
        return format_csv(reports)
    raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")


def emit_report(reports: list[MethodReport], fmt: str = "table", destination=None, config: dict | None = None) -> None:
    """Write to ``destination`` (a path), or stdout when it is None or '-'."""
    text = render(reports, fmt, config)
    if destination is None or str(destination) == "-":
        sys.stdout.write(text)
    else:
        Path(destination).write_text(text, encoding="utf-8")


def load_json_report(path) -> list[MethodReport]:
    return from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))
