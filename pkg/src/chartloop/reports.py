"""Governance reports rendered once, served everywhere.

Each report is a plain payload dict plus a renderer to text, CSV, or JSON.
The CLI prints exactly what the API returns for the same format, byte for
byte, because both call ``render`` on the same payload.
"""

from __future__ import annotations

import csv
import io
import json
from typing import Optional, Sequence

from chartloop.errors import SchemaViolation
from chartloop.gateway.records import CallRecord
from chartloop.ledger import (
    FeedbackEntry,
    ProvenanceJudgment,
    provenance_matrix,
    temporal_composition,
    theme_distribution,
)
from chartloop.telemetry import (
    CostLine,
    cost_report,
    failure_summary,
    grouped_failure_summary,
    latency_summary,
    usd_display,
)

FORMATS = ("text", "json", "csv")

_THEME_LABELS = {
    "command_generation_failure": "Command Generation Failures",
    "speaker_misattribution": "Speaker Misattribution",
    "granularity_mismatch": "Documentation Granularity Mismatch",
    "workflow_session_control": "Workflow & Session Control",
    "system_strength": "System Strengths (Positive)",
}


def costs_payload(lines: Sequence[CostLine], versions: Optional[int] = None) -> dict:
    summary = cost_report(lines, versions=versions)
    return {"report": "costs", **summary.as_dict()}


def latency_payload(records: Sequence[CallRecord], group_by: str = "stage") -> dict:
    rows = latency_summary(records, group_by=group_by)
    return {"report": "latency", "group_by": group_by, "rows": [r.as_dict() for r in rows]}


def failures_payload(records: Sequence[CallRecord], group_by: str = "vendor") -> dict:
    overall = failure_summary(records)
    groups = grouped_failure_summary(records, group_by=group_by)
    return {
        "report": "failures",
        "group_by": group_by,
        "overall": overall.as_dict(),
        "groups": {name: s.as_dict() for name, s in groups.items()},
    }


def themes_payload(entries: Sequence[FeedbackEntry]) -> dict:
    rows = theme_distribution(entries)
    return {
        "report": "themes",
        "n": len(entries),
        "rows": [
            {
                "theme": row.theme.value,
                "label": _THEME_LABELS[row.theme.value],
                "count": row.count,
                "pct_of_entries": row.pct_of_entries,
            }
            for row in rows
        ],
    }


def temporal_payload(entries: Sequence[FeedbackEntry]) -> dict:
    rows = temporal_composition(entries)
    return {
        "report": "temporal",
        "rows": [
            {
                "bucket": row.bucket,
                "n": row.n,
                "error_pct": row.error_pct,
                "positive_pct": row.positive_pct,
                "other_pct": row.other_pct,
            }
            for row in rows
        ],
    }


def provenance_payload(judgments: Sequence[ProvenanceJudgment]) -> dict:
    matrix = provenance_matrix(judgments)
    return {"report": "provenance", **matrix.as_dict()}


# ---------------------------------------------------------------------------
# rendering


def render(payload: dict, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if fmt == "csv":
        return _render_csv(payload)
    if fmt == "text":
        return _render_text(payload)
    raise SchemaViolation(f"unknown format {fmt!r} (expected one of {FORMATS})")


def _csv_string(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def _render_csv(payload: dict) -> str:
    kind = payload["report"]
    if kind == "costs":
        rows = [("category", "kind", "usd", "hours")]
        for category, cell in payload["by_category"].items():
            rows.append((category, cell["kind"], f"{cell['usd']:.2f}", cell["hours"]))
        rows.append(("static_total", "static", f"{payload['static_usd']:.2f}", ""))
        rows.append(("growing_total", "growing", f"{payload['growing_usd']:.2f}", ""))
        rows.append(("total", "", f"{payload['total_usd']:.2f}", payload["hours"]))
        return _csv_string(rows)
    if kind == "latency":
        rows = [("group", "median_ms", "p95_ms", "n")]
        for row in payload["rows"]:
            rows.append((row["group"], f"{row['median_ms']:.1f}", f"{row['p95_ms']:.1f}", row["n"]))
        return _csv_string(rows)
    if kind == "failures":
        rows = [("group", "attempts", "attempt_error_rate", "recovery_rate", "effective_completion_rate")]
        overall = payload["overall"]
        rows.append(
            (
                "overall",
                overall["attempts"],
                f"{overall['attempt_error_rate']:.4f}",
                f"{overall['recovery_rate']:.4f}",
                f"{overall['effective_completion_rate']:.4f}",
            )
        )
        for name, cell in payload["groups"].items():
            rows.append(
                (
                    name,
                    cell["attempts"],
                    f"{cell['attempt_error_rate']:.4f}",
                    f"{cell['recovery_rate']:.4f}",
                    f"{cell['effective_completion_rate']:.4f}",
                )
            )
        return _csv_string(rows)
    if kind == "themes":
        rows = [("theme", "count", "pct_of_entries")]
        for row in payload["rows"]:
            rows.append((row["theme"], row["count"], f"{row['pct_of_entries']:.1f}"))
        return _csv_string(rows)
    if kind == "temporal":
        rows = [("bucket", "n", "error_pct", "positive_pct", "other_pct")]
        for row in payload["rows"]:
            rows.append(
                (
                    row["bucket"],
                    row["n"],
                    f"{row['error_pct']:.1f}",
                    f"{row['positive_pct']:.1f}",
                    f"{row['other_pct']:.1f}",
                )
            )
        return _csv_string(rows)
    if kind == "provenance":
        rows = [("metric", "value")]
        for key in ("tp", "fn", "fp", "tn", "n"):
            rows.append((key, payload[key]))
        for key in ("accuracy", "balanced_accuracy", "sensitivity_real", "sensitivity_synthetic"):
            rows.append((key, f"{payload[key]:.1f}"))
        return _csv_string(rows)
    if kind == "comparison":
        gate = payload["gate"]
        rows = [("field", "value")]
        rows.append(("candidate", gate["candidate"]))
        rows.append(("baseline", gate["baseline"]))
        rows.append(("median_delta", f"{gate['median_delta']:.1f}"))
        rows.append(("decision", gate["decision"]))
        return _csv_string(rows)
    raise SchemaViolation(f"no csv renderer for report {kind!r}")


def _table(header: Sequence[str], body: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in header]
    for row in body:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(str(cell)))
    lines = [
        "  ".join(str(h).ljust(widths[i]) for i, h in enumerate(header)).rstrip(),
        "  ".join("-" * widths[i] for i in range(len(header))).rstrip(),
    ]
    for row in body:
        lines.append("  ".join(str(c).ljust(widths[i]) for i, c in enumerate(row)).rstrip())
    return "\n".join(lines)


def _render_text(payload: dict) -> str:
    kind = payload["report"]
    if kind == "costs":
        body = []
        for category, cell in payload["by_category"].items():
            hours = f"{cell['hours']:g} h" if cell["hours"] else "-"
            body.append((category, cell["kind"], f"${cell['usd']:,.2f}", hours))
        table = _table(("category", "kind", "compute", "clinician"), body)
        footer = (
            f"static ${payload['static_usd']:,.2f} | growing ${payload['growing_usd']:,.2f}"
            f" | total ${payload['total_usd']:,.2f} | clinician hours {payload['hours']:g}"
        )
        if payload.get("growing_per_version_usd") is not None:
            footer += (
                f"\ngrowing per version (x{payload['versions']}):"
                f" ${payload['growing_per_version_usd']:,.2f}"
            )
        return f"Cost summary\n{table}\n{footer}\n"
    if kind == "latency":
        body = [
            (row["group"], f"{row['median_ms']:.1f}", f"{row['p95_ms']:.1f}", row["n"])
            for row in payload["rows"]
        ]
        return (
            f"Latency by {payload['group_by']} (ms)\n"
            + _table(("group", "median", "p95", "n"), body)
            + "\n"
        )
    if kind == "failures":
        overall = payload["overall"]
        body = [
            (
                name,
                cell["attempts"],
                f"{100 * cell['attempt_error_rate']:.1f}%",
                f"{100 * cell['recovery_rate']:.1f}%",
                f"{100 * cell['effective_completion_rate']:.2f}%",
            )
            for name, cell in payload["groups"].items()
        ]
        table = _table(("group", "attempts", "error rate", "recovery", "effective"), body)
        return (
            "Failure summary\n"
            + table
            + "\n"
            + (
                f"overall: {overall['attempts']} attempts, "
                f"{100 * overall['attempt_error_rate']:.1f}% errored, "
                f"{100 * overall['recovery_rate']:.1f}% recovered, "
                f"{100 * overall['effective_completion_rate']:.2f}% effective completion\n"
            )
        )
    if kind == "themes":
        body = [
            (row["label"], row["count"], f"{row['pct_of_entries']:.1f}%")
            for row in payload["rows"]
        ]
        note = "Entries may carry several themes; percentages can sum past 100%."
        return (
            f"Feedback theme analysis (n = {payload['n']})\n"
            + _table(("theme", "count", "% of total"), body)
            + f"\n{note}\n"
        )
    if kind == "temporal":
        body = [
            (
                row["bucket"],
                row["n"],
                f"{row['error_pct']:.1f}%",
                f"{row['positive_pct']:.1f}%",
                f"{row['other_pct']:.1f}%",
            )
            for row in payload["rows"]
        ]
        return (
            "Feedback composition by month\n"
            + _table(("month", "n", "errors", "positive", "other"), body)
            + "\n"
        )
    if kind == "provenance":
        body = [
            ("actual real", payload["tp"], payload["fn"]),
            ("actual synthetic", payload["fp"], payload["tn"]),
        ]
        table = _table(("", "predicted real", "predicted synthetic"), body)
        return (
            "Case provenance confusion matrix\n"
            + table
            + "\n"
            + (
                f"n = {payload['n']}; accuracy {payload['accuracy']:.1f}%; "
                f"balanced accuracy {payload['balanced_accuracy']:.1f}%; "
                f"sensitivity real {payload['sensitivity_real']:.1f}%, "
                f"synthetic {payload['sensitivity_synthetic']:.1f}%\n"
            )
        )
    if kind == "comparison":
        gate = payload["gate"]
        lines = [
            f"candidate {gate['candidate']} vs baseline {gate['baseline']}",
            (
                f"median delta {gate['median_delta']:+.1f}"
                f" (tolerance {gate['tolerance']:g})"
            ),
            f"decision: {gate['decision'].upper()}",
        ]
        if payload.get("per_vendor_delta"):
            for vendor, delta in sorted(payload["per_vendor_delta"].items()):
                lines.append(f"  {vendor}: {delta:+.1f}")
        shifts = payload.get("quartile_shift", {})
        if shifts:
            lines.append(f"quartile shift: q1 {shifts['q1']:+.1f}, q3 {shifts['q3']:+.1f}")
        worst = payload.get("case_deltas", [])[:5]
        if worst:
            lines.append("largest case deltas:")
            for cid, delta in worst:
                lines.append(f"  {cid}: {delta:+.1f}")
        return "\n".join(lines) + "\n"
    raise SchemaViolation(f"no text renderer for report {kind!r}")


def comparison_payload(report_dict: dict) -> dict:
    return {"report": "comparison", **report_dict}
