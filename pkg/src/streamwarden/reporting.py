"""Report rendering: aligned-column text table (per-column best values
marked), JSON, and CSV. Output is deterministic for a given set of reports.

Column order is SG, RH, AC, AUC, Time. Higher is better for SG and AUC,
lower for RH, AC, and Time. Footnotes state the estimator and tie-rule
conventions so a report file is self-describing.
"""

import csv
import io
import json
from pathlib import Path

from streamwarden.errors import ConfigError, DataError
from streamwarden.metrics import MetricReport

REPORT_FORMATS = ("table", "json", "csv")

COLUMNS = ("sg", "rh", "ac", "auc", "mean_step_seconds")
HEADERS = ("SG", "RH", "AC", "AUC", "Time")
HIGHER_IS_BETTER = {"sg": True, "rh": False, "ac": False, "auc": True, "mean_step_seconds": False}

FOOTNOTES = (
    "p(x): empirical uniform distribution over the evaluation traces.",
    "AC may be negative: a monitor with no false alarms earns the ok-reward everywhere.",
    "AUC ties count 0.5; vote ties resolve to unsafe.",
    "Time is mean per-token monitor cost in seconds (judge latency included).",
)


def _fmt(value: float) -> str:
    if value != value:  # NaN
        return "n/a"
    if value != 0.0 and abs(value) < 1e-3:
        return f"{value:.2E}"
    return f"{value:.4f}"


def render_table(reports: list[MetricReport]) -> str:
    best: dict[str, float] = {}
    for col in COLUMNS:
        values = [getattr(r, col) for r in reports if getattr(r, col) == getattr(r, col)]
        if values:
            best[col] = max(values) if HIGHER_IS_BETTER[col] else min(values)
    rows = []
    for r in reports:
        cells = [r.monitor]
        for col in COLUMNS:
            value = getattr(r, col)
            mark = "*" if col in best and value == best[col] and len(reports) > 1 else ""
            cells.append(_fmt(value) + mark)
        cells.extend([str(r.n_traces), str(r.n_unsafe), str(r.n_errored)])
        rows.append(cells)
    header = ["Monitor", *HEADERS, "N", "Unsafe", "Errored"]
    widths = [max(len(header[i]), *(len(row[i]) for row in rows)) for i in range(len(header))]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    lines.append("")
    lines.append("* best value in column (SG/AUC: higher, RH/AC/Time: lower)")
    for note in FOOTNOTES:
        lines.append(f"note: {note}")
    lines.append("")
    lines.append("config echo:")
    echo = {r.monitor: r.config for r in reports}
    lines.append(json.dumps(echo, sort_keys=True, indent=2))
    return "\n".join(lines) + "\n"


def render_json(reports: list[MetricReport]) -> str:
    doc = {
        "format": "streamwarden-report",
        "version": 1,
        "reports": [r.to_json() for r in reports],
        "notes": list(FOOTNOTES),
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def parse_report_json(text: str) -> list[MetricReport]:
    doc = json.loads(text)
    if doc.get("format") != "streamwarden-report":
        raise DataError("not a report document")
    return [MetricReport.from_json(obj) for obj in doc["reports"]]


def render_csv(reports: list[MetricReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["monitor", *HEADERS, "n_traces", "n_unsafe", "n_errored"])
    for r in reports:
        writer.writerow(
            [
                r.monitor,
                *(repr(getattr(r, col)) for col in COLUMNS),
                r.n_traces,
                r.n_unsafe,
                r.n_errored,
            ]
        )
    return buf.getvalue()


def emit_report(reports, format: str = "table", path: str | Path | None = None) -> str:
    """Render reports in the requested format, optionally writing to path."""
    if isinstance(reports, dict):
        reports = list(reports.values())
    reports = list(reports)
    if not reports:
        raise DataError("no reports to emit")
    if format not in REPORT_FORMATS:
        raise ConfigError(f"unknown report format {format!r}; known: {REPORT_FORMATS}")
    text = {"table": render_table, "json": render_json, "csv": render_csv}[format](reports)
    if path is not None:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot write report to {path}: {exc}") from exc
    return text


def render_prefix_table(prefix_reports: dict) -> str:
    lines = []
    for name in prefix_reports:
        report = prefix_reports[name]
        lines.append(f"monitor: {report.monitor}")
        lines.append("fraction  detection_rate  false_alarm_rate  n_unsafe  n_safe")
        for row in report.rows:
            lines.append(
                f"{row.fraction:<8.4g}  {row.detection_rate:<14.4f}  "
                f"{row.false_alarm_rate:<16.4f}  {row.n_unsafe:<8d}  {row.n_safe:<6d}"
            )
        lines.append("")
    return "\n".join(lines)


def render_prefix_json(prefix_reports: dict) -> str:
    doc = {
        "format": "streamwarden-prefix-report",
        "version": 1,
        "reports": [prefix_reports[name].to_json() for name in prefix_reports],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def render_prefix_csv(prefix_reports: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["monitor", "fraction", "detection_rate", "false_alarm_rate", "n_unsafe", "n_safe"])
    for name in prefix_reports:
        for row in prefix_reports[name].rows:
            writer.writerow(
                [name, row.fraction, row.detection_rate, row.false_alarm_rate, row.n_unsafe, row.n_safe]
            )
    return buf.getvalue()


def emit_prefix_report(prefix_reports: dict, format: str = "table", path=None) -> str:
    if format not in REPORT_FORMATS:
        raise ConfigError(f"unknown report format {format!r}; known: {REPORT_FORMATS}")
    render = {
        "table": render_prefix_table,
        "json": render_prefix_json,
        "csv": render_prefix_csv,
    }[format]
    text = render(prefix_reports)
    if path is not None:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot write report to {path}: {exc}") from exc
    return text
