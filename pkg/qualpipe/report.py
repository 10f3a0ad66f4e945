"""Self-contained HTML dashboard with inline SVG bar charts."""

import json
import logging
from collections.abc import Sequence
from html import escape
from pathlib import Path

from qualpipe.artifacts import write_atomic
from qualpipe.errors import LengthMismatchError
from qualpipe.model import EvalReport, Kind

logger = logging.getLogger(__package__)

DASHBOARD_FILE = "dashboard.html"
REPORT_FILE = "report.json"
INSIGHTS_FILE = "insights.txt"

CHART_WIDTH = 640
LABEL_WIDTH = 240
VALUE_WIDTH = 64
BAR_HEIGHT = 16
ROW_HEIGHT = 22
TITLE_HEIGHT = 28
BAR_COLOR = "#4C78A8"

_STYLE = """
body { font-family: sans-serif; margin: 2em auto; max-width: 60em; color: #222; }
h1 { font-size: 1.6em; }
h2 { font-size: 1.2em; margin-top: 2em; }
table { border-collapse: collapse; }
th, td { border: 1px solid #ccc; padding: 0.3em 0.6em; text-align: left; }
pre { background: #f5f5f5; padding: 1em; overflow-x: auto; }
.headline { font-size: 1.3em; }
"""


def _percent(value: float) -> str:
    return f"{value * 100:.1f}%"


def render_bar_chart(
    labels: Sequence[str],
    values: Sequence[float],
    title: str,
    value_range: None | tuple[float, float] = (0.0, 1.0),
) -> str:
    """Horizontal bar chart, largest value on top.

    With `value_range=None` the axis runs from 0 to the largest value. Values
    are printed as percentages with one decimal.
    """
    if len(labels) != len(values):
        msg = f"{len(labels)} labels for {len(values)} values"
        raise LengthMismatchError(msg)
    if not labels:
        msg = f"chart '{title}' has no bars"
        raise ValueError(msg)
    lo, hi = value_range or (0.0, max(max(values), 0.0) or 1.0)
    span = hi - lo if hi > lo else 1.0
    area = CHART_WIDTH - LABEL_WIDTH - VALUE_WIDTH
    bars = sorted(zip(labels, values, strict=True), key=lambda b: -b[1])
    height = TITLE_HEIGHT + ROW_HEIGHT * len(bars) + 8

    parts = [
        f'<svg viewBox="0 0 {CHART_WIDTH} {height}" width="{CHART_WIDTH}" '
        f'height="{height}" role="img">',
        f'<text x="0" y="18" font-size="14" font-weight="bold">{escape(title)}</text>',
    ]
    for n, (label, value) in enumerate(bars):
        y = TITLE_HEIGHT + n * ROW_HEIGHT
        width = area * min(1.0, max(0.0, (value - lo) / span))
        text_y = y + BAR_HEIGHT - 4
        parts += [
            f'<text x="{LABEL_WIDTH - 6}" y="{text_y}" font-size="12" '
            f'text-anchor="end">{escape(label)}</text>',
            f'<rect x="{LABEL_WIDTH}" y="{y}" width="{width:.2f}" '
            f'height="{BAR_HEIGHT}" fill="{BAR_COLOR}">'
            f"<title>{escape(label)}: {_percent(value)}</title></rect>",
            f'<text x="{LABEL_WIDTH + width + 4:.2f}" y="{text_y}" '
            f'font-size="12">{_percent(value)}</text>',
        ]
    parts.append("</svg>")
    return "\n".join(parts)


def _section(title: str, body: str) -> str:
    return f"<section>\n<h2>{escape(title)}</h2>\n{body}\n</section>"


def _chart_or_note(
    labels: Sequence[str], values: Sequence[float], title: str, note: str
) -> str:
    if not labels:
        return f"<p>{escape(note)}</p>"
    return render_bar_chart(labels, values, title)


def _prior_section(report: EvalReport, kind: Kind) -> str:
    title = f"{kind.label} priors"
    attrs = report.attribute_sets.get(kind)
    if attrs is None or not attrs.has_priors:
        return _section(title, f"<p>No {kind.plural} were discovered.</p>")
    priors = attrs.prior_map()
    chart = render_bar_chart(list(priors), list(priors.values()), title)
    return _section(title, chart)


def _proficiency_section(report: EvalReport, kind: Kind) -> str:
    title = f"{kind.label} proficiency ({report.metric_name})"
    attrs = report.attribute_sets.get(kind)
    values = report.proficiency.get(kind, {})
    labels = [n for n in (attrs.names if attrs else ()) if n in values]
    note = f"No {kind.plural} were assigned any instance."
    chart = _chart_or_note(labels, [values[n] for n in labels], title, note)
    return _section(title, chart)


def _calibration_section(report: EvalReport) -> str:
    title = "Sub-task usage distance (lower is better)"
    if not report.calibration:
        note = (
            "No calibration is available: predictions were not scored against "
            "the sub-tasks."
        )
        return _section(title, f"<p>{escape(note)}</p>")
    cal = report.calibration
    return _section(title, render_bar_chart(list(cal), list(cal.values()), title))


def _insight_section(report: EvalReport) -> str:
    if not report.insights:
        return _section("Insights", "<p>No insights were generated.</p>")
    paragraphs = [p.strip() for p in report.insights.split("\n\n") if p.strip()]
    body = "\n".join(
        "<p>" + "<br/>".join(escape(line) for line in p.splitlines()) + "</p>"
        for p in paragraphs
    )
    return _section("Insights", body)


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    head = "".join(f"<th>{escape(h)}</th>" for h in header)
    body = "\n".join(
        "<tr>" + "".join(f"<td>{escape(c)}</td>" for c in row) + "</tr>"
        for row in rows
    )
    return f"<table>\n<tr>{head}</tr>\n{body}\n</table>"


def _samples_section(report: EvalReport) -> str:
    title = "Misaligned samples"
    if not report.qualitative_samples:
        return _section(title, "<p>No samples were compared.</p>")
    rows = [
        (s.instance_id, s.attribute, str(s.gt_score), str(s.pred_score), str(s.gap))
        for s in report.qualitative_samples
    ]
    header = ("Instance", "Sub-task", "Reference score", "Prediction score", "Gap")
    return _section(title, _table(header, rows))


def _alignment_section(report: EvalReport) -> str:
    def share(value: None | float) -> str:
        return "-" if value is None else _percent(value)

    rows = [
        (p.label, share(p.ground_truth), share(p.discovered))
        for p in report.prior_alignment
    ]
    header = ("Label", "Annotated share", "Discovered prior")
    return _section("Prior alignment", _table(header, rows))


def render_dashboard(report: EvalReport) -> str:
    """Render `report` as one HTML document without external resources."""
    headline = (
        f'<p class="headline">Overall {escape(report.metric_name)}: '
        f"<strong>{_percent(report.overall)}</strong></p>"
    )
    overall = render_bar_chart(["overall"], [report.overall], "Overall")
    sections = [
        _section("Overall proficiency", f"{headline}\n{overall}"),
        _prior_section(report, Kind.DOMAIN),
        _prior_section(report, Kind.SUBTASK),
        _proficiency_section(report, Kind.DOMAIN),
        _proficiency_section(report, Kind.SUBTASK),
        _calibration_section(report),
        _insight_section(report),
        _samples_section(report),
    ]
    if report.prior_alignment:
        sections.append(_alignment_section(report))
    config = json.dumps(dict(report.run_config), indent=2, sort_keys=True, default=str)
    sections.append(_section("Run configuration", f"<pre>{escape(config)}</pre>"))
    return "\n".join(
        [
            "<!DOCTYPE html>",
            '<html lang="en">',
            "<head>",
            '<meta charset="utf-8"/>',
            "<title>Evaluation dashboard</title>",
            f"<style>{_STYLE}</style>",
            "</head>",
            "<body>",
            "<h1>Evaluation dashboard</h1>",
            *sections,
            "</body>",
            "</html>",
            "",
        ]
    )


def write_report(report: EvalReport, out_dir: Path) -> dict[str, Path]:
    """Write the dashboard, the report as JSON and the insight text."""
    paths = {
        "dashboard": out_dir / DASHBOARD_FILE,
        "report": out_dir / REPORT_FILE,
        "insights": out_dir / INSIGHTS_FILE,
    }
    write_atomic(paths["dashboard"], render_dashboard(report))
    write_atomic(
        paths["report"], json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
    )
    write_atomic(paths["insights"], (report.insights or "") + "\n")
    logger.info("report written to %s", out_dir)
    return paths
