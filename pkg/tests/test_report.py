import json
import xml.etree.ElementTree as ET

import pytest

from qualpipe.errors import LengthMismatchError
from qualpipe.model import (
    AttributeSet,
    EvalReport,
    Kind,
    PriorAlignment,
    QualitativeSample,
)
from qualpipe.report import render_bar_chart, render_dashboard, write_report


def _report(*, calibration: bool = True) -> EvalReport:
    sets = {
        Kind.DOMAIN: AttributeSet.from_names(
            Kind.DOMAIN, ["Biology", "History"]
        ).with_priors([0.6, 0.4]),
        Kind.SUBTASK: AttributeSet.from_names(
            Kind.SUBTASK, ["Recall facts", "Arithmetic"]
        ).with_priors([0.3, 0.7]),
    }
    return EvalReport(
        metric_name="exact-match",
        overall=0.7,
        attribute_sets=sets,
        proficiency={
            Kind.DOMAIN: {"Biology": 0.9, "History": 0.5},
            Kind.SUBTASK: {"Recall facts": 0.8, "Arithmetic": 0.6},
        },
        calibration={"Recall facts": 0.1, "Arithmetic": 0.3} if calibration else None,
        insights="The model is <b>good</b> at biology.\n\nIt struggles with history.",
        qualitative_samples=(QualitativeSample("q04", "Arithmetic", 5, 2),),
        prior_alignment=(PriorAlignment("Biology", 0.15, 0.6),),
        run_config={"seed": 0, "epsilon": 0.1},
    )


def test_bar_chart_sorts_descending():
    """The largest value is drawn first."""
    svg = render_bar_chart(["a", "b", "c"], [0.2, 0.9, 0.5], "Scores")
    assert svg.index(">b</text>") < svg.index(">c</text>") < svg.index(">a</text>")
    assert "90.0%" in svg
    assert svg.count("<rect") == 3


def test_bar_chart_scales_bars():
    """A full value spans the bar area, without a range the largest one does."""
    assert 'width="336.00"' in render_bar_chart(["x"], [1.0], "Full")
    svg = render_bar_chart(["x", "y"], [2.0, 1.0], "Counts", value_range=None)
    assert 'width="336.00"' in svg
    assert 'width="168.00"' in svg


def test_bar_chart_escapes_labels():
    """Labels and titles cannot inject markup."""
    svg = render_bar_chart(["<script>alert(1)</script>"], [0.5], "A & B")
    assert "<script>" not in svg
    assert "&lt;script&gt;" in svg
    assert "A &amp; B" in svg


def test_bar_chart_checks_input():
    """Labels and values pair up and a chart has bars."""
    with pytest.raises(LengthMismatchError):
        render_bar_chart(["a", "b"], [0.5], "Bad")
    with pytest.raises(ValueError, match="no bars"):
        render_bar_chart([], [], "Empty")


def test_dashboard_sections():
    """One chart per block, the calibration chart only when available."""
    html = render_dashboard(_report())
    assert html.startswith("<!DOCTYPE html>")
    assert html.count("<svg") == 6
    assert "Overall exact-match: <strong>70.0%</strong>" in html
    assert "&lt;b&gt;good&lt;/b&gt;" in html
    assert "<td>q04</td>" in html
    assert "Prior alignment" in html
    assert "&quot;epsilon&quot;: 0.1" in html

    without = render_dashboard(_report(calibration=False))
    assert without.count("<svg") == 5
    assert "No calibration is available" in without


def test_dashboard_is_well_formed_and_deterministic():
    """The document parses as XML and renders the same twice."""
    html = render_dashboard(_report())
    root = ET.fromstring(html)
    assert root.tag == "html"
    paragraphs = [p for p in root.iter("p") if p.text and "struggles" in p.text]
    assert len(paragraphs) == 1
    assert html == render_dashboard(_report())


def test_write_report(tmp_path):
    """Dashboard, JSON report and insight text land in the output directory."""
    paths = write_report(_report(), tmp_path / "out")
    assert set(paths) == {"dashboard", "report", "insights"}
    assert all(p.is_file() for p in paths.values())
    data = json.loads(paths["report"].read_text(encoding="utf-8"))
    assert data["overall"] == 0.7
    assert data["calibration"] == {"Recall facts": 0.1, "Arithmetic": 0.3}
    samples = EvalReport.from_json(data).qualitative_samples
    assert samples == _report().qualitative_samples
    assert paths["insights"].read_text(encoding="utf-8").startswith("The model is")
