import json

import numpy as np
import pytest

from qualpipe.artifacts import (
    load_affinity,
    load_assignment,
    save_affinity,
    save_assignment,
    save_bounds,
)
from qualpipe.errors import MalformedRecordError
from qualpipe.model import (
    AffinityMatrix,
    AssignmentMatrix,
    AttributeSet,
    EvalReport,
    Kind,
    LpBounds,
    PriorAlignment,
    QualitativeSample,
    Target,
)

IDS = ("q1", "q2", "q3")
NAMES = ("Algebra", "Biology", "History")


@pytest.fixture
def aff() -> AffinityMatrix:
    return AffinityMatrix(
        Kind.DOMAIN,
        IDS,
        NAMES,
        np.array([[5, 1, 2], [2, 4, 4], [1, 3, 5]]),
        (("equations", None, None), (None, "cells", None), (None, None, "wars")),
        np.array([[False, False, True], [False] * 3, [False] * 3]),
        Target.REFERENCE,
    )


def test_affinity_survives_the_file(tmp_path, aff):
    """Scores, evidence and imputed cells come back as written."""
    path = tmp_path / "affinity.jsonl"
    save_affinity(path, aff)
    attrs = AttributeSet.from_names(Kind.DOMAIN, NAMES)
    back = load_affinity(path, attrs, IDS, Target.REFERENCE)
    assert back.same_cells(aff)
    assert back.target is Target.REFERENCE
    assert back.scores.tolist() == aff.scores.tolist()
    assert back.evidence == aff.evidence
    assert back.imputed.tolist() == aff.imputed.tolist()


def test_affinity_rows_must_follow_the_dataset(tmp_path, aff):
    """Rows for other instances are reported with their line."""
    path = tmp_path / "affinity.jsonl"
    save_affinity(path, aff)
    attrs = AttributeSet.from_names(Kind.DOMAIN, NAMES)
    with pytest.raises(MalformedRecordError, match=r"affinity.jsonl:2: expected"):
        load_affinity(path, attrs, ("q1", "q9", "q3"), Target.REFERENCE)


def test_lp_bounds_json():
    """Bounds keep both the requested and the effective slack."""
    bounds = LpBounds((1, 2, 0), (3, 3, 2), 0.2, 0.1)
    assert LpBounds.from_json(json.loads(json.dumps(bounds.to_json()))) == bounds


def test_assignment_survives_the_files(tmp_path, aff):
    """Assigned names, bounds and objective are read back together."""
    bounds = LpBounds((1, 1, 1), (3, 3, 3), 0.1, 0.1)
    assign = AssignmentMatrix(
        Kind.DOMAIN, IDS, NAMES, [[1, 0, 1], [0, 1, 1], [0, 1, 1]], bounds, 24.0
    )
    path, bounds_path = tmp_path / "assignments.jsonl", tmp_path / "bounds.json"
    save_assignment(path, assign, aff)
    save_bounds(bounds_path, [assign])

    first = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert first["attributes"] == ["Algebra", "History"]
    assert first["scores"] == [5, 2]

    back = load_assignment(path, bounds_path, Kind.DOMAIN)
    assert back.instance_ids == IDS
    assert back.attributes == NAMES
    assert back.assign.tolist() == assign.assign.tolist()
    assert back.bounds == bounds
    assert back.objective == 24.0


def test_eval_report_json():
    """A report decodes to an equal report."""
    sets = {
        Kind.DOMAIN: AttributeSet.from_names(Kind.DOMAIN, ["Biology"]).with_priors(
            [1.0]
        ),
        Kind.SUBTASK: AttributeSet.from_names(
            Kind.SUBTASK, ["Recall facts", "Arithmetic"]
        ).with_priors([0.25, 0.75]),
    }
    report = EvalReport(
        metric_name="rouge-l",
        overall=0.625,
        attribute_sets=sets,
        proficiency={
            Kind.DOMAIN: {"Biology": 0.625},
            Kind.SUBTASK: {"Recall facts": 0.5, "Arithmetic": 0.75},
        },
        calibration={"Recall facts": 0.0, "Arithmetic": 0.5},
        calibration_correlation={"Recall facts": None, "Arithmetic": 0.25},
        insights="Strong on recall.",
        qualitative_samples=(QualitativeSample("q2", "Arithmetic", 5, 1),),
        prior_alignment=(PriorAlignment("Biology", 1.0, 1.0),),
        run_config={"seed": 3, "domains": ["Biology"]},
    )
    encoded = json.loads(json.dumps(report.to_json()))
    assert EvalReport.from_json(encoded) == report
