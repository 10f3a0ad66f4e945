import numpy as np
import pytest

from qualpipe.errors import (
    DataError,
    DuplicateIdError,
    EmptyInputError,
    MissingFieldError,
    MissingPredictionError,
    UnknownAttributeError,
)
from qualpipe.model import (
    AssignmentMatrix,
    Attribute,
    AttributeSet,
    Dataset,
    EvalReport,
    Instance,
    Kind,
    LpBounds,
    Target,
    validate_dataset,
)


def test_validate_dataset_keeps_order_and_coerces_int_ids():
    """Ids are strings and instances stay in file order."""
    records = [
        (1, {"id": 2, "input": "b", "reference": "y"}),
        (2, {"id": "1", "input": "a", "reference": "x", "prediction": "x"}),
    ]
    ds = validate_dataset(records)
    assert ds.ids == ("2", "1")
    assert not ds.has_predictions


def test_validate_dataset_rejects_bad_records():
    """Duplicate ids, empty inputs and missing fields are data errors."""
    with pytest.raises(DuplicateIdError):
        validate_dataset(
            [
                (1, {"id": "a", "input": "x", "reference": "y"}),
                (2, {"id": "a", "input": "z", "reference": "y"}),
            ]
        )
    with pytest.raises(EmptyInputError):
        validate_dataset([(1, {"id": "a", "input": "  ", "reference": "y"})])
    with pytest.raises(MissingFieldError) as e:
        validate_dataset([(7, {"id": "a", "input": "x"})])
    assert e.value.line == 7
    assert e.value.field == "reference"


def test_instance_text_requires_prediction():
    """Asking for a missing prediction names the instance."""
    inst = Instance("a", "in", "ref")
    assert inst.text(Target.REFERENCE) == "ref"
    with pytest.raises(MissingPredictionError):
        inst.text(Target.PREDICTION)


def test_attribute_set_priors_must_sum_to_one():
    """Priors are all-or-none and normalized."""
    attrs = AttributeSet.from_names(Kind.DOMAIN, ["A", "B"])
    assert not attrs.has_priors
    assert attrs.with_priors([0.25, 0.75]).prior_map() == {"A": 0.25, "B": 0.75}
    with pytest.raises(DataError):
        attrs.with_priors([0.5, 0.6])
    with pytest.raises(DataError):
        AttributeSet(
            Kind.DOMAIN, (Attribute("A", Kind.DOMAIN, 1.0), Attribute("B", Kind.DOMAIN))
        )


def test_attribute_set_rejects_case_insensitive_duplicates():
    """Names are unique ignoring case and whitespace."""
    with pytest.raises(DataError):
        AttributeSet.from_names(Kind.SUBTASK, ["Code  review", "code review"])


def test_attribute_set_json_round_trip():
    """Names, kind and priors survive encoding."""
    attrs = AttributeSet.from_names(Kind.SUBTASK, ["x", "y"]).with_priors([0.4, 0.6])
    assert AttributeSet.from_json(attrs.to_json()) == attrs
    with pytest.raises(UnknownAttributeError):
        attrs.index("z")
    assert attrs.index("Y") == 1


def test_lp_bounds_feasibility():
    """Sums of the bounds must admit two attributes per instance."""
    assert LpBounds((1, 1), (2, 2), 0.1).is_feasible(2)
    assert not LpBounds((3, 3), (3, 3), 0.1).is_feasible(2)
    assert not LpBounds((0, 0), (1, 1), 0.1).is_feasible(2)
    with pytest.raises(ValueError, match="invalid bounds"):
        LpBounds((2,), (1,), 0.0)


def test_affinity_matrix_is_read_only(affinity):
    """Scores are copied and frozen."""
    scores = [[5, 1], [2, 3]]
    aff = affinity(scores)
    scores[0][0] = 1
    assert aff.scores[0, 0] == 5
    with pytest.raises(ValueError, match="read-only"):
        aff.scores[0, 0] = 2
    assert list(aff.column("a1")) == [1, 3]


def test_affinity_matrix_rejects_out_of_range_scores(affinity):
    """Scores are between 1 and 5."""
    with pytest.raises(DataError):
        affinity([[0, 3]])
    with pytest.raises(DataError):
        affinity([[6, 3]])


def test_assignment_matrix_refuses_violations():
    """Rows sum to two and columns stay within their bounds."""
    bounds = LpBounds((0, 0, 0), (2, 2, 2), 0.1)
    ok = np.array([[1, 1, 0], [0, 1, 1]])
    assign = AssignmentMatrix(Kind.DOMAIN, ("a", "b"), ("x", "y", "z"), ok, bounds, 0)
    assert assign.column_counts() == {"x": 1, "y": 2, "z": 1}
    assert assign.members("y") == ("a", "b")
    assert assign.attributes_of(1) == ("y", "z")
    with pytest.raises(ValueError, match="row 0"):
        AssignmentMatrix(
            Kind.DOMAIN, ("a", "b"), ("x", "y", "z"), [[1, 1, 1], [0, 1, 1]], bounds, 0
        )


def test_eval_report_refuses_unknown_attributes():
    """Proficiency may only mention attributes of the report."""
    sets = {Kind.DOMAIN: AttributeSet.from_names(Kind.DOMAIN, ["A"])}
    with pytest.raises(UnknownAttributeError):
        EvalReport("rouge-l", 0.5, sets, {Kind.DOMAIN: {"B": 0.5}})
    with pytest.raises(DataError):
        EvalReport("rouge-l", 1.5, sets, {})


def test_dataset_ids_and_predictions():
    """Ids keep their order, predictions are only complete when all are set."""
    ds = Dataset((Instance("a", "x", "y"), Instance("b", "z", "w", "w")))
    assert ds.ids == ("a", "b")
    assert not ds.has_predictions
    assert len(ds) == 2
