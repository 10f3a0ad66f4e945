import logging

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from qualpipe.errors import NoParsableScoresError, UpstreamError
from qualpipe.gateway import Gateway, GatewayMode, ScriptedTransport
from qualpipe.model import (
    AffinityMatrix,
    AttributeSet,
    Dataset,
    Instance,
    Kind,
    Target,
)
from qualpipe.scoring import (
    PriorMethod,
    compute_priors,
    parse_scores,
    round_half_away,
    score_affinities,
)

NAMES = ("Recall facts", "Arithmetic")


@st.composite
def score_matrices(draw):
    m = draw(st.integers(min_value=1, max_value=5))
    row = st.lists(st.integers(min_value=1, max_value=5), min_size=m, max_size=m)
    return draw(st.lists(row, min_size=1, max_size=6))


def _matrix(scores) -> AffinityMatrix:
    arr = np.array(scores)
    n, m = arr.shape
    return AffinityMatrix(
        Kind.SUBTASK,
        [f"i{i}" for i in range(n)],
        [f"a{j}" for j in range(m)],
        arr,
        [[None] * m] * n,
        np.zeros((n, m), dtype=bool),
    )


def _dataset() -> Dataset:
    return Dataset(
        (
            Instance("a", "first question", "r"),
            Instance("b", "second question", "r"),
            Instance("c", "third question", "r"),
        )
    )


def test_parse_scores_reads_triples():
    """Scores are matched by name and evidence is optional."""
    text = (
        "[Subtask 1: Recall facts, Score: 4, Evidence: names a date] "
        "[Subtask 2: arithmetic, Score: 2]"
    )
    assert parse_scores(text, Kind.SUBTASK, NAMES) == {
        0: (4, "names a date"),
        1: (2, None),
    }


def test_parse_scores_falls_back_to_numbers():
    """An unknown name is matched by its number, the first triple wins."""
    text = (
        "[Sub-task 2: Adding numbers, Score: 3, Evidence: sums] "
        "[Subtask 2: Arithmetic, Score: 5, Evidence: again]"
    )
    assert parse_scores(text, Kind.SUBTASK, NAMES) == {1: (3, "sums")}
    assert parse_scores("[Domain 9: Other, Score: 3]", Kind.DOMAIN, NAMES) == {}


def test_parse_scores_clamps_and_rounds(caplog):
    """Out of range scores are clamped, fractions rounded half away from zero."""
    text = "[Domain 1: Recall facts, Score: 7] [Domain 2: Arithmetic, Score: 2.5]"
    with caplog.at_level(logging.WARNING):
        cells = parse_scores(text, Kind.DOMAIN, NAMES)
    assert cells == {0: (5, None), 1: (3, None)}
    assert "clamped" in caplog.text


def test_round_half_away():
    """Halves go away from zero."""
    assert [round_half_away(x) for x in (2.5, 3.5, -2.5, 2.49)] == [3, 4, -3, 2]


@given(st.text())
def test_parse_scores_accepts_any_text(text):
    """Parsing never fails and only yields valid cells."""
    cells = parse_scores(text, Kind.SUBTASK, NAMES)
    assert set(cells) <= {0, 1}
    assert all(1 <= score <= 5 for score, _ in cells.values())


def test_missing_scores_are_imputed_with_the_median(caplog):
    """A cell never answered gets the median of its column."""

    def answer(req):
        if "third question" in req.prompt:
            return "[Subtask 1: Recall facts, Score: 5, Evidence: dates]"
        q = 2 if "first question" in req.prompt else 4
        return (
            "[Subtask 1: Recall facts, Score: 1, Evidence: none] "
            f"[Subtask 2: Arithmetic, Score: {q}, Evidence: numbers]"
        )

    transport = ScriptedTransport(answer)
    gw = Gateway(GatewayMode.LIVE, None, transport)
    attrs = AttributeSet.from_names(Kind.SUBTASK, NAMES)
    with caplog.at_level(logging.WARNING):
        aff = score_affinities(_dataset(), attrs, Target.INPUT, gw)
    assert aff.scores.tolist() == [[1, 2], [1, 4], [5, 3]]
    assert aff.imputed.tolist() == [[False, False], [False, False], [False, True]]
    assert aff.evidence[2] == ("dates", None)
    # the third instance is asked once and reprompted three times
    assert transport.call_count == 6
    assert "imputed 1 of 6" in caplog.text


def test_column_without_any_score():
    """Imputation needs at least one parsed score per attribute."""
    transport = ScriptedTransport(lambda _: "[Subtask 1: Recall facts, Score: 3]")
    gw = Gateway(GatewayMode.LIVE, None, transport)
    attrs = AttributeSet.from_names(Kind.SUBTASK, NAMES)
    with pytest.raises(NoParsableScoresError) as e:
        score_affinities(_dataset(), attrs, Target.INPUT, gw)
    assert e.value.attribute == "Arithmetic"


def test_gateway_errors_are_raised():
    """A failing request stops scoring."""
    transport = ScriptedTransport(lambda _: UpstreamError(500, "down"))
    gw = Gateway(GatewayMode.LIVE, None, transport)
    attrs = AttributeSet.from_names(Kind.DOMAIN, NAMES)
    with pytest.raises(UpstreamError):
        score_affinities(_dataset(), attrs, Target.INPUT, gw)


def test_score_toy_predictions(toy, gateway):
    """Every prediction gets a full row of parsed scores."""
    attrs = AttributeSet.from_names(Kind.SUBTASK, NAMES)
    aff = score_affinities(toy, attrs, Target.PREDICTION, gateway)
    assert aff.shape == (20, 2)
    assert aff.target is Target.PREDICTION
    assert not aff.imputed.any()
    assert aff.evidence[0] == ("mentions recall facts", "mentions arithmetic")


def test_priors_from_affinity_mass(affinity):
    """Priors are proportional to the column sums."""
    priors = compute_priors(affinity([[5, 1], [5, 1]]))
    assert [a.prior for a in priors.attributes] == pytest.approx([10 / 12, 2 / 12])
    uniform = compute_priors(affinity([[3, 3, 3]]))
    assert [a.prior for a in uniform.attributes] == pytest.approx([1 / 3] * 3)


def test_priors_from_threshold_count(affinity):
    """Scores of at least four are counted, plus one per attribute."""
    priors = compute_priors(affinity([[5, 1], [4, 2]]), PriorMethod.THRESHOLD_COUNT)
    assert [a.prior for a in priors.attributes] == pytest.approx([0.75, 0.25])


@given(score_matrices(), st.integers(min_value=2, max_value=4))
def test_priors_ignore_repeated_instances(scores, times):
    """Repeating every instance does not change the priors."""
    once = compute_priors(_matrix(scores))
    repeated = compute_priors(_matrix(scores * times))
    assert [a.prior for a in repeated.attributes] == pytest.approx(
        [a.prior for a in once.attributes]
    )
    assert sum(a.prior for a in once.attributes) == pytest.approx(1.0)


@given(score_matrices(), st.data())
def test_priors_grow_with_scores(scores, data):
    """Raising a score raises its prior and lowers every other one."""
    arr = np.array(scores)
    assume(arr.shape[1] >= 2 and (arr < 5).any())
    raisable = np.argwhere(arr < 5)
    i, j = raisable[data.draw(st.integers(0, len(raisable) - 1))]
    raised = arr.copy()
    raised[i, j] += 1
    before = [a.prior for a in compute_priors(_matrix(arr)).attributes]
    after = [a.prior for a in compute_priors(_matrix(raised)).attributes]
    assert after[j] > before[j]
    assert all(after[k] < before[k] for k in range(len(before)) if k != j)
