import logging

import pytest

from qualpipe.augment import (
    ManifestEntry,
    Source,
    baseline_manifest,
    plan_augmentation,
    quotas,
    select_augmentation,
    select_random_baseline,
)
from qualpipe.errors import ConfigError, InsufficientPoolError, UnknownAttributeError
from qualpipe.model import AssignmentMatrix, Kind, LpBounds

IDS = tuple(f"i{i}" for i in range(7))
# Y holds i3 and i4, X the other five, Z everything
ASSIGN = AssignmentMatrix(
    Kind.DOMAIN,
    IDS,
    ("X", "Y", "Z"),
    [[0, 1, 1] if i in (3, 4) else [1, 0, 1] for i in range(7)],
    LpBounds((0, 0, 0), (7, 7, 7), 0.1),
    0.0,
)


def test_quotas():
    """The remainder goes to the first targets."""
    assert quotas(250, 3) == [84, 83, 83]
    assert quotas(10, 4) == [3, 3, 2, 2]
    assert sum(quotas(7, 7)) == 7


def test_selection_is_even_and_unique():
    """Each target gets its quota of its own members."""
    entries = plan_augmentation(ASSIGN, IDS, ["X", "Z"], 6, seed=1)
    assert len(entries) == 6
    assert len({e.id for e in entries}) == 6
    x = [e.id for e in entries if e.domain == "X"]
    assert len(x) == 3
    assert set(x) <= set(ASSIGN.members("X"))
    assert all(e.source is Source.TARGETED for e in entries)


def test_selection_is_deterministic():
    """The same seed selects the same instances."""
    first = select_augmentation(ASSIGN, IDS, ["X", "Z"], 4, seed=3)
    assert first == select_augmentation(ASSIGN, IDS, ["X", "Z"], 4, seed=3)


def test_targets_match_regardless_of_case():
    """Target names resolve like attribute names, case-insensitively."""
    lower = plan_augmentation(ASSIGN, IDS, [" y", "z"], 4, seed=2)
    assert lower == plan_augmentation(ASSIGN, IDS, ["Y", "Z"], 4, seed=2)
    assert {e.domain for e in lower} == {"Y", "Z"}


def test_small_domain_fails_without_backfill():
    """A target with too few instances is an error by default."""
    with pytest.raises(InsufficientPoolError) as e:
        plan_augmentation(ASSIGN, IDS, ["Y", "X"], 6, seed=0)
    assert (e.value.domain, e.value.available, e.value.requested) == ("Y", 2, 3)


def test_backfill_from_other_targets(caplog):
    """The shortfall of a small target is taken from the others."""
    with caplog.at_level(logging.WARNING):
        entries = plan_augmentation(
            ASSIGN, IDS, ["Y", "X"], 6, seed=0, allow_backfill=True
        )
    assert len({e.id for e in entries}) == 6
    assert [e.domain for e in entries].count("Y") == 2
    assert [e.domain for e in entries].count("X") == 4
    assert "backfilled 1" in caplog.text


def test_pool_limits_the_selection(caplog):
    """Only pool instances are selected, unknown pool ids are ignored."""
    pool = ["i0", "i1", "i3", "unknown"]
    with caplog.at_level(logging.WARNING):
        ids = select_augmentation(ASSIGN, pool, ["X"], 2, seed=5)
    assert sorted(ids) == ["i0", "i1"]
    assert "1 pool ids are not in the assignment" in caplog.text


def test_selection_checks():
    """Targets must exist and each needs at least one instance of budget."""
    with pytest.raises(UnknownAttributeError):
        plan_augmentation(ASSIGN, IDS, ["W"], 3, seed=0)
    with pytest.raises(ConfigError, match="budget"):
        plan_augmentation(ASSIGN, IDS, ["X", "Y", "Z"], 2, seed=0)


def test_random_baseline():
    """The baseline samples the whole pool uniformly."""
    ids = select_random_baseline(IDS, 5, seed=2)
    assert len(set(ids)) == 5
    assert set(ids) <= set(IDS)
    assert ids == select_random_baseline(IDS, 5, seed=2)
    with pytest.raises(InsufficientPoolError):
        select_random_baseline(IDS, 8, seed=2)
    assert baseline_manifest(["i1"]) == [ManifestEntry("i1", Source.BASELINE)]
    assert baseline_manifest(["i1"])[0].to_json() == {
        "id": "i1",
        "source": "baseline",
        "domain": None,
    }
