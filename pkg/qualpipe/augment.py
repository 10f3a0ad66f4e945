"""Selection of extra training instances for under-performing domains."""

import logging
import random
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum

from qualpipe.errors import (
    ConfigError,
    InsufficientPoolError,
    UnknownAttributeError,
)
from qualpipe.model import AssignmentMatrix, name_key

logger = logging.getLogger(__package__)

DEFAULT_BUDGET = 250


class Source(StrEnum):
    """How a manifest entry was selected."""

    TARGETED = "targeted"
    BASELINE = "baseline"


@dataclass(frozen=True)
class ManifestEntry:
    """One selected instance."""

    id: str
    source: Source
    domain: None | str = None

    def to_json(self) -> dict[str, object]:
        """Encode as a JSONL row."""
        return {"id": self.id, "source": str(self.source), "domain": self.domain}


def quotas(budget: int, n_targets: int) -> list[int]:
    """Split `budget` evenly, the remainder going to the first targets."""
    base, rest = divmod(budget, n_targets)
    return [base + (k < rest) for k in range(n_targets)]


def _unique(ids: Sequence[str]) -> list[str]:
    return list(dict.fromkeys(ids))


def plan_augmentation(  # noqa: PLR0913
    assign: AssignmentMatrix,
    pool_ids: Sequence[str],
    targets: Sequence[str],
    budget: int,
    seed: int,
    *,
    allow_backfill: bool = False,
) -> list[ManifestEntry]:
    """Sample `budget` pool instances evenly from the instances of `targets`.

    No instance is selected twice. A target with too few instances fails,
    unless `allow_backfill` lets the other targets make up the difference.
    """
    if not targets:
        msg = "no target domains"
        raise ConfigError(msg)
    by_key = {name_key(a): a for a in assign.attributes}
    resolved = []
    for target in targets:
        if (name := by_key.get(name_key(target))) is None:
            raise UnknownAttributeError(target)
        resolved.append(name)
    targets = resolved
    if budget < len(targets):
        msg = f"budget {budget} is smaller than the {len(targets)} targets"
        raise ConfigError(msg)
    known = set(assign.instance_ids)
    if unknown := [i for i in _unique(pool_ids) if i not in known]:
        logger.warning("%s pool ids are not in the assignment", len(unknown))
    pool = set(pool_ids) & known

    rng = random.Random(seed)
    used: set[str] = set()
    entries: list[ManifestEntry] = []
    shortfall = 0
    for target, quota in zip(targets, quotas(budget, len(targets)), strict=True):
        available = [i for i in assign.members(target) if i in pool and i not in used]
        if len(available) < quota:
            if not allow_backfill:
                raise InsufficientPoolError(target, len(available), quota)
            logger.warning(
                "%s", InsufficientPoolError(target, len(available), quota)
            )
            shortfall += quota - len(available)
        picks = rng.sample(available, min(quota, len(available)))
        used.update(picks)
        entries += [ManifestEntry(i, Source.TARGETED, target) for i in picks]

    if shortfall:
        # each remaining instance under the first target it belongs to
        first_target: dict[str, str] = {}
        for target in targets:
            for i in assign.members(target):
                if i in pool and i not in used:
                    first_target.setdefault(i, target)
        rest = list(first_target.items())
        if len(rest) < shortfall:
            raise InsufficientPoolError("backfill", len(rest), shortfall)
        picks = rng.sample(rest, shortfall)
        logger.warning("backfilled %s instances from other targets", shortfall)
        entries += [ManifestEntry(i, Source.TARGETED, t) for i, t in picks]
    return entries


def select_augmentation(  # noqa: PLR0913
    assign: AssignmentMatrix,
    pool_ids: Sequence[str],
    targets: Sequence[str],
    budget: int,
    seed: int,
    *,
    allow_backfill: bool = False,
) -> list[str]:
    """Ids of `plan_augmentation`, in selection order."""
    entries = plan_augmentation(
        assign, pool_ids, targets, budget, seed, allow_backfill=allow_backfill
    )
    return [e.id for e in entries]


def select_random_baseline(
    pool_ids: Sequence[str], budget: int, seed: int
) -> list[str]:
    """Sample `budget` pool instances uniformly."""
    if budget < 0:
        msg = f"budget must not be negative, got {budget}"
        raise ValueError(msg)
    pool = _unique(pool_ids)
    if len(pool) < budget:
        raise InsufficientPoolError("baseline", len(pool), budget)
    return random.Random(seed).sample(pool, budget)


def baseline_manifest(ids: Sequence[str]) -> list[ManifestEntry]:
    """Manifest entries of a random baseline selection."""
    return [ManifestEntry(i, Source.BASELINE) for i in ids]
