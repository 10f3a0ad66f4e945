"""Affinity scoring of instances against attributes, and attribute priors."""

import logging
import math
import re
from enum import StrEnum

import numpy as np

from qualpipe.errors import EvaluatorError, NoParsableScoresError
from qualpipe.gateway import Gateway
from qualpipe.model import (
    SCORE_MAX,
    SCORE_MIN,
    AffinityMatrix,
    AttributeSet,
    Dataset,
    Kind,
    Target,
    name_key,
)
from qualpipe.prompts import scoring_prompt

logger = logging.getLogger(__package__)

# reprompts after the first attempt
PARSE_RETRIES = 3
THRESHOLD_SCORE = 4

_LABELS = {Kind.DOMAIN: r"Domain", Kind.SUBTASK: r"Sub-?task"}


def _triple_re(kind: Kind) -> re.Pattern[str]:
    return re.compile(
        rf"\[\s*{_LABELS[kind]}\s*(?P<num>\d+)\s*:\s*(?P<name>[^\]]*?)\s*,\s*"
        r"Score\s*:\s*(?P<score>[-+]?\d+(?:\.\d+)?)\s*"
        r"(?:,\s*Evidence\s*:\s*(?P<evidence>[^\]]*?)\s*)?\]",
        re.IGNORECASE,
    )


TRIPLE_RES = {kind: _triple_re(kind) for kind in Kind}


class PriorMethod(StrEnum):
    """How priors are derived from an affinity matrix."""

    AFFINITY_MASS = "affinity-mass"
    THRESHOLD_COUNT = "threshold-count"


def round_half_away(x: float) -> int:
    """Round to the nearest integer, halves away from zero."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _clamp(score: float) -> int:
    value = round_half_away(score)
    if not SCORE_MIN <= value <= SCORE_MAX:
        clamped = min(SCORE_MAX, max(SCORE_MIN, value))
        logger.warning("score %s clamped to %s", score, clamped)
        return clamped
    return value


def parse_scores(
    text: str, kind: Kind, attributes: tuple[str, ...]
) -> dict[int, tuple[int, None | str]]:
    """Read `[<Label> n: <name>, Score: <s>, Evidence: <e>]` triples from `text`.

    Returns the parsed cells by attribute position. A triple is matched to an
    attribute by name, falling back to its number. The first triple for an
    attribute wins and unmatched triples are ignored, so any text parses.
    """
    keys = {name_key(a): j for j, a in enumerate(attributes)}
    cells: dict[int, tuple[int, None | str]] = {}
    for m in TRIPLE_RES[kind].finditer(text):
        j = keys.get(name_key(m["name"]))
        if j is None and 1 <= (num := int(m["num"])) <= len(attributes):
            j = num - 1
        if j is None or j in cells:
            continue
        evidence = (m["evidence"] or "").strip() or None
        cells[j] = (_clamp(float(m["score"])), evidence)
    return cells


def score_affinities(
    dataset: Dataset, attrs: AttributeSet, target: Target, gateway: Gateway
) -> AffinityMatrix:
    """Score every instance against all attributes of `attrs`, one prompt each.

    Instances with an incomplete answer are reprompted up to `PARSE_RETRIES`
    times, keeping the most complete answer. Cells still missing get the
    median of their column.
    """
    if len(attrs) == 0:
        msg = f"no {attrs.kind.plural} to score"
        raise ValueError(msg)
    names = attrs.names
    m = len(names)
    # also fails early on a missing prediction
    texts = [inst.text(target) for inst in dataset]
    logger.info(
        "scoring %s %s texts against %s %s", len(texts), target, m, attrs.kind.plural
    )

    rows: list[dict[int, tuple[int, None | str]]] = [{} for _ in dataset.instances]
    pending = list(range(len(dataset)))
    for attempt in range(PARSE_RETRIES + 1):
        if not pending:
            break
        reqs = [
            gateway.request(
                scoring_prompt(attrs.kind, names, dataset.instances[i], target, attempt)
            )
            for i in pending
        ]
        for i, text in zip(pending, gateway.complete_batch(reqs), strict=True):
            if isinstance(text, EvaluatorError):
                raise text
            cells = parse_scores(text, attrs.kind, names)
            if len(cells) > len(rows[i]):
                rows[i] = cells
        pending = [i for i in pending if len(rows[i]) < m]

    return _impute(dataset, attrs, target, rows)


def _impute(
    dataset: Dataset,
    attrs: AttributeSet,
    target: Target,
    rows: list[dict[int, tuple[int, None | str]]],
) -> AffinityMatrix:
    n, m = len(rows), len(attrs)
    scores = np.zeros((n, m), dtype=np.int64)
    imputed = np.zeros((n, m), dtype=np.bool_)
    evidence: list[list[None | str]] = [[None] * m for _ in range(n)]
    for j, name in enumerate(attrs.names):
        parsed = [row[j][0] for row in rows if j in row]
        if not parsed:
            raise NoParsableScoresError(name)
        fill = round_half_away(float(np.median(parsed)))
        for i, row in enumerate(rows):
            if j in row:
                scores[i, j], evidence[i][j] = row[j]
            else:
                scores[i, j] = fill
                imputed[i, j] = True
    if count := int(imputed.sum()):
        logger.warning(
            "imputed %s of %s %s scores with column medians",
            count,
            n * m,
            attrs.kind,
        )
    return AffinityMatrix(
        attrs.kind,
        dataset.ids,
        attrs.names,
        scores,
        tuple(tuple(row) for row in evidence),
        imputed,
        target,
    )


def compute_priors(
    aff: AffinityMatrix, method: PriorMethod = PriorMethod.AFFINITY_MASS
) -> AttributeSet:
    """Attribute priors from an affinity matrix, in attribute order.

    `affinity-mass` makes each prior proportional to its column sum,
    `threshold-count` to the number of scores of at least `THRESHOLD_SCORE`
    plus one.
    """
    n, m = aff.shape
    if n == 0 or m == 0:
        msg = "cannot compute priors of an empty affinity matrix"
        raise ValueError(msg)
    match method:
        case PriorMethod.AFFINITY_MASS:
            weights = aff.scores.sum(axis=0).astype(np.float64)
        case PriorMethod.THRESHOLD_COUNT:
            weights = (aff.scores >= THRESHOLD_SCORE).sum(axis=0) + 1.0
    priors = weights / weights.sum()
    attrs = AttributeSet.from_names(aff.kind, aff.attributes)
    return attrs.with_priors([float(p) for p in priors])
