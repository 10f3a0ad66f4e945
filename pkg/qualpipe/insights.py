"""Natural-language insights and misaligned samples of an evaluation run."""

import logging
from collections.abc import Mapping, Sequence

import numpy as np

from qualpipe.errors import EmptyInsightError, ShapeMismatchError
from qualpipe.gateway import DEFAULT_MODEL, DEFAULT_TEMPERATURE, ChatRequest, Gateway
from qualpipe.model import AffinityMatrix, AttributeSet, Kind, QualitativeSample
from qualpipe.prompts import INSIGHT_SYSTEM, insight_prompt

logger = logging.getLogger(__package__)

BOTH_KINDS = (Kind.DOMAIN, Kind.SUBTASK)


def build_insight_prompt(  # noqa: PLR0913
    task_instruction: str,
    attribute_sets: Mapping[Kind, AttributeSet],
    proficiency: Mapping[Kind, Mapping[str, float]],
    calibration: None | Mapping[str, float],
    *,
    kinds: Sequence[Kind] = BOTH_KINDS,
    model: str = DEFAULT_MODEL,
    temperature: float = DEFAULT_TEMPERATURE,
    seed: None | int = None,
) -> ChatRequest:
    """Request summarizing priors, proficiency and calibration of `kinds`."""
    for kind in kinds:
        if not attribute_sets[kind].has_priors:
            msg = f"{kind} attribute set has no priors"
            raise ValueError(msg)
    prompt = insight_prompt(
        task_instruction,
        {k: attribute_sets[k].names for k in kinds},
        {k: attribute_sets[k].prior_map() for k in kinds},
        {k: proficiency.get(k, {}) for k in kinds},
        calibration,
    )
    return ChatRequest(prompt, model, INSIGHT_SYSTEM, temperature, seed)


def generate_insights(req: ChatRequest, gateway: Gateway) -> str:
    """The evaluator's summary for `req`, trimmed."""
    if not (text := gateway.complete(req).strip()):
        msg = "the evaluator returned an empty insight"
        raise EmptyInsightError(msg)
    return text


def run_insights(  # noqa: PLR0913
    task_instruction: str,
    attribute_sets: Mapping[Kind, AttributeSet],
    proficiency: Mapping[Kind, Mapping[str, float]],
    calibration: None | Mapping[str, float],
    gateway: Gateway,
    *,
    combined: bool = True,
) -> str:
    """Insights for both kinds, from one request or one request per kind.

    Separate texts are joined with an empty line, domains first.
    """
    groups = [BOTH_KINDS] if combined else [(k,) for k in BOTH_KINDS]
    texts = []
    for kinds in groups:
        req = build_insight_prompt(
            task_instruction,
            attribute_sets,
            proficiency,
            calibration,
            kinds=kinds,
            model=gateway.model,
            temperature=gateway.temperature,
            seed=gateway.seed,
        )
        texts.append(generate_insights(req, gateway))
    return "\n\n".join(texts)


def extract_qualitative_samples(
    gt: AffinityMatrix, pred: AffinityMatrix, top_k: int
) -> tuple[QualitativeSample, ...]:
    """The `top_k` instances with the largest reference/prediction affinity gap.

    Each instance contributes its largest gap (first attribute on ties).
    Instances are ranked by gap, then by position.
    """
    if top_k < 1:
        msg = f"top_k must be at least 1, got {top_k}"
        raise ValueError(msg)
    if not gt.same_cells(pred):
        msg = f"affinity matrices differ: {gt.shape} vs {pred.shape}"
        raise ShapeMismatchError(msg)
    n, m = gt.shape
    if n == 0 or m == 0:
        return ()
    gaps = np.abs(gt.scores - pred.scores)
    cols = gaps.argmax(axis=1)
    best = gaps[np.arange(n), cols]
    order = sorted(range(n), key=lambda i: (-int(best[i]), i))[:top_k]
    return tuple(
        QualitativeSample(
            gt.instance_ids[i],
            gt.attributes[cols[i]],
            int(gt.scores[i, cols[i]]),
            int(pred.scores[i, cols[i]]),
        )
        for i in order
    )
