"""Proficiency metrics, their breakdown by attribute, and skill calibration."""

import json
import logging
import math
import re
import shlex
import string
import subprocess
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import StrEnum
from typing import Self

import numpy as np

from qualpipe.errors import (
    CommandFailedError,
    ConfigError,
    EmptyScoresError,
    MissingPredictionError,
    MissingScoreError,
    ShapeMismatchError,
    UnparseableScoreError,
)
from qualpipe.model import (
    AffinityMatrix,
    AssignmentMatrix,
    AttributeSet,
    Dataset,
    Instance,
    MetricScore,
    PriorAlignment,
    name_key,
)

logger = logging.getLogger(__package__)

ROUGE_L_DESCRIPTION = "ROUGE-L F1 (beta=1)"
# affinity differences above this count as a skill used differently
CALIBRATION_GAP = 1
EXTERNAL_PREFIX = "external:"

_PUNCTUATION = str.maketrans("", "", string.punctuation)
_CHOICE = re.compile(r"\b([A-D])\b")


class MetricKind(StrEnum):
    """Available proficiency metrics."""

    ROUGE_L = "rouge-l"
    EXACT_MATCH = "exact-match"
    EXTERNAL = "external"


@dataclass(frozen=True)
class MetricSpec:
    """A metric and, for external metrics, the command computing it."""

    name: str
    kind: MetricKind
    command: None | str = None

    def __post_init__(self) -> None:
        """Require a command exactly for external metrics."""
        if (self.kind is MetricKind.EXTERNAL) != bool(self.command):
            msg = f"metric '{self.name}' needs a command iff it is external"
            raise ValueError(msg)

    @classmethod
    def parse(cls, text: str) -> Self:
        """Parse `rouge-l`, `exact-match` or `external:<command>`."""
        if text.startswith(EXTERNAL_PREFIX):
            if not (command := text.removeprefix(EXTERNAL_PREFIX).strip()):
                msg = "external metric without a command"
                raise ConfigError(msg)
            return cls(text, MetricKind.EXTERNAL, command)
        try:
            kind = MetricKind(text)
        except ValueError:
            msg = (
                f"unknown metric '{text}', "
                "expected rouge-l, exact-match or external:<command>"
            )
            raise ConfigError(msg) from None
        if kind is MetricKind.EXTERNAL:
            msg = "external metric without a command"
            raise ConfigError(msg)
        return cls(text, kind)

    @property
    def description(self) -> str:
        """Human readable name, stating the ROUGE-L variant."""
        return ROUGE_L_DESCRIPTION if self.kind is MetricKind.ROUGE_L else self.name


def tokenize(text: str) -> list[str]:
    """Lowercase, drop punctuation and split on whitespace."""
    return text.lower().translate(_PUNCTUATION).split()


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Length of the longest common subsequence of two token lists."""
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(reference: str, prediction: str) -> float:
    """ROUGE-L F1 of `prediction` against `reference`."""
    ref = tokenize(reference)
    pred = tokenize(prediction)
    if not ref or not pred:
        return 0.0
    if (lcs := lcs_length(ref, pred)) == 0:
        return 0.0
    precision = lcs / len(pred)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def exact_match(reference: str, prediction: str) -> float:
    """1.0 if both agree after trimming and case-folding, else 0.0.

    A single-letter reference (a multiple-choice answer) is compared with the
    first standalone letter A to D of the prediction.
    """
    ref = reference.strip()
    pred = prediction.strip()
    if len(ref) == 1 and ref.upper() in "ABCD":
        if (m := _CHOICE.search(pred)) is not None:
            pred = m[1]
        elif len(pred) == 1:
            pred = pred.upper()
    return float(ref.casefold() == pred.casefold())


def external_metric(
    spec: MetricSpec, instance: Instance, timeout: None | float = None
) -> float:
    """Run the metric command of `spec` on one instance.

    The command reads the instance as a JSON object on stdin and prints one
    number, which is clamped to [0, 1]. A command that cannot be started or
    runs longer than `timeout` seconds fails like one exiting with an error.
    """
    if spec.command is None:
        msg = f"metric '{spec.name}' has no command"
        raise ValueError(msg)
    payload = json.dumps(
        {
            "id": instance.id,
            "input": instance.input,
            "reference": instance.reference,
            "prediction": instance.prediction,
        }
    )
    try:
        proc = subprocess.run(  # noqa: S603
            shlex.split(spec.command),
            input=payload,
            capture_output=True,
            text=True,
            timeout=timeout,
            check=False,
        )
    except subprocess.TimeoutExpired:
        err = CommandFailedError(None, f"no result after {timeout} seconds")
        err.add_note(f"instance '{instance.id}'")
        raise err from None
    except OSError as e:
        err = CommandFailedError(None, str(e))
        err.add_note(f"command: {spec.command}")
        raise err from e
    if proc.returncode != 0:
        err = CommandFailedError(proc.returncode, proc.stderr)
        err.add_note(f"instance '{instance.id}'")
        raise err
    try:
        value = float(proc.stdout.strip())
    except ValueError:
        raise UnparseableScoreError(proc.stdout) from None
    if not math.isfinite(value):
        raise UnparseableScoreError(proc.stdout)
    return min(1.0, max(0.0, value))


def score_instance(
    spec: MetricSpec, instance: Instance, timeout: None | float = None
) -> float:
    """Proficiency of the model on one instance."""
    if instance.prediction is None:
        raise MissingPredictionError(instance.id)
    match spec.kind:
        case MetricKind.ROUGE_L:
            return rouge_l(instance.reference, instance.prediction)
        case MetricKind.EXACT_MATCH:
            return exact_match(instance.reference, instance.prediction)
        case MetricKind.EXTERNAL:
            return external_metric(spec, instance, timeout)


def score_dataset(
    spec: MetricSpec, dataset: Dataset, timeout: None | float = None
) -> list[MetricScore]:
    """Apply the metric to every instance, in dataset order.

    `timeout` bounds each run of an external metric command, in seconds.
    """
    scores = [
        MetricScore(i.id, spec.name, score_instance(spec, i, timeout)) for i in dataset
    ]
    logger.info("scored %s predictions with %s", len(scores), spec.description)
    return scores


def overall_score(scores: Sequence[MetricScore]) -> float:
    """Mean of all scores."""
    if not scores:
        msg = "no metric scores to average"
        raise EmptyScoresError(msg)
    return math.fsum(s.value for s in scores) / len(scores)


def proficiency_breakdown(
    scores: Iterable[MetricScore], assign: AssignmentMatrix
) -> dict[str, float]:
    """Mean score of the instances assigned to each attribute.

    Attributes without assigned instances are left out.
    """
    by_id = {s.instance_id: s.value for s in scores}
    result = {}
    for name in assign.attributes:
        members = assign.members(name)
        if not members:
            continue
        values = []
        for id_ in members:
            if id_ not in by_id:
                raise MissingScoreError(id_)
            values.append(by_id[id_])
        result[name] = math.fsum(values) / len(values)
    return result


def _check_same_cells(gt: AffinityMatrix, pred: AffinityMatrix) -> None:
    if not gt.same_cells(pred):
        msg = (
            f"affinity matrices differ: {gt.shape} {gt.kind} scores vs "
            f"{pred.shape} {pred.kind} scores"
        )
        raise ShapeMismatchError(msg)


def calibration_distance(
    gt: AffinityMatrix, pred: AffinityMatrix, *, exclude_imputed: bool = False
) -> dict[str, float]:
    """Per attribute, the fraction of instances whose scores differ by more than 1.

    `gt` is scored on the references and `pred` on the predictions, lower is
    better. With `exclude_imputed`, cells imputed in either matrix are left
    out, and so are attributes with no cell left.
    """
    _check_same_cells(gt, pred)
    far = np.abs(gt.scores - pred.scores) > CALIBRATION_GAP
    counted = np.ones_like(far)
    if exclude_imputed:
        counted = ~(gt.imputed | pred.imputed)
    result = {}
    for j, name in enumerate(gt.attributes):
        if (total := int(counted[:, j].sum())) == 0:
            continue
        result[name] = int((far[:, j] & counted[:, j]).sum()) / total
    return result


def calibration_correlation(
    gt: AffinityMatrix, pred: AffinityMatrix
) -> dict[str, None | float]:
    """Pearson correlation of each attribute's reference and prediction scores.

    `None` where either column is constant.
    """
    _check_same_cells(gt, pred)
    result: dict[str, None | float] = {}
    for name in gt.attributes:
        a = gt.column(name).astype(np.float64)
        b = pred.column(name).astype(np.float64)
        if len(a) < 2 or a.std() == 0 or b.std() == 0:  # noqa: PLR2004
            result[name] = None
        else:
            result[name] = float(np.corrcoef(a, b)[0, 1])
    return result


def label_distribution(dataset: Dataset, key: str) -> dict[str, float]:
    """Share of each value of the metadata field `key`, sorted by label."""
    counts = Counter(i.metadata[key] for i in dataset if key in i.metadata)
    total = sum(counts.values())
    return {label: counts[label] / total for label in sorted(counts)}


def prior_alignment(
    attrs: AttributeSet, dataset: Dataset, key: str
) -> tuple[PriorAlignment, ...]:
    """Discovered priors next to the label shares annotated under `key`.

    Attributes come first in rank order, followed by labels that match no
    attribute.
    """
    shares = label_distribution(dataset, key)
    if not shares:
        logger.warning("no instance has a '%s' label", key)
    by_key = {name_key(label): label for label in shares}
    priors = attrs.prior_map()
    rows = []
    matched = set()
    for name in attrs.names:
        label = by_key.get(name_key(name))
        if label is not None:
            matched.add(label)
        share = None if label is None else shares[label]
        rows.append(PriorAlignment(name, share, priors.get(name)))
    rows.extend(
        PriorAlignment(label, share, None)
        for label, share in shares.items()
        if label not in matched
    )
    return tuple(rows)
