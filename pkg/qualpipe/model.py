"""Value types shared by all stages of the pipeline.

All types are immutable after construction. Matrices are numpy arrays that are
copied on construction and marked read-only.
"""

import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Self

import numpy as np

from qualpipe.errors import (
    DataError,
    DuplicateIdError,
    EmptyInputError,
    MissingFieldError,
    MissingPredictionError,
    ShapeMismatchError,
    UnknownAttributeError,
)

# every instance is assigned this many attributes of each kind
ROW_SUM = 2
SCORE_MIN = 1
SCORE_MAX = 5
PRIOR_TOLERANCE = 1e-9


class Kind(StrEnum):
    """Attribute kind: a domain of the data or a sub-task needed to solve it."""

    DOMAIN = "domain"
    SUBTASK = "subtask"

    @property
    def label(self) -> str:
        """Capitalized singular used in prompts and headings."""
        return "Domain" if self is Kind.DOMAIN else "Subtask"

    @property
    def plural(self) -> str:
        """Lowercase plural used in prose."""
        return "domains" if self is Kind.DOMAIN else "sub-tasks"


class Target(StrEnum):
    """The text of an instance that is scored against the attributes."""

    INPUT = "input"
    REFERENCE = "reference"
    PREDICTION = "prediction"


def normalize_name(name: str) -> str:
    """Trim and collapse whitespace."""
    return " ".join(name.split())


def name_key(name: str) -> str:
    """Key under which two attribute names are considered the same."""
    return normalize_name(name).casefold()


def _require_str(record: Mapping[str, object], field_name: str, line: int) -> str:
    if (value := record.get(field_name)) is None:
        raise MissingFieldError(field_name, line)
    if field_name == "id" and isinstance(value, int) and not isinstance(value, bool):
        value = str(value)
    if not isinstance(value, str):
        msg = f"line {line}: field '{field_name}' must be a string"
        raise DataError(msg)
    return value


@dataclass(frozen=True)
class Instance:
    """One dataset record.

    `input` and `reference` are the task input and the ground truth output,
    `prediction` is the output of the model under evaluation (if available).
    """

    id: str
    input: str
    reference: str
    prediction: None | str = None
    metadata: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_record(cls, record: Mapping[str, object], line: int) -> Self:
        """Parse from a decoded JSONL record, `line` is used in error messages."""
        id_ = _require_str(record, "id", line)
        if not id_:
            raise MissingFieldError("id", line)
        input_ = _require_str(record, "input", line)
        reference = _require_str(record, "reference", line)
        prediction = record.get("prediction")
        if prediction is not None and not isinstance(prediction, str):
            msg = f"line {line}: field 'prediction' must be a string"
            raise DataError(msg)
        metadata = record.get("metadata") or {}
        if not isinstance(metadata, Mapping):
            msg = f"line {line}: field 'metadata' must be an object"
            raise DataError(msg)
        meta = {str(k): str(v) for k, v in metadata.items()}
        return cls(id_, input_, reference, prediction, meta)

    def to_record(self) -> dict[str, object]:
        """Encode as a JSONL record."""
        record: dict[str, object] = {
            "id": self.id,
            "input": self.input,
            "reference": self.reference,
        }
        if self.prediction is not None:
            record["prediction"] = self.prediction
        if self.metadata:
            record["metadata"] = dict(self.metadata)
        return record

    def text(self, target: Target) -> str:
        """Text of the instance that `target` refers to."""
        match target:
            case Target.INPUT:
                return self.input
            case Target.REFERENCE:
                return self.reference
            case Target.PREDICTION:
                if self.prediction is None:
                    raise MissingPredictionError(self.id)
                return self.prediction


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of instances with unique ids."""

    instances: tuple[Instance, ...]
    task_instruction: str = ""

    def __post_init__(self) -> None:
        """Enforce unique ids and non-empty inputs."""
        object.__setattr__(self, "instances", tuple(self.instances))
        seen: set[str] = set()
        for inst in self.instances:
            if inst.id in seen:
                raise DuplicateIdError(inst.id)
            if not inst.input.strip():
                raise EmptyInputError(inst.id)
            seen.add(inst.id)

    def __len__(self) -> int:
        """Return the number of instances."""
        return len(self.instances)

    def __iter__(self) -> Iterator[Instance]:
        """Iterate over the instances in insertion order."""
        return iter(self.instances)

    @property
    def ids(self) -> tuple[str, ...]:
        """Instance ids in order."""
        return tuple(i.id for i in self.instances)

    @property
    def has_predictions(self) -> bool:
        """Whether every instance carries a prediction."""
        return len(self) > 0 and all(i.prediction is not None for i in self.instances)


def validate_dataset(
    raw_records: Iterable[tuple[int, Mapping[str, object]]],
    task_instruction: str = "",
) -> Dataset:
    """Build a dataset from `(line, record)`-pairs, keeping their order."""
    instances = [Instance.from_record(rec, line) for line, rec in raw_records]
    return Dataset(tuple(instances), task_instruction)


@dataclass(frozen=True)
class Attribute:
    """A discovered domain or sub-task, with its prior once computed."""

    name: str
    kind: Kind
    prior: None | float = None

    def __post_init__(self) -> None:
        """Check that the name is non-empty and the prior is a probability."""
        if not self.name.strip():
            msg = f"empty {self.kind} name"
            raise DataError(msg)
        if self.prior is not None and not 0.0 <= self.prior <= 1.0:
            msg = f"prior of '{self.name}' is not a probability: {self.prior}"
            raise DataError(msg)


@dataclass(frozen=True)
class AttributeSet:
    """The attributes of one kind, in rank order."""

    kind: Kind
    attributes: tuple[Attribute, ...]

    def __post_init__(self) -> None:
        """Check kinds, unique names and that priors (if set) sum to one."""
        object.__setattr__(self, "attributes", tuple(self.attributes))
        keys = set()
        for a in self.attributes:
            if a.kind is not self.kind:
                msg = f"attribute '{a.name}' is a {a.kind}, expected {self.kind}"
                raise DataError(msg)
            if (key := name_key(a.name)) in keys:
                msg = f"duplicate {self.kind} '{a.name}'"
                raise DataError(msg)
            keys.add(key)
        priors = [a.prior for a in self.attributes]
        if any(p is None for p in priors) and any(p is not None for p in priors):
            msg = f"priors set for only some {self.kind.plural}"
            raise DataError(msg)
        if self.attributes and priors[0] is not None:
            total = math.fsum(p for p in priors if p is not None)
            if abs(total - 1.0) > PRIOR_TOLERANCE:
                msg = f"{self.kind} priors sum to {total}, not 1"
                raise DataError(msg)

    @classmethod
    def from_names(cls, kind: Kind, names: Iterable[str]) -> Self:
        """Construct without priors."""
        return cls(kind, tuple(Attribute(normalize_name(n), kind) for n in names))

    def __len__(self) -> int:
        """Return the number of attributes."""
        return len(self.attributes)

    @property
    def names(self) -> tuple[str, ...]:
        """Attribute names in rank order."""
        return tuple(a.name for a in self.attributes)

    @property
    def has_priors(self) -> bool:
        """Whether priors have been computed."""
        return bool(self.attributes) and self.attributes[0].prior is not None

    def index(self, name: str) -> int:
        """Position of the attribute called `name`."""
        key = name_key(name)
        for j, a in enumerate(self.attributes):
            if name_key(a.name) == key:
                return j
        raise UnknownAttributeError(name)

    def with_priors(self, priors: Sequence[float]) -> Self:
        """Copy with priors set, in attribute order."""
        if len(priors) != len(self.attributes):
            msg = f"{len(priors)} priors for {len(self.attributes)} {self.kind.plural}"
            raise ShapeMismatchError(msg)
        attrs = (
            Attribute(a.name, a.kind, float(p))
            for a, p in zip(self.attributes, priors, strict=True)
        )
        return type(self)(self.kind, tuple(attrs))

    def prior_map(self) -> dict[str, float]:
        """Map from name to prior (empty if priors are not set)."""
        return {a.name: a.prior for a in self.attributes if a.prior is not None}

    def to_json(self) -> dict[str, object]:
        """Encode as a JSON object."""
        data: dict[str, object] = {"kind": str(self.kind), "names": list(self.names)}
        if self.has_priors:
            data["priors"] = [a.prior for a in self.attributes]
        return data

    @classmethod
    def from_json(cls, data: Mapping[str, object]) -> Self:
        """Decode from a JSON object."""
        kind = Kind(str(data["kind"]))
        names = data.get("names")
        if not isinstance(names, list):
            msg = f"{kind} attribute set without 'names'"
            raise DataError(msg)
        attrs = cls.from_names(kind, [str(n) for n in names])
        if isinstance(priors := data.get("priors"), list):
            return attrs.with_priors([float(p) for p in priors])
        return attrs


@dataclass(frozen=True)
class LpBounds:
    """Integer bounds on the number of instances assigned to each attribute.

    `epsilon` is the slack the bounds were computed with (possibly widened from
    `requested_epsilon`).
    """

    lower: tuple[int, ...]
    upper: tuple[int, ...]
    epsilon: float
    requested_epsilon: None | float = None

    def __post_init__(self) -> None:
        """Check that each bound pair is ordered and non-negative."""
        object.__setattr__(self, "lower", tuple(int(x) for x in self.lower))
        object.__setattr__(self, "upper", tuple(int(x) for x in self.upper))
        if self.requested_epsilon is None:
            object.__setattr__(self, "requested_epsilon", self.epsilon)
        if len(self.lower) != len(self.upper):
            msg = f"{len(self.lower)} lower and {len(self.upper)} upper bounds"
            raise ValueError(msg)
        for lo, up in zip(self.lower, self.upper, strict=True):
            if not 0 <= lo <= up:
                msg = f"invalid bounds [{lo}, {up}]"
                raise ValueError(msg)

    def is_feasible(self, n_instances: int) -> bool:
        """Whether the bound sums admit exactly `ROW_SUM` attributes per instance."""
        total = ROW_SUM * n_instances
        capped = sum(min(u, n_instances) for u in self.upper)
        fits = all(lo <= n_instances for lo in self.lower)
        return fits and sum(self.lower) <= total <= capped

    def to_json(self) -> dict[str, object]:
        """Encode as a JSON object."""
        return {
            "lower": list(self.lower),
            "upper": list(self.upper),
            "epsilon": self.epsilon,
            "requested_epsilon": self.requested_epsilon,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, object]) -> Self:
        """Decode from a JSON object."""
        lower = data["lower"]
        upper = data["upper"]
        if not isinstance(lower, list) or not isinstance(upper, list):
            msg = "bounds must hold 'lower' and 'upper' lists"
            raise DataError(msg)
        requested = data.get("requested_epsilon")
        return cls(
            tuple(int(x) for x in lower),
            tuple(int(x) for x in upper),
            float(str(data["epsilon"])),
            None if requested is None else float(str(requested)),
        )


def _as_matrix(values: object, shape: tuple[int, int], dtype: type) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if arr.size == 0 and shape[0] * shape[1] == 0:
        arr = arr.reshape(shape)
    if arr.shape != shape:
        msg = f"matrix has shape {arr.shape}, expected {shape}"
        raise ShapeMismatchError(msg)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class AffinityMatrix:
    """Evaluator scores (1-5) of every instance against every attribute of a kind.

    `imputed[i, j]` is set when the score was filled in rather than parsed.
    """

    kind: Kind
    instance_ids: tuple[str, ...]
    attributes: tuple[str, ...]
    scores: np.ndarray
    evidence: tuple[tuple[None | str, ...], ...]
    imputed: np.ndarray
    target: Target = Target.INPUT

    def __post_init__(self) -> None:
        """Copy the matrices and check shapes and the score range."""
        object.__setattr__(self, "instance_ids", tuple(self.instance_ids))
        object.__setattr__(self, "attributes", tuple(self.attributes))
        shape = (len(self.instance_ids), len(self.attributes))
        scores = _as_matrix(self.scores, shape, np.int64)
        if scores.size and (scores.min() < SCORE_MIN or scores.max() > SCORE_MAX):
            msg = f"affinity scores must be in [{SCORE_MIN}, {SCORE_MAX}]"
            raise DataError(msg)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "imputed", _as_matrix(self.imputed, shape, np.bool_))
        evidence = tuple(tuple(row) for row in self.evidence)
        if len(evidence) != shape[0] or any(len(r) != shape[1] for r in evidence):
            msg = "evidence does not match the score matrix"
            raise ShapeMismatchError(msg)
        object.__setattr__(self, "evidence", evidence)

    @property
    def shape(self) -> tuple[int, int]:
        """(instances, attributes)."""
        return (len(self.instance_ids), len(self.attributes))

    def column(self, name: str) -> np.ndarray:
        """Scores of all instances for one attribute."""
        try:
            return self.scores[:, self.attributes.index(name)]
        except ValueError:
            raise UnknownAttributeError(name) from None

    def rows(self) -> Iterator[dict[str, object]]:
        """Encode as JSONL rows, one per instance."""
        for i, id_ in enumerate(self.instance_ids):
            yield {
                "id": id_,
                "kind": str(self.kind),
                "scores": [int(s) for s in self.scores[i]],
                "evidence": list(self.evidence[i]),
                "imputed": [bool(x) for x in self.imputed[i]],
            }

    def same_cells(self, other: "AffinityMatrix") -> bool:
        """Whether both matrices cover the same instances and attributes."""
        return (
            self.kind is other.kind
            and self.instance_ids == other.instance_ids
            and self.attributes == other.attributes
        )


def assignment_violations(
    assign: np.ndarray, lower: Sequence[int], upper: Sequence[int]
) -> list[str]:
    """List every violated assignment constraint (empty if none)."""
    problems = []
    if assign.size and not np.isin(assign, (0, 1)).all():
        problems.append("assignment is not binary")
    for i, total in enumerate(assign.sum(axis=1)):
        if total != ROW_SUM:
            problems.append(f"row {i} sums to {int(total)}, not {ROW_SUM}")
    for j, total in enumerate(assign.sum(axis=0)):
        if not lower[j] <= total <= upper[j]:
            problems.append(
                f"column {j} sums to {int(total)}, outside [{lower[j]}, {upper[j]}]"
            )
    return problems


@dataclass(frozen=True, eq=False)
class AssignmentMatrix:
    """Binary instance-by-attribute assignment satisfying the bounds."""

    kind: Kind
    instance_ids: tuple[str, ...]
    attributes: tuple[str, ...]
    assign: np.ndarray
    bounds: LpBounds
    objective: float

    def __post_init__(self) -> None:
        """Copy the matrix and refuse any constraint violation."""
        object.__setattr__(self, "instance_ids", tuple(self.instance_ids))
        object.__setattr__(self, "attributes", tuple(self.attributes))
        shape = (len(self.instance_ids), len(self.attributes))
        assign = _as_matrix(self.assign, shape, np.int8)
        if len(self.bounds.lower) != shape[1]:
            msg = f"{len(self.bounds.lower)} bounds for {shape[1]} attributes"
            raise ShapeMismatchError(msg)
        if problems := assignment_violations(
            assign, self.bounds.lower, self.bounds.upper
        ):
            raise ValueError("; ".join(problems[:5]))
        object.__setattr__(self, "assign", assign)

    @property
    def epsilon_used(self) -> float:
        """Slack at which the assignment problem was feasible."""
        return self.bounds.epsilon

    def column_counts(self) -> dict[str, int]:
        """Number of instances assigned to each attribute."""
        counts = self.assign.sum(axis=0)
        return {a: int(c) for a, c in zip(self.attributes, counts, strict=True)}

    def members(self, name: str) -> tuple[str, ...]:
        """Ids of the instances assigned to `name`."""
        try:
            j = self.attributes.index(name)
        except ValueError:
            raise UnknownAttributeError(name) from None
        rows = np.flatnonzero(self.assign[:, j])
        return tuple(self.instance_ids[i] for i in rows)

    def attributes_of(self, row: int) -> tuple[str, ...]:
        """Names of the attributes assigned to the instance at `row`."""
        return tuple(self.attributes[j] for j in np.flatnonzero(self.assign[row]))


@dataclass(frozen=True)
class MetricScore:
    """Proficiency of the model on one instance, in [0, 1]."""

    instance_id: str
    metric_name: str
    value: float

    def __post_init__(self) -> None:
        """Check the range."""
        if not 0.0 <= self.value <= 1.0:
            msg = f"{self.metric_name} of '{self.instance_id}' outside [0, 1]"
            raise DataError(msg)

    def to_json(self) -> dict[str, object]:
        """Encode as a JSONL row."""
        return {"id": self.instance_id, "metric": self.metric_name, "value": self.value}


@dataclass(frozen=True)
class QualitativeSample:
    """A (instance, sub-task) cell where reference and prediction disagree."""

    instance_id: str
    attribute: str
    gt_score: int
    pred_score: int

    @property
    def gap(self) -> int:
        """Absolute affinity difference."""
        return abs(self.gt_score - self.pred_score)

    def to_json(self) -> dict[str, object]:
        """Encode as a JSON object."""
        return {
            "id": self.instance_id,
            "attribute": self.attribute,
            "gt_score": self.gt_score,
            "pred_score": self.pred_score,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, object]) -> Self:
        """Decode from a JSON object."""
        return cls(
            str(data["id"]),
            str(data["attribute"]),
            int(str(data["gt_score"])),
            int(str(data["pred_score"])),
        )


@dataclass(frozen=True)
class PriorAlignment:
    """Share of a label in annotated data next to the discovered prior."""

    label: str
    ground_truth: None | float
    discovered: None | float

    def to_json(self) -> dict[str, object]:
        """Encode as a JSON object."""
        return {
            "label": self.label,
            "ground_truth": self.ground_truth,
            "discovered": self.discovered,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, object]) -> Self:
        """Decode from a JSON object."""
        gt = data.get("ground_truth")
        disc = data.get("discovered")
        return cls(
            str(data["label"]),
            None if gt is None else float(str(gt)),
            None if disc is None else float(str(disc)),
        )


def _check_unit(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        msg = f"{name} is outside [0, 1]: {value}"
        raise DataError(msg)


def _float_map(data: object) -> dict[str, float]:
    if not isinstance(data, Mapping):
        msg = "expected a JSON object of numbers"
        raise DataError(msg)
    return {str(k): float(v) for k, v in data.items()}


@dataclass(frozen=True)
class EvalReport:
    """Everything the dashboard shows, for one run."""

    metric_name: str
    overall: float
    attribute_sets: Mapping[Kind, AttributeSet]
    proficiency: Mapping[Kind, Mapping[str, float]]
    calibration: None | Mapping[str, float] = None
    calibration_correlation: None | Mapping[str, None | float] = None
    insights: None | str = None
    qualitative_samples: tuple[QualitativeSample, ...] = ()
    prior_alignment: tuple[PriorAlignment, ...] = ()
    run_config: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Check ranges and that every referenced attribute exists."""
        object.__setattr__(self, "qualitative_samples", tuple(self.qualitative_samples))
        object.__setattr__(self, "prior_alignment", tuple(self.prior_alignment))
        _check_unit("overall score", self.overall)
        names = {k: set(s.names) for k, s in self.attribute_sets.items()}
        for kind, values in self.proficiency.items():
            for name, value in values.items():
                if name not in names.get(kind, set()):
                    raise UnknownAttributeError(name)
                _check_unit(f"proficiency of '{name}'", value)
        subtasks = names.get(Kind.SUBTASK, set())
        for name, value in (self.calibration or {}).items():
            if name not in subtasks:
                raise UnknownAttributeError(name)
            _check_unit(f"calibration distance of '{name}'", value)
        for sample in self.qualitative_samples:
            if sample.attribute not in subtasks:
                raise UnknownAttributeError(sample.attribute)

    def to_json(self) -> dict[str, object]:
        """Encode as a JSON object."""
        return {
            "metric": self.metric_name,
            "overall": self.overall,
            "attribute_sets": [s.to_json() for s in self.attribute_sets.values()],
            "proficiency": {str(k): dict(v) for k, v in self.proficiency.items()},
            "calibration": None if self.calibration is None else dict(self.calibration),
            "calibration_correlation": (
                None
                if self.calibration_correlation is None
                else dict(self.calibration_correlation)
            ),
            "insights": self.insights,
            "qualitative_samples": [s.to_json() for s in self.qualitative_samples],
            "prior_alignment": [p.to_json() for p in self.prior_alignment],
            "run_config": dict(self.run_config),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, object]) -> Self:
        """Decode from a JSON object."""
        sets = [AttributeSet.from_json(s) for s in _as_list(data["attribute_sets"])]
        prof = data["proficiency"]
        if not isinstance(prof, Mapping):
            msg = "'proficiency' must be an object"
            raise DataError(msg)
        calibration = data.get("calibration")
        correlation = data.get("calibration_correlation")
        run_config = data.get("run_config") or {}
        insights = data.get("insights")
        return cls(
            metric_name=str(data["metric"]),
            overall=float(str(data["overall"])),
            attribute_sets={s.kind: s for s in sets},
            proficiency={Kind(k): _float_map(v) for k, v in prof.items()},
            calibration=None if calibration is None else _float_map(calibration),
            calibration_correlation=(
                None
                if not isinstance(correlation, Mapping)
                else {
                    str(k): None if v is None else float(v)
                    for k, v in correlation.items()
                }
            ),
            insights=None if insights is None else str(insights),
            qualitative_samples=tuple(
                QualitativeSample.from_json(s)
                for s in _as_list(data.get("qualitative_samples", []))
            ),
            prior_alignment=tuple(
                PriorAlignment.from_json(p)
                for p in _as_list(data.get("prior_alignment", []))
            ),
            run_config=dict(run_config) if isinstance(run_config, Mapping) else {},
        )


def _as_list(data: object) -> list[Mapping[str, object]]:
    if not isinstance(data, list):
        msg = "expected a JSON list"
        raise DataError(msg)
    return [d for d in data if isinstance(d, Mapping)]
