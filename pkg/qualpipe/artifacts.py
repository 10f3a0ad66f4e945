"""Reading and writing of datasets and stage artifacts.

Every artifact is JSON or JSONL and written atomically through a temporary
file in the target directory.
"""

import json
import tempfile
from collections.abc import Iterable, Iterator, Mapping, Sequence
from pathlib import Path

import numpy as np

from qualpipe.errors import DataError, EmptyDatasetError, MalformedRecordError
from qualpipe.model import (
    ROW_SUM,
    SCORE_MAX,
    SCORE_MIN,
    AffinityMatrix,
    AssignmentMatrix,
    AttributeSet,
    Dataset,
    Kind,
    LpBounds,
    MetricScore,
    Target,
    validate_dataset,
)

ATTRIBUTES_FILE = "attributes.json"
BOUNDS_FILE = "bounds.json"
SCORES_FILE = "scores.jsonl"
MANIFEST_FILE = "manifest.jsonl"


def write_atomic(path: Path, text: str) -> None:
    """Replace `path` with `text` in one step."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", newline="", dir=path.parent, delete=False, suffix=".tmp"
    ) as f:
        f.write(text)
    Path(f.name).replace(path)


def write_json(path: Path, data: object) -> None:
    """Write `data` as indented JSON."""
    write_atomic(path, json.dumps(data, indent=2) + "\n")


def write_jsonl(path: Path, rows: Iterable[Mapping[str, object]]) -> None:
    """Write one JSON object per line."""
    write_atomic(path, "".join(json.dumps(dict(r)) + "\n" for r in rows))


def read_jsonl(path: Path) -> Iterator[tuple[int, dict[str, object]]]:
    """Yield `(line, object)`-pairs of a JSONL file, skipping blank lines."""
    with path.open(encoding="utf-8") as f:
        for line, text in enumerate(f, 1):
            if not text.strip():
                continue
            try:
                record = json.loads(text)
            except json.JSONDecodeError as e:
                raise MalformedRecordError(str(path), line, e.msg) from e
            if not isinstance(record, dict):
                raise MalformedRecordError(str(path), line, "not a JSON object")
            yield line, record


def read_json(path: Path) -> dict[str, object]:
    """Read a JSON object."""
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise MalformedRecordError(str(path), e.lineno, e.msg) from e
    if not isinstance(data, dict):
        raise MalformedRecordError(str(path), 1, "not a JSON object")
    return data


def load_dataset(path: Path, task_instruction: str = "") -> Dataset:
    """Read a dataset of `{id, input, reference, prediction?, metadata?}` lines."""
    try:
        dataset = validate_dataset(read_jsonl(path), task_instruction)
    except DataError as e:
        e.add_note(f"while reading {path}")
        raise
    if len(dataset) == 0:
        msg = f"no instances in {path}"
        raise EmptyDatasetError(msg)
    return dataset


def read_pool_ids(path: Path) -> list[str]:
    """Ids of the records of a JSONL pool, in file order."""
    ids = []
    for line, record in read_jsonl(path):
        if (id_ := record.get("id")) is None:
            raise MalformedRecordError(str(path), line, "field 'id' missing")
        ids.append(str(id_))
    return ids


def save_attribute_sets(path: Path, sets: Iterable[AttributeSet]) -> None:
    """Write attribute sets, priors included once computed."""
    write_json(path, {"attribute_sets": [s.to_json() for s in sets]})


def load_attribute_sets(path: Path) -> dict[Kind, AttributeSet]:
    """Read attribute sets by kind."""
    sets = read_json(path).get("attribute_sets")
    if not isinstance(sets, list):
        raise MalformedRecordError(str(path), 1, "'attribute_sets' must be a list")
    try:
        parsed = [AttributeSet.from_json(s) for s in sets if isinstance(s, dict)]
    except (KeyError, ValueError) as e:
        raise MalformedRecordError(str(path), 1, str(e)) from e
    return {s.kind: s for s in parsed}


def affinity_path(out_dir: Path, target: Target, kind: Kind) -> Path:
    """Location of the affinity matrix of `kind` scored on `target`."""
    return out_dir / f"affinity_{target}_{kind}.jsonl"


def save_affinity(path: Path, aff: AffinityMatrix) -> None:
    """Write one row per instance."""
    write_jsonl(path, aff.rows())


def _int_list(value: object, m: int, what: str) -> list[int]:
    if not isinstance(value, list) or len(value) != m:
        msg = f"'{what}' must be a list of {m} values"
        raise ValueError(msg)
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        msg = f"'{what}' must hold integers"
        raise ValueError(msg)
    return value


def _affinity_row(
    record: Mapping[str, object], expected_id: str, kind: Kind, m: int
) -> tuple[list[int], list[None | str], list[bool]]:
    if record.get("id") != expected_id:
        msg = f"expected instance '{expected_id}', found {record.get('id')!r}"
        raise ValueError(msg)
    if record.get("kind") != str(kind):
        msg = f"expected kind '{kind}', found {record.get('kind')!r}"
        raise ValueError(msg)
    scores = _int_list(record.get("scores"), m, "scores")
    if not all(SCORE_MIN <= s <= SCORE_MAX for s in scores):
        msg = f"scores must be in [{SCORE_MIN}, {SCORE_MAX}]"
        raise ValueError(msg)
    evidence = record.get("evidence", [None] * m)
    if not isinstance(evidence, list) or len(evidence) != m:
        msg = f"'evidence' must be a list of {m} values"
        raise ValueError(msg)
    imputed = record.get("imputed", [False] * m)
    if not isinstance(imputed, list) or len(imputed) != m:
        msg = f"'imputed' must be a list of {m} values"
        raise ValueError(msg)
    ev = [None if e is None else str(e) for e in evidence]
    return scores, ev, [bool(x) for x in imputed]


def load_affinity(
    path: Path, attrs: AttributeSet, ids: Sequence[str], target: Target
) -> AffinityMatrix:
    """Read an affinity matrix, checking it against the instances and attributes."""
    m = len(attrs)
    scores, evidence, imputed = [], [], []
    last = 0
    for line, record in read_jsonl(path):
        last = line
        if len(scores) >= len(ids):
            raise MalformedRecordError(str(path), line, "more rows than instances")
        try:
            row = _affinity_row(record, ids[len(scores)], attrs.kind, m)
        except ValueError as e:
            raise MalformedRecordError(str(path), line, str(e)) from e
        scores.append(row[0])
        evidence.append(tuple(row[1]))
        imputed.append(row[2])
    if len(scores) != len(ids):
        reason = f"{len(scores)} rows for {len(ids)} instances"
        raise MalformedRecordError(str(path), last + 1, reason)
    return AffinityMatrix(
        attrs.kind,
        tuple(ids),
        attrs.names,
        np.array(scores, dtype=np.int64).reshape(len(ids), m),
        tuple(evidence),
        np.array(imputed, dtype=np.bool_).reshape(len(ids), m),
        target,
    )


def assignment_path(out_dir: Path, kind: Kind) -> Path:
    """Location of the assignment of `kind`."""
    return out_dir / f"assignments_{kind}.jsonl"


def save_assignment(path: Path, assign: AssignmentMatrix, aff: AffinityMatrix) -> None:
    """Write the assigned attribute names and their scores per instance."""
    rows = []
    for i, id_ in enumerate(assign.instance_ids):
        names = assign.attributes_of(i)
        rows.append(
            {
                "id": id_,
                "kind": str(assign.kind),
                "attributes": list(names),
                "scores": [int(aff.column(name)[i]) for name in names],
            }
        )
    write_jsonl(path, rows)


def save_bounds(path: Path, assignments: Iterable[AssignmentMatrix]) -> None:
    """Write bounds and objective of every assignment, by kind."""
    write_json(
        path,
        {
            str(a.kind): {
                "attributes": list(a.attributes),
                "bounds": a.bounds.to_json(),
                "objective": a.objective,
            }
            for a in assignments
        },
    )


def load_assignment(path: Path, bounds_path: Path, kind: Kind) -> AssignmentMatrix:
    """Read the assignment of `kind` together with its bounds."""
    entry = read_json(bounds_path).get(str(kind))
    if not isinstance(entry, dict):
        raise MalformedRecordError(str(bounds_path), 1, f"no '{kind}' entry")
    try:
        attributes = tuple(str(a) for a in entry["attributes"])
        bounds = LpBounds.from_json(entry["bounds"])
        objective = float(entry["objective"])
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedRecordError(str(bounds_path), 1, str(e)) from e
    column = {a: j for j, a in enumerate(attributes)}
    ids, rows = [], []
    for line, record in read_jsonl(path):
        names = record.get("attributes")
        if not isinstance(names, list) or len(names) != ROW_SUM:
            reason = f"'attributes' must list {ROW_SUM} names"
            raise MalformedRecordError(str(path), line, reason)
        row = np.zeros(len(attributes), dtype=np.int8)
        for name in names:
            if name not in column:
                reason = f"unknown {kind} '{name}'"
                raise MalformedRecordError(str(path), line, reason)
            row[column[name]] = 1
        ids.append(str(record.get("id")))
        rows.append(row)
    assign = np.array(rows, dtype=np.int8).reshape(len(ids), len(attributes))
    try:
        return AssignmentMatrix(kind, tuple(ids), attributes, assign, bounds, objective)
    except ValueError as e:
        raise MalformedRecordError(str(path), 1, str(e)) from e


def save_scores(path: Path, scores: Iterable[MetricScore]) -> None:
    """Write per-instance metric scores."""
    write_jsonl(path, (s.to_json() for s in scores))
