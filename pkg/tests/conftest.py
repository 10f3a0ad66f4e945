import hashlib
import re
from pathlib import Path

import numpy as np
import pytest

from qualpipe.artifacts import load_dataset
from qualpipe.gateway import (
    ChatRequest,
    Gateway,
    GatewayMode,
    ResponseCache,
    ScriptedTransport,
)
from qualpipe.model import AffinityMatrix, Dataset, Kind, Target

DATA = Path(__file__).parent / "data"
INSIGHT_TEXT = (DATA / "insight_example.txt").read_text(encoding="utf-8").strip()

DOMAIN_POOL = [
    "Biology",
    "Mathematics",
    "History",
    "Physics",
    "Chemistry",
    "Geography",
    "Literature",
    "Computer Science",
]
SUBTASK_POOL = [
    "Recall facts",
    "Arithmetic",
    "Eliminate distractors",
    "Read the question",
    "Apply formulas",
    "Compare options",
    "Interpret units",
    "Recognize names",
]
_NUMBERED = re.compile(r"^\d+\. (.+)$")


def _hash(text: str) -> int:
    return int(hashlib.sha256(text.encode()).hexdigest(), 16)


def _list_after(lines: list[str], header: str) -> list[str]:
    start = lines.index(header) + 1
    items = []
    for line in lines[start:]:
        if not (m := _NUMBERED.match(line)):
            break
        items.append(m[1])
    return items


def fake_evaluator(req: ChatRequest) -> str:
    """Deterministic answers for every kind of prompt the pipeline sends."""
    prompt = req.prompt
    lines = prompt.splitlines()
    if "Rate on a scale of 1-5" in prompt:
        label = "Domain" if "Domains:" in lines else "Subtask"
        names = _list_after(lines, f"{label}s:")
        cells = [
            f"[{label} {n}: {name}, Score: {1 + _hash(prompt + name) % 5}, "
            f"Evidence: mentions {name.lower()}]"
            for n, name in enumerate(names, 1)
        ]
        return " ".join(cells)
    if "Candidates:" in prompt:
        names = _list_after(lines, "Candidates:")
        size = int(re.search(r"Select the (\d+) best", prompt)[1])
        return "\n".join(f"{n}. {name}" for n, name in enumerate(names[:size], 1))
    if "Examples:" in prompt:
        domain = "relevant domains" in prompt
        pool = DOMAIN_POOL if domain else SUBTASK_POOL
        offset = _hash(prompt) % len(pool)
        picked = [pool[(offset + k) % len(pool)] for k in range(5)]
        if domain:
            return "\n".join(
                f"{n}. {name}: questions about {name.lower()}"
                for n, name in enumerate(picked, 1)
            )
        return "\n".join(f"{n}. Subtask: {name}" for n, name in enumerate(picked, 1))
    return INSIGHT_TEXT


@pytest.fixture
def toy_path() -> Path:
    return DATA / "toy.jsonl"


@pytest.fixture
def toy(toy_path) -> Dataset:
    return load_dataset(toy_path, "Answer the multiple choice question.")


@pytest.fixture
def transport():
    return ScriptedTransport(fake_evaluator)


@pytest.fixture
def gateway(tmp_path, transport) -> Gateway:
    return Gateway(GatewayMode.CACHED, ResponseCache(tmp_path / "cache"), transport)


@pytest.fixture
def affinity():
    """Build an affinity matrix from a list of score rows."""

    def make(
        scores,
        kind=Kind.SUBTASK,
        target=Target.INPUT,
        names=None,
        imputed=None,
    ) -> AffinityMatrix:
        arr = np.array(scores, dtype=np.int64)
        n, m = arr.shape
        return AffinityMatrix(
            kind,
            tuple(f"i{i}" for i in range(n)),
            tuple(names or (f"a{j}" for j in range(m))),
            arr,
            tuple((None,) * m for _ in range(n)),
            np.zeros((n, m), dtype=bool) if imputed is None else np.array(imputed),
            target,
        )

    return make
