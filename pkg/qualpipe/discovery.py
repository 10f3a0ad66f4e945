"""Attribute discovery: propose candidates chunk by chunk, then prune to N."""

import logging
import math
import random
from collections.abc import Iterable
from dataclasses import dataclass
from typing import Self

from qualpipe.errors import (
    EmptyDatasetError,
    EvaluatorError,
    EvaluatorInventedAttributeError,
    EvaluatorUnparseableError,
    NoCandidatesError,
)
from qualpipe.gateway import Gateway
from qualpipe.model import AttributeSet, Dataset, Kind, name_key, normalize_name
from qualpipe.prompts import discovery_prompt, parse_numbered_list, prune_prompt

logger = logging.getLogger(__package__)

# reprompts after the first attempt
PARSE_RETRIES = 3


@dataclass(frozen=True)
class DiscoveryConfig:
    """Parameters of discovery for one attribute kind.

    `n_final` is the number of attributes kept, `prune_factor` how much each
    pruning round shrinks the list and `chunk_size` how many instances each
    discovery prompt shows. A `shuffle_seed` shuffles the instances before
    chunking, otherwise chunks are contiguous.
    """

    kind: Kind
    n_final: int = 15
    prune_factor: int = 4
    chunk_size: int = 5
    task: str = "generic"
    include_reference: bool = True
    shuffle_seed: None | int = None

    def __post_init__(self) -> None:
        """Check the parameter ranges."""
        if self.n_final < 1:
            msg = f"n_final must be at least 1, got {self.n_final}"
            raise ValueError(msg)
        if self.prune_factor < 2:  # noqa: PLR2004
            msg = f"prune_factor must be at least 2, got {self.prune_factor}"
            raise ValueError(msg)
        if self.chunk_size < 1:
            msg = f"chunk_size must be at least 1, got {self.chunk_size}"
            raise ValueError(msg)


@dataclass(frozen=True)
class CandidateList:
    """Normalized candidate names without case-insensitive duplicates."""

    names: tuple[str, ...]

    @classmethod
    def from_raw(cls, items: Iterable[str]) -> Self:
        """Normalize and deduplicate, keeping the first spelling."""
        seen = set()
        names = []
        for item in items:
            name = normalize_name(item)
            if name and (key := name_key(name)) not in seen:
                seen.add(key)
                names.append(name)
        return cls(tuple(names))

    def __len__(self) -> int:
        """Return the number of candidates."""
        return len(self.names)


def propose_candidates(
    dataset: Dataset, cfg: DiscoveryConfig, gateway: Gateway
) -> CandidateList:
    """Prompt for candidates on every chunk of `cfg.chunk_size` instances.

    A chunk whose answer contains no numbered list is reprompted up to
    `PARSE_RETRIES` times and then skipped.
    """
    if len(dataset) == 0:
        msg = "cannot discover attributes of an empty dataset"
        raise EmptyDatasetError(msg)
    instances = list(dataset)
    if cfg.shuffle_seed is not None:
        random.Random(cfg.shuffle_seed).shuffle(instances)
    k = cfg.chunk_size
    chunks = [instances[i : i + k] for i in range(0, len(instances), k)]
    logger.info("proposing %s with %s prompts", cfg.kind.plural, len(chunks))

    def request(index: int, attempt: int) -> str:
        prompt = discovery_prompt(
            cfg.kind,
            cfg.task,
            dataset.task_instruction,
            chunks[index],
            include_reference=cfg.include_reference,
            attempt=attempt,
        )
        return prompt

    parsed: dict[int, list[str]] = {}
    pending = list(range(len(chunks)))
    for attempt in range(PARSE_RETRIES + 1):
        if not pending:
            break
        reqs = [gateway.request(request(i, attempt)) for i in pending]
        for index, text in zip(pending, gateway.complete_batch(reqs), strict=True):
            if isinstance(text, EvaluatorError):
                raise text
            if items := parse_numbered_list(text):
                parsed[index] = items
        pending = [i for i in pending if i not in parsed]
    for index in pending:
        logger.warning("skipping chunk: %s", EvaluatorUnparseableError(index))

    cands = CandidateList.from_raw(
        item for index in sorted(parsed) for item in parsed[index]
    )
    if not cands.names:
        msg = f"no {cfg.kind} candidates in {len(chunks)} discovery answers"
        raise NoCandidatesError(msg)
    return cands


def pruning_schedule(m: int, n: int, p: int) -> list[int]:
    """List sizes from `m` candidates down to `n`, shrinking by `p` per round.

    A round never goes below `n`.
    """
    sizes = [m]
    while sizes[-1] > n:
        sizes.append(max(n, math.ceil(sizes[-1] / p)))
    return sizes


def _select(
    answer: list[str], current: list[str], size: int
) -> tuple[list[str], list[str]]:
    """Split an answer into the candidates it picks and the names it invented."""
    by_key = {name_key(c): c for c in current}
    picked: list[str] = []
    invented: list[str] = []
    for item in answer:
        match by_key.get(name_key(item)):
            case None:
                invented.append(item)
            case name if name not in picked:
                picked.append(name)
            case _:
                pass
    return picked[:size], invented


def _prune_round(
    current: list[str], size: int, cfg: DiscoveryConfig, gateway: Gateway, task: str
) -> list[str]:
    picked: list[str] = []
    for attempt in range(PARSE_RETRIES + 1):
        prompt = prune_prompt(cfg.kind, current, size, task, attempt)
        answer = parse_numbered_list(gateway.complete(gateway.request(prompt)))
        picked, invented = _select(answer, current, size)
        if not invented:
            break
        for name in invented:
            err = EvaluatorInventedAttributeError(name)
            logger.warning("%s (attempt %s)", err, attempt + 1)
    # fill up with the best ranked candidates that were not picked
    unused = (c for c in current if c not in picked)
    while len(picked) < size:
        picked.append(next(unused))
    return picked


def prune_candidates(
    cands: CandidateList, cfg: DiscoveryConfig, gateway: Gateway, task: str = ""
) -> AttributeSet:
    """Shrink the candidates to exactly `cfg.n_final` attributes.

    Every returned name is one of the candidates. With fewer candidates than
    `cfg.n_final` all of them are returned.
    """
    if not cands.names:
        msg = "no candidates to prune"
        raise ValueError(msg)
    current = list(cands.names)
    if len(current) < cfg.n_final:
        logger.warning(
            "too few %s candidates: %s < %s, keeping all",
            cfg.kind,
            len(current),
            cfg.n_final,
        )
        return AttributeSet.from_names(cfg.kind, current)
    sizes = pruning_schedule(len(current), cfg.n_final, cfg.prune_factor)
    for size in sizes[1:]:
        logger.info("pruning %s from %s to %s", cfg.kind.plural, len(current), size)
        current = _prune_round(current, size, cfg, gateway, task)
    return AttributeSet.from_names(cfg.kind, current)


def discover_attributes(
    dataset: Dataset, cfg: DiscoveryConfig, gateway: Gateway
) -> AttributeSet:
    """Propose candidates and prune them to `cfg.n_final` attributes."""
    cands = propose_candidates(dataset, cfg, gateway)
    logger.info("%s %s candidates proposed", len(cands), cfg.kind)
    return prune_candidates(cands, cfg, gateway, dataset.task_instruction)
