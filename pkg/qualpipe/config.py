"""Run configuration: TOML file < `QUALPIPE_<KEY>` environment < flags."""

import dataclasses
import hashlib
import logging
import tomllib
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from pathlib import Path

from qualpipe.augment import DEFAULT_BUDGET
from qualpipe.errors import ConfigError
from qualpipe.gateway import DEFAULT_MODEL, DEFAULT_TEMPERATURE, GatewayMode
from qualpipe.metrics import MetricSpec
from qualpipe.model import ROW_SUM, Target
from qualpipe.prompts import TASK_FAMILIES
from qualpipe.scoring import PriorMethod

logger = logging.getLogger(__package__)

ENV_PREFIX = "QUALPIPE_"
MIN_PRUNE_FACTOR = 2
# how a run executes, not what it computes; left out of the recorded run config
_OPERATIONAL = frozenset(
    {"out_dir", "cache_dir", "mode", "parallelism", "metric_timeout"}
)


@dataclass(frozen=True)
class Config:
    """Every setting of a run, with defaults."""

    dataset: None | Path = None
    attributes: None | Path = None
    out_dir: Path = Path("qualpipe-out")
    cache_dir: Path = Path(".qualpipe-cache")
    pool: None | Path = None
    mode: GatewayMode = GatewayMode.CACHED
    base_url: str = "https://api.openai.com/v1"
    model: str = DEFAULT_MODEL
    temperature: float = DEFAULT_TEMPERATURE
    parallelism: int = 4
    n_attributes: int = 15
    prune_factor: int = 4
    chunk_size: int = 5
    shuffle_chunks: bool = False
    discovery_with_reference: bool = True
    task: str = "generic"
    task_instruction: str = ""
    epsilon: float = 0.1
    prior_method: PriorMethod = PriorMethod.AFFINITY_MASS
    metric: str = "rouge-l"
    metric_timeout: float = 60.0
    exclude_imputed: bool = False
    combined_insights: bool = True
    top_k: int = 5
    seed: int = 0
    target: Target = Target.INPUT
    domains: tuple[str, ...] = ()
    budget: int = DEFAULT_BUDGET
    allow_backfill: bool = False
    label_key: None | str = None

    def __post_init__(self) -> None:
        """Check value ranges."""
        checks = [
            (0.0 <= self.epsilon < 1.0, f"epsilon must be in [0, 1): {self.epsilon}"),
            (
                0.0 <= self.temperature <= 2.0,  # noqa: PLR2004
                f"temperature must be in [0, 2]: {self.temperature}",
            ),
            (self.parallelism >= 1, "parallelism must be at least 1"),
            (
                self.n_attributes >= ROW_SUM,
                f"n_attributes must be at least {ROW_SUM}: {self.n_attributes}",
            ),
            (self.prune_factor >= MIN_PRUNE_FACTOR, "prune_factor must be at least 2"),
            (self.chunk_size >= 1, "chunk_size must be at least 1"),
            (self.metric_timeout > 0, "metric_timeout must be positive"),
            (self.top_k >= 1, "top_k must be at least 1"),
            (self.budget >= 0, "budget must not be negative"),
            (
                self.task in TASK_FAMILIES,
                f"task must be one of {', '.join(TASK_FAMILIES)}: {self.task}",
            ),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        MetricSpec.parse(self.metric)

    @property
    def metric_spec(self) -> MetricSpec:
        """The parsed metric."""
        return MetricSpec.parse(self.metric)

    def snapshot(self) -> dict[str, object]:
        """JSON-able settings that determine the results of a run."""
        data: dict[str, object] = {}
        for f in dataclasses.fields(self):
            if f.name in _OPERATIONAL:
                continue
            value = getattr(self, f.name)
            match value:
                case Path():
                    data[f.name] = value.as_posix()
                case tuple():
                    data[f.name] = list(value)
                case _:
                    data[f.name] = value
        return data


def derive_seed(seed: int, label: str) -> int:
    """Sub-seed of `seed` for the stage named `label`."""
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _to_bool(value: object) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in {"1", "true", "yes", "on"}:
        return True
    if isinstance(value, str) and value.lower() in {"0", "false", "no", "off"}:
        return False
    msg = f"not a boolean: {value!r}"
    raise ValueError(msg)


def _to_int(value: object) -> int:
    if isinstance(value, bool) or not isinstance(value, int | str):
        msg = f"not an integer: {value!r}"
        raise ValueError(msg)
    return int(value)


def _to_float(value: object) -> float:
    if isinstance(value, bool) or not isinstance(value, int | float | str):
        msg = f"not a number: {value!r}"
        raise ValueError(msg)
    return float(value)


def _to_str(value: object) -> str:
    if not isinstance(value, str):
        msg = f"not a string: {value!r}"
        raise ValueError(msg)
    return value


def _to_path(value: object) -> Path:
    return value if isinstance(value, Path) else Path(_to_str(value))


def _to_names(value: object) -> tuple[str, ...]:
    match value:
        case str():
            items = value.split(",")
        case list() | tuple():
            items = [_to_str(v) for v in value]
        case _:
            msg = f"not a list of names: {value!r}"
            raise ValueError(msg)
    return tuple(n.strip() for n in items if n.strip())


_CONVERTERS: dict[str, Callable[[object], object]] = {
    "dataset": _to_path,
    "attributes": _to_path,
    "out_dir": _to_path,
    "cache_dir": _to_path,
    "pool": _to_path,
    "mode": lambda v: GatewayMode(_to_str(v)),
    "base_url": _to_str,
    "model": _to_str,
    "temperature": _to_float,
    "parallelism": _to_int,
    "n_attributes": _to_int,
    "prune_factor": _to_int,
    "chunk_size": _to_int,
    "shuffle_chunks": _to_bool,
    "discovery_with_reference": _to_bool,
    "task": _to_str,
    "task_instruction": _to_str,
    "epsilon": _to_float,
    "prior_method": lambda v: PriorMethod(_to_str(v)),
    "metric": _to_str,
    "metric_timeout": _to_float,
    "exclude_imputed": _to_bool,
    "combined_insights": _to_bool,
    "top_k": _to_int,
    "seed": _to_int,
    "target": lambda v: Target(_to_str(v)),
    "domains": _to_names,
    "budget": _to_int,
    "allow_backfill": _to_bool,
    "label_key": _to_str,
}


def _convert(key: str, value: object, source: str) -> object:
    if key not in _CONVERTERS:
        msg = f"unknown setting '{key}' in {source}"
        raise ConfigError(msg)
    try:
        return _CONVERTERS[key](value)
    except (TypeError, ValueError) as e:
        msg = f"invalid '{key}' in {source}: {e}"
        raise ConfigError(msg) from e


def _read_file(path: Path) -> dict[str, object]:
    try:
        with path.open("rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        msg = f"config file not found: {path}"
        raise ConfigError(msg) from None
    except tomllib.TOMLDecodeError as e:
        msg = f"invalid config file {path}: {e}"
        raise ConfigError(msg) from e
    return {k.replace("-", "_"): v for k, v in data.items()}


def load_config(
    path: None | Path = None,
    env: None | Mapping[str, str] = None,
    overrides: None | Mapping[str, object] = None,
) -> Config:
    """Resolve the configuration, later layers winning.

    `overrides` are the command-line flags; `None` values are skipped.
    """
    values: dict[str, object] = {}
    if path is not None:
        for key, value in _read_file(path).items():
            values[key] = _convert(key, value, str(path))
    for key in _CONVERTERS:
        if (value := (env or {}).get(ENV_PREFIX + key.upper())) is not None:
            values[key] = _convert(key, value, ENV_PREFIX + key.upper())
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _convert(key, value, f"--{key.replace('_', '-')}")
    cfg = Config(**values)  # type: ignore[arg-type]
    logger.info("configuration: %s", cfg.snapshot())
    return cfg
