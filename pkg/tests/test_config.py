from pathlib import Path

import pytest

from qualpipe.config import Config, derive_seed, load_config
from qualpipe.errors import ConfigError
from qualpipe.gateway import GatewayMode, ScriptedTransport
from qualpipe.metrics import MetricKind
from qualpipe.model import Target
from qualpipe.pipeline import make_gateway


@pytest.fixture
def config_file(tmp_path) -> Path:
    path = tmp_path / "qualpipe.toml"
    path.write_text(
        "\n".join(
            [
                'dataset = "data/run.jsonl"',
                "epsilon = 0.2",
                "seed = 3",
                'metric = "exact-match"',
                'domains = ["Biology", "History"]',
                "n-attributes = 8",
            ]
        ),
        encoding="utf-8",
    )
    return path


def test_defaults():
    """Nothing given, nothing changed."""
    cfg = load_config()
    assert cfg == Config()
    assert cfg.mode is GatewayMode.CACHED
    assert cfg.target is Target.INPUT
    assert cfg.metric_spec.kind is MetricKind.ROUGE_L


def test_layers_override_in_order(config_file):
    """Flags beat the environment, which beats the file."""
    env = {"QUALPIPE_EPSILON": "0.3", "QUALPIPE_SEED": "4", "HOME": "/root"}
    cfg = load_config(config_file, env, {"seed": 5, "budget": None})
    assert cfg.dataset == Path("data/run.jsonl")
    assert cfg.n_attributes == 8
    assert cfg.domains == ("Biology", "History")
    assert cfg.epsilon == 0.3
    assert cfg.seed == 5
    assert cfg.budget == Config().budget


def test_environment_values_are_converted():
    """Strings from the environment become typed settings."""
    env = {
        "QUALPIPE_MODE": "replay",
        "QUALPIPE_SHUFFLE_CHUNKS": "yes",
        "QUALPIPE_DOMAINS": "Biology, History,",
    }
    cfg = load_config(env=env)
    assert cfg.mode is GatewayMode.REPLAY
    assert cfg.shuffle_chunks is True
    assert cfg.domains == ("Biology", "History")


def test_unknown_and_invalid_settings(tmp_path):
    """Typos and bad values are configuration errors naming the source."""
    path = tmp_path / "bad.toml"
    path.write_text("epsilom = 0.1\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="unknown setting 'epsilom'"):
        load_config(path)
    with pytest.raises(ConfigError, match="QUALPIPE_SEED"):
        load_config(env={"QUALPIPE_SEED": "many"})
    with pytest.raises(ConfigError, match="epsilon"):
        load_config(overrides={"epsilon": 1.5})
    with pytest.raises(ConfigError, match="n_attributes must be at least 2"):
        load_config(overrides={"n_attributes": 1})
    with pytest.raises(ConfigError, match="metric_timeout"):
        load_config(env={"QUALPIPE_METRIC_TIMEOUT": "0"})
    with pytest.raises(ConfigError, match="--mode"):
        load_config(overrides={"mode": "sometimes"})
    with pytest.raises(ConfigError, match="unknown metric"):
        load_config(overrides={"metric": "bleu"})
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.toml")


def test_snapshot_leaves_out_operational_settings():
    """Where a run writes is not part of what it computes."""
    snap = Config(out_dir=Path("a"), cache_dir=Path("b"), domains=("X",)).snapshot()
    assert "out_dir" not in snap
    assert "cache_dir" not in snap
    assert "mode" not in snap
    assert snap["domains"] == ["X"]
    assert snap == Config(out_dir=Path("c"), domains=("X",)).snapshot()


def test_derive_seed():
    """Sub-seeds depend on the seed and the label only."""
    assert derive_seed(0, "discovery.shuffle") == derive_seed(0, "discovery.shuffle")
    assert derive_seed(0, "discovery.shuffle") != derive_seed(1, "discovery.shuffle")
    assert derive_seed(0, "a") != derive_seed(0, "b")
    assert 0 <= derive_seed(7, "x") < 2**64


def test_gateway_requests_carry_a_derived_seed(tmp_path):
    """The evaluator seed follows the top-level seed."""

    def seed_of(seed):
        cfg = Config(cache_dir=tmp_path, seed=seed)
        return make_gateway(cfg, ScriptedTransport([])).request("q").seed

    assert seed_of(0) == seed_of(0)
    assert seed_of(0) != seed_of(1)
    assert 0 <= seed_of(7) < 2**31
