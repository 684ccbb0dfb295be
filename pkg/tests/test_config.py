from typing import Any, Dict, NamedTuple

import pytest

from kgalign.config import (
    ENDPOINT_ENV_VAR,
    BackendConfig,
    ChannelConfig,
    PipelineConfig,
    apply_overrides,
    config_from_mapping,
    load_config,
)
from kgalign.embedding import TrainConfig
from kgalign.errors import ConfigError
from kgalign.similarity import Channel
from tests.test_util import TINY_CONFIG, TINY_DIR, TINY_VECTORS


def test_defaults(tmp_path):
    config = PipelineConfig(out_dir=str(tmp_path))

    assert config.train_fraction == 0.3
    assert config.train == TrainConfig()
    assert config.channels.enabled == (Channel.STRUCTURAL, Channel.NAME, Channel.EDIT)
    assert config.channels.llm
    assert config.channels.k == 10
    assert config.llm.backend == "mock"


def test_default_out_dir_is_a_cache_directory():
    assert PipelineConfig().out_dir.endswith("runs")


class BadConfig(NamedTuple):
    data: Dict[str, Any]
    message: str


@pytest.mark.parametrize(
    "case",
    [
        BadConfig({"channels": {"k": 0}}, "channels.k"),
        BadConfig({"channels": {"structural": False, "name": False, "edit": False}}, "at least one"),
        BadConfig({"train_fraction": 1.0}, "train_fraction"),
        BadConfig({"workers": 0}, "workers"),
        BadConfig({"llm": {"backend": "remote"}}, "llm.backend"),
        BadConfig({"train": {"epochs": 0}}, "train.epochs"),
        BadConfig({"colour": "blue"}, "unknown key 'colour'"),
        BadConfig({"train": {"depth": 3}}, "unknown key train.'depth'"),
        BadConfig({"train": 3}, r"\[train\] must be a table"),
    ],
)
def test_invalid_configuration(case: BadConfig):
    with pytest.raises(ConfigError, match=case.message):
        config_from_mapping(case.data)


def test_channels_without_llm_are_valid():
    channels = ChannelConfig(llm=False, edit=False)
    assert channels.enabled == (Channel.STRUCTURAL, Channel.NAME)


def test_ablate():
    channels = ChannelConfig().ablate(["name", "llm"])
    assert channels.enabled == (Channel.STRUCTURAL, Channel.EDIT)
    assert not channels.llm

    with pytest.raises(ConfigError, match="unknown ablation"):
        ChannelConfig().ablate(["attention"])
    with pytest.raises(ConfigError, match="at least one"):
        ChannelConfig().ablate(["structural", "name", "edit"])


def test_load_config():
    config = load_config(TINY_CONFIG)

    assert config.train_fraction == 0.3
    assert config.train == TrainConfig(dim=8, layers=2, epochs=3, batch_size=4, learning_rate=0.01)
    assert config.channels.k == 3
    assert config.llm == BackendConfig(backend="mock", demonstrations=2)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(str(tmp_path / "missing.toml"))

    broken = tmp_path / "broken.toml"
    broken.write_text("[train\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="broken.toml"):
        load_config(str(broken))


def test_apply_overrides_skips_unset_values():
    config = load_config(TINY_CONFIG)
    updated = apply_overrides(config, {"train.epochs": 7, "train.dim": None, "channels.k": 5, "workers": None})

    assert updated.train.epochs == 7
    assert updated.train.dim == 8
    assert updated.channels.k == 5
    assert updated.workers == config.workers


def test_apply_overrides_validates():
    with pytest.raises(ConfigError, match="train.epochs"):
        apply_overrides(PipelineConfig(), {"train.epochs": -1})
    with pytest.raises(ConfigError, match=r"\[train\]"):
        apply_overrides(PipelineConfig(), {"train.depth": 3})


def test_with_seed():
    config = PipelineConfig().with_seed(7)
    assert (config.split_seed, config.protocol_seed, config.train.rng_seed) == (7, 7, 7)


def test_validate_paths(tmp_path):
    PipelineConfig(dataset_dir=TINY_DIR, word_vectors=TINY_VECTORS, out_dir=str(tmp_path)).validate_paths()

    with pytest.raises(ConfigError, match="dataset directory"):
        PipelineConfig(dataset_dir=str(tmp_path / "missing")).validate_paths()
    with pytest.raises(ConfigError, match="word-vector file"):
        PipelineConfig(dataset_dir=TINY_DIR).validate_paths()
    with pytest.raises(ConfigError, match="does not exist"):
        PipelineConfig(dataset_dir=TINY_DIR, word_vectors=str(tmp_path / "nope.txt")).validate_paths()

    without_names = PipelineConfig(dataset_dir=TINY_DIR, channels=ChannelConfig(name=False))
    without_names.validate_paths()


def test_live_backend_needs_an_endpoint(monkeypatch):
    monkeypatch.delenv(ENDPOINT_ENV_VAR, raising=False)
    config = PipelineConfig(dataset_dir=TINY_DIR, word_vectors=TINY_VECTORS, llm=BackendConfig(backend="live"))
    with pytest.raises(ConfigError, match=ENDPOINT_ENV_VAR):
        config.validate_paths()

    monkeypatch.setenv(ENDPOINT_ENV_VAR, "http://localhost:9/v1/chat/completions")
    assert config.llm.resolved_endpoint == "http://localhost:9/v1/chat/completions"
    config.validate_paths()


def test_api_key_from_environment(monkeypatch):
    monkeypatch.setenv("MY_KEY", "secret")
    assert BackendConfig(api_key_env="MY_KEY").api_key == "secret"
    monkeypatch.setenv("MY_KEY", "")
    assert BackendConfig(api_key_env="MY_KEY").api_key is None
