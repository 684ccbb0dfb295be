"""
Pipeline configuration.

A configuration file is TOML whose keys mirror the dataclasses below::

    dataset_dir = "data/zh_en"
    word_vectors = "data/glove.300d.txt"
    train_fraction = 0.3

    [train]
    dim = 300
    epochs = 12

    [channels]
    k = 10
    edit = false

    [llm]
    backend = "live"
    endpoint = "https://llm.example.org/v1/chat/completions"
    model = "chat-model"
"""

from dataclasses import dataclass, field, fields, replace
import logging
import os
import tomllib
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Type, TypeVar

from xdgenvpy import XDGPackage

from kgalign.embedding import TrainConfig
from kgalign.errors import ConfigError
from kgalign.similarity import Channel


logger = logging.getLogger(__name__)


API_KEY_ENV_VAR = "KGALIGN_API_KEY"
ENDPOINT_ENV_VAR = "KGALIGN_ENDPOINT"

BACKENDS = ("mock", "live")

# Ablation names accepted by --ablate
ABLATIONS = tuple(channel.value for channel in Channel) + ("llm",)


def default_out_dir() -> str:
    return os.path.join(XDGPackage("kgalign").XDG_CACHE_HOME, "runs")


@dataclass(frozen=True)
class ChannelConfig:
    structural: bool = True
    name: bool = True
    edit: bool = True
    llm: bool = True
    k: int = 10

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError(f"channels.k must be at least 1, got {self.k}")
        if not (self.structural or self.name or self.edit):
            raise ConfigError("at least one candidate channel (structural, name, edit) must be enabled")

    @property
    def enabled(self) -> Tuple[Channel, ...]:
        return tuple(channel for channel in Channel if getattr(self, channel.value))

    def ablate(self, names: Sequence[str]) -> "ChannelConfig":
        unknown = sorted(set(names) - set(ABLATIONS))
        if unknown:
            raise ConfigError(f"unknown ablation {unknown[0]!r}, expected one of {', '.join(ABLATIONS)}")
        return replace(self, **{name: False for name in names})


@dataclass(frozen=True)
class BackendConfig:
    backend: str = "mock"
    endpoint: str = ""
    model: str = ""
    api_key_env: str = API_KEY_ENV_VAR
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 1.0
    parse_retries: int = 2
    max_concurrency: int = 4
    target_language: str = "English"
    demonstrations: int = 3

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise ConfigError(f"llm.backend must be one of {', '.join(BACKENDS)}, got {self.backend!r}")
        if self.max_concurrency < 1 or self.retries < 0 or self.parse_retries < 0 or self.demonstrations < 1:
            raise ConfigError("llm.max_concurrency and llm.demonstrations must be positive, retries non-negative")

    @property
    def api_key(self) -> Optional[str]:
        return os.environ.get(self.api_key_env) or None

    @property
    def resolved_endpoint(self) -> str:
        return self.endpoint or os.environ.get(ENDPOINT_ENV_VAR, "")


@dataclass(frozen=True)
class PipelineConfig:
    dataset_dir: str = ""
    word_vectors: Optional[str] = None
    out_dir: str = field(default_factory=default_out_dir)
    train_fraction: float = 0.3
    split_seed: int = 0
    protocol_seed: int = 0
    clean_names: bool = False
    normalize_names: bool = False
    workers: int = 4
    train: TrainConfig = field(default_factory=TrainConfig)
    channels: ChannelConfig = field(default_factory=ChannelConfig)
    llm: BackendConfig = field(default_factory=BackendConfig)

    def __post_init__(self) -> None:
        if not 0 < self.train_fraction < 1:
            raise ConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")

    def validate_paths(self) -> None:
        """Check the paths a run reads from; called when a run starts, not at construction."""
        if not self.dataset_dir or not os.path.isdir(self.dataset_dir):
            raise ConfigError(f"dataset directory {self.dataset_dir!r} does not exist")
        if self.channels.name:
            if not self.word_vectors:
                raise ConfigError("the name channel needs a word-vector file (word_vectors)")
            if not os.path.isfile(self.word_vectors):
                raise ConfigError(f"word-vector file {self.word_vectors!r} does not exist")
        if self.channels.llm and self.llm.backend == "live" and not self.llm.resolved_endpoint:
            raise ConfigError(f"the live backend needs llm.endpoint or {ENDPOINT_ENV_VAR}")

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Use one seed for the split, the training run and the protocol."""
        return replace(self, split_seed=seed, protocol_seed=seed, train=replace(self.train, rng_seed=seed))


T = TypeVar("T")


def _build(cls: Type[T], values: Mapping[str, Any], section: str) -> T:
    known = {f.name for f in fields(cls)}  # type: ignore[arg-type]
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key {section}{unknown[0]!r}")

    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"invalid {section or 'top-level'} settings: {e}") from None


def config_from_mapping(data: Mapping[str, Any]) -> PipelineConfig:
    sections: Dict[str, Any] = {}
    for key, cls in (("train", TrainConfig), ("channels", ChannelConfig), ("llm", BackendConfig)):
        if key in data:
            if not isinstance(data[key], dict):
                raise ConfigError(f"[{key}] must be a table")
            sections[key] = _build(cls, data[key], f"{key}.")

    top = {key: value for key, value in data.items() if key not in sections}
    return _build(PipelineConfig, {**top, **sections}, "")


def load_config(path: str) -> PipelineConfig:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"configuration file {path!r} does not exist") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None

    logger.info("Loaded configuration from %s", path)
    return config_from_mapping(data)


def apply_overrides(config: PipelineConfig, overrides: Mapping[str, Any]) -> PipelineConfig:
    """
    Apply dotted-key overrides such as ``{"train.epochs": 5, "channels.k": 20}``; ``None`` values
    are skipped so unset command-line flags leave the file values alone.
    """
    top: Dict[str, Any] = {}
    nested: Dict[str, Dict[str, Any]] = {}
    for key, value in overrides.items():
        if value is None:
            continue
        section, _, name = key.rpartition(".")
        if section:
            nested.setdefault(section, {})[name] = value
        else:
            top[name] = value

    for section, values in nested.items():
        current = getattr(config, section)
        try:
            top[section] = replace(current, **values)
        except TypeError as e:
            raise ConfigError(f"invalid override for [{section}]: {e}") from None
    return replace(config, **top)
