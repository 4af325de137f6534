"""Run configuration: a TOML document with every field defaulted, so a config
file only states what it overrides and the resolved values can be echoed in
full at startup."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError
from .features import EMBEDDING_PROVIDERS, ClassWeights
from .models import ModelConfig
from .training import TrainConfig


@dataclass
class RunConfig:
    # top level
    variant: str = "c-attention-unified"
    seed: int = 0
    # [data]
    corpus: str = ""
    utterance_budget: int = 17
    embedding_provider: str = "hash-projection"
    embedding_dim: int = 64
    # [model]
    num_heads: int = 2
    model_dim: int = 32
    mha_layers: int = 6
    num_filters: int = 16
    kernel_width: int = 3
    feed_forward: bool = False
    # [training]
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 16
    control_weight: float = 0.7
    patient_weight: float = 0.3
    # [output]
    checkpoint: str = "model.ckpt.json"
    epoch_log: str = "epochs.csv"

    def __post_init__(self):
        if self.embedding_provider not in EMBEDDING_PROVIDERS:
            raise ConfigError(
                f"unknown embedding_provider {self.embedding_provider!r}; "
                f"expected one of {EMBEDDING_PROVIDERS}"
            )
        # Validate the derived configs eagerly so errors surface at load time.
        self.model_config()
        self.train_config()

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            variant=self.variant,
            num_heads=self.num_heads,
            model_dim=self.model_dim,
            mha_layers=self.mha_layers,
            num_filters=self.num_filters,
            kernel_width=self.kernel_width,
            utterance_budget=self.utterance_budget,
            embedding_dim=self.embedding_dim,
            feed_forward=self.feed_forward,
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            epochs=self.epochs,
            batch_size=self.batch_size,
            class_weights=ClassWeights(self.control_weight, self.patient_weight),
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "": ("variant", "seed"),
    "data": ("corpus", "utterance_budget", "embedding_provider", "embedding_dim"),
    "model": ("num_heads", "model_dim", "mha_layers", "num_filters", "kernel_width",
              "feed_forward"),
    "training": ("learning_rate", "momentum", "epochs", "batch_size",
                 "control_weight", "patient_weight"),
    "output": ("checkpoint", "epoch_log"),
}


def _check_type(key: str, value, default) -> None:
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ConfigError(
            f"config key {key!r} has wrong type: got {type(value).__name__}"
        )


def load_run_config(path: str | Path) -> RunConfig:
    """Parse a TOML run config, rejecting unknown sections or keys."""
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    defaults = {f.name: f.default for f in fields(RunConfig)}
    values: dict = {}
    for section, content in doc.items():
        if isinstance(content, dict):
            if section not in _SECTIONS:
                raise ConfigError(f"{path}: unknown config section [{section}]")
            for key, value in content.items():
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"{path}: unknown config key {section}.{key}")
                _check_type(f"{section}.{key}", value, defaults[key])
                values[key] = value
        else:
            if section not in _SECTIONS[""]:
                raise ConfigError(f"{path}: unknown top-level config key {section!r}")
            _check_type(section, content, defaults[section])
            values[section] = content
    return RunConfig(**values)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    return repr(value)


def resolved_config_lines(config: RunConfig) -> list[str]:
    """TOML-style echo of every resolved value, defaults included."""
    lines = []
    for section, keys in _SECTIONS.items():
        if section:
            lines.append("")
            lines.append(f"[{section}]")
        for key in keys:
            lines.append(f"{key} = {_format_value(getattr(config, key))}")
    return lines
