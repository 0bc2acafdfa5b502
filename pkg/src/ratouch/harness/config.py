"""Experiment configuration and the line-oriented ``key=value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from ..errors import ConfigError

QUERY_MODES = ("image", "tactile", "fused")
KEY_MODES = ("image", "text")
MODALITY_MASKS = ("image", "text", "both")


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: str = ""
    corpus_size: int = 1000
    n_classes: int = 50
    subset_size: int = 0
    seed: int = 0
    dim: int = 64
    prompt_dim: int = 64
    heads: int = 4
    noise: float = 0.8
    n_train: int = 2048
    n_eval: int = 256
    query_mode: str = "fused"
    key_mode: str = "text"
    k: int = 5
    modality: str = "both"
    retriever_epochs: int = 60
    retriever_batch: int = 256
    retriever_lr: float = 3e-4
    # clipped to retriever_epochs for shortened runs
    retriever_warmup: int = 10
    integrator_epochs: int = 1
    integrator_batch: int = 1
    integrator_lr: float = 1e-3
    shard_capacity: int = 100_000
    out: str = "runs"

    def __post_init__(self):
        if self.query_mode not in QUERY_MODES:
            raise ConfigError(f"query_mode must be one of {QUERY_MODES}")
        if self.key_mode not in KEY_MODES:
            raise ConfigError(f"key_mode must be one of {KEY_MODES}")
        if self.modality not in MODALITY_MASKS:
            raise ConfigError(f"modality must be one of {MODALITY_MASKS}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} not divisible by heads {self.heads}")

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def coerce(key, raw):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return str(raw)


def parse_config_text(text, source="<config>"):
    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        values[key.strip()] = coerce(key.strip(), raw.strip())
    return values


def load_config(path, base=None, **overrides):
    """Config from a ``key=value`` file, layered over ``base`` and under ``overrides``."""
    path = Path(path)
    values = parse_config_text(path.read_text(encoding="utf-8"), str(path))
    cfg = base or ExperimentConfig()
    return cfg.replace(**{**values, **overrides})


def dump_config(cfg):
    return "".join(f"{k}={v}\n" for k, v in cfg.items())
