"""INI run configuration: sections of ``key = value`` lines, every key defaulted.

Unknown sections and keys are rejected with a message naming them.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    n_identities: int = 32
    n_poses: int = 8
    n_skeletons: int = 16
    height: int = 32
    width: int = 16


@dataclass
class CpgnetSection:
    zeta: float = 100.0
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 200
    optimizer: str = "adam"
    dropout: float = 0.5
    targets: str = "pose"
    skip: str = "both"
    noise: bool = True


@dataclass
class SharingSection:
    p: int = 4
    q: int = 4
    s: int = 2


@dataclass
class AugmentSection:
    # skeletons applied per image; 0 disables augmentation
    per_image: int = 16
    batch_size: int = 64


@dataclass
class CrossganSection:
    latent_dim: int = 20
    delta: float = 0.1
    lr: float = 5e-4
    batch_size: int = 16
    epochs: int = 200
    optimizer: str = "adam"
    pairing: str = "label"


@dataclass
class EvalSection:
    # queries/gallery come from a corpus generated with seed + heldout_offset
    heldout_offset: int = 1000
    oracle: bool = False
    n_pairs: int = 64
    ablation_seeds: int = 5
    ablation_epochs: int = 10


@dataclass
class RunSection:
    seed: int = 0
    out: str = "runs"


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    cpgnet: CpgnetSection = field(default_factory=CpgnetSection)
    sharing: SharingSection = field(default_factory=SharingSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    crossgan: CrossganSection = field(default_factory=CrossganSection)
    eval: EvalSection = field(default_factory=EvalSection)
    run: RunSection = field(default_factory=RunSection)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        cfg = cls()
        for sec, values in d.items():
            for key, value in values.items():
                cfg.set(f"{sec}.{key}", value)
        return cfg

    def set(self, dotted: str, value):
        """Assign ``section.key``; strings are coerced to the field's type."""
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} is not of the form section.key")
        sec, key = dotted.split(".", 1)
        section = getattr(self, sec, None)
        if section is None or not dataclasses.is_dataclass(section):
            raise ConfigError(f"unknown config section {sec!r}")
        fields = {f.name: f for f in dataclasses.fields(section)}
        if key not in fields:
            raise ConfigError(f"unknown config key {sec}.{key}")
        setattr(section, key, _coerce(type(getattr(section, key)), value, dotted))

    def dumps(self):
        parser = configparser.ConfigParser()
        for sec, values in self.to_dict().items():
            parser[sec] = {k: str(v) for k, v in values.items()}
        lines = []
        for sec in parser.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in parser[sec].items())
            lines.append("")
        return "\n".join(lines)


def _coerce(kind, value, name):
    if isinstance(value, kind) and not (kind is int and isinstance(value, bool)):
        return value.strip() if kind is str else value
    text = str(value).strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot read {text!r} as {kind.__name__}") from None


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the INI file at ``path`` (if any), then ``section.key=value`` overrides."""
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for sec in parser.sections():
            for key, value in parser[sec].items():
                cfg.set(f"{sec}.{key}", value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value)
    return cfg
