"""Run configuration: ``key = value`` files with [model], [train], [data]."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path

from gsitlab.maskgen import SegmentLayout, StructureName
from gsitlab.models import ModelConfig

# section -> (key, attribute, parser, formatter)
_LAYOUT = (SegmentLayout.parse, str)
_INT = (int, str)
_FLOAT = (float, repr)
_TEXT = (str, str)
_OPT_PATH = (lambda s: s or None, lambda v: "" if v is None else str(v))
_SCHEMA = {
    "model": {
        "kind": ("kind", _TEXT),
        "layout": ("layout", _LAYOUT),
        "dim": ("d", _INT),
        "hidden": ("p", _INT),
        "heads": ("heads", _INT),
        "out_dim": ("out_dim", _INT),
        "structure": ("structure", (StructureName.parse, lambda s: s.value)),
    },
    "train": {
        "seed": ("seed", _INT),
        "steps": ("steps", _INT),
        "lr": ("lr", _FLOAT),
        "batch": ("batch", _INT),
        "out": ("curve_path", _OPT_PATH),
        "checkpoint": ("checkpoint_path", _OPT_PATH),
    },
    "data": {
        "samples": ("samples", _INT),
        "noise": ("noise", _FLOAT),
        "spread": ("spread", _FLOAT),
    },
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    kind: str = "gsit"
    layout: SegmentLayout = SegmentLayout((4, 5, 6))
    d: int = 8
    p: int = 16
    heads: int = 2
    out_dim: int = 1
    structure: StructureName = StructureName.ORIGINAL
    seed: int = 7
    steps: int = 500
    lr: float = 0.05
    batch: int = 64
    samples: int = 64
    noise: float = 0.3
    spread: float = 0.6
    curve_path: str | None = None
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("gsit", "mult", "naive"):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.steps < 0 or self.samples < 1 or not 1 <= self.batch <= self.samples:
            raise ConfigError("need steps >= 0 and 1 <= batch <= samples")
        if self.lr < 0:
            raise ConfigError("learning rate must be non-negative")

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.layout, self.d, self.p, self.heads, self.out_dim, self.structure)

    def with_overrides(self, **kw) -> "RunConfig":
        known = {f.name for f in fields(self)}
        unknown = set(kw) - known
        if unknown:
            raise ConfigError(f"unknown settings: {sorted(unknown)}")
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    # ---------------------------------------------------------------- text

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        values = {}
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                attr, (parse, _) = _SCHEMA[section][key]
                try:
                    values[attr] = parse(raw.strip())
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from None
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        lines = []
        for section, keys in _SCHEMA.items():
            lines.append(f"[{section}]")
            for key, (attr, (_, fmt)) in keys.items():
                lines.append(f"{key} = {fmt(getattr(self, attr))}")
            lines.append("")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        out = {}
        for keys in _SCHEMA.values():
            for attr, (_, fmt) in keys.values():
                v = getattr(self, attr)
                out[attr] = v if isinstance(v, (int, float, type(None))) else fmt(v)
        return out
