"""Run configuration and its INI-style text format.

A config file is a set of sections with explicit keys; anything omitted takes
the default shown here. ``#`` and ``;`` start comments. Ranges are written as
two numbers separated by a comma. Floats may be written as ``a/b``::

    [data]
    source = synthetic          # or: real
    count = 25                  # synthetic scenes to generate
    target_size = 0             # 0: 64 for synthetic, 512 for real
    annotations =               # real: annotation JSON path
    bandstacks =                # real: directory of <scene_id>.bstk files

    [synth]
    height = 64
    width = 64
    n_contrails = 1, 3
    line_width = 2.0, 4.0
    blur_sigma = 0.5
    n_clutter_blobs = 0, 3
    noise_std = 0.03
    seed = 0

    [split]
    ratio = 0.8
    seed = 0
    filter_empty = true

    [loss]
    name = combined
    alpha = 0.7
    beta = 0.3
    gamma = 4/3
    delta = 0.5
    epsilon = 1e-6
    dice_variant = conventional

    [net]
    in_channels = 3
    base_width = 8
    depth = 3
    seed = 0

    [optimizer]
    lr = 1e-4
    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    [train]
    steps = 3000
    batch_size = 4
    augment = none              # or: rot90_flip
    log_every = 100
    seed = 0

    [eval]
    threshold = 0.5
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .losses import LossParams, LOSSES
from .nn import NetConfig
from .synth import SynthParams

AUGMENT_MODES = ("none", "rot90_flip")


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    count: int = 25
    target_size: int = 0
    annotations: str = ""
    bandstacks: str = ""

    @property
    def size(self) -> int:
        """Training resolution; ``target_size = 0`` picks the per-source default."""
        if self.target_size:
            return self.target_size
        return 64 if self.source == "synthetic" else 512


@dataclass(frozen=True)
class SplitConfig:
    ratio: float = 0.8
    seed: int = 0
    filter_empty: bool = True


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 3000
    batch_size: int = 4
    augment: str = "none"
    log_every: int = 100
    seed: int = 0


@dataclass(frozen=True)
class EvalConfig:
    threshold: float = 0.5


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthParams = field(default_factory=SynthParams)
    split: SplitConfig = field(default_factory=SplitConfig)
    loss_name: str = "combined"
    loss: LossParams = field(default_factory=LossParams)
    net: NetConfig = field(default_factory=NetConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        """Raise ValueError on any invariant violation."""
        d = self.data
        if d.source not in ("synthetic", "real"):
            raise ValueError(f"data.source must be 'synthetic' or 'real', got {d.source!r}")
        if d.source == "real" and not (d.annotations and d.bandstacks):
            raise ValueError("real data needs data.annotations and data.bandstacks")
        if d.source == "synthetic" and d.count < 0:
            raise ValueError("data.count must be >= 0")
        if d.target_size < 0 or d.size % 2**self.net.depth:
            raise ValueError(
                f"data.target_size={d.size} must be positive and divisible by 2**depth={2**self.net.depth}"
            )
        if not 0.0 < self.split.ratio < 1.0:
            raise ValueError("split.ratio must lie strictly between 0 and 1")
        if self.loss_name not in LOSSES:
            raise ValueError(f"unknown loss {self.loss_name!r}")
        if self.train.steps < 0:
            raise ValueError("train.steps must be >= 0")
        if self.train.batch_size < 1:
            raise ValueError("train.batch_size must be >= 1")
        if self.train.log_every < 1:
            raise ValueError("train.log_every must be >= 1")
        if self.train.augment not in AUGMENT_MODES:
            raise ValueError(f"train.augment must be one of {AUGMENT_MODES}")
        if not 0.0 < self.eval.threshold < 1.0:
            raise ValueError("eval.threshold must lie strictly between 0 and 1")
        o = self.optimizer
        if o.lr <= 0 or not (0 <= o.beta1 < 1 and 0 <= o.beta2 < 1) or o.eps <= 0:
            raise ValueError("invalid optimizer settings")


# --------------------------------------------------------------------------
# text format

_SECTIONS = ("data", "synth", "split", "loss", "net", "optimizer", "train", "eval")


def _parse_float(text: str) -> float:
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_value(text: str, default):
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return _parse_float(text)
    if isinstance(default, tuple):
        parts = [p for p in text.replace(",", " ").split() if p]
        if len(parts) != 2:
            raise ValueError(f"expected two values, got {text!r}")
        conv = int if isinstance(default[0], int) else _parse_float
        return (conv(parts[0]), conv(parts[1]))
    return text.strip()


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _section_obj(cfg: RunConfig, section: str):
    return getattr(cfg, section)


def loads(text: str) -> RunConfig:
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#", ";"), comment_prefixes=("#", ";"), interpolation=None
    )
    parser.optionxform = str
    parser.read_string(text)
    base = RunConfig()
    updates = {}
    loss_name = base.loss_name
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
        current = _section_obj(base, section)
        fields = {f.name: getattr(current, f.name) for f in dataclasses.fields(current)}
        changes = {}
        for key, raw in parser.items(section):
            if section == "loss" and key == "name":
                loss_name = raw.strip()
                continue
            if key not in fields:
                raise ValueError(f"unknown key {key!r} in [{section}]")
            try:
                changes[key] = _parse_value(raw, fields[key])
            except ValueError as exc:
                raise ValueError(f"[{section}] {key}: {exc}") from None
        updates[section] = dataclasses.replace(current, **changes)
    cfg = dataclasses.replace(base, loss_name=loss_name, **updates)
    cfg.validate()
    return cfg


def load(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def dumps(cfg: RunConfig) -> str:
    lines = []
    for section in _SECTIONS:
        obj = _section_obj(cfg, section)
        lines.append(f"[{section}]")
        if section == "loss":
            lines.append(f"name = {cfg.loss_name}")
        for f in dataclasses.fields(obj):
            lines.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)
