"""Experiment configuration: defaults, ``key=value`` files, command-line overrides."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from ..envs import ENVIRONMENTS
from ..errors import ConfigError, OutputError
from ..store import UNLIMITED

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_CAPACITY = 100


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run; two equal configs give identical output."""

    env: str = "gridworld"
    eps_in: float = 0.0
    eps_out: float = 100.0
    k: int = 11
    epsilon: float = 0.005
    gamma: float = 1.0
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    total_frames: int = 200_000
    epoch_frames: int = 10_000
    capacity: int = DEFAULT_CAPACITY
    proj_dim: int = 128
    out_dir: Path = Path("results")
    env_params: Mapping[str, object] = field(default_factory=dict)
    """Extra keyword arguments for the environment constructor (library use only)."""

    def __post_init__(self):
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        validate(self)

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


def validate(cfg: ExperimentConfig) -> None:
    if cfg.env not in ENVIRONMENTS:
        raise ConfigError(f"unknown environment {cfg.env!r}; choose from {sorted(ENVIRONMENTS)}", key="env")
    if not (cfg.eps_in >= 0 and math.isfinite(cfg.eps_in)):
        raise ConfigError(f"eps-in must be a finite value >= 0, got {cfg.eps_in}", key="eps-in")
    if not cfg.eps_out >= 0:
        raise ConfigError(f"eps-out must be >= 0, got {cfg.eps_out}", key="eps-out")
    if cfg.k < 1:
        raise ConfigError(f"k must be >= 1, got {cfg.k}", key="k")
    if not 0 <= cfg.epsilon <= 1:
        raise ConfigError(f"epsilon must be in [0, 1], got {cfg.epsilon}", key="epsilon")
    if not 0 <= cfg.gamma <= 1:
        raise ConfigError(f"gamma must be in [0, 1], got {cfg.gamma}", key="gamma")
    if not cfg.seeds:
        raise ConfigError("at least one seed is required", key="seeds")
    for s in cfg.seeds:
        if not 0 <= s < 2**64:
            raise ConfigError(f"seed {s} is not a 64-bit unsigned integer", key="seeds")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("seeds must be distinct", key="seeds")
    if cfg.total_frames < 0:
        raise ConfigError(f"total-frames must be >= 0, got {cfg.total_frames}", key="total-frames")
    if cfg.epoch_frames < 1:
        raise ConfigError(f"epoch-frames must be >= 1, got {cfg.epoch_frames}", key="epoch-frames")
    # a zero budget is a valid (empty) run whatever the epoch length
    if cfg.total_frames > 0 and cfg.epoch_frames > cfg.total_frames:
        raise ConfigError(f"epoch-frames ({cfg.epoch_frames}) exceeds total-frames ({cfg.total_frames})",
                          key="epoch-frames")
    if not 1 <= cfg.capacity <= UNLIMITED:
        raise ConfigError(f"capacity must be in [1, {UNLIMITED}] or 'unlimited', got {cfg.capacity}",
                          key="capacity")
    if cfg.proj_dim < 1:
        raise ConfigError(f"proj-dim must be >= 1, got {cfg.proj_dim}", key="proj-dim")


def _int(text: str) -> int:
    return int(text.strip().replace("_", ""))


def _float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("nan is not allowed")
    return value


def _seed(text: str) -> int:
    value = _int(text)
    if not 0 <= value < 2**64:
        raise ValueError("seeds are 64-bit unsigned integers")
    return value


def _seeds(text: str) -> tuple[int, ...]:
    """``"0,1,2"`` or an inclusive range ``"0-4"``."""
    text = text.strip()
    if "-" in text and "," not in text:
        lo, hi = (_seed(p) for p in text.split("-", 1))
        if hi < lo:
            raise ValueError(f"empty range {text!r}")
        return tuple(range(lo, hi + 1))
    return tuple(_seed(p) for p in text.split(",") if p.strip())


def _capacity(text: str) -> int:
    return UNLIMITED if text.strip().lower() == "unlimited" else _int(text)


# option name -> (ExperimentConfig field, parser)
KEYS = {
    "env": ("env", str.strip),
    "eps-in": ("eps_in", _float),
    "eps-out": ("eps_out", _float),
    "k": ("k", _int),
    "epsilon": ("epsilon", _float),
    "gamma": ("gamma", _float),
    "seed": ("seeds", lambda t: (_seed(t),)),
    "seeds": ("seeds", _seeds),
    "total-frames": ("total_frames", _int),
    "epoch-frames": ("epoch_frames", _int),
    "capacity": ("capacity", _capacity),
    "proj-dim": ("proj_dim", _int),
    "out-dir": ("out_dir", lambda t: Path(t.strip())),
}


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.lstrip("-").replace("_", "-")
        if key not in KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}", key=key)
        if key in values:
            raise ConfigError(f"{path}:{lineno}: key {key!r} given twice", key=key)
        values[key] = value
    return values


def _convert(values: Mapping[str, str]) -> dict[str, object]:
    if "seed" in values and "seeds" in values:
        raise ConfigError("give either seed or seeds, not both", key="seeds")
    fields: dict[str, object] = {}
    for key, text in values.items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", key=key)
        name, parse = KEYS[key]
        try:
            fields[name] = parse(str(text))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text!r} ({exc})", key=key) from None
    return fields


def parse_config(cli: Mapping[str, str | None] | None = None,
                 config_file: str | Path | None = None) -> ExperimentConfig:
    """Build a config from defaults, then ``config_file``, then ``cli``.

    ``cli`` maps option names (``"eps-in"``, ``"seeds"``, ...) to their raw
    text; ``None`` values mean "not given" and are skipped.
    """
    merged = _convert(read_config_file(config_file)) if config_file is not None else {}
    given = {k: v for k, v in (cli or {}).items() if v is not None}
    merged.update(_convert(given))
    return ExperimentConfig(**merged)
