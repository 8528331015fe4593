"""Experiment configuration files.

INI-style sections with ``key = value`` lines, '#' comments, UTF-8.  Every
key is validated against the section schema below; unknown sections or keys
are rejected so that a config snapshot written next to experiment outputs
is always replayable.  parse -> serialize -> parse is the identity on the
resolved configuration.

Note: annotations here must stay runtime-evaluated (no deferred annotation
import); the parser dispatches on the dataclass field types.
"""

import configparser
import dataclasses
from dataclasses import dataclass, field
from typing import Tuple

from .errors import ConfigError

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}

TASK_CHOICES = ("inpainting", "superres", "ct", "mri", "dense", "contrast")
DATASET_CHOICES = ("blobs", "field", "gaussian", "mixture", "point")


@dataclass(frozen=True)
class RunSection:
    run_id: str = "run"
    output_dir: str = "."


@dataclass(frozen=True)
class TaskSection:
    task: str = "inpainting"
    image_side: int = 8
    signal_dim: int = 0          # overrides image_side**2 when > 0 (vector toys)
    mask_fraction: float = 0.5
    factor: int = 4
    tau: float = 0.05
    sigma1_sq: float = 1e-4
    latent_dim: int = 16
    lambda1: float = 16.0
    lambda2: float = 30.0
    sigma2_sq: float = 5.0
    dense_m: int = 2
    noise_var: float = 0.0       # dense-task scalar noise variance
    contrast_k: float = 4.0
    contrast_a: float = 0.5
    seed: int = 0
    dataset: str = "blobs"
    n_train: int = 256
    data_seed: int = 0
    gauss_mean: float = 0.0
    gauss_var: float = 1.0
    field_scale: float = 3.0
    field_amp: float = 0.1
    field_mean: float = 0.5
    mix_sep: float = 2.0
    mix_std: float = 0.5
    mix_coord: int = -1
    point_value: float = 0.5

    @property
    def d(self) -> int:
        return self.signal_dim if self.signal_dim > 0 else self.image_side ** 2


@dataclass(frozen=True)
class ScheduleSection:
    variant: str = "sb"
    b0: float = 0.1
    b1: float = 0.3
    sigma_max: float = 10.0
    eps1: float = 1e-3
    eps2: float = 1e-3


@dataclass(frozen=True)
class TrainSection:
    lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    batch_size: int = 8
    n_epochs: int = 100
    seed: int = 0
    lr_milestones: Tuple[int, ...] = (36, 60, 72, 90)
    hidden: Tuple[int, ...] = (64, 64)
    activation: str = "silu"
    time_embed: str = "sinusoidal"
    time_freqs: int = 8


@dataclass(frozen=True)
class SampleSection:
    n_steps: int = 100
    n_samples: int = 16
    seed: int = 0
    range_lock: bool = True
    keep_every: int = 0
    time_grid: str = "uniform"


@dataclass(frozen=True)
class EvalSection:
    param: str = ""
    values: Tuple[float, ...] = ()
    n_draws: int = 50
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    task: TaskSection = field(default_factory=TaskSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    train: TrainSection = field(default_factory=TrainSection)
    sample: SampleSection = field(default_factory=SampleSection)
    eval: EvalSection = field(default_factory=EvalSection)


_SECTIONS = {
    "run": RunSection,
    "task": TaskSection,
    "schedule": ScheduleSection,
    "train": TrainSection,
    "sample": SampleSection,
    "eval": EvalSection,
}


def _parse_value(name: str, raw: str, pytype):
    raw = raw.strip()
    try:
        if pytype is bool:
            low = raw.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if pytype is int:
            return int(raw)
        if pytype is float:
            return float(raw)
        if pytype is str:
            return raw
        if pytype == Tuple[int, ...]:
            return tuple(int(v) for v in raw.split(",") if v.strip()) if raw else ()
        if pytype == Tuple[float, ...]:
            return tuple(float(v) for v in raw.split(",") if v.strip()) if raw else ()
    except ValueError as exc:
        raise ConfigError(f"bad value for key {name!r}: {exc}") from exc
    raise ConfigError(f"unsupported config type for key {name!r}")


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), strict=True)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    sections = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        cls = _SECTIONS[section]
        fields = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in parser.items(section):
            if key not in fields:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            values[key] = _parse_value(key, raw, fields[key].type)
        try:
            sections[section] = cls(**values)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid [{section}] section: {exc}") from exc

    cfg = ExperimentConfig(**sections)
    _validate(cfg)
    return cfg


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.task.task not in TASK_CHOICES:
        raise ConfigError(f"unknown task {cfg.task.task!r}, expected one of {TASK_CHOICES}")
    if cfg.task.dataset not in DATASET_CHOICES:
        raise ConfigError(
            f"unknown dataset {cfg.task.dataset!r}, expected one of {DATASET_CHOICES}"
        )
    from .sampler import TIME_GRIDS

    if cfg.sample.time_grid not in TIME_GRIDS:
        raise ConfigError(f"unknown time_grid {cfg.sample.time_grid!r}")
    if cfg.eval.param not in ("", "lambda1", "tau", "noise_var", "poisson_i0"):
        raise ConfigError(f"unknown sweep parameter {cfg.eval.param!r}")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Stable text form with every resolved key materialized."""
    lines = []
    for name, section in (
        ("run", cfg.run),
        ("task", cfg.task),
        ("schedule", cfg.schedule),
        ("train", cfg.train),
        ("sample", cfg.sample),
        ("eval", cfg.eval),
    ):
        lines.append(f"[{name}]")
        for f in dataclasses.fields(section):
            lines.append(f"{f.name} = {_format_value(getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)
