"""Run configuration: ``key = value`` files with ``[section]`` headers.

Every key has a default. Unknown sections or keys raise :class:`ConfigError`.
Relative paths are resolved against the directory of the file that set them,
and the resolved configuration can be written back out with
:meth:`RunConfig.dumps` and reloaded to an identical state.
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .synth import SceneConfig


def _path(default):
    return field(default=default, metadata={"path": True})


@dataclass
class DatasetSection:
    manifest: str = _path("data/manifest.json")
    count: int = 256
    seed: int = 0
    test_count: int = 32
    size: int = 64
    focal: float = 64.0
    spheres_min: int = 1
    spheres_max: int = 3
    radius_min: float = 0.3
    radius_max: float = 0.9
    sphere_depth_min: float = 2.0
    sphere_depth_max: float = 5.0
    wall: bool = True
    wall_depth_min: float = 5.5
    wall_depth_max: float = 8.0
    wall_tilt_max_deg: float = 50.0
    specular_min: float = 0.0
    specular_max: float = 1.0
    ior_min: float = 1.3
    ior_max: float = 1.8
    albedo_min: float = 0.15
    albedo_max: float = 0.9
    pol_noise: float = 0.02
    background_depth: float = 10.0


@dataclass
class ModelSection:
    target: str = "depth"
    fusion: str = "confidence"
    modality: str = "full"
    codec_factor: int = 4
    widths: tuple[int, ...] = (32, 64, 64)
    hidden: int = 16
    temb_dim: int = 32


@dataclass
class ScheduleSection:
    timesteps: int = 1000
    beta_start: float = 8.5e-4
    beta_end: float = 1.2e-2
    zero_snr: bool = True
    snr_shift: float = 512.0


@dataclass
class TrainSection:
    steps: int = 2000
    batch: int = 8
    lr_unet: float = 3e-4
    lr_confidence: float = 1e-3
    cosine: bool = True
    seed: int = 0
    weighting: str = "v"
    checkpoint_every: int = 100


@dataclass
class EvalSection:
    mode: str = "standard"
    seed: int = 0
    split: str = "test"
    batch_size: int = 16
    d_min: float = 1e-3
    noise_seed: int = 0
    betas: tuple[float, ...] = (0.0, 0.1, 0.3, 0.5, 0.7, 1.0)
    strategies: tuple[str, ...] = ("confidence", "fixed", "random", "early")
    seeds: tuple[int, ...] = (0,)
    random_draws: int = 10


SECTIONS = {
    "dataset": DatasetSection,
    "model": ModelSection,
    "schedule": ScheduleSection,
    "train": TrainSection,
    "eval": EvalSection,
}

_TRUE = {"1", "yes", "true", "on"}
_FALSE = {"0", "no", "false", "off"}


def _parse(kind, text, where):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if kind in (int, float, str):
            return kind(text)
        item = kind.__args__[0]  # tuple[T, ...]
        return tuple(item(v.strip()) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r}") from None


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _fields(section):
    return {f.name: f for f in dataclasses.fields(SECTIONS[section])}


def _types(section):
    return typing.get_type_hints(SECTIONS[section])


@dataclass
class RunConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelSection = field(default_factory=ModelSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def __post_init__(self):
        self.resolve_paths(Path.cwd())

    def resolve_paths(self, base):
        for name in SECTIONS:
            sec = getattr(self, name)
            for f in dataclasses.fields(sec):
                if f.metadata.get("path"):
                    setattr(sec, f.name, str((Path(base) / getattr(sec, f.name)).resolve()))

    def set(self, section, key, text, base=None):
        """Assign ``section.key`` from its text form; relative paths resolve against ``base``."""
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]; expected one of {tuple(SECTIONS)}")
        fields = _fields(section)
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} in [{section}]; known keys: {', '.join(fields)}")
        f = fields[key]
        value = _parse(_types(section)[key], text, f"[{section}] {key}")
        if f.metadata.get("path"):
            value = str((Path(base or Path.cwd()) / value).resolve())
        setattr(getattr(self, section), key, value)

    def override(self, assignment):
        """Apply a ``section.key=value`` string."""
        lhs, sep, rhs = assignment.partition("=")
        section, dot, key = lhs.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {assignment!r}")
        self.set(section, key, rhs)

    @classmethod
    def load(cls, path, overrides=()):
        path = Path(path)
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = cls()
        for section in parser.sections():
            for key, text in parser.items(section):
                cfg.set(section, key, text, base=path.resolve().parent)
        for item in overrides:
            cfg.override(item)
        return cfg

    def dumps(self):
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            sec = getattr(self, name)
            lines += [f"{f.name} = {_format(getattr(sec, f.name))}" for f in dataclasses.fields(sec)]
            lines.append("")
        return "\n".join(lines)

    def write(self, path):
        Path(path).write_text(self.dumps(), encoding="utf-8")

    # bridges to the library configuration objects

    def scene_config(self):
        names = {f.name for f in dataclasses.fields(SceneConfig)}
        return SceneConfig(**{k: v for k, v in dataclasses.asdict(self.dataset).items() if k in names})

    def model_config(self, **changes):
        from .diffusion import ModelConfig

        kw = dataclasses.asdict(self.model)
        kw.update(dataclasses.asdict(self.schedule))
        kw["seed"] = self.train.seed
        kw.update(changes)
        return ModelConfig(**kw)

    def train_config(self):
        from .diffusion import TrainConfig

        t = self.train
        return TrainConfig(t.steps, t.batch, t.lr_unet, t.lr_confidence, t.cosine, t.seed, t.weighting)
