"""Run configuration: one JSON file with a section per component, strict keys."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .encoder import EncoderConfig
from .objective import LossConfig
from .probe import ProbeConfig
from .sampler import CurriculumSchedule
from .synth import SynthConfig
from .tracklets import BuilderConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


# encoder section without the dataset-derived dimensions
@dataclass(frozen=True)
class EncoderSection:
    d_model: int = 32
    num_layers: int = 1
    num_heads: int = 4
    d_ff: int = 64
    dropout: float = 0.0
    proj_hidden: int = 32
    proj_out: int = 16

    def build(self, d_in: int, L: int) -> EncoderConfig:
        return EncoderConfig(d_in=d_in, L=L, **asdict(self))


@dataclass(frozen=True)
class EvalSection:
    space: str = "projected"
    tasks: tuple[str, ...] = ("retrieval", "reid", "probe")

    def __post_init__(self):
        if self.space not in ("hidden", "projected"):
            raise ConfigError("eval.space must be 'hidden' or 'projected'")
        object.__setattr__(self, "tasks", tuple(self.tasks))
        bad = set(self.tasks) - {"retrieval", "reid", "probe"}
        if bad:
            raise ConfigError(f"unknown eval tasks: {sorted(bad)}")


SECTIONS = {
    "synth": SynthConfig,
    "builder": BuilderConfig,
    "encoder": EncoderSection,
    "loss": LossConfig,
    "train": TrainConfig,
    "schedule": CurriculumSchedule,
    "probe": ProbeConfig,
    "eval": EvalSection,
}


@dataclass(frozen=True)
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    builder: BuilderConfig = field(default_factory=BuilderConfig)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    schedule: CurriculumSchedule = field(default_factory=CurriculumSchedule)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    eval: EvalSection = field(default_factory=EvalSection)

    def __post_init__(self):
        # the schedule section is authoritative for the trainer's curriculum
        if self.train.schedule != self.schedule:
            object.__setattr__(self, "train", replace(self.train, schedule=self.schedule))

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        kwargs = {}
        for name, klass in SECTIONS.items():
            section = raw.get(name, {})
            if not isinstance(section, dict):
                raise ConfigError(f"section {name!r} must be an object")
            allowed = {f.name for f in fields(klass)}
            if name == "train":
                allowed.discard("schedule")
            bad = set(section) - allowed
            if bad:
                raise ConfigError(f"unknown key(s) in {name!r}: {sorted(bad)}")
            try:
                kwargs[name] = klass(**section)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid {name!r} section: {exc}") from None
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        out = {name: asdict(getattr(self, name)) for name in SECTIONS}
        out["train"].pop("schedule")
        out["eval"]["tasks"] = list(self.eval.tasks)
        return out

    def override(self, section: str, **kw) -> "RunConfig":
        """Replace keys of one section, ignoring ``None`` values."""
        kw = {k: v for k, v in kw.items() if v is not None}
        if not kw:
            return self
        try:
            updated = replace(getattr(self, section), **kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid override for {section!r}: {exc}") from None
        if section == "schedule":
            return replace(self, schedule=updated)
        return replace(self, **{section: updated})
