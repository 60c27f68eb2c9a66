"""Run configuration: INI sections mapped onto dataclasses.

Every key is addressable as ``section.key`` (for ``--set`` overrides), and a
resolved config serialises back to INI with every default filled in.
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field

from .data import NoiseProfile, SplitSpec
from .experts import ExpertSpec
from .mixture import MixtureSpec, ModelSpec
from .train import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    path: str = ""
    synth: bool = False
    split_mode: str = "ratio"
    split: tuple = (0.7, 0.1, 0.2)
    lookback: int = 96
    horizon: int = 96
    stride: int = 1

    @property
    def split_spec(self) -> SplitSpec:
        if len(self.split) != 3:
            raise ConfigError("data.split needs three values (train, val, test)")
        return SplitSpec(self.split_mode, *self.split)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n: int = 10000
    variables: int = 2
    sigma_low: float = 0.05
    sigma_high: float = 0.5
    periods: tuple = (24.0, 36.0)
    sigma_scales: tuple = (1.0,)
    out: str = "synth.csv"

    @property
    def profile(self) -> NoiseProfile:
        return NoiseProfile(self.sigma_low, self.sigma_high, tuple(float(p) for p in self.periods),
                            scales=tuple(float(c) for c in self.sigma_scales))

    @property
    def sigma_path(self) -> str:
        stem, ext = os.path.splitext(self.out)
        return f"{stem}_sigma{ext or '.csv'}"


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "runs/default"


@dataclass(frozen=True)
class EvalConfig:
    n_perm: int = 0
    forecast_csv: bool = True


@dataclass(frozen=True)
class AblateConfig:
    gating: tuple = ("input_based", "uncertainty_based")
    loss: tuple = ("mog_weighted_nll",)
    head: tuple = ("mlp",)
    resolution: tuple = ("time_varying",)
    experts: tuple = (3,)
    seeds: tuple = (0,)
    jobs: int = 1


# ExpertSpec fields that are derived, not user-settable
_HIDDEN = {"expert": {"lookback", "horizon", "num_variables", "with_variance"}}

SECTIONS = {
    "data": DataConfig,
    "synth": SynthConfig,
    "expert": ExpertSpec,
    "mixture": MixtureSpec,
    "train": TrainConfig,
    "output": OutputConfig,
    "eval": EvalConfig,
    "ablate": AblateConfig,
}


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    expert: ExpertSpec = field(default_factory=ExpertSpec)
    mixture: MixtureSpec = field(default_factory=MixtureSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ablate: AblateConfig = field(default_factory=AblateConfig)

    def model_spec(self, num_variables: int) -> ModelSpec:
        expert = dataclasses.replace(self.expert, lookback=self.data.lookback,
                                     horizon=self.data.horizon, num_variables=num_variables)
        return ModelSpec(expert, self.mixture)

    def replace(self, **sections) -> "RunConfig":
        return dataclasses.replace(self, **sections)

    def with_overrides(self, overrides: dict[str, str]) -> "RunConfig":
        raw = {s: {} for s in SECTIONS}
        for key, value in overrides.items():
            section, _, name = key.partition(".")
            if section not in SECTIONS or not name:
                raise ConfigError(f"bad override key {key!r} (want section.key)")
            raw[section][name] = value
        return _build(raw, base=self)

    def to_ini(self) -> str:
        lines = []
        for section in SECTIONS:
            lines.append(f"[{section}]")
            obj = getattr(self, section)
            for f in dataclasses.fields(obj):
                if f.name in _HIDDEN.get(section, ()):
                    continue
                lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
            lines.append("")
        return "\n".join(lines)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            proto = default[0] if default else ""
            return tuple(_parse(s, proto, key) for s in items)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    return raw


def _build(raw: dict[str, dict[str, str]], base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    sections = {}
    for section, cls in SECTIONS.items():
        current = getattr(base, section)
        values = raw.get(section, {})
        allowed = {f.name for f in dataclasses.fields(cls)} - _HIDDEN.get(section, set())
        unknown = set(values) - allowed
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
        kwargs = {name: _parse(v, getattr(current, name), f"{section}.{name}")
                  for name, v in values.items()}
        try:
            sections[section] = dataclasses.replace(current, **kwargs)
        except (ValueError, TypeError) as err:
            raise ConfigError(f"[{section}] {err}") from None
    return RunConfig(**sections)


def load_config(path: str | os.PathLike, overrides: dict[str, str] | None = None) -> RunConfig:
    """Read an INI run config.  Relative paths resolve against the file's folder.

    A ``[manifest]`` section (written by ``mogu train``) is ignored, so a run
    manifest is itself a valid config.
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read(path)
    except configparser.Error as err:
        raise ConfigError(f"{path}: {err}".replace("\n", " ")) from None
    raw = {}
    for section in parser.sections():
        if section == "manifest":
            continue
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        raw[section] = dict(parser[section])
    cfg = _build(raw)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    root = os.path.dirname(os.path.abspath(path))

    def resolve(p: str) -> str:
        return p if not p or os.path.isabs(p) else os.path.normpath(os.path.join(root, p))

    return cfg.replace(
        data=dataclasses.replace(cfg.data, path=resolve(cfg.data.path)),
        synth=dataclasses.replace(cfg.synth, out=resolve(cfg.synth.out)),
        output=OutputConfig(resolve(cfg.output.dir)),
    )
