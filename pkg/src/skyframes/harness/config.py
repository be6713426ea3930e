"""Experiment configuration stored as an INI file.

Every key has a default, so an empty file (or no file) is a valid config.
Sections mirror the pipeline stages:

    [run]       seed, output_dir
    [region]    center_lat, center_lon, half_extent_km
    [scenario]  duration_s, arrival_rate_per_min, input_csv
    [render]    dt_list, overlap, channels, head_length_px, stroke_width_px
    [model]     hidden, kernel, layers, peephole, decoder_input, readout_bias
    [train]     epochs, batch_size, lr, max_sequences
    [detect]    s, w, t2, t1_percentile, t1_override, ssim_window, frame_stride, max_val_frames
    [attacks]   kinds, injections_per_kind, duration_s, flood_resample,
                altitude_threshold_ft, altitude_high_ft, altitude_low_ft, ghost_routes
    [explain]   n, alpha, max_overlays
    [output]    frames_to_write
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..attacks import ALL_KINDS, AttackKind

OUTPUT_ROOT_ENV = "SKYFRAMES_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


@dataclass
class RunSection:
    seed: int = 0
    output_dir: str = "skyframes-run"


@dataclass
class RegionSection:
    center_lat: float = 51.47
    center_lon: float = -0.45
    half_extent_km: float = 50.0


@dataclass
class ScenarioSection:
    duration_s: float = 24 * 3600.0
    arrival_rate_per_min: float = 0.8
    input_csv: str = ""  # when set, the corpus is ingested from this file instead of generated


@dataclass
class RenderSection:
    dt_list: list[float] = field(default_factory=lambda: [2.0])
    overlap: float = 0.5
    channels: int = 1
    head_length_px: float = 4.0
    stroke_width_px: float = 2.0


@dataclass
class ModelSection:
    hidden: int = 16
    kernel: int = 3
    layers: int = 1
    peephole: bool = False
    decoder_input: str = "previous"
    readout_bias: float = -6.0


@dataclass
class TrainSection:
    epochs: int = 10
    batch_size: int = 8
    lr: float = 3e-3
    max_sequences: int = 200


@dataclass
class DetectSection:
    s: int = 15
    w: int = 10
    t2: int = 5
    t1_percentile: float = 5.0
    t1_override: float | None = None
    ssim_window: int = 8
    frame_stride: int = 1
    max_val_frames: int = 600


@dataclass
class AttackSection:
    kinds: list[AttackKind] = field(default_factory=lambda: list(ALL_KINDS))
    injections_per_kind: int = 50
    duration_s: float | None = None
    flood_resample: bool = False
    altitude_threshold_ft: float = 10000.0
    altitude_high_ft: float = 35000.0
    altitude_low_ft: float = 2000.0
    ghost_routes: int = 5


@dataclass
class ExplainSection:
    n: int = 4
    alpha: float = 0.45
    max_overlays: int = 20


@dataclass
class OutputSection:
    frames_to_write: int = 10


@dataclass
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    region: RegionSection = field(default_factory=RegionSection)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    render: RenderSection = field(default_factory=RenderSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    detect: DetectSection = field(default_factory=DetectSection)
    attacks: AttackSection = field(default_factory=AttackSection)
    explain: ExplainSection = field(default_factory=ExplainSection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> None:
        if not self.render.dt_list or any(dt <= 0 for dt in self.render.dt_list):
            raise ConfigError("render.dt_list needs positive slice lengths")
        if not 0.0 <= self.render.overlap < 1.0:
            raise ConfigError("render.overlap must lie in [0, 1)")
        if self.detect.w < self.detect.t2:
            raise ConfigError(f"detect.w={self.detect.w} must be at least detect.t2={self.detect.t2}")
        if self.detect.s < 1 or self.detect.frame_stride < 1:
            raise ConfigError("detect.s and detect.frame_stride must be positive")
        if self.model.decoder_input not in ("current", "previous", "none"):
            raise ConfigError(f"unknown model.decoder_input {self.model.decoder_input!r}")
        if 64 % self.explain.n:
            raise ConfigError(f"explain.n={self.explain.n} does not divide the 64-pixel image")
        if self.attacks.injections_per_kind < 0:
            raise ConfigError("attacks.injections_per_kind must be non-negative")

    def output_path(self) -> Path:
        """Output directory; relative paths resolve against $SKYFRAMES_OUTPUT_ROOT when set."""
        p = Path(self.run.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not p.is_absolute():
            p = Path(root) / p
        return p


def _parse_value(text: str, kind: str, name: str):
    # field types are strings because of postponed annotations
    text = text.strip()
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {text!r}")
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "float | None":
        return None if text.lower() in ("", "none") else float(text)
    if kind == "list[float]":
        return [float(v) for v in text.replace(",", " ").split()]
    if kind == "list[AttackKind]":
        return [AttackKind.parse(v) for v in text.replace(",", " ").split()]
    return text


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, list):
        return ", ".join(v.value if isinstance(v, AttackKind) else repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_config(path=None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Read an INI config; ``overrides`` maps "section.key" to a string value."""
    cfg = ExperimentConfig()
    parser = configparser.ConfigParser()
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        parser.read(path, encoding="utf-8")
    values: dict[tuple[str, str], str] = {}
    for section in parser.sections():
        for key, text in parser.items(section):
            values[(section, key)] = text
    for dotted, text in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        values[(section, key)] = text
    known = {f.name: f for f in fields(cfg)}
    for (section, key), text in values.items():
        if section not in known:
            raise ConfigError(f"unknown config section [{section}]")
        sub = getattr(cfg, section)
        sub_fields = {f.name: f for f in fields(sub)}
        if key not in sub_fields:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        try:
            setattr(sub, key, _parse_value(text, sub_fields[key].type, f"{section}.{key}"))
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: {exc}") from exc
    cfg.validate()
    return cfg


def dump_config(cfg: ExperimentConfig, path) -> None:
    """Write every key, defaults included, so the file alone reproduces the run."""
    parser = configparser.ConfigParser()
    for sec in fields(cfg):
        sub = getattr(cfg, sec.name)
        parser[sec.name] = {f.name: _format_value(getattr(sub, f.name)) for f in fields(sub)}
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def replace_section(cfg: ExperimentConfig, section: str, **changes) -> ExperimentConfig:
    """Copy of ``cfg`` with some keys of one section changed."""
    new = dataclasses.replace(cfg, **{section: dataclasses.replace(getattr(cfg, section), **changes)})
    new.validate()
    return new
