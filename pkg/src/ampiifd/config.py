"""Pipeline configuration: defaults < ``key = value`` file < command line."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .descriptor import DescriptorParams
from .detector import DetectorParams
from .errors import ConfigError
from .matching import MatchParams
from .scale_space import ScaleSpaceParams
from .transform import KINDS


@dataclass(frozen=True)
class PipelineConfig:
    scale_space: ScaleSpaceParams = field(default_factory=ScaleSpaceParams)
    detector: DetectorParams = field(default_factory=DetectorParams)
    descriptor: DescriptorParams = field(default_factory=DescriptorParams)
    matching: MatchParams = field(default_factory=MatchParams)
    model_kind: str = "affine"
    output_dir: str = "ampiifd_out"
    debug_dumps: bool = False
    strict_paper: bool = False
    # tolerance (px) for counting a match as correct against ground truth
    correct_tol: float = 3.0
    # fewer final matches than this flags the result as unreliable
    min_reliable_matches: int = 8

    def __post_init__(self):
        if self.model_kind not in KINDS:
            raise ConfigError(f"model_kind: must be one of {', '.join(KINDS)}")
        if not self.correct_tol > 0:
            raise ConfigError("correct_tol: > 0 violated")
        if self.detector.region_multiplier != self.descriptor.region_multiplier:
            raise ConfigError("region_multiplier: detector and descriptor values differ")


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_optional_float(text):
    if str(text).strip().lower() in ("none", "off", ""):
        return None
    return float(text)


# key -> (section or None for top level, converter)
_SECTIONS = {
    "scale_space": ScaleSpaceParams,
    "detector": DetectorParams,
    "descriptor": DescriptorParams,
    "matching": MatchParams,
}
_CONVERTERS = {"int": int, "float": float, "bool": _parse_bool, "str": str}
_SPECIAL = {"ratio_threshold": _parse_optional_float, "contrast_factor": _parse_optional_float}
_SHARED = ("region_multiplier",)
_FIXED = ("grid_cells", "folded_bins")


def _field_converter(f):
    if f.name in _SPECIAL:
        return _SPECIAL[f.name]
    name = f.type if isinstance(f.type, str) else f.type.__name__
    return _CONVERTERS[name]


def config_keys() -> dict:
    """Every settable key with its ``(section, converter)``."""
    keys = {}
    for section, cls in _SECTIONS.items():
        for f in dataclasses.fields(cls):
            if f.name in _FIXED:
                continue
            if f.name in _SHARED:
                keys[f.name] = ("shared", float)
            else:
                keys[f.name] = (section, _field_converter(f))
    for f in dataclasses.fields(PipelineConfig):
        if f.name not in _SECTIONS:
            keys[f.name] = (None, _field_converter(f))
    return keys


def read_config_file(path) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def build_config(values: dict) -> PipelineConfig:
    """Construct a config from raw key/value overrides (strings or typed)."""
    keys = config_keys()
    sections = {name: {} for name in _SECTIONS}
    top = {}
    for key, raw in values.items():
        if key not in keys:
            raise ConfigError(f"unknown key: {key}")
        section, conv = keys[key]
        try:
            value = conv(raw) if isinstance(raw, str) else raw
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: unparsable value {raw!r}") from exc
        if section == "shared":
            sections["detector"][key] = value
            sections["descriptor"][key] = value
        elif section is None:
            top[key] = value
        else:
            sections[section][key] = value
    if top.get("strict_paper"):
        sections["matching"].setdefault("ratio_threshold", None)
        sections["descriptor"].setdefault("clamp", False)
    try:
        parts = {name: cls(**sections[name]) for name, cls in _SECTIONS.items()}
        return PipelineConfig(**parts, **top)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(args: dict | None = None, config_file=None) -> PipelineConfig:
    """Merge a config file and command-line overrides (command line wins)."""
    values = {}
    if config_file:
        values.update(read_config_file(config_file))
    for key, value in (args or {}).items():
        if value is not None:
            values[key.replace("-", "_")] = value
    return build_config(values)
