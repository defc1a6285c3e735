"""Detector configuration and the flat ``key = value`` config file format.

Grammar, one setting per line::

    # comment
    section.name = value

Blank lines and ``#`` comments are ignored. ``auto`` is accepted for
settings whose default is derived from the image size. Unknown keys are
rejected.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional, get_type_hints

from .errors import InvalidInputError

CONFIG_ENV = "ECDC_CONFIG"


@dataclass(frozen=True)
class SiftParams:
    octaves: Optional[int] = None  # None: min(4, floor(log2(min_dim / 16)))
    scales: int = 3
    sigma: float = 1.6
    contrast: float = 0.03  # on the [0, 1] intensity scale
    edge: float = 10.0
    upsample: bool = False  # double the input before the first octave


@dataclass(frozen=True)
class SurfParams:
    octaves: int = 4
    intervals: int = 4
    threshold: float = 0.0004  # det-of-Hessian on the [0, 1] intensity scale


@dataclass(frozen=True)
class G2nnParams:
    t_sift: float = 0.6
    t_lpsd: float = 0.1
    max_neighbors: int = 10


@dataclass(frozen=True)
class SpatialParams:
    s: float = 50.0


@dataclass(frozen=True)
class RansacParams:
    n: int = 6
    epsilon: float = 3.0
    max_rounds: int = 2000
    seed: int = 42


@dataclass(frozen=True)
class EcdcParams:
    r1: float = 1.5
    rm: float = 37.5
    tau: float = 2.0


@dataclass(frozen=True)
class BlockfeatParams:
    mode: str = "dct"
    pcet_max_order: int = 3
    # intensities are divided by this before taking variances; at 1 (gray levels)
    # every branch of the adaptive thresholds is reachable, at 255 the variance
    # difference never exceeds 0.25 and the thresholds stay on their first branch
    sigma_scale: float = 1.0


@dataclass(frozen=True)
class MorphParams:
    radius: Optional[int] = None  # None: max(3, round(0.01 * max(w, h)))


@dataclass(frozen=True)
class Config:
    sift: SiftParams = field(default_factory=SiftParams)
    surf: SurfParams = field(default_factory=SurfParams)
    g2nn: G2nnParams = field(default_factory=G2nnParams)
    spatial: SpatialParams = field(default_factory=SpatialParams)
    ransac: RansacParams = field(default_factory=RansacParams)
    ecdc: EcdcParams = field(default_factory=EcdcParams)
    blockfeat: BlockfeatParams = field(default_factory=BlockfeatParams)
    morph: MorphParams = field(default_factory=MorphParams)

    def __post_init__(self):
        validate(self)

    def with_values(self, values: Mapping[str, Any]) -> "Config":
        """Copy with dotted-key overrides applied (values may be strings)."""
        sections = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, raw in values.items():
            section, name = _split_key(key)
            sub = sections[section]
            sections[section] = replace(sub, **{name: _coerce(type(sub), name, raw)})
        return Config(**sections)

    def items(self) -> list[tuple[str, Any]]:
        out = []
        for f in fields(self):
            sub = getattr(self, f.name)
            for g in fields(sub):
                out.append((f"{f.name}.{g.name}", getattr(sub, g.name)))
        return out


def _split_key(key: str) -> tuple[str, str]:
    section, _, name = key.strip().partition(".")
    sections = {f.name: f for f in fields(Config)}
    if section not in sections or not name:
        raise InvalidInputError(f"unknown config key {key!r}")
    sub_type = get_type_hints(Config)[section]
    if name not in {g.name for g in fields(sub_type)}:
        raise InvalidInputError(f"unknown config key {key!r}")
    return section, name


def _coerce(cls, name: str, raw: Any) -> Any:
    hint = get_type_hints(cls)[name]
    optional = hint == Optional[int] or hint == Optional[float]
    if hint is bool:
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("true", "yes", "on", "1"):
            return True
        if text in ("false", "no", "off", "0"):
            return False
        raise InvalidInputError(f"bad value for {name}: {raw!r}")
    base = int if hint in (int, Optional[int]) else float if hint in (float, Optional[float]) else str
    if isinstance(raw, str):
        text = raw.strip()
        if optional and text.lower() in ("auto", "none", ""):
            return None
        try:
            if base is int:
                return int(text)
            if base is float:
                return float(text)
        except ValueError:
            raise InvalidInputError(f"bad value for {name}: {raw!r}") from None
        return text
    if raw is None:
        if not optional:
            raise InvalidInputError(f"{name} may not be empty")
        return None
    if base is int and not isinstance(raw, bool) and float(raw) == int(raw):
        return int(raw)
    if base is float:
        return float(raw)
    if base is str:
        return str(raw)
    raise InvalidInputError(f"bad value for {name}: {raw!r}")


def validate(cfg: Config) -> None:
    def need(cond, msg):
        if not cond:
            raise InvalidInputError(msg)

    need(cfg.sift.octaves is None or cfg.sift.octaves >= 1, "sift.octaves must be >= 1")
    need(cfg.sift.scales >= 1, "sift.scales must be >= 1")
    need(cfg.sift.contrast >= 0 and cfg.sift.edge > 1, "bad sift thresholds")
    need(cfg.surf.octaves >= 1 and cfg.surf.intervals >= 3, "surf needs >= 1 octave and >= 3 intervals")
    need(0 < cfg.g2nn.t_sift < 1 and 0 < cfg.g2nn.t_lpsd < 1, "g2nn thresholds must lie in (0, 1)")
    need(cfg.g2nn.max_neighbors >= 2, "g2nn.max_neighbors must be >= 2")
    need(cfg.spatial.s > 0, "spatial.s must be positive")
    need(cfg.ransac.n >= 3 and cfg.ransac.epsilon > 0 and cfg.ransac.max_rounds >= 1, "bad ransac settings")
    need(0 < cfg.ecdc.r1 <= cfg.ecdc.rm and cfg.ecdc.tau > 0, "bad radius schedule")
    need(cfg.blockfeat.mode in ("dct", "pcet"), "blockfeat.mode must be dct or pcet")
    need(cfg.blockfeat.pcet_max_order >= 0 and cfg.blockfeat.sigma_scale > 0, "bad blockfeat settings")
    need(cfg.morph.radius is None or cfg.morph.radius >= 1, "morph.radius must be >= 1")


def parse_config(text: str, base: Config | None = None) -> Config:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidInputError(f"line {lineno}: expected 'key = value'")
        values[key.strip()] = value.strip()
    return (base or Config()).with_values(values)


def load_config(path=None, overrides: Mapping[str, Any] | None = None) -> Config:
    """Defaults, then the config file (``path`` or ``$ECDC_CONFIG``), then overrides."""
    path = path or os.environ.get(CONFIG_ENV)
    cfg = Config()
    if path:
        cfg = parse_config(Path(path).read_text(), cfg)
    if overrides:
        cfg = cfg.with_values(overrides)
    return cfg


def dump_config(cfg: Config) -> str:
    lines = []
    for key, value in cfg.items():
        lines.append(f"{key} = {'auto' if value is None else value}")
    return "\n".join(lines) + "\n"


def as_dict(cfg: Config) -> dict:
    return dataclasses.asdict(cfg)
