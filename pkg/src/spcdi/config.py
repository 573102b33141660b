"""INI experiment files.

Example::

    [experiment]
    side = 32
    trials = 10
    seed = 7
    calibrate = auto          ; auto | always | never

    [object]
    kind = natural            ; natural | images | file | etched | flat | random
    amplitude = camera
    phase = astronaut

    [patterns]
    kind = binary             ; binary | gray
    sampling_ratio = 4        ; integer, decimal or fraction such as 1/4

    [detector]
    channels = 0,0; 1,0       ; (row, column) frequency offsets
    mode = per_channel        ; per_channel | summed
    noise_sigma_rel = 0.01    ; noise std as a fraction of the mean reading
    recon = matched           ; matched | dc

    [propagation]
    kind = fresnel            ; fraunhofer | fresnel
    wavelength = 488e-9
    object_extent = 2.63e-3
    fresnel_number = 3        ; or: distance = 1.2

    [recon]
    alpha = 1.0
    max_epochs = 200

    [sweep]
    axis = sampling_ratio
    values = 1, 2, 3, 4

Every section is optional.  Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import re
from fractions import Fraction

from .errors import InvalidArgument
from .field import OpticalGeometry
from .forward import DetectorModel, PropagationModel
from .harness import DEFAULT_EXTENT, DEFAULT_WAVELENGTH, DynamicRangeConfig, ExperimentConfig, ObjectSpec, SweepConfig
from .objects import NATURAL_PAIRS
from .retrieval import ReconConfig

_KEYS = {
    "experiment": {"side", "trials", "seed", "calibrate", "out"},
    "object": set(ObjectSpec.__dataclass_fields__),
    "patterns": {"kind", "sampling_ratio"},
    "detector": {"channels", "mode", "noise_sigma_rel", "recon"},
    "propagation": {"kind", "wavelength", "object_extent", "distance", "fresnel_number"},
    "recon": set(ReconConfig.__dataclass_fields__) - {"init_seed"},
    "sweep": {"axis", "values"},
    "dynamic_range": {"side", "pairs", "pattern_kind", "sampling_ratio", "seed"},
}


class ConfigError(InvalidArgument):
    pass


def parse_channels(text: str) -> tuple:
    """``"0,0; 1,-1"`` -> ((0, 0), (1, -1))."""
    out = []
    for part in text.split(";"):
        part = part.strip().strip("()")
        if not part:
            continue
        bits = [b.strip() for b in part.split(",")]
        if len(bits) != 2:
            raise ValueError(f"channel {part!r} is not 'row,col'")
        out.append((int(bits[0]), int(bits[1])))
    if not out:
        raise ValueError("no channels given")
    return tuple(out)


def parse_ratio(text: str) -> Fraction:
    return Fraction(text.strip()).limit_denominator(1 << 20)


def _split_values(text: str) -> tuple:
    # channel-like values "(1,0)" contain commas, so split on ';' when present
    sep = ";" if ";" in text else ","
    if "(" in text and sep == ",":
        return tuple(v.strip() for v in re.findall(r"\([^)]*\)|[^,\s]+", text))
    return tuple(v.strip() for v in text.split(sep) if v.strip())


class _Reader:
    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp

    def get(self, section, key, conv, default):
        if not self.cp.has_option(section, key):
            return default
        raw = self.cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} ({exc})") from None


def read_config(path_or_text, *, is_text: bool = False) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        if is_text:
            cp.read_string(path_or_text)
        else:
            with open(path_or_text) as fh:
                cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    for section in cp.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp.options(section):
            if key not in _KEYS[section]:
                raise ConfigError(f"[{section}] {key}: unknown key")
    return cp


def experiment_from(cp: configparser.ConfigParser, *, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    r = _Reader(cp)
    side = r.get("experiment", "side", int, 32)

    obj_kw = {}
    for name, f in ObjectSpec.__dataclass_fields__.items():
        conv = {"float": float, "int": int}.get(f.type, str)
        val = r.get("object", name, conv, None)
        if val is not None:
            obj_kw[name] = val

    wavelength = r.get("propagation", "wavelength", float, DEFAULT_WAVELENGTH)
    extent = r.get("propagation", "object_extent", float, DEFAULT_EXTENT)
    kind = r.get("propagation", "kind", str, "fraunhofer")
    distance = r.get("propagation", "distance", float, None)
    fnum = r.get("propagation", "fresnel_number", float, None)
    if distance is not None and fnum is not None:
        raise ConfigError("[propagation] give distance or fresnel_number, not both")
    try:
        if fnum is not None:
            geom = OpticalGeometry.from_fresnel_number(fnum, wavelength, extent, side)
        else:
            geom = OpticalGeometry.for_grid(wavelength, extent, side, distance if distance is not None else 1.0)
        prop = PropagationModel(kind, geom)
    except InvalidArgument as exc:
        raise ConfigError(f"[propagation] {exc}") from None

    rkw = {}
    for name, f in ReconConfig.__dataclass_fields__.items():
        if name == "init_seed":
            continue
        conv = {"float": float, "int": int}.get(f.type, str)
        val = r.get("recon", name, conv, None)
        if val is not None:
            rkw[name] = val
    try:
        recon = ReconConfig(**rkw)
    except InvalidArgument as exc:
        raise ConfigError(f"[recon] {exc}") from None
    try:
        det = DetectorModel(
            r.get("detector", "channels", parse_channels, ((0, 0),)),
            r.get("detector", "mode", str, "per_channel"),
        )
    except InvalidArgument as exc:
        raise ConfigError(f"[detector] {exc}") from None

    return ExperimentConfig(
        obj=ObjectSpec(**obj_kw),
        side=side,
        pattern_kind=r.get("patterns", "kind", str, "binary"),
        sampling_ratio=r.get("patterns", "sampling_ratio", parse_ratio, Fraction(4)),
        detector=det,
        noise_sigma_rel=r.get("detector", "noise_sigma_rel", float, 0.0),
        recon_detector=r.get("detector", "recon", str, "matched"),
        propagation=prop,
        recon=recon,
        calibrate=r.get("experiment", "calibrate", str, "auto"),
        trials=r.get("experiment", "trials", int, 10),
        seed=seed if seed is not None else r.get("experiment", "seed", int, 0),
        out=out if out is not None else r.get("experiment", "out", str, ""),
    )


def sweep_from(cp: configparser.ConfigParser, base: ExperimentConfig) -> SweepConfig | None:
    if not cp.has_section("sweep"):
        return None
    r = _Reader(cp)
    axis = r.get("sweep", "axis", str, None)
    values = r.get("sweep", "values", _split_values, ())
    if axis is None:
        raise ConfigError("[sweep] axis: missing")
    return SweepConfig(base, axis, values)


def _pairs(text: str) -> tuple:
    out = []
    for part in text.split(";"):
        part = part.strip()
        if part:
            a, _, p = part.partition("+")
            if not p:
                raise ValueError(f"pair {part!r} is not 'amplitude+phase'")
            out.append((a.strip(), p.strip()))
    return tuple(out)


def dynamic_range_from(cp: configparser.ConfigParser, *, seed=None, out=None) -> DynamicRangeConfig:
    r = _Reader(cp)
    return DynamicRangeConfig(
        side=r.get("dynamic_range", "side", int, 128),
        pairs=r.get("dynamic_range", "pairs", _pairs, NATURAL_PAIRS),
        pattern_kind=r.get("dynamic_range", "pattern_kind", str, "binary"),
        sampling_ratio=r.get("dynamic_range", "sampling_ratio", parse_ratio, Fraction(1)),
        seed=seed if seed is not None else r.get("dynamic_range", "seed", int, 0),
        out=out or "",
    )
