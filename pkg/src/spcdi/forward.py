"""Single-pixel measurement synthesis.

A measurement is the intensity of one spectral bin of the modulated
field ``P_k * O``.  The default detector records bin (0, 0) (the DC
term, i.e. ``|sum(P_k * O)|**2``); off-center bins model a misaligned
detector, several bins model a detector array (``per_channel``) or a
detector without pinhole that integrates several bins (``summed``).

In Fresnel mode the modulated field is multiplied by the quadratic
phase ``exp(i pi |x|^2 / (lambda z))`` before the transform, so bin
(0, 0) is the on-axis value of the single-step Fresnel diffraction
pattern at distance z.  The constant prefactor is dropped so that both
kinds share one intensity scale.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import rng
from .errors import FormatError, InvalidArgument
from .field import OpticalGeometry, as_array, fresnel_chirp, fresnel_number
from .patterns import PatternSet

MODES = ("per_channel", "summed")
PROPAGATIONS = ("fraunhofer", "fresnel")


def _offsets(channels) -> tuple:
    out = []
    for ch in channels:
        i, j = ch
        if int(i) != i or int(j) != j:
            raise InvalidArgument(f"channel offsets must be integers, got {ch}")
        out.append((int(i), int(j)))
    return tuple(out)


@dataclass(frozen=True)
class DetectorModel:
    """Which spectral bins are recorded and how.

    ``channels`` are (row, column) frequency offsets; (0, 0) is DC.
    ``noise_sigma`` is the absolute std of additive Gaussian noise on
    every recorded intensity.
    """

    channels: tuple = ((0, 0),)
    mode: str = "per_channel"
    noise_sigma: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        chans = _offsets(self.channels)
        if not chans:
            raise InvalidArgument("detector needs at least one channel")
        if self.mode not in MODES:
            raise InvalidArgument(f"detector mode must be one of {MODES}, got {self.mode!r}")
        if not self.noise_sigma >= 0:
            raise InvalidArgument(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        object.__setattr__(self, "channels", chans)

    @classmethod
    def dc(cls, **kw) -> "DetectorModel":
        return cls(((0, 0),), **kw)

    @property
    def outputs(self) -> int:
        """Values recorded per pattern."""
        return len(self.channels) if self.mode == "per_channel" else 1

    def check(self, side: int) -> None:
        lo, hi = -side / 2, side / 2
        for i, j in self.channels:
            if not (lo <= i < hi and lo <= j < hi):
                raise InvalidArgument(f"channel offset {(i, j)} outside [{lo}, {hi}) for side {side}")

    def replace(self, **kw) -> "DetectorModel":
        args = dict(channels=self.channels, mode=self.mode, noise_sigma=self.noise_sigma, noise_seed=self.noise_seed)
        args.update(kw)
        return DetectorModel(**args)

    def describe(self) -> dict:
        return {
            "channels": [list(c) for c in self.channels],
            "mode": self.mode,
            "noise_sigma": self.noise_sigma,
            "noise_seed": self.noise_seed,
        }


@dataclass(frozen=True)
class PropagationModel:
    kind: str = "fraunhofer"
    geometry: OpticalGeometry | None = None

    def __post_init__(self):
        if self.kind not in PROPAGATIONS:
            raise InvalidArgument(f"propagation kind must be one of {PROPAGATIONS}, got {self.kind!r}")
        if self.kind == "fresnel":
            if self.geometry is None:
                raise InvalidArgument("fresnel propagation requires an OpticalGeometry")
            if self.geometry.distance <= 0:
                raise InvalidArgument("fresnel propagation requires distance > 0")

    def kernel(self, side: int) -> np.ndarray:
        """Per-pixel factor applied to the modulated field before the DFT."""
        if self.kind == "fraunhofer":
            return np.ones((side, side), dtype=np.complex128)
        return fresnel_chirp(side, self.geometry)

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.geometry is not None:
            g = self.geometry
            out.update(
                wavelength=g.wavelength,
                object_extent=g.object_extent,
                pixel_pitch=g.pixel_pitch,
                distance=g.distance,
            )
            if g.distance > 0:
                out["fresnel_number"] = fresnel_number(g)
        return out


def bin_weights(side: int, channels) -> np.ndarray:
    """``(c, side, side)`` DFT kernels exp(-2 pi i (i r + j c) / side) per channel."""
    r = np.arange(side)
    out = np.empty((len(channels), side, side), dtype=np.complex128)
    for idx, (i, j) in enumerate(channels):
        # reduce the integer phase index first so large offsets keep full precision
        t = (i * r[:, None] + j * r[None, :]) % side
        out[idx] = np.exp(-2j * np.pi * t / side)
    return out


def _sensing_matrix(obj: np.ndarray, det: DetectorModel, prop: PropagationModel) -> np.ndarray:
    """``(n, c)`` matrix B with spectrum bin values ``P_k.ravel() @ B``."""
    side = obj.shape[0]
    det.check(side)
    w = bin_weights(side, det.channels) * (obj * prop.kernel(side))[None]
    return np.ascontiguousarray(w.reshape(len(det.channels), -1).T)


def _record(bins: np.ndarray, mode: str) -> np.ndarray:
    power = bins.real**2 + bins.imag**2
    if mode == "per_channel":
        return power
    total = 0.0
    for v in power:  # ascending channel index
        total += v
    return np.array([total])


def measure_dc(obj, pattern) -> float:
    """``|sum(pattern * obj)|**2``."""
    o = as_array(obj)
    p = np.asarray(pattern)
    if p.shape != o.shape:
        raise InvalidArgument(f"pattern shape {p.shape} does not match object shape {o.shape}")
    s = np.sum(p * o)
    return float(s.real**2 + s.imag**2)


def measure_channels(obj, pattern, det: DetectorModel, prop: PropagationModel | None = None) -> np.ndarray:
    o = as_array(obj)
    p = np.asarray(pattern)
    if p.shape != o.shape:
        raise InvalidArgument(f"pattern shape {p.shape} does not match object shape {o.shape}")
    b = _sensing_matrix(o, det, prop or PropagationModel())
    return _record(p.ravel() @ b, det.mode)


class MeasurementSet(NamedTuple):
    """``data[k, c]`` is the c-th recorded intensity for pattern k."""

    data: np.ndarray
    channels: tuple
    mode: str
    provenance: dict

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def c(self) -> int:
        return self.data.shape[1]


def object_digest(obj) -> str:
    return hashlib.sha256(np.ascontiguousarray(as_array(obj)).tobytes()).hexdigest()[:16]


def noiseless(obj, patterns: PatternSet, det: DetectorModel, prop: PropagationModel | None = None) -> np.ndarray:
    o = as_array(obj)
    if patterns.side != o.shape[0]:
        raise InvalidArgument(f"pattern side {patterns.side} does not match object side {o.shape[0]}")
    b = _sensing_matrix(o, det, prop or PropagationModel())
    flat = patterns.flat()
    out = np.empty((patterns.m, det.outputs))
    for k in range(patterns.m):
        out[k] = _record(flat[k] @ b, det.mode)
    return out


def add_noise(values: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Additive Gaussian noise keyed by (seed, row); negatives clamped to 0."""
    if not sigma >= 0:
        raise InvalidArgument(f"noise sigma must be >= 0, got {sigma}")
    values = np.asarray(values, dtype=np.float64)
    if sigma == 0:
        return values.copy()
    out = np.empty_like(values)
    for k in range(values.shape[0]):
        z = rng.normal(rng.stream(seed, rng.NOISE, k), values.shape[1])
        out[k] = values[k] + sigma * z
    np.maximum(out, 0.0, out=out)
    return out


def synthesize(obj, patterns: PatternSet, det: DetectorModel, prop: PropagationModel | None = None) -> MeasurementSet:
    prop = prop or PropagationModel()
    clean = noiseless(obj, patterns, det, prop)
    data = add_noise(clean, det.noise_sigma, det.noise_seed)
    prov = {
        "object": object_digest(obj),
        "pattern_kind": patterns.kind,
        "pattern_seed": patterns.seed,
        "detector": det.describe(),
        "propagation": prop.describe(),
    }
    return MeasurementSet(data, det.channels, det.mode, prov)


def measure_cdi_reference(obj) -> np.ndarray:
    """Far-field intensity ``|dft2(obj)|**2`` seen by a conventional array detector."""
    s = np.fft.fft2(as_array(obj))
    return s.real**2 + s.imag**2


class DynamicRange(NamedTuple):
    ratio: float
    excluded: int


def dynamic_range(values) -> DynamicRange:
    """max/min over strictly positive entries; ``excluded`` counts the zeros dropped."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise InvalidArgument("dynamic range needs finite non-negative values")
    pos = v[v > 0]
    if pos.size == 0:
        raise InvalidArgument("dynamic range of an all-zero input is undefined")
    return DynamicRange(float(pos.max() / pos.min()), int(v.size - pos.size))


CSV_HEADER = ["k", "channel_i", "channel_j", "intensity"]
SUMMED = "*"


def save_measurements(meas: MeasurementSet, path) -> None:
    """CSV rows ``k,channel_i,channel_j,intensity`` plus a ``.provenance`` sidecar.

    Summed-mode rows carry ``*`` in both channel columns.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for k in range(meas.m):
            if meas.mode == "summed":
                w.writerow([k, SUMMED, SUMMED, repr(float(meas.data[k, 0]))])
            else:
                for (i, j), v in zip(meas.channels, meas.data[k]):
                    w.writerow([k, i, j, repr(float(v))])
    side = {"channels": [list(c) for c in meas.channels], "mode": meas.mode, **meas.provenance}
    Path(str(path) + ".provenance").write_text(json.dumps(side, sort_keys=True) + "\n")


def load_measurements(path) -> MeasurementSet:
    path = Path(path)
    sidecar = Path(str(path) + ".provenance")
    try:
        prov = json.loads(sidecar.read_text())
    except FileNotFoundError:
        raise FormatError(f"missing provenance sidecar {sidecar}", 0) from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad provenance sidecar: {exc.msg}", exc.pos) from None
    channels = tuple(tuple(c) for c in prov.pop("channels"))
    mode = prov.pop("mode")
    c = len(channels) if mode == "per_channel" else 1

    raw = path.read_bytes()
    rows = []
    offset = 0
    for lineno, line in enumerate(raw.splitlines(keepends=True)):
        text = line.decode("ascii", errors="replace").strip()
        if lineno == 0:
            if text.split(",") != CSV_HEADER:
                raise FormatError(f"bad CSV header {text!r}", 0)
        elif text:
            parts = text.split(",")
            if len(parts) != 4:
                raise FormatError(f"expected 4 fields, got {len(parts)}", offset)
            try:
                rows.append((int(parts[0]), float(parts[3])))
            except ValueError:
                raise FormatError(f"unparseable row {text!r}", offset) from None
        offset += len(line)
    if not rows or len(rows) % c:
        raise FormatError(f"{len(rows)} rows is not a multiple of {c} channels", offset)
    m = len(rows) // c
    data = np.array([v for _, v in rows]).reshape(m, c)
    ks = np.array([k for k, _ in rows]).reshape(m, c)
    if not np.all(ks == np.arange(m)[:, None]):
        raise FormatError("pattern indices are not consecutive", 0)
    return MeasurementSet(data, channels, mode, prov)
