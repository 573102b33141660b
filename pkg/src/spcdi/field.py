"""Complex fields, the pinned DFT convention, and Fresnel propagation.

The forward transform is unnormalized and the inverse carries ``1/n``,
so the (0, 0) coefficient of ``dft2(x)`` is literally ``x.sum()``.  The
spectrum is never shifted; centered displays are a plotting concern.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument, SamplingWarning

FIELD_MAGIC = "SPCDI-FIELD"
FIELD_VERSION = "v1"


def _square(data, what: str) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidArgument(f"{what} must be a square 2D array, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise InvalidArgument(f"{what} side must be >= 2, got {arr.shape[0]}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.complex128, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Square complex image (object, modulated field, reconstruction)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _square(self.data, "field")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgument("field contains non-finite entries")
        object.__setattr__(self, "data", _frozen(arr))

    @classmethod
    def from_amplitude_phase(cls, amplitude, phase) -> "ComplexField":
        return cls(np.asarray(amplitude) * np.exp(1j * np.asarray(phase)))

    @property
    def side(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.size

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.data)

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.data)

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, ComplexField):
            return NotImplemented
        return np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Unshifted DFT coefficients under the forward-unnormalized convention."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(_square(self.data, "spectrum")))

    @property
    def side(self) -> int:
        return self.data.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def as_array(x) -> np.ndarray:
    """Complex ndarray view of a field, spectrum, or array-like."""
    if isinstance(x, (ComplexField, Spectrum)):
        return x.data
    return _square(x, "field").astype(np.complex128, copy=False)


def dft2(field) -> Spectrum:
    return Spectrum(np.fft.fft2(as_array(field)))


def idft2(spec) -> ComplexField:
    return ComplexField(np.fft.ifft2(as_array(spec)))


def dc_component(spec) -> complex:
    return complex(as_array(spec)[0, 0])


@dataclass(frozen=True)
class OpticalGeometry:
    """Lengths in meters. ``object_extent`` is the full side length D."""

    wavelength: float
    object_extent: float
    pixel_pitch: float
    distance: float

    def __post_init__(self):
        for name in ("wavelength", "object_extent", "pixel_pitch"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be > 0, got {getattr(self, name)}")
        if not self.distance >= 0:
            raise InvalidArgument(f"distance must be >= 0, got {self.distance}")

    @classmethod
    def for_grid(cls, wavelength: float, object_extent: float, side: int, distance: float):
        return cls(wavelength, object_extent, object_extent / side, distance)

    @classmethod
    def from_fresnel_number(cls, fresnel: float, wavelength: float, object_extent: float, side: int):
        """Geometry whose distance gives the requested Fresnel number."""
        if not fresnel > 0:
            raise InvalidArgument(f"Fresnel number must be > 0, got {fresnel}")
        z = object_extent**2 / (wavelength * fresnel)
        return cls.for_grid(wavelength, object_extent, side, z)

    def with_distance(self, distance: float) -> "OpticalGeometry":
        return OpticalGeometry(self.wavelength, self.object_extent, self.pixel_pitch, distance)

    def check_grid(self, side: int) -> None:
        if not np.isclose(self.pixel_pitch * side, self.object_extent, rtol=1e-9):
            raise InvalidArgument(
                f"pixel_pitch*side = {self.pixel_pitch * side} does not match "
                f"object_extent = {self.object_extent}"
            )

    def tf_distance_limit(self, side: int) -> float:
        """Largest z for which the sampled Fresnel transfer function is unaliased."""
        return self.pixel_pitch**2 * side / self.wavelength


def fresnel_number(geom: OpticalGeometry) -> float:
    if geom.distance <= 0:
        raise InvalidArgument("Fresnel number needs distance > 0")
    return geom.object_extent**2 / (geom.wavelength * geom.distance)


def fresnel_transfer(side: int, geom: OpticalGeometry) -> np.ndarray:
    """Fresnel transfer function exp(-i pi lambda z |f|^2) on the unshifted grid.

    The constant piston exp(ikz) is dropped.
    """
    f = np.fft.fftfreq(side, d=geom.pixel_pitch)
    f2 = f[:, None] ** 2 + f[None, :] ** 2
    return np.exp(-1j * np.pi * geom.wavelength * geom.distance * f2)


def fresnel_propagate(field, geom: OpticalGeometry) -> ComplexField:
    """Propagate by ``geom.distance`` with the transfer-function method.

    Warns with :class:`SamplingWarning` (never raises) when the distance
    exceeds the transfer function's sampling limit.
    """
    u = as_array(field)
    side = u.shape[0]
    geom.check_grid(side)
    if geom.distance == 0:
        return ComplexField(u)
    limit = geom.tf_distance_limit(side)
    if geom.distance > limit:
        warnings.warn(
            f"z = {geom.distance:.4g} m exceeds the transfer-function limit "
            f"{limit:.4g} m for side {side}; the kernel is aliased",
            SamplingWarning,
            stacklevel=2,
        )
    return ComplexField(np.fft.ifft2(np.fft.fft2(u) * fresnel_transfer(side, geom)))


def centered_coords(side: int, pitch: float) -> np.ndarray:
    """Pixel-center coordinates symmetric about the optical axis."""
    return (np.arange(side) - (side - 1) / 2.0) * pitch


def fresnel_chirp(side: int, geom: OpticalGeometry) -> np.ndarray:
    """Unit-modulus quadratic phase exp(i pi |x|^2 / (lambda z)) over the object.

    Multiplying a field by this chirp before the DFT gives the single-step
    Fresnel diffraction pattern (up to constant factors), so bin (0, 0)
    of that spectrum is the on-axis value at distance z.
    """
    geom.check_grid(side)
    if geom.distance <= 0:
        raise InvalidArgument("Fresnel chirp needs distance > 0")
    x = centered_coords(side, geom.pixel_pitch)
    r2 = x[:, None] ** 2 + x[None, :] ** 2
    return np.exp(1j * np.pi * r2 / (geom.wavelength * geom.distance))


def save_field(field, path) -> None:
    u = as_array(field)
    side = u.shape[0]
    payload = np.empty(u.size * 2, dtype="<f8")
    payload[0::2] = u.real.ravel()
    payload[1::2] = u.imag.ravel()
    with open(path, "wb") as fh:
        fh.write(f"{FIELD_MAGIC} {FIELD_VERSION} {side}\n".encode("ascii"))
        fh.write(payload.tobytes())


def load_field(path) -> ComplexField:
    blob = Path(path).read_bytes()
    nl = blob.find(b"\n")
    if nl < 0:
        raise FormatError("missing header line", 0)
    parts = blob[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 3 or parts[0] != FIELD_MAGIC or parts[1] != FIELD_VERSION:
        raise FormatError(f"bad field header {blob[:nl]!r}", 0)
    try:
        side = int(parts[2])
    except ValueError:
        raise FormatError(f"bad side {parts[2]!r}", 0) from None
    if side < 2:
        raise FormatError(f"side must be >= 2, got {side}", 0)
    start = nl + 1
    need = side * side * 2 * 8
    have = len(blob) - start
    if have != need:
        raise FormatError(f"payload is {have} bytes, expected {need}", start + min(have, need))
    vals = np.frombuffer(blob, dtype="<f8", offset=start)
    u = (vals[0::2] + 1j * vals[1::2]).reshape(side, side)
    try:
        return ComplexField(u)
    except InvalidArgument as exc:
        raise FormatError(str(exc), start) from None
