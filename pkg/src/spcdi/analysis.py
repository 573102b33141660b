"""Calibration, ambiguity handling, and image-quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .field import ComplexField, as_array
from .forward import DetectorModel, PropagationModel, synthesize
from .patterns import PatternSet
from .retrieval import ReconConfig, reconstruct

PSNR_CAP = 120.0


def wrap(phase):
    """Wrap to (-pi, pi]."""
    p = np.asarray(phase, dtype=np.float64)
    return np.pi - np.mod(np.pi - p, 2 * np.pi)


def _same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise InvalidArgument(f"{what}: shape {a.shape} does not match {b.shape}")


@dataclass(frozen=True, eq=False)
class BackgroundPhase:
    """Phase recovered from a flat calibration object, in radians."""

    phase: np.ndarray
    provenance: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        p = np.array(self.phase, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise InvalidArgument(f"background phase must be square, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise InvalidArgument("background phase contains non-finite entries")
        p.setflags(write=False)
        object.__setattr__(self, "phase", p)

    @property
    def side(self) -> int:
        return self.phase.shape[0]

    def flipped(self) -> "BackgroundPhase":
        """The conjugate-orientation background (negated phase)."""
        return BackgroundPhase(-self.phase, dict(self.provenance, flipped=True))


def align_ambiguities(recon, truth) -> ComplexField:
    """Pick recon or conj(recon), rotated by its optimal global phase, closest to truth."""
    r = as_array(recon)
    t = as_array(truth)
    _same_shape(r, t, "align_ambiguities")
    if not np.any(t):
        raise InvalidArgument("cannot align against an identically zero reference")
    best = None
    for cand in (r, np.conj(r)):
        # argmin_theta ||e^{i theta} c - t||^2 has theta = arg <c, t>
        inner = np.vdot(cand, t)
        rot = cand * (inner / abs(inner) if inner != 0 else 1.0)
        err = float(np.sum(np.abs(rot - t) ** 2))
        if best is None or err < best[0]:
            best = (err, rot)
    return ComplexField(best[1])


def calibrate_background(
    patterns: PatternSet,
    det: DetectorModel,
    prop: PropagationModel,
    cfg: ReconConfig,
    recon_detector: DetectorModel | None = None,
) -> BackgroundPhase:
    """Reconstruct a unit-amplitude, zero-phase object and keep its phase.

    Measurements are synthesized with the physical ``det``/``prop``; the
    reconstruction assumes ``recon_detector`` (DC only by default, i.e.
    the instrument's nominal alignment).
    """
    flat = np.ones((patterns.side, patterns.side), dtype=np.complex128)
    meas = synthesize(flat, patterns, det.replace(noise_sigma=0.0), prop)
    rdet = recon_detector or DetectorModel.dc()
    recon, diag = reconstruct(patterns, meas, rdet, cfg)
    aligned = align_ambiguities(recon, flat)
    prov = {
        "detector": det.describe(),
        "propagation": prop.describe(),
        "init_seed": cfg.init_seed,
        "epochs": diag.epochs_run,
        "residual": diag.final_residual,
    }
    return BackgroundPhase(np.angle(aligned.data), prov)


def correct_phase(recon_phase, bg) -> np.ndarray:
    rp = np.asarray(recon_phase, dtype=np.float64)
    bp = bg.phase if isinstance(bg, BackgroundPhase) else np.asarray(bg, dtype=np.float64)
    _same_shape(rp, bp, "correct_phase")
    return wrap(rp - bp)


def correct_field(recon, bg: BackgroundPhase) -> ComplexField:
    """Remove the background phase from a reconstruction, keeping its amplitude."""
    r = as_array(recon)
    _same_shape(r, bg.phase, "correct_field")
    return ComplexField(r * np.exp(-1j * bg.phase))


def _roughness(u: np.ndarray) -> float:
    return float(np.sum(np.abs(np.diff(u, axis=0)) ** 2) + np.sum(np.abs(np.diff(u, axis=1)) ** 2))


def orient_background(recon, bg: BackgroundPhase) -> BackgroundPhase:
    """Choose the background orientation matching a reconstruction.

    A reconstruction and its calibration can land on opposite members of
    the conjugate pair; subtracting the wrong one doubles the background
    instead of removing it.  The orientation whose corrected field is
    smoother (smaller squared finite differences) is returned.
    """
    r = as_array(recon)
    keep = _roughness(r * np.exp(-1j * bg.phase))
    flip = _roughness(r * np.exp(1j * bg.phase))
    return bg if keep <= flip else bg.flipped()


def psnr(a, b, peak: float) -> float:
    """10 log10(peak^2 / MSE), capped at 120 dB (also the value for MSE = 0)."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    _same_shape(x, y, "psnr")
    if not peak > 0:
        raise InvalidArgument(f"PSNR peak must be > 0, got {peak}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


def amplitude_psnr(recon, truth) -> float:
    """Amplitude PSNR after ambiguity alignment; peak is the truth's maximum."""
    t = as_array(truth)
    aligned = align_ambiguities(recon, t)
    return psnr(np.abs(aligned.data), np.abs(t), float(np.abs(t).max()))


def phase_rms(estimate, truth, mask=None) -> float:
    """RMS of the wrapped phase error after removing its circular mean."""
    e = np.asarray(estimate, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    _same_shape(e, t, "phase_rms")
    d = wrap(e - t)
    if mask is not None:
        d = d[np.asarray(mask, dtype=bool)]
    d = wrap(d - np.angle(np.mean(np.exp(1j * d))))
    return float(np.sqrt(np.mean(d**2)))


def unwrap_phase(wrapped) -> np.ndarray:
    """Itoh line integration: along each row, then down the first column.

    Correct only where neighbouring true differences stay below pi;
    noisy or inconsistent maps are not detected.
    """
    w = np.asarray(wrapped, dtype=np.float64)
    if w.ndim != 2:
        raise InvalidArgument(f"unwrap_phase needs a 2D map, got shape {w.shape}")
    rows = np.concatenate([w[:, :1], w[:, :1] + np.cumsum(wrap(np.diff(w, axis=1)), axis=1)], axis=1)
    col = rows[:, 0]
    col_unwrapped = np.concatenate([col[:1], col[:1] + np.cumsum(wrap(np.diff(col)))])
    out = rows + (col_unwrapped - col)[:, None]
    # snap to input + 2 pi k so that re-wrapping returns the input
    k = np.round((out - w) / (2 * np.pi))
    return w + 2 * np.pi * k


@dataclass(frozen=True, eq=False)
class DepthMap:
    heights: np.ndarray
    wavelength: float
    index_contrast: float


def phase_to_depth(phase, wavelength: float, index_contrast: float) -> DepthMap:
    """Height h = lambda * phi / (2 pi * n_delta), in meters."""
    if not index_contrast > 0:
        raise InvalidArgument(f"index contrast must be > 0, got {index_contrast}")
    if not wavelength > 0:
        raise InvalidArgument(f"wavelength must be > 0, got {wavelength}")
    h = wavelength * np.asarray(phase, dtype=np.float64) / (2 * np.pi * index_contrast)
    return DepthMap(h, wavelength, index_contrast)


def depth_to_phase(heights, wavelength: float, index_contrast: float) -> np.ndarray:
    if not index_contrast > 0:
        raise InvalidArgument(f"index contrast must be > 0, got {index_contrast}")
    return 2 * np.pi * index_contrast * np.asarray(heights, dtype=np.float64) / wavelength


def save_pgm(image, path, *, lo: float | None = None, hi: float | None = None) -> tuple:
    """Write a 16-bit binary PGM plus a ``.scale`` sidecar.

    Pixel value v maps back to ``offset + scale * v``.  Returns
    ``(scale, offset)``.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidArgument(f"PGM export needs a 2D image, got shape {img.shape}")
    lo = float(img.min()) if lo is None else lo
    hi = float(img.max()) if hi is None else hi
    scale = (hi - lo) / 65535.0 if hi > lo else 1.0
    q = np.clip(np.round((img - lo) / scale), 0, 65535).astype(">u2")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode("ascii"))
        fh.write(q.tobytes())
    Path(str(path) + ".scale").write_text(f"scale {scale!r}\noffset {lo!r}\n")
    return scale, lo


def load_pgm(path) -> np.ndarray:
    """Read a PGM written by :func:`save_pgm` back to physical units."""
    path = Path(path)
    blob = path.read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while blob[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while not blob[end : end + 1].isspace():
            end += 1
        tokens.append(blob[pos:end].decode("ascii"))
        pos = end
    pos += 1
    if tokens[0] != "P5":
        raise InvalidArgument(f"not a binary PGM: {tokens[0]!r}")
    w, h = int(tokens[1]), int(tokens[2])
    q = np.frombuffer(blob, dtype=">u2", count=w * h, offset=pos).reshape(h, w)
    meta = dict(line.split() for line in Path(str(path) + ".scale").read_text().splitlines() if line.strip())
    return float(meta["offset"]) + float(meta["scale"]) * q.astype(np.float64)
