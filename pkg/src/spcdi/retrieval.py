"""Single-pixel phase retrieval by serial Fourier/spatial projections.

For every pattern P_k (and every recorded bin g) the modulated field
Psi = P_k * O is transformed, the amplitude of bin g is replaced by the
measured sqrt(I) while its phase is kept, and the object is corrected
with the PIE-style step

    O <- O + alpha * conj(P_k) / max|P_k|^2 * (Psi' - Psi).

Only one bin changes, so Psi' - Psi is a plane wave of amplitude
(target - phi) / n.  The default ``kernel`` engine applies that closed
form in O(n) per update; the ``fft`` engine composes :func:`fourier_update`
and :func:`spatial_update` literally.  The two agree to rounding.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field

import numba
import numpy as np

from . import rng
from .errors import DivergedError, InvalidArgument
from .field import ComplexField, as_array
from .forward import DetectorModel, MeasurementSet, bin_weights
from .patterns import PatternSet

log = logging.getLogger(__name__)

ORDERS = ("sequential", "shuffled")
ENGINES = ("kernel", "fft")


@dataclass(frozen=True)
class ReconConfig:
    alpha: float = 1.0
    max_epochs: int = 200
    rel_residual_tol: float = 1e-6
    init_seed: int = 0
    init_amp_mean: float = 1.0
    init_amp_std: float = 0.1
    init_phase_std: float = 0.5
    pattern_order: str = "sequential"
    engine: str = "kernel"

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise InvalidArgument(f"alpha must lie in (0, 2], got {self.alpha}")
        if self.max_epochs < 1:
            raise InvalidArgument(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not self.rel_residual_tol > 0:
            raise InvalidArgument(f"rel_residual_tol must be > 0, got {self.rel_residual_tol}")
        if self.init_amp_std < 0 or self.init_phase_std < 0:
            raise InvalidArgument("initialization stds must be >= 0")
        if self.pattern_order not in ORDERS:
            raise InvalidArgument(f"pattern_order must be one of {ORDERS}, got {self.pattern_order!r}")
        if self.engine not in ENGINES:
            raise InvalidArgument(f"engine must be one of {ENGINES}, got {self.engine!r}")

    def replace(self, **kw) -> "ReconConfig":
        args = {f: getattr(self, f) for f in self.__dataclass_fields__}
        args.update(kw)
        return ReconConfig(**args)


@dataclass
class ReconDiagnostics:
    epochs_run: int = 0
    residual_history: list = dc_field(default_factory=list)
    converged: bool = False
    degenerate_phase_events: int = 0

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else math.nan


def init_field(side: int, cfg: ReconConfig) -> ComplexField:
    """Random start: |N(mean, std)| amplitude, N(0, phase_std) phase."""
    if side < 2:
        raise InvalidArgument(f"side must be >= 2, got {side}")
    n = side * side
    z = rng.normal(rng.stream(cfg.init_seed, rng.INIT, 0), 2 * n)
    amp = np.abs(cfg.init_amp_mean + cfg.init_amp_std * z[:n])
    phase = cfg.init_phase_std * z[n:]
    return ComplexField((amp * np.exp(1j * phase)).reshape(side, side))


def replace_bin(spec, intensity: float, offset=(0, 0), eps: float = 0.0):
    """Spectrum with bin ``offset`` set to ``sqrt(intensity) * phi / |phi|``.

    Every other bin is copied unchanged.  Returns ``(spectrum, degenerate)``;
    ``degenerate`` is True when ``|phi| < eps`` (or ``phi == 0``) and the
    phase factor was taken as 1.
    """
    if not intensity >= 0:
        raise InvalidArgument(f"intensity must be >= 0, got {intensity}")
    out = np.array(as_array(spec), dtype=np.complex128)
    side = out.shape[0]
    i, j = (int(offset[0]) % side, int(offset[1]) % side)
    phi = out[i, j]
    degenerate = bool(abs(phi) < eps or phi == 0)
    unit = 1.0 + 0j if degenerate else phi / abs(phi)
    out[i, j] = math.sqrt(intensity) * unit
    return out, degenerate


def fourier_update(psi, intensity: float, offset=(0, 0), eps: float = 0.0):
    """Replace the modulus of spectrum bin ``offset`` by ``sqrt(intensity)``.

    Returns ``(updated field, degenerate)``; see :func:`replace_bin`.
    """
    spec, degenerate = replace_bin(np.fft.fft2(as_array(psi)), intensity, offset, eps)
    return ComplexField(np.fft.ifft2(spec)), degenerate


def spatial_update(obj, pattern, psi_old, psi_new, alpha: float) -> ComplexField:
    o = as_array(obj)
    p = np.asarray(pattern)
    if p.shape != o.shape:
        raise InvalidArgument(f"pattern shape {p.shape} does not match object shape {o.shape}")
    pmax2 = float(np.max(np.abs(p) ** 2))
    if pmax2 == 0:
        raise InvalidArgument("spatial update with an all-zero pattern")
    step = np.conj(p) / pmax2 * (as_array(psi_new) - as_array(psi_old))
    return ComplexField(o + alpha * step)


@numba.njit(cache=True, fastmath=False)
def _sweep_dc(obj, pats, order, sqrt_i, alpha, inv_pmax2, eps):
    n = obj.size
    events = 0
    for t in range(order.size):
        k = order[t]
        p = pats[k]
        re = 0.0
        im = 0.0
        for i in range(n):
            re += p[i] * obj[i].real
            im += p[i] * obj[i].imag
        phi = complex(re, im)
        a = abs(phi)
        if a < eps or a == 0.0:
            target = complex(sqrt_i[k, 0], 0.0)
            events += 1
        else:
            target = sqrt_i[k, 0] * (phi / a)
        step = alpha * inv_pmax2[k] / n * (target - phi)
        for i in range(n):
            obj[i] += p[i] * step
    return events


@numba.njit(cache=True)
def _sweep_bins(obj, pats, order, sqrt_i, ramps, alpha, inv_pmax2, eps):
    n = obj.size
    nch = sqrt_i.shape[1]
    events = 0
    for t in range(order.size):
        k = order[t]
        p = pats[k]
        scale = alpha * inv_pmax2[k] / n
        for g in range(nch):
            w = ramps[g]
            phi = 0j
            for i in range(n):
                phi += p[i] * obj[i] * w[i]
            a = abs(phi)
            if a < eps or a == 0.0:
                target = complex(sqrt_i[k, g], 0.0)
                events += 1
            else:
                target = sqrt_i[k, g] * (phi / a)
            step = scale * (target - phi)
            for i in range(n):
                obj[i] += p[i] * step * w[i].conjugate()
    return events


def _check_inputs(patterns: PatternSet, meas: MeasurementSet, det: DetectorModel) -> None:
    if det.mode != "per_channel":
        raise InvalidArgument("reconstruction needs a per_channel detector model (one update per recorded bin)")
    det.check(patterns.side)
    if meas.m == 0 or patterns.m == 0:
        raise InvalidArgument("empty measurement set")
    if meas.data.shape != (patterns.m, len(det.channels)):
        raise InvalidArgument(
            f"measurement shape {meas.data.shape} does not match "
            f"{patterns.m} patterns x {len(det.channels)} channels"
        )
    if np.any(meas.data < 0) or not np.all(np.isfinite(meas.data)):
        raise InvalidArgument("measurements must be finite and non-negative")


class _Problem:
    """Per-reconstruction arrays shared by every epoch."""

    def __init__(self, patterns: PatternSet, meas: MeasurementSet, det: DetectorModel):
        self.patterns = patterns
        self.det = det
        self.intensity = meas.data
        self.sqrt_i = np.sqrt(meas.data)
        self.eps = degenerate_eps(meas)
        self.flat = np.ascontiguousarray(patterns.flat(), dtype=np.float64)
        self.inv_pmax2 = 1.0 / (self.flat**2).max(axis=1)
        self.ramps = bin_weights(patterns.side, det.channels).reshape(len(det.channels), -1)
        self.dc_only = det.channels == ((0, 0),)

    def bin_values(self, obj: np.ndarray) -> np.ndarray:
        """``(m, c)`` spectrum bins of ``P_k * obj`` at the detector offsets."""
        w = self.ramps * obj.ravel()[None]
        return self.flat @ w.real.T + 1j * (self.flat @ w.imag.T)

    def residual(self, obj: np.ndarray) -> float:
        return _residual(self.bin_values(obj), self.intensity)


def _residual(phi: np.ndarray, intensities: np.ndarray) -> float:
    total = float(intensities.sum())
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported by the caller
        err = float(np.sum((np.sqrt(intensities) - np.abs(phi)) ** 2))
    return err / total if total > 0 else err


def degenerate_eps(meas: MeasurementSet) -> float:
    return 1e-12 * math.sqrt(float(meas.data.sum()) / meas.data.size)


def residual(obj, patterns: PatternSet, meas: MeasurementSet, det: DetectorModel) -> float:
    """sum (sqrt(I) - |phi|)^2 / sum I over all patterns and recorded bins."""
    _check_inputs(patterns, meas, det)
    return _Problem(patterns, meas, det).residual(as_array(obj))


def epoch_order(m: int, cfg: ReconConfig, epoch: int) -> np.ndarray:
    if cfg.pattern_order == "sequential":
        return np.arange(m, dtype=np.int64)
    return rng.permutation(rng.stream(cfg.init_seed, rng.SHUFFLE, epoch), m).astype(np.int64)


def _epoch(obj, prob: _Problem, cfg: ReconConfig, epoch: int):
    """One sweep; returns (field array, pre-update residual, degenerate events)."""
    o = np.array(as_array(obj), dtype=np.complex128)
    res = prob.residual(o)
    order = epoch_order(prob.flat.shape[0], cfg, epoch)

    if cfg.engine == "kernel":
        vec = o.ravel()
        if prob.dc_only:
            events = _sweep_dc(vec, prob.flat, order, prob.sqrt_i, float(cfg.alpha), prob.inv_pmax2, prob.eps)
        else:
            events = _sweep_bins(
                vec, prob.flat, order, prob.sqrt_i, prob.ramps, float(cfg.alpha), prob.inv_pmax2, prob.eps
            )
        return vec.reshape(o.shape), res, int(events)

    events = 0
    cur = o
    for k in order:
        p = prob.patterns[k]
        for g, offset in enumerate(prob.det.channels):
            psi = p * cur
            new, degenerate = fourier_update(psi, prob.intensity[k, g], offset, prob.eps)
            events += degenerate
            cur = np.array(spatial_update(cur, p, psi, new, cfg.alpha).data)
    return cur, res, events


def run_epoch(obj, patterns: PatternSet, meas: MeasurementSet, det: DetectorModel, cfg: ReconConfig, epoch: int = 0):
    """One pass over all patterns; returns ``(field, residual before the pass)``."""
    _check_inputs(patterns, meas, det)
    out, res, _ = _epoch(obj, _Problem(patterns, meas, det), cfg, epoch)
    return ComplexField(out), res


def reconstruct(patterns: PatternSet, meas: MeasurementSet, det: DetectorModel, cfg: ReconConfig, init=None):
    """Iterate epochs from a random start until the residual stalls.

    Stops when the relative change of the residual between consecutive
    epochs drops below ``cfg.rel_residual_tol`` or after ``max_epochs``.
    The result is defined only up to a global phase and complex
    conjugation.
    """
    _check_inputs(patterns, meas, det)
    obj = as_array(init) if init is not None else init_field(patterns.side, cfg).data
    prob = _Problem(patterns, meas, det)
    diag = ReconDiagnostics()
    prev = None
    for epoch in range(cfg.max_epochs):
        obj, res, events = _epoch(obj, prob, cfg, epoch)
        diag.epochs_run += 1
        diag.residual_history.append(res)
        diag.degenerate_phase_events += events
        if not math.isfinite(res) or not np.all(np.isfinite(obj)):
            raise DivergedError(f"residual became non-finite at epoch {epoch}", diag)
        if res == 0.0 or (prev is not None and abs(res - prev) / max(prev, 1e-300) < cfg.rel_residual_tol):
            diag.converged = True
            break
        prev = res
    log.debug("reconstruct: %d epochs, residual %.3e, converged=%s", diag.epochs_run, diag.final_residual, diag.converged)
    return ComplexField(obj), diag
