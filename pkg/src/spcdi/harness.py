"""End-to-end experiments and parameter sweeps.

One *trial* runs: synthesize -> reconstruct -> (calibrate + correct) ->
align -> metrics.  All randomness in a trial (patterns, noise,
initialization, calibration start) is derived from the experiment's
root seed and the trial index, so a sweep is a pure function of its
configuration no matter how its points are scheduled.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import rng
from .analysis import (
    BackgroundPhase,
    align_ambiguities,
    amplitude_psnr,
    calibrate_background,
    correct_field,
    orient_background,
    phase_rms,
    save_pgm,
)
from .errors import DivergedError, InvalidArgument
from .field import ComplexField, OpticalGeometry, load_field, save_field
from .forward import (
    DetectorModel,
    PropagationModel,
    add_noise,
    dynamic_range,
    measure_cdi_reference,
    noiseless,
    synthesize,
    MeasurementSet,
)
from .objects import NATURAL_PAIRS, etched_target, flat_object, load_image_pair, natural_object, random_object
from .patterns import count_for_ratio, gen_patterns
from .retrieval import ReconConfig, reconstruct

log = logging.getLogger(__name__)

AXES = (
    "sampling_ratio",
    "noise_sigma_rel",
    "distance_z",
    "channel_count",
    "detector_offset",
    "multibin_count",
)

# geometry used when a config gives none (the values of the distance study)
DEFAULT_WAVELENGTH = 488e-9
DEFAULT_EXTENT = 2.63e-3

# default noise axis (sigma as a fraction of the mean noiseless reading)
DEFAULT_NOISE_LEVELS = (0.0, 0.005, 0.01, 0.02, 0.05, 0.10)


def channel_block(count: int) -> tuple:
    """A compact rows x cols block of ``count`` frequency bins containing DC.

    1 -> DC, 2 -> 1x2, 4 -> 2x2, 8 -> 2x4, 9 -> 3x3, 16 -> 4x4.  Offsets
    run from ``-(rows-1)//2`` so odd blocks are centered on DC.
    """
    if count < 1:
        raise InvalidArgument(f"channel count must be >= 1, got {count}")
    rows = max(r for r in range(1, int(math.isqrt(count)) + 1) if count % r == 0)
    cols = count // rows
    r0, c0 = -((rows - 1) // 2), -((cols - 1) // 2)
    return tuple((r0 + i, c0 + j) for i in range(rows) for j in range(cols))


@dataclass(frozen=True)
class ObjectSpec:
    """Where the ground-truth object comes from.

    kinds: ``natural`` (two built-in images), ``images`` (two image
    files), ``file`` (SPCDI-FIELD file), ``etched`` (BIT step target),
    ``flat`` (unit amplitude, zero phase), ``random`` (i.i.d. pixels).
    """

    kind: str = "natural"
    amplitude: str = "camera"
    phase: str = "astronaut"
    amp_floor: float = 0.1
    phase_range: float = math.pi
    path: str = ""
    amplitude_path: str = ""
    phase_path: str = ""
    depth: float = 400e-9
    wavelength: float = 488e-9
    index_contrast: float = 0.463
    seed: int = 0

    def build(self, side: int) -> ComplexField:
        if self.kind == "natural":
            return natural_object(side, self.amplitude, self.phase, self.amp_floor, self.phase_range)
        if self.kind == "images":
            return load_image_pair(self.amplitude_path, self.phase_path, side, self.amp_floor, self.phase_range)
        if self.kind == "file":
            try:
                obj = load_field(self.path)
            except OSError as exc:
                raise InvalidArgument(f"object.path: cannot read {self.path!r} ({exc.strerror})") from None
            if obj.side != side:
                raise InvalidArgument(f"object file has side {obj.side}, experiment side is {side}")
            return obj
        if self.kind == "etched":
            return etched_target(side, self.depth, self.wavelength, self.index_contrast)
        if self.kind == "flat":
            return flat_object(side)
        if self.kind == "random":
            return random_object(side, self.seed)
        raise InvalidArgument(f"object.kind: unknown object kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """One experimental condition, repeated over ``trials`` seeds.

    ``recon_detector`` selects what the reconstruction assumes:
    ``matched`` uses the physical channels, ``dc`` assumes an aligned
    single-pixel detector (misalignment and multi-bin studies).  Summed
    detection always reconstructs with ``dc``.  ``calibrate``: ``auto``
    corrects the background whenever the assumed and physical detectors
    differ or Fresnel propagation is active.
    """

    obj: ObjectSpec = dc_field(default_factory=ObjectSpec)
    side: int = 32
    pattern_kind: str = "binary"
    sampling_ratio: Fraction = Fraction(4)
    detector: DetectorModel = dc_field(default_factory=DetectorModel)
    noise_sigma_rel: float = 0.0
    recon_detector: str = "matched"
    propagation: PropagationModel = dc_field(default_factory=PropagationModel)
    recon: ReconConfig = dc_field(default_factory=ReconConfig)
    calibrate: str = "auto"
    trials: int = 10
    seed: int = 0
    out: str = ""

    def __post_init__(self):
        if self.side < 2:
            raise InvalidArgument(f"experiment.side: must be >= 2, got {self.side}")
        if self.trials < 1:
            raise InvalidArgument(f"experiment.trials: must be >= 1, got {self.trials}")
        if self.pattern_kind not in ("binary", "gray"):
            raise InvalidArgument(f"patterns.kind: must be binary or gray, got {self.pattern_kind!r}")
        object.__setattr__(self, "sampling_ratio", Fraction(self.sampling_ratio).limit_denominator(1 << 20))
        try:
            count_for_ratio(self.side, self.sampling_ratio)
        except InvalidArgument as exc:
            raise InvalidArgument(f"patterns.sampling_ratio: {exc}") from None
        if not self.noise_sigma_rel >= 0:
            raise InvalidArgument(f"detector.noise_sigma_rel: must be >= 0, got {self.noise_sigma_rel}")
        if self.recon_detector not in ("matched", "dc"):
            raise InvalidArgument(f"detector.recon: must be matched or dc, got {self.recon_detector!r}")
        if self.calibrate not in ("auto", "always", "never"):
            raise InvalidArgument(f"experiment.calibrate: must be auto, always or never, got {self.calibrate!r}")
        try:
            self.detector.check(self.side)
        except InvalidArgument as exc:
            raise InvalidArgument(f"detector.channels: {exc}") from None
        if self.propagation.geometry is not None:
            try:
                self.propagation.geometry.check_grid(self.side)
            except InvalidArgument as exc:
                raise InvalidArgument(f"propagation: {exc}") from None

    @property
    def m(self) -> int:
        return count_for_ratio(self.side, self.sampling_ratio)

    def assumed_detector(self) -> DetectorModel:
        if self.detector.mode == "summed" or self.recon_detector == "dc":
            return DetectorModel.dc()
        return DetectorModel(self.detector.channels)

    def needs_calibration(self) -> bool:
        if self.calibrate != "auto":
            return self.calibrate == "always"
        if self.detector.mode == "summed":
            return False
        mismatched = self.assumed_detector().channels != self.detector.channels
        return mismatched or self.propagation.kind == "fresnel"


@dataclass
class TrialResult:
    axis_value: str
    trial: int
    amplitude_psnr: float = math.nan
    phase_rms: float = math.nan
    residual: float = math.nan
    epochs: int = 0
    converged: bool = False
    wall_time: float = 0.0
    error: str = ""
    recon: ComplexField | None = dc_field(default=None, repr=False)


@dataclass(frozen=True)
class TrialSeeds:
    patterns: int
    noise: int
    init: int
    calibration: int

    @classmethod
    def derive(cls, root: int, trial: int) -> "TrialSeeds":
        return cls(*(rng.derive_seed(root, trial, role) for role in range(4)))


def run_trial(cfg: ExperimentConfig, trial: int, axis_value: str = "", truth: ComplexField | None = None) -> TrialResult:
    """Run one seeded trial; failures are recorded on the result, not raised."""
    t0 = time.perf_counter()
    res = TrialResult(axis_value, trial)
    try:
        truth = truth if truth is not None else cfg.obj.build(cfg.side)
        seeds = TrialSeeds.derive(cfg.seed, trial)
        pats = gen_patterns(cfg.pattern_kind, cfg.side, cfg.m, seeds.patterns)
        prop = cfg.propagation

        clean = noiseless(truth, pats, cfg.detector, prop)
        sigma = cfg.noise_sigma_rel * float(clean.mean())
        data = add_noise(clean, sigma, seeds.noise)
        det = cfg.detector.replace(noise_sigma=sigma, noise_seed=seeds.noise)
        meas = MeasurementSet(data, det.channels, det.mode, {"noise_sigma": sigma})

        rcfg = cfg.recon.replace(init_seed=seeds.init)
        recon, diag = reconstruct(pats, meas, cfg.assumed_detector(), rcfg)
        res.residual = diag.final_residual
        res.epochs = diag.epochs_run
        res.converged = diag.converged

        final = recon
        if cfg.needs_calibration():
            bg = calibrate_background(pats, det, prop, cfg.recon.replace(init_seed=seeds.calibration), cfg.assumed_detector())
            bg = orient_background(recon, bg)
            final = correct_field(recon, bg)
        aligned = align_ambiguities(final, truth)
        res.amplitude_psnr = amplitude_psnr(final, truth)
        res.phase_rms = phase_rms(aligned.phase, truth.phase)
        res.recon = aligned
        if cfg.out:
            _write_trial_artifacts(Path(cfg.out), axis_value, trial, recon, aligned, truth)
    except DivergedError as exc:
        res.error = f"diverged: {exc}"
        if exc.diagnostics is not None:
            res.epochs = exc.diagnostics.epochs_run
    except (InvalidArgument, ValueError, FloatingPointError) as exc:
        res.error = f"trial {trial}: {type(exc).__name__}: {exc}"
    res.wall_time = time.perf_counter() - t0
    return res


def _slug(value: str) -> str:
    keep = "".join(c if c.isalnum() or c in "-._" else "_" for c in value)
    return keep or "base"


def _write_trial_artifacts(out: Path, axis_value: str, trial: int, raw: ComplexField, aligned: ComplexField, truth) -> None:
    d = out / _slug(axis_value)
    d.mkdir(parents=True, exist_ok=True)
    stem = d / f"trial{trial:03d}"
    save_field(raw, f"{stem}_recon.field")
    save_field(aligned, f"{stem}_aligned.field")
    save_pgm(aligned.amplitude, f"{stem}_amplitude.pgm", lo=0.0, hi=float(np.abs(truth.data).max()))
    save_pgm(aligned.phase, f"{stem}_phase.pgm", lo=-math.pi, hi=math.pi)


@dataclass
class SweepReport:
    axis: str
    rows: list = dc_field(default_factory=list)

    def values(self) -> list:
        seen = []
        for r in self.rows:
            if r.axis_value not in seen:
                seen.append(r.axis_value)
        return seen

    def aggregate(self) -> list:
        """Per axis value: (value, n ok, mean/std PSNR, mean/std phase RMS)."""
        out = []
        for v in self.values():
            ok = [r for r in self.rows if r.axis_value == v and not r.error]
            p = np.array([r.amplitude_psnr for r in ok])
            ph = np.array([r.phase_rms for r in ok])
            out.append(
                {
                    "axis_value": v,
                    "n": len(ok),
                    "failed": sum(1 for r in self.rows if r.axis_value == v and r.error),
                    "psnr_mean": float(p.mean()) if len(p) else math.nan,
                    "psnr_std": float(p.std()) if len(p) else math.nan,
                    "phase_rms_mean": float(ph.mean()) if len(ph) else math.nan,
                    "phase_rms_std": float(ph.std()) if len(ph) else math.nan,
                }
            )
        return out

    def mean_psnr(self, value: str) -> float:
        for row in self.aggregate():
            if row["axis_value"] == value:
                return row["psnr_mean"]
        raise KeyError(value)

    def write(self, out_dir) -> None:
        """``rows.csv`` and ``summary.csv`` are deterministic; timings go to ``timing.csv``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "rows.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.axis, "trial", "amplitude_psnr_db", "phase_rms_rad", "residual", "epochs", "converged", "error"])
            for r in self.rows:
                w.writerow(
                    [r.axis_value, r.trial, repr(r.amplitude_psnr), repr(r.phase_rms), repr(r.residual), r.epochs, int(r.converged), r.error]
                )
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            keys = ["axis_value", "n", "failed", "psnr_mean", "psnr_std", "phase_rms_mean", "phase_rms_std"]
            w.writerow([self.axis if k == "axis_value" else k for k in keys])
            for row in self.aggregate():
                w.writerow([row[k] if isinstance(row[k], (int, str)) else repr(row[k]) for k in keys])
        with open(out / "timing.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.axis, "trial", "wall_time_s"])
            for r in self.rows:
                w.writerow([r.axis_value, r.trial, f"{r.wall_time:.3f}"])


def run_experiment(cfg: ExperimentConfig, axis_value: str = "base") -> SweepReport:
    truth = cfg.obj.build(cfg.side)
    report = SweepReport("point", [run_trial(cfg, t, axis_value, truth) for t in range(cfg.trials)])
    if cfg.out:
        report.write(cfg.out)
    return report


def _parse_offset(value) -> tuple:
    if isinstance(value, tuple):
        return value
    text = str(value).strip().strip("()")
    i, j = (int(x) for x in text.split(","))
    return (i, j)


def apply_axis(base: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    """The experiment at one point of a sweep axis."""
    if axis == "sampling_ratio":
        return replace(base, sampling_ratio=Fraction(str(value)))
    if axis == "noise_sigma_rel":
        return replace(base, noise_sigma_rel=float(value))
    if axis == "distance_z":
        g = base.propagation.geometry or OpticalGeometry.for_grid(DEFAULT_WAVELENGTH, DEFAULT_EXTENT, base.side, 1.0)
        return replace(base, propagation=PropagationModel("fresnel", g.with_distance(float(value))))
    if axis == "channel_count":
        # "c" or "c@ratio"
        text = str(value)
        count, _, ratio = text.partition("@")
        cfg = replace(base, detector=DetectorModel(channel_block(int(count)), "per_channel"), recon_detector="matched")
        if ratio:
            cfg = replace(cfg, sampling_ratio=Fraction(ratio))
        return cfg
    if axis == "detector_offset":
        return replace(base, detector=DetectorModel((_parse_offset(value),), "per_channel"), recon_detector="dc")
    if axis == "multibin_count":
        count = int(value)
        mode = "per_channel" if count == 1 else "summed"
        return replace(base, detector=DetectorModel(channel_block(count), mode), recon_detector="dc")
    raise InvalidArgument(f"sweep.axis: unknown axis {axis!r}; choose from {AXES}")


@dataclass(frozen=True)
class SweepConfig:
    base: ExperimentConfig
    axis: str
    values: tuple

    def __post_init__(self):
        if self.axis not in AXES:
            raise InvalidArgument(f"sweep.axis: unknown axis {self.axis!r}; choose from {AXES}")
        if not self.values:
            raise InvalidArgument("sweep.values: must not be empty")
        for v in self.values:
            apply_axis(self.base, self.axis, v)  # validates


def _sweep_task(args):
    cfg, trial, label = args
    res = run_trial(cfg, trial, label)
    res.recon = None  # keep inter-process payloads small
    return res


def run_sweep(sweep: SweepConfig, threads: int = 1) -> SweepReport:
    """Every (value, trial) pair; rows come back in (value, trial) order.

    Every axis point reuses the base root seed, so trial t sees the same
    patterns, noise draws and starting field at every point (paired
    comparisons along the axis).  Rows depend only on (value, trial), so
    adding trials or reordering workers does not change existing rows.
    """
    tasks = []
    for value in sweep.values:
        cfg = replace(apply_axis(sweep.base, sweep.axis, value), out="")
        if sweep.base.out:
            cfg = replace(cfg, out=str(Path(sweep.base.out) / "points"))
        for t in range(cfg.trials):
            tasks.append((cfg, t, str(value)))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_task, tasks))
    else:
        rows = [_sweep_task(t) for t in tasks]
    report = SweepReport(sweep.axis, rows)
    if sweep.base.out:
        report.write(sweep.base.out)
    return report


@dataclass
class DynamicRangeReport:
    rows: list  # (label, cdi ratio, single-pixel ratio, cdi zeros excluded, sp zeros excluded)

    @property
    def cdi_geomean(self) -> float:
        return float(np.exp(np.mean(np.log([r[1] for r in self.rows]))))

    @property
    def single_pixel_geomean(self) -> float:
        return float(np.exp(np.mean(np.log([r[2] for r in self.rows]))))

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "dynamic_range.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["object", "cdi_dynamic_range", "single_pixel_dynamic_range", "cdi_zeros_excluded", "single_pixel_zeros_excluded"])
            for r in self.rows:
                w.writerow([r[0], repr(r[1]), repr(r[2]), r[3], r[4]])
            w.writerow(["geometric_mean", repr(self.cdi_geomean), repr(self.single_pixel_geomean), "", ""])


@dataclass(frozen=True)
class DynamicRangeConfig:
    side: int = 128
    pairs: tuple = NATURAL_PAIRS
    pattern_kind: str = "binary"
    sampling_ratio: Fraction = Fraction(1)
    amp_floor: float = 0.1
    phase_range: float = math.pi
    seed: int = 0
    out: str = ""


def report_dynamic_range(cfg: DynamicRangeConfig) -> DynamicRangeReport:
    """Conventional-CDI vs single-pixel measurement dynamic range per object."""
    if not cfg.pairs:
        raise InvalidArgument("dynamic_range.pairs: need at least one object")
    m = count_for_ratio(cfg.side, cfg.sampling_ratio)
    pats = gen_patterns(cfg.pattern_kind, cfg.side, m, rng.derive_seed(cfg.seed, 0))
    rows = []
    for amp, ph in cfg.pairs:
        obj = natural_object(cfg.side, amp, ph, cfg.amp_floor, cfg.phase_range)
        cdi = dynamic_range(measure_cdi_reference(obj))
        sp = dynamic_range(synthesize(obj, pats, DetectorModel.dc()).data)
        rows.append((f"{amp}+{ph}", cdi.ratio, sp.ratio, cdi.excluded, sp.excluded))
    report = DynamicRangeReport(rows)
    if cfg.out:
        report.write(cfg.out)
    return report


def background_as_field(bg: BackgroundPhase) -> ComplexField:
    return ComplexField(np.exp(1j * bg.phase))


def geometry_from_fresnel(
    fresnel: float, side: int, wavelength: float = DEFAULT_WAVELENGTH, extent: float = DEFAULT_EXTENT
) -> OpticalGeometry:
    return OpticalGeometry.from_fresnel_number(fresnel, wavelength, extent, side)
