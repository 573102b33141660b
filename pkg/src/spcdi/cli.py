"""Command-line entry point: ``spcdi <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import (
    BackgroundPhase,
    align_ambiguities,
    amplitude_psnr,
    calibrate_background,
    correct_field,
    correct_phase,
    orient_background,
    phase_rms,
    save_pgm,
)
from .config import ConfigError, dynamic_range_from, experiment_from, parse_channels, parse_ratio, read_config, sweep_from
from .errors import DivergedError, FormatError, InvalidArgument
from .field import load_field, save_field
from .forward import DetectorModel, MeasurementSet, load_measurements, noiseless, save_measurements, synthesize
from .harness import background_as_field, report_dynamic_range, run_experiment, run_sweep
from .patterns import count_for_ratio, gen_patterns, load_patterns, save_patterns
from .retrieval import ReconConfig, reconstruct

log = logging.getLogger("spcdi")


def _config(args):
    if args.config:
        return read_config(args.config)
    return read_config("", is_text=True)


def _out(args, default: str) -> Path:
    p = Path(args.out or default)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def cmd_gen_patterns(args) -> int:
    m = args.m if args.m is not None else count_for_ratio(args.side, parse_ratio(args.ratio))
    pats = gen_patterns(args.kind, args.side, m, args.seed if args.seed is not None else 0)
    path = _out(args, "patterns.spat")
    save_patterns(pats, path)
    print(f"wrote {pats.m} {pats.kind} patterns ({pats.side}x{pats.side}) to {path}")
    return 0


def cmd_simulate(args) -> int:
    cfg = experiment_from(_config(args), seed=args.seed)
    pats = load_patterns(args.patterns)
    if pats.side != cfg.side:
        cfg = replace(cfg, side=pats.side)
    obj = load_field(args.object) if args.object else cfg.obj.build(cfg.side)
    sigma = cfg.noise_sigma_rel * float(noiseless(obj, pats, cfg.detector, cfg.propagation).mean())
    meas = synthesize(obj, pats, cfg.detector.replace(noise_sigma=sigma, noise_seed=cfg.seed), cfg.propagation)
    path = _out(args, "measurements.csv")
    save_measurements(meas, path)
    save_field(obj, str(path) + ".truth.field")
    print(f"wrote {meas.m}x{meas.c} measurements to {path}")
    return 0


def _recon_cfg(args) -> ReconConfig:
    cfg = experiment_from(_config(args)).recon
    seed = args.seed if args.seed is not None else 0
    return cfg.replace(init_seed=seed)


def cmd_reconstruct(args) -> int:
    pats = load_patterns(args.patterns)
    meas = load_measurements(args.measurements)
    if args.channels:
        det = DetectorModel(parse_channels(args.channels))
    elif meas.mode == "summed":
        det = DetectorModel.dc()
    else:
        det = DetectorModel(meas.channels)
    if meas.mode == "summed":
        meas = MeasurementSet(meas.data, ((0, 0),), "per_channel", meas.provenance)
    elif det.channels != meas.channels:
        if len(det.channels) != meas.c:
            raise InvalidArgument(f"--channels lists {len(det.channels)} bins but the file has {meas.c}")
        meas = MeasurementSet(meas.data, det.channels, "per_channel", meas.provenance)
    cfg = _recon_cfg(args)
    try:
        recon, diag = reconstruct(pats, meas, det, cfg)
    except DivergedError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 0
    path = _out(args, "recon.field")
    save_field(recon, path)
    with open(str(path) + ".residual.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "residual"])
        for e, r in enumerate(diag.residual_history):
            w.writerow([e, repr(r)])
    print(f"{diag.epochs_run} epochs, residual {diag.final_residual:.3e}, converged={diag.converged}; wrote {path}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = experiment_from(_config(args))
    pats = load_patterns(args.patterns)
    bg = calibrate_background(pats, cfg.detector, cfg.propagation, _recon_cfg(args), cfg.assumed_detector())
    path = _out(args, "background.field")
    save_field(background_as_field(bg), path)
    Path(str(path) + ".provenance").write_text(json.dumps(bg.provenance, sort_keys=True, default=str) + "\n")
    print(f"wrote background phase to {path}")
    return 0


def cmd_evaluate(args) -> int:
    recon = load_field(args.recon)
    truth = load_field(args.truth)
    final = recon
    if args.background:
        bg = BackgroundPhase(np.angle(load_field(args.background).data))
        bg = orient_background(recon, bg)
        final = correct_field(recon, bg)
    aligned = align_ambiguities(final, truth)
    p = amplitude_psnr(final, truth)
    r = phase_rms(aligned.phase, truth.phase)
    print(f"amplitude_psnr_db {p!r}")
    print(f"phase_rms_rad {r!r}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_pgm(aligned.amplitude, out / "amplitude.pgm", lo=0.0, hi=float(truth.amplitude.max()))
        save_pgm(aligned.phase, out / "phase.pgm", lo=-math.pi, hi=math.pi)
        if args.background:
            save_pgm(correct_phase(recon.phase, bg), out / "corrected_phase.pgm", lo=-math.pi, hi=math.pi)
    return 0


def cmd_sweep(args) -> int:
    cp = _config(args)
    base = experiment_from(cp, seed=args.seed, out=args.out)
    sweep = sweep_from(cp, base)
    if sweep is None:
        report = run_experiment(base)
    else:
        report = run_sweep(sweep, threads=args.threads)
    for row in report.aggregate():
        print(
            f"{row['axis_value']}: n={row['n']} failed={row['failed']} "
            f"psnr={row['psnr_mean']:.2f}+-{row['psnr_std']:.2f} dB "
            f"phase_rms={row['phase_rms_mean']:.4f} rad"
        )
    return 0


def cmd_report_dr(args) -> int:
    cfg = dynamic_range_from(_config(args), seed=args.seed, out=args.out or "dynamic_range")
    rep = report_dynamic_range(cfg)
    for name, cdi, sp, _, _ in rep.rows:
        print(f"{name}: cdi {cdi:.3e}  single-pixel {sp:.3f}")
    print(f"geometric mean: cdi {rep.cdi_geomean:.3e}  single-pixel {rep.single_pixel_geomean:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spcdi", description="Single-pixel coherent diffraction imaging toolkit.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("--seed", type=int, default=None, help="root seed (overrides the config)")
        p.add_argument("--out", default=None, help="output file or directory")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        if config:
            p.add_argument("--config", default=None, help="INI experiment file")

    p = sub.add_parser("gen-patterns", help="generate a seeded pattern set")
    common(p, config=False)
    p.add_argument("--kind", choices=("binary", "gray"), default="binary")
    p.add_argument("--side", type=int, default=32)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--m", type=int, default=None, help="number of patterns")
    g.add_argument("--ratio", default="4", help="sampling ratio m/n (e.g. 4, 0.5, 1/4)")
    p.set_defaults(func=cmd_gen_patterns)

    p = sub.add_parser("simulate", help="synthesize measurements for an object")
    common(p)
    p.add_argument("--patterns", required=True)
    p.add_argument("--object", default=None, help="field file (default: the config's [object])")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="recover a field from measurements")
    common(p)
    p.add_argument("--patterns", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--channels", default=None, help="bins assumed by the reconstruction, e.g. '0,0'")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("calibrate", help="background phase from a flat object")
    common(p)
    p.add_argument("--patterns", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="metrics and image dumps against a ground truth")
    common(p, config=False)
    p.add_argument("--recon", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--background", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run an experiment or a sweep from a config file")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report-dr", help="CDI vs single-pixel dynamic range")
    common(p)
    p.set_defaults(func=cmd_report_dr)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InvalidArgument, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
