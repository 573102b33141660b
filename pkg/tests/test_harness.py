import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from spcdi.cli import main
from spcdi.config import ConfigError, dynamic_range_from, experiment_from, read_config, sweep_from
from spcdi.errors import InvalidArgument
from spcdi.field import load_field
from spcdi.forward import DetectorModel, load_measurements
from spcdi.harness import (
    DynamicRangeConfig,
    ExperimentConfig,
    ObjectSpec,
    SweepConfig,
    apply_axis,
    channel_block,
    report_dynamic_range,
    run_experiment,
    run_sweep,
)
from spcdi.patterns import load_patterns
from spcdi.retrieval import ReconConfig

CONVERGENCE = (
    "single-detector serial projections stall far from the truth on flat and natural objects; "
    "see the reconstruction-conditioning entries in the decisions ledger"
)

FAST = ReconConfig(max_epochs=8)


def small(**kw):
    base = dict(obj=ObjectSpec(kind="random", seed=1), side=8, trials=2, seed=5, recon=FAST)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfigValidation:
    def test_bad_fields_are_named(self):
        with pytest.raises(InvalidArgument, match="sampling_ratio"):
            small(sampling_ratio=Fraction(1, 3))
        with pytest.raises(InvalidArgument, match="trials"):
            small(trials=0)
        with pytest.raises(InvalidArgument, match="channels"):
            small(detector=DetectorModel(((9, 0),)))
        with pytest.raises(InvalidArgument, match="recon"):
            small(recon_detector="nearest")

    def test_ini_errors_are_named(self):
        with pytest.raises(ConfigError, match=r"\[recon\] alpha"):
            experiment_from(read_config("[recon]\nalpha = fast\n", is_text=True))
        with pytest.raises(ConfigError, match="unknown key"):
            read_config("[recon]\nlearning_rate = 1\n", is_text=True)
        with pytest.raises(ConfigError, match="unknown section"):
            read_config("[model]\nx = 1\n", is_text=True)
        with pytest.raises(InvalidArgument, match="sampling_ratio"):
            experiment_from(read_config("[experiment]\nside = 3\n[patterns]\nsampling_ratio = 1/2\n", is_text=True))

    def test_ini_full(self):
        text = """
[experiment]
side = 16
trials = 3
seed = 42
[object]
kind = etched
depth = 300e-9
[patterns]
kind = gray
sampling_ratio = 5/2
[detector]
channels = 0,0; 1,-1
noise_sigma_rel = 0.01
[propagation]
kind = fresnel
fresnel_number = 3
[recon]
alpha = 1.5
pattern_order = shuffled
[sweep]
axis = detector_offset
values = (0,0), (1,-1), (0,1)
"""
        cp = read_config(text, is_text=True)
        cfg = experiment_from(cp)
        assert cfg.side == 16 and cfg.trials == 3 and cfg.seed == 42
        assert cfg.obj.kind == "etched" and cfg.obj.depth == 300e-9
        assert cfg.pattern_kind == "gray" and cfg.sampling_ratio == Fraction(5, 2)
        assert cfg.detector.channels == ((0, 0), (1, -1))
        assert cfg.propagation.kind == "fresnel"
        from spcdi.field import fresnel_number

        assert fresnel_number(cfg.propagation.geometry) == pytest.approx(3.0)
        assert cfg.recon.alpha == 1.5 and cfg.recon.pattern_order == "shuffled"
        sw = sweep_from(cp, cfg)
        assert sw.axis == "detector_offset" and sw.values == ("(0,0)", "(1,-1)", "(0,1)")

    def test_dynamic_range_section(self):
        cp = read_config("[dynamic_range]\nside = 16\npairs = camera+moon; coins+text\n", is_text=True)
        cfg = dynamic_range_from(cp)
        assert cfg.side == 16 and cfg.pairs == (("camera", "moon"), ("coins", "text"))


class TestAxes:
    def test_channel_block(self):
        assert channel_block(1) == ((0, 0),)
        assert channel_block(4) == ((0, 0), (0, 1), (1, 0), (1, 1))
        assert len(set(channel_block(8))) == 8 and (0, 0) in channel_block(8)
        assert channel_block(9) == tuple((i, j) for i in (-1, 0, 1) for j in (-1, 0, 1))
        assert len(channel_block(16)) == 16
        with pytest.raises(InvalidArgument):
            channel_block(0)

    def test_apply_axis(self):
        base = small()
        assert apply_axis(base, "sampling_ratio", "6").sampling_ratio == 6
        assert apply_axis(base, "noise_sigma_rel", "0.05").noise_sigma_rel == 0.05
        c = apply_axis(base, "channel_count", "8@1/2")
        assert len(c.detector.channels) == 8 and c.sampling_ratio == Fraction(1, 2) and c.recon_detector == "matched"
        c = apply_axis(base, "detector_offset", "(1,-1)")
        assert c.detector.channels == ((1, -1),) and c.assumed_detector().channels == ((0, 0),)
        assert c.needs_calibration()
        c = apply_axis(base, "multibin_count", "4")
        assert c.detector.mode == "summed" and not c.needs_calibration()
        c = apply_axis(base, "distance_z", "0.5")
        assert c.propagation.kind == "fresnel" and c.propagation.geometry.distance == 0.5
        assert c.needs_calibration()
        with pytest.raises(InvalidArgument):
            SweepConfig(base, "temperature", ("1",))
        with pytest.raises(InvalidArgument):
            SweepConfig(base, "sampling_ratio", ())


class TestRunExperiment:
    def test_rows_and_artifacts(self, tmp_path):
        cfg = small(out=str(tmp_path / "run"))
        rep = run_experiment(cfg)
        assert [r.trial for r in rep.rows] == [0, 1]
        assert all(not r.error and math.isfinite(r.amplitude_psnr) for r in rep.rows)
        assert rep.rows[0].epochs == 8
        for name in ("rows.csv", "summary.csv", "timing.csv"):
            assert (tmp_path / "run" / name).exists()
        f = load_field(tmp_path / "run" / "base" / "trial000_recon.field")
        assert f.side == 8
        assert (tmp_path / "run" / "base" / "trial001_phase.pgm.scale").exists()

    def test_byte_identical_rows(self, tmp_path):
        for d in ("a", "b"):
            run_experiment(small(out=str(tmp_path / d)))
        for name in ("rows.csv", "summary.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert (tmp_path / "a" / "base" / "trial000_aligned.field").read_bytes() == (
            tmp_path / "b" / "base" / "trial000_aligned.field"
        ).read_bytes()

    def test_seed_changes_results(self):
        a = run_experiment(small())
        b = run_experiment(small(seed=6))
        assert a.rows[0].amplitude_psnr != b.rows[0].amplitude_psnr

    def test_missing_object_file_named(self):
        with pytest.raises(InvalidArgument, match="object.path"):
            run_experiment(small(obj=ObjectSpec(kind="file", path="/nonexistent/obj.field")))

    def test_failure_isolated_with_marker(self, monkeypatch):
        import spcdi.harness as h
        from spcdi.errors import DivergedError
        from spcdi.retrieval import ReconDiagnostics

        real = h.reconstruct

        def flaky(pats, meas, det, cfg, init=None):
            if cfg.init_seed == h.TrialSeeds.derive(5, 0).init:
                raise DivergedError("forced", ReconDiagnostics(epochs_run=4))
            return real(pats, meas, det, cfg, init)

        monkeypatch.setattr(h, "reconstruct", flaky)
        rep = run_experiment(small())
        assert rep.rows[0].error.startswith("diverged") and rep.rows[0].epochs == 4
        assert math.isnan(rep.rows[0].amplitude_psnr)
        assert rep.rows[1].error == "" and math.isfinite(rep.rows[1].amplitude_psnr)
        assert rep.aggregate()[0]["failed"] == 1

    @pytest.mark.xfail(strict=False, reason=CONVERGENCE)
    def test_flat_object_pipeline(self):
        rep = run_experiment(ExperimentConfig(obj=ObjectSpec(kind="flat"), trials=1))
        assert rep.rows[0].amplitude_psnr >= 40 and rep.rows[0].phase_rms <= 5e-2

    @pytest.mark.xfail(strict=False, reason=CONVERGENCE)
    def test_natural_object_pipeline(self):
        rep = run_experiment(ExperimentConfig(trials=1))
        assert rep.rows[0].amplitude_psnr >= 35


class TestRunSweep:
    def test_parallel_equals_serial(self, tmp_path):
        base = small(trials=2)
        sw = SweepConfig(base, "detector_offset", ("(0,0)", "(1,0)", "(0,-1)"))
        a = run_sweep(replace(sw, base=replace(base, out=str(tmp_path / "s"))))
        run_sweep(replace(sw, base=replace(base, out=str(tmp_path / "p"))), threads=2)
        assert [(r.axis_value, r.trial) for r in a.rows] == [(v, t) for v in sw.values for t in range(2)]
        for name in ("rows.csv", "summary.csv"):
            assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "p" / name).read_bytes()

    def test_aggregate(self):
        rep = run_sweep(SweepConfig(small(trials=3), "sampling_ratio", ("1", "2")))
        agg = rep.aggregate()
        assert [a["axis_value"] for a in agg] == ["1", "2"]
        ps = [r.amplitude_psnr for r in rep.rows if r.axis_value == "2"]
        assert agg[1]["psnr_mean"] == pytest.approx(np.mean(ps))
        assert agg[1]["psnr_std"] == pytest.approx(np.std(ps))
        assert rep.mean_psnr("1") == agg[0]["psnr_mean"]

    def test_point_failure_does_not_stop_sweep(self):
        rep = run_sweep(SweepConfig(small(trials=1, recon=ReconConfig(max_epochs=3)), "noise_sigma_rel", ("0", "0.1")))
        assert len(rep.rows) == 2


class TestDynamicRangeReport:
    def test_small(self, tmp_path):
        rep = report_dynamic_range(
            DynamicRangeConfig(side=32, pairs=(("camera", "astronaut"), ("coins", "moon")), out=str(tmp_path))
        )
        assert len(rep.rows) == 2
        cdi = [r[1] for r in rep.rows]
        assert rep.cdi_geomean == pytest.approx(math.sqrt(cdi[0] * cdi[1]))
        assert rep.single_pixel_geomean < rep.cdi_geomean
        lines = (tmp_path / "dynamic_range.csv").read_text().splitlines()
        assert lines[0].startswith("object,cdi_dynamic_range") and lines[-1].startswith("geometric_mean")

    def test_needs_objects(self):
        with pytest.raises(InvalidArgument):
            report_dynamic_range(DynamicRangeConfig(pairs=()))


class TestCLI:
    def test_pipeline(self, tmp_path, capsys):
        cfg = tmp_path / "exp.ini"
        cfg.write_text("[experiment]\nside = 8\n[object]\nkind = random\nseed = 3\n[recon]\nmax_epochs = 30\n")
        pats = tmp_path / "p.spat"
        assert main(["gen-patterns", "--side", "8", "--ratio", "4", "--seed", "1", "--out", str(pats)]) == 0
        assert load_patterns(pats).m == 256
        meas = tmp_path / "m.csv"
        assert main(["simulate", "--config", str(cfg), "--patterns", str(pats), "--out", str(meas)]) == 0
        assert load_measurements(meas).m == 256
        rec = tmp_path / "r.field"
        assert main(["reconstruct", "--config", str(cfg), "--patterns", str(pats), "--measurements", str(meas), "--out", str(rec)]) == 0
        assert (tmp_path / "r.field.residual.csv").read_text().startswith("epoch,residual\n")
        bg = tmp_path / "bg.field"
        assert main(["calibrate", "--config", str(cfg), "--patterns", str(pats), "--out", str(bg)]) == 0
        capsys.readouterr()
        assert main(["evaluate", "--recon", str(rec), "--truth", str(meas) + ".truth.field", "--out", str(tmp_path / "img")]) == 0
        out = capsys.readouterr().out
        assert "amplitude_psnr_db" in out and "phase_rms_rad" in out
        assert (tmp_path / "img" / "amplitude.pgm").exists()

    def test_sweep_and_single_run(self, tmp_path):
        cfg = tmp_path / "s.ini"
        cfg.write_text(
            "[experiment]\nside = 8\ntrials = 1\n[object]\nkind = random\n[recon]\nmax_epochs = 3\n"
            "[sweep]\naxis = sampling_ratio\nvalues = 1, 2\n"
        )
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o"), "--threads", "1"]) == 0
        assert len((tmp_path / "o" / "rows.csv").read_text().splitlines()) == 3
        one = tmp_path / "one.ini"
        one.write_text("[experiment]\nside = 8\ntrials = 2\n[object]\nkind = random\n[recon]\nmax_epochs = 3\n")
        assert main(["sweep", "--config", str(one), "--out", str(tmp_path / "x")]) == 0
        assert len((tmp_path / "x" / "rows.csv").read_text().splitlines()) == 3

    def test_report_dr(self, tmp_path):
        cfg = tmp_path / "dr.ini"
        cfg.write_text("[dynamic_range]\nside = 16\npairs = camera+astronaut\n")
        assert main(["report-dr", "--config", str(cfg), "--out", str(tmp_path / "dr")]) == 0
        assert (tmp_path / "dr" / "dynamic_range.csv").exists()

    def test_validation_error_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[recon]\nalpha = 5\n")
        assert main(["sweep", "--config", str(cfg)]) != 0
        assert "alpha" in capsys.readouterr().err
        assert main(["reconstruct", "--patterns", str(tmp_path / "none"), "--measurements", "x"]) != 0
