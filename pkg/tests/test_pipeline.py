import json

import numpy as np
import pytest

from conftest import bench_pipeline_config
from wavemodal.bench3dof import BenchConfig, write_records
from wavemodal.cli import main as cli_main
from wavemodal.pipeline import (
    ConfigError,
    InputFile,
    PipelineConfig,
    PipelineRun,
    _rom_drive_force,
    _upsample,
    load_run,
)
from wavemodal.timefreq import TimeSeries, read_timeseries_csv, write_timeseries_csv


class TestConfig:
    def test_requires_a_source(self, tmp_path):
        with pytest.raises(ConfigError, match="input files or simulate_bench"):
            PipelineConfig(output_dir=str(tmp_path))

    def test_rejects_both_sources(self, tmp_path):
        with pytest.raises(ConfigError):
            PipelineConfig(
                output_dir=str(tmp_path),
                simulate_bench={"drives": [0]},
                inputs=[InputFile(path="x.csv", drive_dof=0,
                                  velocity_channels=["v1"])],
            )

    def test_empty_channel_map_fails_before_compute(self, tmp_path):
        csv = tmp_path / "data.csv"
        csv.write_text("time_s,v1:velocity\n0.0,0.0\n0.02,0.1\n")
        with pytest.raises(ConfigError, match="empty channel map"):
            PipelineConfig(
                output_dir=str(tmp_path / "run"),
                inputs=[InputFile(path=str(csv), drive_dof=0,
                                  velocity_channels=[])],
            )

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            PipelineConfig(
                output_dir=str(tmp_path),
                inputs=[InputFile(path=str(tmp_path / "nope.csv"),
                                  drive_dof=0, velocity_channels=["v1"])],
            )

    def test_json_round_trip(self, tmp_path):
        cfg = bench_pipeline_config(tmp_path, [0, 2])
        data = cfg.to_json_dict()
        again = PipelineConfig.from_json_dict(data)
        assert again.config_hash() == cfg.config_hash()


class TestRunArtifacts:
    def test_manifest_covers_outputs(self, bench_run):
        manifest = json.loads((bench_run.run_dir / "manifest.json").read_text())
        stage_names = set(manifest["stages"])
        assert {"ingest", "cwt", "regions", "decompose", "identify",
                "measured_frf", "fuse", "reconstruct_frf", "rom",
                "validate"} <= stage_names
        for stage in manifest["stages"].values():
            for rel, digest in stage["files"].items():
                path = bench_run.run_dir / rel
                assert path.exists()
                import hashlib

                assert hashlib.sha256(path.read_bytes()).hexdigest() == digest

    def test_intermediate_products_reload(self, bench_run):
        run2 = load_run(bench_run.run_dir)
        assert run2.drives == [0, 1, 2]
        assert set(run2.spectra) == {0, 1, 2}
        assert len(run2.spectra[0]) == 3
        assert set(run2.modal_sets) == {0, 1, 2}
        np.testing.assert_allclose(
            run2.modal_sets[0].frequencies,
            bench_run.modal_sets[0].frequencies)

    def test_validate_report(self, bench_run):
        report = json.loads(
            (bench_run.run_dir / "validate" / "report.json").read_text())
        assert set(report["rom_cwt_errors"]) == {"0", "1", "2"}
        assert report["fusion_E_final"] <= min(report["fusion_E_per_drive"])


class TestCsvIngestion:
    def test_external_records_identify(self, tmp_path):
        # bench records written to CSV and ingested as external data
        csv_path = write_records(BenchConfig(drive_dof=0),
                                 tmp_path / "ext.csv")
        cfg = PipelineConfig(
            output_dir=str(tmp_path / "run"),
            band_hz=(1.0, 6.0),
            omega_c=60.0,
            grid_points=400,
            n_modes=3,
            inputs=[InputFile(path=str(csv_path), drive_dof=0,
                              velocity_channels=["v1", "v2", "v3"],
                              force_channel="f1")],
        )
        run = PipelineRun(cfg)
        run.run_all()
        freqs = run.fusion.modal.frequencies
        assert np.abs(freqs - np.array([2.30, 3.92, 4.17])).max() <= 0.0125

    def test_acceleration_channels_integrated(self, tmp_path):
        # differentiate a velocity record spectrally, feed it back as
        # acceleration; ingest must recover the velocity in band
        fs = 50.0
        t = np.arange(0.0, 40.0, 1.0 / fs)
        vel = np.exp(-0.1 * t) * np.cos(2 * np.pi * 2.5 * t)
        spec = np.fft.rfft(vel)
        w = 2j * np.pi * np.fft.rfftfreq(t.size, 1.0 / fs)
        acc = np.fft.irfft(spec * w, n=t.size)
        series = [
            TimeSeries(acc, 1.0 / fs, label="a1", kind="acceleration"),
            TimeSeries(np.zeros_like(acc) + 1e-8, 1.0 / fs, label="f1",
                       kind="force"),
        ]
        csv_path = write_timeseries_csv(series, tmp_path / "acc.csv")
        cfg = PipelineConfig(
            output_dir=str(tmp_path / "run"),
            band_hz=(1.0, 6.0),
            n_modes=1,
            inputs=[InputFile(path=str(csv_path), drive_dof=0,
                              velocity_channels=["a1"])],
        )
        run = PipelineRun(cfg)
        run.stage_ingest()
        got = run.data[0]["velocities"][0]
        interior = slice(200, 1800)
        err = np.abs(got.samples[interior] - vel[interior]).max()
        assert err < 0.01 * np.abs(vel).max()
        assert got.kind == "velocity"


class TestHelpers:
    def test_upsample_band_limited(self):
        fs = 50.0
        t = np.arange(0.0, 4.0, 1.0 / fs)
        x = TimeSeries(np.sin(2 * np.pi * 3.0 * t), 1.0 / fs)
        up = _upsample(x, 4)
        t_fine = np.arange(x.n * 4) * up.dt
        # periodic signal: interpolation is exact away from nothing
        assert np.abs(up.samples - np.sin(2 * np.pi * 3.0 * t_fine)).max() < 1e-9

    def test_rom_drive_force_impulse_path(self, bench_records):
        force = bench_records[0]["force"]
        out = _rom_drive_force(force, 4)
        nz = np.nonzero(out.samples)[0]
        assert nz.size == 1
        impulse = out.samples[nz[0]] * out.dt
        assert impulse == pytest.approx(np.sum(force.samples) * force.dt)

    def test_rom_drive_force_sustained_path(self):
        rng = np.random.default_rng(3)
        force = TimeSeries(rng.standard_normal(1000), 0.02, kind="force")
        out = _rom_drive_force(force, 2)
        assert out.n == 2000
        assert np.count_nonzero(out.samples) > 1000


class TestCli:
    def test_simulate_bench_subcommand(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        rc = cli_main(["simulate-bench", "--drive", "1",
                       "--duration", "10", "--out", str(out)])
        assert rc == 0
        series = read_timeseries_csv(out)
        assert [s.label for s in series] == ["v1", "v2", "v3", "f2"]

    def test_validation_error_exit_code(self, tmp_path):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps({
            "output_dir": str(tmp_path / "run"),
            "inputs": [{"path": str(tmp_path / "missing.csv"),
                        "drive_dof": 0, "velocity_channels": ["v1"]}],
        }))
        rc = cli_main(["run", "--config", str(cfg_path)])
        assert rc == 2

    def test_staged_subcommand(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "output_dir": str(tmp_path / "run"),
            "band_hz": [1.0, 6.0],
            "omega_c": 60.0,
            "grid_points": 200,
            "n_modes": 3,
            "simulate_bench": {"drives": [0], "duration": 40.0},
        }))
        rc = cli_main(["suggest-regions", "--config", str(cfg_path)])
        assert rc == 0
        regions = json.loads(
            (tmp_path / "run" / "regions" / "drive0.json").read_text())
        assert len(regions) == 3
        payload = json.loads(capsys.readouterr().out)
        assert "regions" in payload["stages"]
