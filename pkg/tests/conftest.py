import numpy as np
import pytest

from wavemodal.bench3dof import (
    BenchConfig,
    build_three_dof,
    decimated_force,
    exact_modal_oracle,
    half_sine_impulse,
    simulate_full,
)
from wavemodal.pipeline import PipelineConfig, PipelineRun
from wavemodal.timefreq import FrequencyGrid, WaveletSpec, cwt

# reference modal values (analytical columns of the benchmark tables)
TABLE_FREQS_HZ = np.array([2.30, 3.92, 4.17])
TABLE_ZETAS = np.array([0.0091, 0.0154, 0.0200])
TABLE_PHASES_DEG = np.array([
    [0.000, 0.000, 0.000],
    [1.002, 178.743, -164.275],
    [18.977, 138.048, 51.900],
])
TABLE_MODULI = np.array([
    [0.720, 0.621, 0.143],
    [0.689, 0.625, 0.163],
    [0.077, 0.473, 0.976],
])


@pytest.fixture(scope="session")
def bench_cfg():
    return BenchConfig()


@pytest.fixture(scope="session")
def bench_model(bench_cfg):
    return build_three_dof(bench_cfg)


@pytest.fixture(scope="session")
def bench_oracle(bench_model):
    return exact_modal_oracle(bench_model)


@pytest.fixture(scope="session")
def bench_records():
    """Velocities and band-limited force for all three drive points."""
    out = {}
    for drive in range(3):
        cfg = BenchConfig(drive_dof=drive)
        model = build_three_dof(cfg)
        pulse = half_sine_impulse(cfg, dt=cfg.t_d / 1000.0)
        out[drive] = {
            "velocities": simulate_full(model, pulse, drive, cfg),
            "force": decimated_force(cfg),
            "cfg": cfg,
        }
    return out


@pytest.fixture(scope="session")
def bench_spectra(bench_records):
    """Wavelet spectrograms of the drive-1 velocities (analysis band)."""
    grid = FrequencyGrid.linear(1.0, 6.0, 400)
    spec = WaveletSpec(60.0)
    return [cwt(v, grid, spec) for v in bench_records[0]["velocities"]]


def bench_pipeline_config(tmp_dir, drives):
    return PipelineConfig(
        output_dir=str(tmp_dir),
        band_hz=(1.0, 6.0),
        omega_c=60.0,
        grid_points=400,
        n_modes=3,
        simulate_bench={"drives": list(drives)},
    )


@pytest.fixture(scope="session")
def bench_run(tmp_path_factory):
    """Completed three-drive pipeline run (shared, treat as read-only)."""
    run_dir = tmp_path_factory.mktemp("bench-run")
    run = PipelineRun(bench_pipeline_config(run_dir, [0, 1, 2]))
    run.run_all()
    return run
