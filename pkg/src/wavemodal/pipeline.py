"""End-to-end identification pipeline and run-directory management.

Chains simulate/ingest -> cwt -> regions -> decompose -> identify ->
measured FRFs -> fuse -> reconstruct -> ROM -> validate, persisting
every intermediate product in open formats so each stage can be
inspected, re-run, or driven from the HTTP service.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import integrate_acceleration
from .bench3dof import BenchConfig, decimated_force, half_sine_impulse, \
    build_three_dof, simulate_full, PULSE_OVERSAMPLE
from .frf import FrfMatrix, convert_frf, estimate_frf, read_frf_csv, write_frf_csv
from .fusion import DriveEstimate, FusionResult, fuse_mode_estimates
from .modal_id import ComponentSet, ModalSet, identify_modal_set, suggest_regions
from .rom import ReducedModel, build_rom, simulate_rom
from .timefreq import (
    FrequencyGrid,
    HarmonicRegion,
    Spectrogram,
    TimeSeries,
    WaveletSpec,
    check_regions_disjoint,
    cwt,
    icwt,
    mask_region,
    read_regions,
    read_spectrogram,
    read_timeseries_csv,
    write_regions,
    write_spectrogram,
    write_timeseries_csv,
)

class ConfigError(ValueError):
    pass


@dataclass
class InputFile:
    path: str
    drive_dof: int
    velocity_channels: list
    force_channel: str | None = None


@dataclass
class PipelineConfig:
    """Everything a run needs: data source, band, wavelet, regions."""

    output_dir: str
    band_hz: tuple = (1.0, 6.0)
    omega_c: float = 50.0
    grid_points: int = 400
    n_modes: int = 3
    region_source: str = "auto"
    reference_dof: int = 0
    inputs: list = field(default_factory=list)
    simulate_bench: dict | None = None

    def __post_init__(self):
        f_lo, f_hi = self.band_hz
        if not (0.0 < f_lo < f_hi):
            raise ConfigError(f"band must satisfy 0 < f_lo < f_hi, got {self.band_hz}")
        if self.grid_points < 8:
            raise ConfigError("grid_points must be at least 8")
        if self.n_modes < 1:
            raise ConfigError("n_modes must be at least 1")
        if self.simulate_bench is None and not self.inputs:
            raise ConfigError("config needs either input files or simulate_bench")
        if self.simulate_bench is not None and self.inputs:
            raise ConfigError("give input files or simulate_bench, not both")
        for item in self.inputs:
            if not item.velocity_channels:
                raise ConfigError(f"input {item.path}: empty channel map")
            if not Path(item.path).exists():
                raise ConfigError(f"input file does not exist: {item.path}")
        if self.region_source not in ("auto", "interactive") and not Path(
            self.region_source
        ).exists():
            raise ConfigError(f"region file does not exist: {self.region_source}")

    @classmethod
    def from_json_dict(cls, data: dict) -> "PipelineConfig":
        inputs = [InputFile(**item) for item in data.get("inputs", [])]
        return cls(
            output_dir=data["output_dir"],
            band_hz=tuple(data.get("band_hz", (1.0, 6.0))),
            omega_c=float(data.get("omega_c", 50.0)),
            grid_points=int(data.get("grid_points", 400)),
            n_modes=int(data.get("n_modes", 3)),
            region_source=data.get("region_source", "auto"),
            reference_dof=int(data.get("reference_dof", 0)),
            inputs=inputs,
            simulate_bench=data.get("simulate_bench"),
        )

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_json_dict(json.loads(Path(path).read_text()))

    def to_json_dict(self) -> dict:
        out = {
            "output_dir": self.output_dir,
            "band_hz": list(self.band_hz),
            "omega_c": self.omega_c,
            "grid_points": self.grid_points,
            "n_modes": self.n_modes,
            "region_source": self.region_source,
            "reference_dof": self.reference_dof,
        }
        if self.inputs:
            out["inputs"] = [dataclasses.asdict(i) for i in self.inputs]
        if self.simulate_bench is not None:
            out["simulate_bench"] = self.simulate_bench
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def grid(self) -> FrequencyGrid:
        return FrequencyGrid.linear(*self.band_hz, self.grid_points)

    def wavelet(self) -> WaveletSpec:
        return WaveletSpec(self.omega_c)

    def bench_drives(self) -> list:
        if self.simulate_bench is None:
            return []
        return list(self.simulate_bench.get("drives", [0]))

    def bench_config(self, drive: int) -> BenchConfig:
        args = {k: v for k, v in (self.simulate_bench or {}).items()
                if k != "drives"}
        return BenchConfig(drive_dof=drive, **args)


@dataclass
class RunManifest:
    config_hash: str
    version: str
    stages: dict
    started_at: float

    def to_json_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "stages": self.stages,
            "started_at": self.started_at,
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json_dict(), indent=1, sort_keys=True))
        return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class PipelineRun:
    """Holds the evolving state of one run directory."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.run_dir = Path(config.output_dir)
        self.manifest = RunManifest(
            config_hash=config.config_hash(),
            version=__version__,
            stages={},
            started_at=time.time(),
        )
        self.data: dict = {}          # drive -> {"velocities": [...], "force": ...}
        self.spectra: dict = {}       # drive -> [Spectrogram]
        self.regions: dict = {}       # drive -> [HarmonicRegion]
        self.components: dict = {}    # drive -> ComponentSet
        self.modal_sets: dict = {}    # drive -> ModalSet
        self.reports: dict = {}
        self.measured: dict = {}      # drive -> FrfMatrix
        self.fusion: FusionResult | None = None
        self.reconstructed: FrfMatrix | None = None
        self.rom: ReducedModel | None = None

    # -- helpers ----------------------------------------------------------

    def path(self, *parts) -> Path:
        p = self.run_dir.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def _record(self, stage: str, t0: float, files: list) -> None:
        self.manifest.stages[stage] = {
            "seconds": round(time.time() - t0, 3),
            "files": {str(Path(f).relative_to(self.run_dir)): _sha256(Path(f))
                      for f in files},
        }

    @property
    def drives(self) -> list:
        return sorted(self.data.keys())

    # -- stages ------------------------------------------------------------

    def stage_ingest(self) -> None:
        t0 = time.time()
        files = []
        cfgpath = self.path("config.json")
        cfgpath.write_text(json.dumps(self.config.to_json_dict(), indent=1,
                                      sort_keys=True))
        files.append(cfgpath)
        if self.config.simulate_bench is not None:
            for drive in self.config.bench_drives():
                cfg = self.config.bench_config(drive)
                model = build_three_dof(cfg)
                dtf = (1.0 / cfg.fs) / int(round(
                    (1.0 / cfg.fs) / (cfg.t_d / PULSE_OVERSAMPLE)))
                pulse = half_sine_impulse(cfg, dt=dtf)
                velocities = simulate_full(model, pulse, drive, cfg)
                force = decimated_force(cfg)
                path = self.path("data", f"drive{drive}.csv")
                write_timeseries_csv([*velocities, force], path)
                files.append(path)
                self.data[drive] = {"velocities": velocities, "force": force}
        else:
            for item in self.config.inputs:
                series = {s.label: s for s in read_timeseries_csv(item.path)}
                vel = []
                for name in item.velocity_channels:
                    if name not in series:
                        raise ConfigError(
                            f"{item.path}: channel {name!r} not found"
                        )
                    ch = series[name]
                    if ch.kind == "acceleration":
                        ch = integrate_acceleration(ch, self.config.band_hz)
                        ch.label = name
                    vel.append(ch)
                force = None
                if item.force_channel:
                    if item.force_channel not in series:
                        raise ConfigError(
                            f"{item.path}: force channel "
                            f"{item.force_channel!r} not found"
                        )
                    force = series[item.force_channel]
                path = self.path("data", f"drive{item.drive_dof}.csv")
                write_timeseries_csv([*vel, *( [force] if force else [] )], path)
                files.append(path)
                self.data[item.drive_dof] = {"velocities": vel, "force": force}
        self._record("ingest", t0, files)

    def stage_cwt(self) -> None:
        t0 = time.time()
        files = []
        grid = self.config.grid()
        spec = self.config.wavelet()
        for drive in self.drives:
            spectra = []
            for i, v in enumerate(self.data[drive]["velocities"]):
                S = cwt(v, grid, spec)
                S.label = f"drive{drive}/ch{i}"
                p, sidecar = write_spectrogram(
                    S, self.path("cwt", f"drive{drive}_ch{i}.spec"))
                files.extend([p, sidecar])
                spectra.append(S)
            self.spectra[drive] = spectra
        self._record("cwt", t0, files)

    def stage_regions(self) -> None:
        t0 = time.time()
        files = []
        for drive in self.drives:
            if self.config.region_source in ("auto", "interactive"):
                # "interactive" starts from the suggestion too; the analyst
                # refines it through the service afterward
                regions = None
                best = 0
                for S in self.spectra[drive]:
                    try:
                        regions = suggest_regions(S, self.config.n_modes)
                        break
                    except ValueError as exc:
                        best = max(best, getattr(exc, "found", 0))
                if regions is None:
                    raise ValueError(
                        f"drive {drive}: no channel shows "
                        f"{self.config.n_modes} prominent peaks "
                        f"(best found {best})"
                    )
            else:
                regions = read_regions(self.config.region_source)
            path = write_regions(regions,
                                 self.path("regions", f"drive{drive}.json"))
            files.append(path)
            self.regions[drive] = regions
        self._record("regions", t0, files)

    def set_regions(self, drive: int, regions: list[HarmonicRegion]) -> None:
        """Replace one drive's regions (service write path) and persist."""
        S = self.spectra[drive][0]
        t = S.times()
        for r in regions:
            lo, hi = r.lower_at(t), r.upper_at(t)
            if np.all(hi <= S.grid.f_min) or np.all(lo >= S.grid.f_max):
                from .timefreq import RegionError
                raise RegionError(
                    f"region {r.id} lies outside the grid span "
                    f"[{S.grid.f_min}, {S.grid.f_max}] Hz",
                    region_ids=[r.id],
                )
        check_regions_disjoint(sorted(regions, key=lambda r: r.id), t)
        self.regions[drive] = sorted(regions, key=lambda r: r.id)
        write_regions(self.regions[drive],
                      self.path("regions", f"drive{drive}.json"))

    def stage_decompose(self, only_drive: int | None = None) -> None:
        t0 = time.time()
        files = []
        drives = [only_drive] if only_drive is not None else self.drives
        for drive in drives:
            regions = sorted(self.regions[drive], key=lambda r: r.id)
            check_regions_disjoint(regions, self.spectra[drive][0].times())
            comps = []
            for i, S in enumerate(self.spectra[drive]):
                row = []
                for region in regions:
                    c = icwt(mask_region(S, region))
                    c.label = f"ch{i}/region{region.id}"
                    row.append(c)
                comps.append(row)
                path = self.path("components", f"drive{drive}_ch{i}.csv")
                write_timeseries_csv(row, path)
                files.append(path)
            self.components[drive] = ComponentSet(comps, drive_dof=drive)
        self._record(f"decompose{'' if only_drive is None else only_drive}",
                     t0, files)

    def stage_identify(self, only_drive: int | None = None) -> None:
        t0 = time.time()
        files = []
        drives = [only_drive] if only_drive is not None else self.drives
        for drive in drives:
            modal, report = identify_modal_set(
                self.components[drive],
                self.spectra[drive],
                self.regions[drive],
                reference_dof=self.config.reference_dof,
                provenance=f"drive{drive}",
            )
            self.modal_sets[drive] = modal
            self.reports[drive] = report
            path = modal.save(self.path("modal", f"drive{drive}.modalset.json"))
            files.append(path)
            rpt = self.path("modal", f"drive{drive}.report.json")
            rpt.write_text(json.dumps({
                "frequencies_hz": report.frequencies_hz.tolist(),
                "frequency_uncertainty_hz":
                    report.frequency_uncertainty_hz.tolist(),
                "damping": [
                    {"zeta": f.zeta, "r_squared": f.r_squared,
                     "low_confidence": f.low_confidence}
                    for f in report.damping_fits
                ],
                "phases_deg": [p.theta_deg.tolist()
                               for p in report.phase_offsets],
                "circular_variance": [p.circular_variance.tolist()
                                      for p in report.phase_offsets],
                "window_failures": [
                    {"mode": j, "dof_pair": list(f.dof_pair),
                     "reason": f.reason}
                    for j, f in report.window_failures
                ],
            }, indent=1, sort_keys=True))
            files.append(rpt)
        self._record(f"identify{'' if only_drive is None else only_drive}",
                     t0, files)

    def stage_measured_frf(self) -> None:
        t0 = time.time()
        files = []
        for drive in self.drives:
            force = self.data[drive]["force"]
            if force is None:
                continue
            H = estimate_frf([force], self.data[drive]["velocities"],
                             method="H1", window="boxcar")
            H = H.band(*self.config.band_hz)
            path = write_frf_csv(H, self.path("frf", f"measured_drive{drive}.csv"))
            files.append(path)
            self.measured[drive] = H
        self._record("measured_frf", t0, files)

    def stage_fuse(self) -> None:
        t0 = time.time()
        estimates = []
        for drive in self.drives:
            if drive not in self.measured:
                continue
            estimates.append(DriveEstimate(
                drive_dof=drive,
                modal=self.modal_sets[drive],
                measured_frf=self.measured[drive],
            ))
        if not estimates:
            raise ValueError(
                "fusion needs at least one drive with a measured force channel"
            )
        self.fusion = fuse_mode_estimates(estimates, self.config.band_hz)
        fused_path = self.fusion.modal.save(self.path("fused.modalset.json"))
        report = self.path("fusion_report.json")
        report.write_text(json.dumps(self.fusion.report_dict(), indent=1,
                                     sort_keys=True))
        self._record("fuse", t0, [fused_path, report])

    def stage_reconstruct(self) -> None:
        t0 = time.time()
        from .frf import reconstruct_frf
        first = self.drives[0]
        if first in self.measured:
            freqs = self.measured[first].freqs
            kind = self.measured[first].kind
        else:
            freqs = self.config.grid().values
            kind = "mobility"
        H = reconstruct_frf(self.fusion.modal, freqs)
        H = convert_frf(H, kind)
        path = write_frf_csv(H, self.path("frf", "reconstructed.csv"))
        self.reconstructed = H
        self._record("reconstruct_frf", t0, [path])

    def stage_rom(self) -> None:
        t0 = time.time()
        n_dof = self.fusion.modal.n_dof
        self.rom = build_rom(
            self.fusion.modal,
            input_dofs=self.drives,
            output_dofs=list(range(n_dof)),
            output_kind="velocity",
        )
        path = self.rom.save(self.path("rom", "rom.json"))
        self._record("rom", t0, [path])

    def stage_validate(self) -> None:
        t0 = time.time()
        report = {
            "fusion_E_final": self.fusion.e_value,
            "fusion_E_per_drive": self.fusion.e_per_drive.tolist(),
            "rom_cwt_errors": {},
        }
        grid = self.config.grid()
        spec = self.config.wavelet()
        for drive in self.drives:
            force = self.data[drive]["force"]
            if force is None:
                continue
            factor = 2 * int(np.ceil(
                20.0 * float(self.rom.modal_frequencies_hz.max()) * force.dt))
            fine = _rom_drive_force(force, factor)
            forces = []
            for d in self.drives:
                if d == drive:
                    forces.append(fine)
                else:
                    forces.append(TimeSeries(np.zeros(fine.n), fine.dt,
                                             label=f"f{d}", kind="force"))
            sim = simulate_rom(self.rom, forces)
            out_dof = drive
            y = sim.y[self.rom.output_dofs.index(out_dof)][::factor]
            meas = self.data[drive]["velocities"][out_dof]
            n = min(y.size, meas.n)
            S_rom = cwt(TimeSeries(y[:n], meas.dt, label="rom"), grid, spec)
            S_meas = self.spectra[drive][out_dof]
            mask = S_meas.valid_mask()[:, :n]
            num = np.abs(np.abs(S_rom.values[:, :n]) -
                         np.abs(S_meas.values[:, :n]))[mask].sum()
            den = np.abs(S_meas.values[:, :n])[mask].sum()
            report["rom_cwt_errors"][str(drive)] = float(num / den)
        path = self.path("validate", "report.json")
        path.write_text(json.dumps(report, indent=1, sort_keys=True))
        self._record("validate", t0, [path])

    # -- orchestration ------------------------------------------------------

    def run_all(self) -> RunManifest:
        self.stage_ingest()
        self.stage_cwt()
        self.stage_regions()
        self.stage_decompose()
        self.stage_identify()
        self.stage_measured_frf()
        self.stage_fuse()
        self.stage_reconstruct()
        self.stage_rom()
        self.stage_validate()
        self.manifest.save(self.path("manifest.json"))
        return self.manifest

    def rerun_from_regions(self, drive: int,
                           regions: list[HarmonicRegion]) -> dict:
        """Service write path: swap one drive's regions, rerun decompose
        onward, and return a summary of the refreshed identification."""
        self.set_regions(drive, regions)
        self.stage_decompose(only_drive=drive)
        self.stage_identify(only_drive=drive)
        self.stage_fuse()
        self.stage_reconstruct()
        self.stage_rom()
        self.stage_validate()
        self.manifest.save(self.path("manifest.json"))
        return self.summary()

    def summary(self) -> dict:
        fused = self.fusion.modal if self.fusion else None
        return {
            "drives": self.drives,
            "fused": fused.to_json_dict() if fused else None,
            "E_final": self.fusion.e_value if self.fusion else None,
            "modalset_sha256": _sha256(self.path("fused.modalset.json"))
            if fused else None,
        }


def run_pipeline(config: PipelineConfig) -> RunManifest:
    return PipelineRun(config).run_all()


def load_run(run_dir) -> PipelineRun:
    """Rebuild a PipelineRun from a completed run directory."""
    run_dir = Path(run_dir)
    config = PipelineConfig.load(run_dir / "config.json")
    config.output_dir = str(run_dir)
    run = PipelineRun(config)
    for csv in sorted((run_dir / "data").glob("drive*.csv")):
        drive = int(csv.stem.replace("drive", ""))
        series = read_timeseries_csv(csv)
        vel = [s for s in series if s.kind == "velocity"]
        force = next((s for s in series if s.kind == "force"), None)
        run.data[drive] = {"velocities": vel, "force": force}
    shared_wavelet = None
    for drive in run.drives:
        spectra = []
        i = 0
        while (run_dir / "cwt" / f"drive{drive}_ch{i}.spec").exists():
            S = read_spectrogram(run_dir / "cwt" / f"drive{drive}_ch{i}.spec")
            # share one spec instance so calibration caches are reused
            if shared_wavelet is not None and (
                shared_wavelet.center_frequency
                == S.wavelet.center_frequency
            ):
                S.wavelet = shared_wavelet
            else:
                shared_wavelet = S.wavelet
            spectra.append(S)
            i += 1
        if spectra:
            run.spectra[drive] = spectra
        rpath = run_dir / "regions" / f"drive{drive}.json"
        if rpath.exists():
            run.regions[drive] = read_regions(rpath)
        mpath = run_dir / "modal" / f"drive{drive}.modalset.json"
        if mpath.exists():
            run.modal_sets[drive] = ModalSet.load(mpath)
        fpath = run_dir / "frf" / f"measured_drive{drive}.csv"
        if fpath.exists():
            run.measured[drive] = read_frf_csv(fpath)
    mpath = run_dir / "manifest.json"
    if mpath.exists():
        data = json.loads(mpath.read_text())
        run.manifest = RunManifest(
            config_hash=data["config_hash"],
            version=data["version"],
            stages=data["stages"],
            started_at=data["started_at"],
        )
    return run


def _upsample(ts: TimeSeries, factor: int) -> TimeSeries:
    """Band-limited upsampling by an integer factor (FFT zero-padding)."""
    if factor <= 1:
        return ts
    n = ts.n
    spec = np.fft.rfft(ts.samples)
    out = np.fft.irfft(spec, n=n * factor) * factor
    return TimeSeries(out, ts.dt / factor, label=ts.label, kind=ts.kind)


def _rom_drive_force(force: TimeSeries, factor: int) -> TimeSeries:
    """Force channel prepared for zero-order-hold ROM simulation.

    Impact-like records (90% of the energy inside 1% of the record)
    become an equivalent discrete impulse: a sub-sample pulse held over
    whole steps loses its front otherwise.  Sustained forces are
    band-limited upsampled instead.
    """
    energy = force.samples ** 2
    total = energy.sum()
    if total == 0.0:
        return _upsample(force, factor)
    order = np.sort(energy)[::-1]
    n_top = max(1, int(np.ceil(0.01 * force.n)))
    if order[:n_top].sum() >= 0.9 * total:
        mass = np.abs(force.samples)
        impulse = float(np.sum(force.samples) * force.dt)
        dt = force.dt / factor
        samples = np.zeros(force.n * factor)
        k = int(np.argmax(mass)) * factor
        samples[k] = impulse / dt
        return TimeSeries(samples, dt, label=force.label, kind="force")
    return _upsample(force, factor)
