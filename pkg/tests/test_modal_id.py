import json

import numpy as np
import pytest

from conftest import TABLE_FREQS_HZ, TABLE_MODULI, TABLE_PHASES_DEG
from wavemodal.analytic import analytic_signal, envelope_and_phase
from wavemodal.modal_id import (
    ComponentSet,
    ModalSet,
    Mode,
    PeakCountError,
    PhaseWindow,
    assemble_modes,
    default_scaling,
    estimate_frequency,
    estimate_phase_offsets,
    fit_damping,
    identify_modal_set,
    normalized_moduli,
    select_phase_windows,
    suggest_regions,
)
from wavemodal.timefreq import (
    FrequencyGrid,
    HarmonicRegion,
    TimeSeries,
    WaveletSpec,
    cwt,
    mask_region,
)

FS = 50.0

# reference values for the airplane-style four-mode example inputs
AIRPLANE_FREQS = [115.62, 136.68, 167.00, 169.05]
AIRPLANE_ZETAS = [0.00179, 0.00205, 0.00129, 0.00117]
AIRPLANE_PHASES = [
    [0.0, 0.0, 0.0, 0.0],
    [-0.035, 1.469, 179.526, -179.729],
    [0.470, -178.007, -3.669, 179.543],
    [-0.368, -178.350, 177.394, 0.652],
]
AIRPLANE_MODULI = [
    [0.581, 0.218, 0.316, 0.400],
    [0.327, 0.688, 0.595, 0.649],
    [0.702, 0.255, 0.332, 0.344],
    [0.248, 0.626, 0.608, 0.505],
]


def tone(f_hz, amp=1.0, duration=60.0, decay=0.0, phase=0.0, fs=FS):
    t = np.arange(0.0, duration, 1.0 / fs)
    return TimeSeries(amp * np.exp(-decay * t) * np.cos(2 * np.pi * f_hz * t + phase),
                      1.0 / fs)


def decayed_component_set(f_hz=2.5, decay=0.13, amps=(1.0, 0.5, 0.25),
                          phases=(0.0, 0.0, 0.0)):
    comps = [[tone(f_hz, amp=a, decay=decay, phase=p)]
             for a, p in zip(amps, phases)]
    return ComponentSet(comps, drive_dof=0)


class TestSuggestRegions:
    def test_bench_regions_contain_modal_frequencies(self, bench_spectra):
        # the third channel carries all three prominent ridges at drive 1
        regions = suggest_regions(bench_spectra[2], 3)
        assert len(regions) == 3
        t_mid = 30.0
        for region, f_mode in zip(regions, TABLE_FREQS_HZ):
            assert region.lower_at(t_mid) < f_mode < region.upper_at(t_mid)

    def test_single_tone_spans_grid(self):
        x = tone(3.0)
        grid = FrequencyGrid.linear(1.0, 6.0, 200)
        S = cwt(x, grid, WaveletSpec(50.0))
        regions = suggest_regions(S, 1)
        assert len(regions) == 1
        assert regions[0].lower_at(30.0) <= grid.f_min
        assert regions[0].upper_at(30.0) >= grid.f_max

    def test_white_noise_errors_or_flags(self):
        rng = np.random.default_rng(123)
        x = TimeSeries(rng.standard_normal(3000), 1.0 / FS)
        S = cwt(x, FrequencyGrid.linear(1.0, 6.0, 200), WaveletSpec(50.0))
        try:
            regions = suggest_regions(S, 5)
        except PeakCountError as err:
            assert err.found < 5
            assert err.requested == 5
        else:
            assert all(r.low_prominence for r in regions)

    def test_too_many_modes_requested(self):
        S = cwt(tone(3.0), FrequencyGrid.linear(1.0, 6.0, 200),
                WaveletSpec(50.0))
        with pytest.raises(PeakCountError) as err:
            suggest_regions(S, 4)
        assert err.value.found < 4


class TestEstimateFrequency:
    def test_bench_mode_1(self, bench_spectra):
        regions = suggest_regions(bench_spectra[2], 3)
        S_region = mask_region(bench_spectra[0], regions[0])
        f = estimate_frequency(tone(2.3), S_region)
        step = bench_spectra[0].grid.step_at(2.30)
        assert abs(f - 2.30) <= step

    def test_bench_mode_3(self, bench_spectra):
        regions = suggest_regions(bench_spectra[2], 3)
        S_region = mask_region(bench_spectra[2], regions[2])
        f = estimate_frequency(tone(4.17), S_region)
        step = bench_spectra[2].grid.step_at(4.17)
        assert abs(f - 4.17) <= step

    def test_synthetic_tone(self):
        x = tone(3.0)
        grid = FrequencyGrid.linear(1.0, 6.0, 400)
        S = cwt(x, grid, WaveletSpec(50.0))
        f = estimate_frequency(x, S)
        assert abs(f - 3.0) <= grid.step_at(3.0)

    def test_empty_region_rejected(self):
        x = TimeSeries(np.zeros(1024), 1.0 / FS)
        S = cwt(x, FrequencyGrid.linear(1.0, 6.0, 64), WaveletSpec(50.0))
        with pytest.raises(ValueError, match="energy"):
            estimate_frequency(x, S)


class TestFitDamping:
    def test_synthetic_decay(self):
        zeta, f = 0.0091, 2.30
        w = 2 * np.pi * f
        x = tone(f * np.sqrt(1 - zeta ** 2), decay=zeta * w, duration=60.0)
        env = envelope_and_phase(analytic_signal(x))
        fit = fit_damping(env, f, PhaseWindow(5.0, 40.0, (0, 0)))
        assert abs(fit.zeta - zeta) / zeta < 0.01
        assert fit.r_squared > 0.999
        assert not fit.low_confidence

    def test_constant_envelope(self):
        env = envelope_and_phase(analytic_signal(tone(3.0)))
        fit = fit_damping(env, 3.0, PhaseWindow(10.0, 50.0, (0, 0)))
        assert abs(fit.zeta) <= 1e-4

    def test_wobbly_envelope_flagged(self):
        t = np.arange(0.0, 60.0, 1.0 / FS)
        x = TimeSeries(
            (1.0 + 0.8 * np.sin(2 * np.pi * 0.21 * t))
            * np.cos(2 * np.pi * 3.0 * t), 1.0 / FS)
        env = envelope_and_phase(analytic_signal(x))
        fit = fit_damping(env, 3.0, PhaseWindow(10.0, 50.0, (0, 0)))
        assert fit.low_confidence

    def test_overdamped_slope_rejected(self):
        t = np.arange(0.0, 20.0, 1.0 / FS)
        env = envelope_and_phase(analytic_signal(
            TimeSeries(np.exp(-25.0 * t) * np.cos(2 * np.pi * 3.0 * t) + 1e-12,
                       1.0 / FS)))
        with pytest.raises(ValueError, match="zeta"):
            fit_damping(env, 0.1, PhaseWindow(0.02, 0.3, (0, 0)))


class TestNormalizedModuli:
    def test_amplitude_ratios(self):
        cs = decayed_component_set(amps=(1.0, 0.5, 0.25))
        mod = normalized_moduli(cs, 0, reference_dof=0)
        expected = np.array([1.0, 0.5, 0.25])
        expected /= np.linalg.norm(expected)
        assert np.abs(mod - expected).max() < 1e-3
        assert np.linalg.norm(mod) == pytest.approx(1.0)

    def test_single_active_dof(self):
        comps = [[tone(2.5, amp=a, decay=0.1)] for a in (0.0, 1.0, 0.0)]
        comps[0][0].samples[:] = 0.0
        comps[2][0].samples[:] = 0.0
        cs = ComponentSet(comps, drive_dof=1)
        mod = normalized_moduli(cs, 0, reference_dof=1)
        assert np.allclose(mod, [0.0, 1.0, 0.0], atol=1e-12)

    def test_scale_invariance(self):
        cs1 = decayed_component_set(amps=(1.0, 0.5, 0.25))
        cs2 = decayed_component_set(amps=(7.0, 3.5, 1.75))
        m1 = normalized_moduli(cs1, 0, reference_dof=0)
        m2 = normalized_moduli(cs2, 0, reference_dof=0)
        assert np.abs(m1 - m2).max() < 1e-12

    def test_all_zero_rejected(self):
        comps = [[TimeSeries(np.zeros(512) + 0.0, 1.0 / FS)] for _ in range(3)]
        with pytest.raises(ValueError):
            cs = ComponentSet(comps, drive_dof=0)
            normalized_moduli(cs, 0, reference_dof=0)


class TestPhaseWindows:
    def test_identical_signals_earliest_window(self):
        cs = decayed_component_set(amps=(1.0, 1.0, 1.0))
        sel = select_phase_windows(cs, 0, reference_dof=0, f_hz=2.5)
        assert not sel.failures
        for dof in (1, 2):
            wins = sel.for_pair((dof, 0))
            assert wins
            first = min(w.start for w in wins)
            guard = cs.edge_guard_s[0]
            assert first == pytest.approx(guard, abs=2.0 / FS)

    def test_noise_pair_records_failure(self):
        rng = np.random.default_rng(99)
        comps = [[tone(2.5, decay=0.13)],
                 [TimeSeries(1e-2 * rng.standard_normal(3000), 1.0 / FS)]]
        cs = ComponentSet(comps, drive_dof=0)
        sel = select_phase_windows(cs, 0, reference_dof=0, f_hz=2.5)
        assert any(f.dof_pair == (1, 0) for f in sel.failures)

    def test_minimum_length_respected(self):
        cs = decayed_component_set()
        sel = select_phase_windows(cs, 0, reference_dof=0, f_hz=2.5)
        for w in sel.windows:
            assert w.end - w.start >= 5.0 / 2.5

    def test_bench_pairs_have_windows(self, bench_run):
        # drive-1 identification found admissible windows for both
        # strongly excited modes at every DOF pair
        report = json.loads(
            (bench_run.run_dir / "modal" / "drive0.report.json").read_text())
        failed_modes = {f["mode"] for f in report["window_failures"]}
        assert 0 not in failed_modes
        assert 1 not in failed_modes


class TestPhaseOffsets:
    def test_self_pair_is_zero(self):
        cs = decayed_component_set(amps=(1.0, 1.0, 1.0))
        sel = select_phase_windows(cs, 0, reference_dof=0, f_hz=2.5)
        off = estimate_phase_offsets(cs, 0, 0, sel)
        assert off.theta_deg[0] == 0.0
        assert abs(off.theta_deg[1]) < 0.5

    def test_sign_flip_is_180(self):
        cs = decayed_component_set(amps=(1.0, 1.0, 1.0),
                                   phases=(0.0, np.pi, 0.0))
        sel = select_phase_windows(cs, 0, reference_dof=0, f_hz=2.5)
        off = estimate_phase_offsets(cs, 0, 0, sel)
        assert abs(abs(off.theta_deg[1]) - 180.0) < 0.5

    def test_quarter_cycle(self):
        cs = decayed_component_set(phases=(0.0, np.pi / 2, -np.pi / 2))
        sel = select_phase_windows(cs, 0, reference_dof=0, f_hz=2.5)
        off = estimate_phase_offsets(cs, 0, 0, sel)
        assert abs(off.theta_deg[1] - 90.0) < 0.5
        assert abs(off.theta_deg[2] + 90.0) < 0.5

    def test_common_delay_invariance(self):
        base = decayed_component_set(phases=(0.0, 0.6, -0.8))
        delay = 0.37
        t = np.arange(0.0, 60.0, 1.0 / FS)
        delayed = [[TimeSeries(
            np.exp(-0.13 * t) * np.cos(2 * np.pi * 2.5 * (t - delay) + p),
            1.0 / FS)] for p in (0.0, 0.6, -0.8)]
        cs2 = ComponentSet(delayed, drive_dof=0)
        sel1 = select_phase_windows(base, 0, 0, 2.5)
        sel2 = select_phase_windows(cs2, 0, 0, 2.5)
        off1 = estimate_phase_offsets(base, 0, 0, sel1)
        off2 = estimate_phase_offsets(cs2, 0, 0, sel2)
        diff = np.abs(off1.theta_deg - off2.theta_deg)
        assert diff.max() < 1.0

    def test_bench_mode_2_phase(self, bench_run):
        modal = bench_run.modal_sets[0]
        theta = np.degrees(np.angle(modal.modes[1].psi[1]))
        assert abs(theta - 178.743) < 3.0


class TestAssembleModes:
    def test_reference_entry_real_nonnegative(self):
        modal = assemble_modes(
            TABLE_FREQS_HZ, [0.0091, 0.0154, 0.0200],
            TABLE_MODULI.T, TABLE_PHASES_DEG.T,
        )
        for mode in modal.modes:
            assert mode.psi[0].imag == 0.0
            assert mode.psi[0].real >= 0.0
            assert np.linalg.norm(np.abs(mode.psi)) == pytest.approx(1.0)

    def test_zero_phases_give_real_vectors(self):
        modal = assemble_modes(
            [2.0, 3.0], [0.01, 0.01],
            [[0.6, 0.8], [0.8, 0.6]], [[0.0, 0.0], [0.0, 0.0]],
        )
        assert np.abs(modal.mode_matrix.imag).max() == 0.0

    def test_airplane_table_columns(self, tmp_path):
        # listed moduli columns are not exactly unit norm; the loader
        # renormalizes
        moduli = np.array(AIRPLANE_MODULI)
        modal = assemble_modes(AIRPLANE_FREQS, AIRPLANE_ZETAS,
                               moduli.T, np.array(AIRPLANE_PHASES).T)
        assert modal.n_modes == 4
        for j, mode in enumerate(modal.modes):
            assert np.linalg.norm(np.abs(mode.psi)) == pytest.approx(1.0)
            ratio = np.abs(mode.psi) / moduli[:, j]
            assert ratio.std() / ratio.mean() < 1e-12
        # the set is a valid input for serialization and ROM construction
        loaded = ModalSet.load(modal.save(tmp_path / "airplane.json"))
        assert np.allclose(loaded.mode_matrix, modal.mode_matrix)
        from wavemodal.rom import build_rom

        rom = build_rom(loaded, input_dofs=[0], output_dofs=[0, 1, 2, 3],
                        output_kind="velocity")
        assert rom.n_states == 8
        assert np.linalg.eigvals(rom.a_modal).real.max() < 0.0

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="inconsistent"):
            assemble_modes([2.0], [0.01], [[0.6, 0.8]], [[0.0]])

    def test_default_scaling_convention(self):
        q = default_scaling(2.0, 0.05)
        wd = 2 * np.pi * 2.0 * np.sqrt(1 - 0.05 ** 2)
        assert q == pytest.approx(1.0 / (2j * wd))


class TestModalSet:
    def test_json_round_trip(self, tmp_path, bench_oracle):
        modal = bench_oracle.to_modal_set()
        path = modal.save(tmp_path / "modal.json")
        loaded = ModalSet.load(path)
        assert loaded.n_modes == modal.n_modes
        assert np.allclose(loaded.mode_matrix, modal.mode_matrix)
        assert np.allclose(loaded.frequencies, modal.frequencies)
        assert loaded.reference_dof == modal.reference_dof

    def test_invariants_enforced(self):
        with pytest.raises(ValueError, match="unit norm"):
            ModalSet([Mode(2.0, 0.01, np.array([1.0, 1.0]), 1j)])
        with pytest.raises(ValueError, match="reference"):
            ModalSet([Mode(2.0, 0.01, np.array([0.6j, 0.8]), 1j)])

    def test_dof_permutation_equivariance(self):
        rng = np.random.default_rng(17)
        phases = (0.0, 0.7, -1.1)
        amps = (1.0, 0.5, 0.25)
        cs = decayed_component_set(amps=amps, phases=phases)
        perm = [2, 0, 1]
        cs_perm = ComponentSet(
            [cs.components[i] for i in perm], drive_dof=0)
        m1 = normalized_moduli(cs, 0, reference_dof=0)
        m2 = normalized_moduli(cs_perm, 0, reference_dof=1)
        assert np.abs(m1[perm] - m2).max() < 1e-9


class TestIdentifyModalSet:
    def test_bench_drive1_full_chain(self, bench_run, bench_oracle):
        modal = bench_run.modal_sets[0]
        report = bench_run.reports[0]
        assert np.abs(modal.frequencies - TABLE_FREQS_HZ).max() <= 0.0125
        rel = np.abs(modal.zetas - bench_oracle.zetas) / bench_oracle.zetas
        assert rel[0] < 0.03 and rel[1] < 0.08 and rel[2] < 0.15
        assert report.frequency_uncertainty_hz.max() <= 5.0 / 399.0 + 1e-12

    def test_region_count_mismatch_rejected(self, bench_run):
        cs = bench_run.components[0]
        with pytest.raises(ValueError, match="one region per mode"):
            identify_modal_set(cs, bench_run.spectra[0],
                               bench_run.regions[0][:2])
