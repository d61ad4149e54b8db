"""Modal parameter identification from decomposed harmonic components.

Given per-DOF, per-mode velocity components this module estimates
natural frequencies (spectral centroids of the region ridges), damping
ratios (log-envelope fits), normalized mode-shape moduli (time-averaged
Hilbert envelopes) and inter-DOF phase offsets (windowed circular means
of instantaneous phase differences), and assembles complex mode
vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .analytic import EnvelopePhase, analytic_signal, envelope_and_phase
from .timefreq import (
    HarmonicRegion,
    Spectrogram,
    TimeSeries,
    mask_region,
)

ENVELOPE_FLOOR_FRACTION = 0.20
SMOOTHNESS_THRESHOLD = 0.05
MIN_WINDOW_PERIODS = 5.0
RIDGE_SUPPORT_FRACTION = 0.10
# reconstructed components are trustworthy once the excitation onset has
# left the wavelet's Gaussian window: 2.5 sigma for envelope ratios and
# phases, 3.5 sigma for log-decay fits which are far more bias-sensitive
TRUST_GUARD_SIGMAS = 2.5
DECAY_GUARD_SIGMAS = 3.5


class PeakCountError(ValueError):
    """Fewer prominent spectral peaks than requested modes."""

    def __init__(self, found: int, requested: int):
        super().__init__(
            f"found {found} prominent peaks, need {requested}"
        )
        self.found = found
        self.requested = requested


@dataclass
class ComponentSet:
    """components[i][j]: j-th harmonic component of DOF i's velocity.

    ``edge_guard_s`` holds one untrusted edge span (seconds) per mode;
    the pipeline sets it from the cone of influence at each region's
    ridge so envelope consumers skip reconstruction edge effects.
    """

    components: list
    drive_dof: int = 0
    edge_guard_s: np.ndarray | None = None

    def __post_init__(self):
        if not self.components or not self.components[0]:
            raise ValueError("component matrix must be non-empty")
        n_modes = len(self.components[0])
        base = self.components[0][0]
        for row in self.components:
            if len(row) != n_modes:
                raise ValueError("all DOFs must have the same mode count")
            for c in row:
                if c.n != base.n or abs(c.dt - base.dt) > 1e-12 * base.dt:
                    raise ValueError("all components must share dt and length")
        if self.edge_guard_s is None:
            self.edge_guard_s = np.full(n_modes, 0.05 * base.n * base.dt)
        else:
            self.edge_guard_s = np.asarray(self.edge_guard_s, dtype=float)
            if self.edge_guard_s.shape != (n_modes,):
                raise ValueError("edge_guard_s needs one entry per mode")

    @property
    def n_dof(self) -> int:
        return len(self.components)

    @property
    def n_modes(self) -> int:
        return len(self.components[0])

    @property
    def dt(self) -> float:
        return self.components[0][0].dt

    @property
    def n(self) -> int:
        return self.components[0][0].n

    def component(self, dof: int, mode: int) -> TimeSeries:
        return self.components[dof][mode]

    def trusted_mask(self, mode: int) -> np.ndarray:
        guard = int(np.ceil(self.edge_guard_s[mode] / self.dt))
        mask = np.ones(self.n, dtype=bool)
        guard = min(guard, self.n // 2)
        if guard > 0:
            mask[:guard] = False
            mask[-guard:] = False
        return mask


@dataclass
class PhaseWindow:
    """Trusted time window for phase comparison of one DOF pair."""

    start: float
    end: float
    dof_pair: tuple[int, int]

    def __post_init__(self):
        if not (self.end > self.start):
            raise ValueError("window end must exceed start")

    def to_slice(self, dt: float) -> slice:
        return slice(int(round(self.start / dt)), int(round(self.end / dt)) + 1)


@dataclass
class PairFailure:
    dof_pair: tuple[int, int]
    reason: str


@dataclass
class WindowSelection:
    windows: list
    failures: list

    def for_pair(self, pair: tuple[int, int]) -> list:
        return [w for w in self.windows if w.dof_pair == pair]


@dataclass
class DampingFit:
    zeta: float
    r_squared: float
    low_confidence: bool


@dataclass
class PhaseOffsets:
    theta_deg: np.ndarray
    circular_variance: np.ndarray
    low_confidence: np.ndarray


@dataclass
class Mode:
    """One identified mode: pole parameters and complex shape vector."""

    f_hz: float
    zeta: float
    psi: np.ndarray
    q: complex

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)

    @property
    def pole(self) -> complex:
        w = 2.0 * np.pi * self.f_hz
        return complex(-self.zeta * w, w * np.sqrt(1.0 - self.zeta ** 2))

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(self.psi)


def default_scaling(f_hz: float, zeta: float) -> complex:
    """Modal scaling for mass-orthonormalized shapes: 1/(2i*w*sqrt(1-z^2))."""
    return 1.0 / (2j * 2.0 * np.pi * f_hz * np.sqrt(1.0 - zeta ** 2))


@dataclass
class ModalSet:
    """Identified modes with unit-norm moduli and a real nonnegative
    reference entry."""

    modes: list
    reference_dof: int = 0
    provenance: str = ""

    def __post_init__(self):
        if not self.modes:
            raise ValueError("modal set must contain at least one mode")
        n_dof = self.modes[0].psi.size
        for m in self.modes:
            if m.psi.size != n_dof:
                raise ValueError("all modes must share the DOF count")
            norm = np.linalg.norm(np.abs(m.psi))
            if abs(norm - 1.0) > 1e-8:
                raise ValueError(f"mode moduli must have unit norm, got {norm}")
            ref = m.psi[self.reference_dof]
            if abs(ref.imag) > 1e-8 or ref.real < -1e-12:
                raise ValueError("reference DOF entry must be real nonnegative")

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def n_dof(self) -> int:
        return self.modes[0].psi.size

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([m.f_hz for m in self.modes])

    @property
    def zetas(self) -> np.ndarray:
        return np.array([m.zeta for m in self.modes])

    @property
    def mode_matrix(self) -> np.ndarray:
        return np.column_stack([m.psi for m in self.modes])

    def to_json_dict(self) -> dict:
        return {
            "modes": [
                {
                    "f_hz": m.f_hz,
                    "zeta": m.zeta,
                    "psi": [{"re": c.real, "im": c.imag} for c in m.psi],
                    "q": {"re": m.q.real, "im": m.q.imag},
                }
                for m in self.modes
            ],
            "reference_dof": self.reference_dof,
            "provenance": self.provenance,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ModalSet":
        modes = [
            Mode(
                f_hz=float(m["f_hz"]),
                zeta=float(m["zeta"]),
                psi=np.array([c["re"] + 1j * c["im"] for c in m["psi"]]),
                q=complex(m["q"]["re"], m["q"]["im"]),
            )
            for m in data["modes"]
        ]
        return cls(modes, int(data.get("reference_dof", 0)),
                   data.get("provenance", ""))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json_dict(), indent=1,
                                   sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "ModalSet":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# operations


def suggest_regions(
    S: Spectrogram,
    n_modes: int,
    prominence_fraction: float = RIDGE_SUPPORT_FRACTION,
) -> list[HarmonicRegion]:
    """Propose constant-in-time regions from spectral peaks.

    Takes the n_modes largest local maxima of the time-averaged |X|
    with prominence at least ``prominence_fraction`` of the global
    maximum; boundaries sit at the minima of the averaged spectrum
    between adjacent peaks.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    avg = S.time_average_magnitude()
    peaks, props = find_peaks(avg, prominence=prominence_fraction * avg.max())
    if peaks.size < n_modes:
        raise PeakCountError(found=int(peaks.size), requested=n_modes)
    order = np.argsort(avg[peaks])[::-1][:n_modes]
    strongest = peaks[order]
    prominences = props["prominences"][order]
    rank = np.argsort(strongest)
    strongest = strongest[rank]
    prominences = prominences[rank]
    f = S.grid.values
    cuts = [
        float(f[a + np.argmin(avg[a:b + 1])])
        for a, b in zip(strongest[:-1], strongest[1:])
    ]
    edges = [S.grid.f_min, *cuts, S.grid.f_max + S.grid.step_at(S.grid.f_max)]
    t_span = (0.0, (S.n_time - 1) * S.dt)
    return [
        HarmonicRegion.constant(edges[j], edges[j + 1], t_span, id=j,
                                low_prominence=bool(
                                    prominences[j] < 0.5 * avg.max()))
        for j in range(n_modes)
    ]


def estimate_frequency(component: TimeSeries, S_region: Spectrogram) -> float:
    """Amplitude-weighted centroid of the region's time-averaged |X|.

    The average runs over the mode's active span (columns where the
    ridge row holds at least 10% of its peak) and the centroid over a
    window symmetric about the ridge maximum (clipped to where the
    averaged magnitude stays above 10% of the ridge peak), so neither
    the dead tail of a decayed mode nor one-sided truncation at a
    region boundary can bias the estimate.  The grid resolution at the
    result is its uncertainty.
    """
    prof = S_region.time_average_magnitude()
    if prof.sum() <= 0.0:
        raise ValueError("region carries no spectral energy")
    ridge_row = np.abs(S_region.values[int(np.argmax(prof))])
    ridge_row = np.where(S_region.valid_mask()[int(np.argmax(prof))],
                         ridge_row, 0.0)
    active = ridge_row >= RIDGE_SUPPORT_FRACTION * ridge_row.max()
    mask = S_region.valid_mask() & active[None, :]
    counts = mask.sum(axis=1)
    prof = np.zeros(S_region.n_freq)
    nz = counts > 0
    prof[nz] = (np.abs(S_region.values) * mask).sum(axis=1)[nz] / counts[nz]
    total = prof.sum()
    if total <= 0.0:
        raise ValueError("region carries no spectral energy")
    k_pk = int(np.argmax(prof))
    thr = RIDGE_SUPPORT_FRACTION * prof[k_pk]
    lo = k_pk
    while lo > 0 and prof[lo - 1] >= thr:
        lo -= 1
    hi = k_pk
    while hi < prof.size - 1 and prof[hi + 1] >= thr:
        hi += 1
    half = min(k_pk - lo, hi - k_pk)
    sl = slice(k_pk - half, k_pk + half + 1)
    f = S_region.grid.values
    return float(np.sum(prof[sl] * f[sl]) / np.sum(prof[sl]))


def fit_damping(env: EnvelopePhase, f_hz: float, window: PhaseWindow) -> DampingFit:
    """Least-squares line fit to log A(t) over the window.

    zeta = -slope / (2*pi*f); fits with R^2 below 0.95 are flagged low
    confidence, and slopes implying zeta >= 1 are rejected.
    """
    sl = window.to_slice(env.dt)
    A = env.amplitude[sl]
    if A.size < 4 or np.any(A <= 0.0):
        raise ValueError("envelope must be positive throughout the window")
    t = (np.arange(A.size) + sl.start) * env.dt
    y = np.log(A)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    zeta = -slope / (2.0 * np.pi * f_hz)
    if zeta >= 1.0:
        raise ValueError(
            f"fitted decay implies zeta={zeta:.3g} >= 1; not an oscillatory mode"
        )
    zeta = max(zeta, 0.0)
    return DampingFit(zeta=float(zeta), r_squared=float(r2),
                      low_confidence=bool(r2 < 0.95))


def _envelopes(cs: ComponentSet, mode: int) -> list[EnvelopePhase]:
    return [
        envelope_and_phase(analytic_signal(cs.component(i, mode)))
        for i in range(cs.n_dof)
    ]


def _common_window_mask(cs: ComponentSet, mode: int, reference_dof: int,
                        envs: list[EnvelopePhase]) -> np.ndarray:
    """Trusted samples where the reference envelope holds at least 20%
    of its trusted-span peak."""
    trusted = cs.trusted_mask(mode)
    ref_amp = envs[reference_dof].amplitude
    if not trusted.any() or ref_amp[trusted].max() == 0.0:
        raise ValueError(f"mode {mode}: no trusted signal at the reference DOF")
    floor = ENVELOPE_FLOOR_FRACTION * ref_amp[trusted].max()
    return trusted & (ref_amp >= floor)


def normalized_moduli(
    cs: ComponentSet,
    mode: int,
    reference_dof: int = 0,
    envelopes: list[EnvelopePhase] | None = None,
) -> np.ndarray:
    """Unit-norm vector of time-averaged envelope amplitudes.

    All components of one mode decay at the same rate, so envelope
    ratios are constant wherever the signal is adequate; averaging over
    the common trusted window and normalizing by the root sum of
    squares yields the orthonormalized moduli.
    """
    envs = envelopes if envelopes is not None else _envelopes(cs, mode)
    means = np.array([e.amplitude.max() for e in envs])
    if means.max() == 0.0:
        raise ValueError(f"mode {mode} is zero across all DOFs")
    window = _common_window_mask(cs, mode, reference_dof, envs)
    if not window.any():
        raise ValueError(f"mode {mode}: empty moduli-averaging window")
    means = np.array([e.amplitude[window].mean() for e in envs])
    return means / np.linalg.norm(means)


def _smoothness_ok(A: np.ndarray) -> np.ndarray:
    """Per-sample normalized second difference below threshold."""
    ok = np.ones(A.size, dtype=bool)
    denom = np.maximum(A[1:-1], np.finfo(float).tiny)
    ok[1:-1] = np.abs(A[2:] - 2.0 * A[1:-1] + A[:-2]) / denom < SMOOTHNESS_THRESHOLD
    return ok


def _admissible_runs(ok: np.ndarray, need: int) -> list[tuple[int, int]]:
    runs = []
    start = None
    for k in range(ok.size + 1):
        if k < ok.size and ok[k]:
            if start is None:
                start = k
        elif start is not None:
            if k - start >= need:
                runs.append((start, k - 1))
            start = None
    return runs


def select_phase_windows(
    cs: ComponentSet,
    mode: int,
    reference_dof: int,
    f_hz: float,
    envelopes: list[EnvelopePhase] | None = None,
    guard_s: float | None = None,
) -> WindowSelection:
    """Admissible windows for phase comparison of each DOF against the
    reference.

    A window requires both envelopes at or above 20% of their own
    trusted-span peak, local envelope smoothness, trusted (non-edge)
    samples, and a length of at least 5 modal periods.  ``guard_s``
    overrides the component set's edge guard (phase differences settle
    later than envelope ratios after the excitation onset).  Pairs with
    no admissible window get an explicit failure record.
    """
    envs = envelopes if envelopes is not None else _envelopes(cs, mode)
    if guard_s is None:
        trusted = cs.trusted_mask(mode)
    else:
        g = min(int(np.ceil(guard_s / cs.dt)), cs.n // 2)
        trusted = np.ones(cs.n, dtype=bool)
        if g > 0:
            trusted[:g] = False
            trusted[-g:] = False
    dt = cs.dt
    need = int(np.ceil(MIN_WINDOW_PERIODS / f_hz / dt))
    windows: list[PhaseWindow] = []
    failures: list[PairFailure] = []

    def admissible(dof: int) -> np.ndarray:
        A = envs[dof].amplitude
        if not trusted.any() or A[trusted].max() == 0.0:
            return np.zeros(A.size, dtype=bool)
        floor = ENVELOPE_FLOOR_FRACTION * A[trusted].max()
        return trusted & (A >= floor) & _smoothness_ok(A)

    ref_ok = admissible(reference_dof)
    for dof in range(cs.n_dof):
        if dof == reference_dof:
            continue
        pair = (dof, reference_dof)
        runs = _admissible_runs(admissible(dof) & ref_ok, need)
        if not runs:
            failures.append(PairFailure(
                pair, "no shared smooth, high-envelope span of 5 periods"))
            continue
        windows.extend(
            PhaseWindow(start=a * dt, end=b * dt, dof_pair=pair)
            for a, b in runs
        )
    return WindowSelection(windows=windows, failures=failures)


def estimate_phase_offsets(
    cs: ComponentSet,
    mode: int,
    reference_dof: int,
    selection: WindowSelection,
    envelopes: list[EnvelopePhase] | None = None,
) -> PhaseOffsets:
    """Circular mean of instantaneous phase differences per DOF.

    The earliest admissible window provides the estimate; remaining
    windows only inform the confidence.  Results map to (-180, 180]
    degrees with the reference DOF pinned at exactly zero.  Circular
    variance above 0.2 flags low confidence; pairs without any window
    fall back to the full trusted overlap and are flagged.
    """
    envs = envelopes if envelopes is not None else _envelopes(cs, mode)
    n = cs.n_dof
    theta = np.zeros(n)
    circ_var = np.zeros(n)
    low_conf = np.zeros(n, dtype=bool)
    failed_pairs = {f.dof_pair for f in selection.failures}
    trusted = cs.trusted_mask(mode)

    for dof in range(n):
        if dof == reference_dof:
            continue
        pair = (dof, reference_dof)
        wins = sorted(selection.for_pair(pair), key=lambda w: w.start)
        if wins:
            sl = wins[0].to_slice(cs.dt)
            dphi = envs[dof].phase[sl] - envs[reference_dof].phase[sl]
        elif pair in failed_pairs and trusted.any():
            dphi = (envs[dof].phase - envs[reference_dof].phase)[trusted]
            low_conf[dof] = True
        else:
            raise ValueError(f"no window and no failure record for pair {pair}")
        mean_vec = np.mean(np.exp(1j * dphi))
        theta[dof] = np.degrees(np.angle(mean_vec))
        circ_var[dof] = 1.0 - np.abs(mean_vec)
        if circ_var[dof] > 0.2:
            low_conf[dof] = True
        if theta[dof] <= -180.0:
            theta[dof] += 360.0
    return PhaseOffsets(theta, circ_var, low_conf)


def assemble_modes(
    freqs_hz,
    zetas,
    moduli,
    phases_deg,
    reference_dof: int = 0,
    provenance: str = "",
    scalings=None,
) -> ModalSet:
    """Combine per-mode estimates into a ModalSet.

    psi_k[i] = moduli_k[i] * exp(i * theta_k[i]); the reference entry is
    real nonnegative by construction.  Scalings default to the
    mass-orthonormalized value 1/(2i*w_d).
    """
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    zetas = np.asarray(zetas, dtype=float)
    moduli = np.asarray(moduli, dtype=float)
    phases_deg = np.asarray(phases_deg, dtype=float)
    n_modes = freqs_hz.size
    if not (zetas.size == n_modes and moduli.shape[0] == n_modes
            and phases_deg.shape == moduli.shape):
        raise ValueError(
            f"inconsistent mode counts: freqs {freqs_hz.size}, zetas "
            f"{zetas.size}, moduli {moduli.shape}, phases {phases_deg.shape}"
        )
    modes = []
    for k in range(n_modes):
        phi = moduli[k] / np.linalg.norm(moduli[k])
        psi = phi * np.exp(1j * np.radians(phases_deg[k] - phases_deg[k, reference_dof]))
        q = scalings[k] if scalings is not None else default_scaling(freqs_hz[k], zetas[k])
        modes.append(Mode(f_hz=float(freqs_hz[k]), zeta=float(zetas[k]),
                          psi=psi, q=complex(q)))
    return ModalSet(modes, reference_dof=reference_dof, provenance=provenance)


# ---------------------------------------------------------------------------
# per-drive orchestration


@dataclass
class IdentificationReport:
    frequencies_hz: np.ndarray
    frequency_uncertainty_hz: np.ndarray
    damping_fits: list
    phase_offsets: list
    window_failures: list = field(default_factory=list)


def _decay_fit_window(env: np.ndarray, dt: float, start_s: float,
                      length_s: float) -> tuple[int, int]:
    """Place the log-decay fit window, backing off toward earlier times
    if the preferred placement runs out of record or positive samples."""
    n = env.size
    need = max(int(round(length_s / dt)), 4)
    a = int(round(start_s / dt))
    a = min(a, n - need - 1)
    while a > 0:
        b = a + need
        if b < n and np.all(env[a:b] > 0.0):
            return a, b
        a -= max(need // 4, 1)
    raise ValueError("no usable damping-fit window")


def identify_modal_set(
    cs: ComponentSet,
    spectrograms: list[Spectrogram],
    regions: list[HarmonicRegion],
    reference_dof: int = 0,
    provenance: str = "",
) -> tuple[ModalSet, IdentificationReport]:
    """Run the full estimation chain for one drive point.

    Ridge frequencies (summed time-averaged magnitudes over each
    region) set per-mode trust guards from the wavelet support; moduli
    come from the common envelope window; the strongest-modulus DOF
    supplies the frequency centroid and the damping fit, whose window
    spans whole beat cycles of the closest neighboring ridge so
    interference wobble averages out; phases are windowed circular
    means per DOF pair.
    """
    if len(regions) != cs.n_modes:
        raise ValueError("need one region per mode")
    n_modes = cs.n_modes
    ordered = sorted(regions, key=lambda r: r.id)
    grid = spectrograms[0].grid
    wc = spectrograms[0].wavelet.center_frequency

    region_spectra = [[mask_region(S, r) for S in spectrograms]
                      for r in ordered]
    ridges = np.array([
        grid.values[int(np.argmax(
            sum(S.time_average_magnitude() for S in row)))]
        for row in region_spectra
    ])
    sigma_t = wc / (2.0 * np.pi * ridges)
    record = (cs.n - 1) * cs.dt
    cs.edge_guard_s = np.minimum(TRUST_GUARD_SIGMAS * sigma_t, 0.25 * record)

    freqs = np.empty(n_modes)
    f_unc = np.empty(n_modes)
    zetas = np.empty(n_modes)
    moduli = np.empty((n_modes, cs.n_dof))
    phases = np.zeros((n_modes, cs.n_dof))
    damping_fits = []
    phase_results = []
    failures = []

    for j in range(n_modes):
        envs = _envelopes(cs, j)
        moduli[j] = normalized_moduli(cs, j, reference_dof, envelopes=envs)
        best = int(np.argmax(moduli[j]))
        S_region = region_spectra[j][best]
        freqs[j] = estimate_frequency(cs.component(best, j), S_region)
        f_unc[j] = S_region.grid.step_at(freqs[j])

        gaps = np.abs(np.delete(ridges, j) - ridges[j])
        length = MIN_WINDOW_PERIODS / ridges[j]
        if gaps.size and gaps.min() > 0:
            length = max(length, 1.0 / gaps.min())
        a, b = _decay_fit_window(envs[best].amplitude, cs.dt,
                                 DECAY_GUARD_SIGMAS * sigma_t[j], length)
        fit = fit_damping(envs[best], freqs[j],
                          PhaseWindow(a * cs.dt, b * cs.dt, (best, best)))
        zetas[j] = fit.zeta
        damping_fits.append(fit)

        selection = select_phase_windows(
            cs, j, reference_dof, freqs[j], envelopes=envs,
            guard_s=min(DECAY_GUARD_SIGMAS * sigma_t[j], 0.3 * record),
        )
        offsets = estimate_phase_offsets(cs, j, reference_dof, selection,
                                         envelopes=envs)
        phases[j] = offsets.theta_deg
        phase_results.append(offsets)
        failures.extend((j, f) for f in selection.failures)

    modal = assemble_modes(freqs, zetas, moduli, phases,
                           reference_dof=reference_dof, provenance=provenance)
    report = IdentificationReport(
        frequencies_hz=freqs,
        frequency_uncertainty_hz=f_unc,
        damping_fits=damping_fits,
        phase_offsets=phase_results,
        window_failures=failures,
    )
    return modal, report
