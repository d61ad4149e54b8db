"""Wavelet-based output-only modal identification and reduced-order
modeling: CWT/ICWT harmonic decomposition, Hilbert envelopes and
phases, complex mode assembly, drive-point fusion, FRF reconstruction,
and modal state-space simulation."""

__version__ = "0.1.0"

from .analytic import (
    AnalyticSeries,
    EnvelopePhase,
    analytic_signal,
    envelope_and_phase,
    integrate_acceleration,
)
from .bench3dof import (
    BenchConfig,
    ExactModal,
    build_three_dof,
    exact_modal_oracle,
    half_sine_impulse,
    simulate_full,
)
from .frf import (
    FrfMatrix,
    SystemModel,
    convert_frf,
    direct_frf,
    estimate_frf,
    reconstruct_frf,
    reconstruction_error,
)
from .fusion import DriveEstimate, FusionResult, FusionWeights, fuse_mode_estimates
from .modal_id import (
    ComponentSet,
    ModalSet,
    Mode,
    PhaseWindow,
    assemble_modes,
    estimate_frequency,
    estimate_phase_offsets,
    fit_damping,
    identify_modal_set,
    normalized_moduli,
    select_phase_windows,
    suggest_regions,
)
from .pipeline import PipelineConfig, RunManifest, load_run, run_pipeline
from .rom import ReducedModel, SimulationResult, build_rom, simulate_rom
from .timefreq import (
    FrequencyGrid,
    HarmonicRegion,
    Spectrogram,
    TimeSeries,
    WaveletSpec,
    admissibility_constant,
    cwt,
    decompose_regions,
    icwt,
    mask_region,
    morlet_spectrum,
)

__all__ = [name for name in dir() if not name.startswith("_")]
