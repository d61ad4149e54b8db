"""Hilbert-transform analytic signals, envelopes, and phases.

The analytic signal is computed spectrally (negative frequencies
zeroed, positive frequencies doubled); the first and last 5% of the
record are flagged untrusted because of Gibbs effects at the edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import hilbert

from .timefreq import TimeSeries

EDGE_GUARD_FRACTION = 0.05


@dataclass
class AnalyticSeries:
    """Complex z(t) = x(t) + i*H{x}(t); real part equals the source."""

    values: np.ndarray
    dt: float
    label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 1:
            raise ValueError("values must be 1-D")
        if not (self.dt > 0):
            raise ValueError("dt must be positive")

    @property
    def n(self) -> int:
        return self.values.size


@dataclass
class EnvelopePhase:
    """Instantaneous amplitude and unwrapped phase of an analytic signal."""

    amplitude: np.ndarray
    phase: np.ndarray
    dt: float
    trusted: np.ndarray = field(default=None)
    low_signal: bool = False

    def __post_init__(self):
        self.amplitude = np.asarray(self.amplitude, dtype=float)
        self.phase = np.asarray(self.phase, dtype=float)
        if self.amplitude.shape != self.phase.shape:
            raise ValueError("amplitude and phase must have the same shape")
        if np.any(self.amplitude < 0):
            raise ValueError("amplitude must be nonnegative")
        if self.trusted is None:
            n = self.amplitude.size
            guard = int(np.ceil(EDGE_GUARD_FRACTION * n))
            trusted = np.ones(n, dtype=bool)
            trusted[:guard] = False
            trusted[n - guard:] = False
            self.trusted = trusted
        else:
            self.trusted = np.asarray(self.trusted, dtype=bool)


def analytic_signal(x: TimeSeries) -> AnalyticSeries:
    """Spectral-method analytic signal of a real series."""
    if x.n < 8:
        raise ValueError("signal must have at least 8 samples")
    return AnalyticSeries(hilbert(x.samples), x.dt, label=x.label)


def envelope_and_phase(z: AnalyticSeries) -> EnvelopePhase:
    """Envelope |z| and unwrapped arg(z).

    Samples whose amplitude falls below machine precision relative to
    the peak carry the phase forward from the last valid sample; an
    all-zero input yields zero envelope and phase with ``low_signal``
    set.
    """
    amp = np.abs(z.values)
    peak = amp.max()
    if peak == 0.0:
        return EnvelopePhase(amp, np.zeros_like(amp), z.dt, low_signal=True)
    raw_phase = np.angle(z.values)
    valid = amp >= np.finfo(float).eps * peak
    if not valid.all():
        idx = np.where(valid, np.arange(amp.size), -1)
        idx = np.maximum.accumulate(idx)
        first = np.argmax(idx >= 0)
        idx[idx < 0] = idx[first] if idx[first] >= 0 else 0
        raw_phase = raw_phase[idx]
    return EnvelopePhase(amp, np.unwrap(raw_phase), z.dt)


def integrate_acceleration(a: TimeSeries, band: tuple[float, float]) -> TimeSeries:
    """Band-limited frequency-domain integration of acceleration.

    Divides the spectrum by i*2*pi*f inside [f_lo, f_hi] and zeroes
    everything outside, so DC offsets and drift never reach the output.
    """
    f_lo, f_hi = band
    nyq = 0.5 / a.dt
    if not (0.0 < f_lo < f_hi < nyq):
        raise ValueError(
            f"band must satisfy 0 < f_lo < f_hi < Nyquist ({nyq} Hz), got {band}"
        )
    spec = np.fft.rfft(a.samples)
    freqs = np.fft.rfftfreq(a.n, a.dt)
    keep = (freqs >= f_lo) & (freqs <= f_hi)
    out = np.zeros_like(spec)
    out[keep] = spec[keep] / (2j * np.pi * freqs[keep])
    vel = np.fft.irfft(out, n=a.n)
    return TimeSeries(vel, a.dt, label=a.label, kind="velocity")
