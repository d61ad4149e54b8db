"""Frequency response functions: direct, estimated, and modal-reconstructed.

Direct FRFs come from per-frequency linear solves of the system
matrices, spectral estimates from Welch-averaged cross/auto spectra,
and reconstructions from identified modal parameters via the
conjugate-pole residue expansion.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import csd

from .timefreq import TimeSeries

FRF_KINDS = ("receptance", "mobility", "accelerance")

_KIND_ORDER = {"receptance": 0, "mobility": 1, "accelerance": 2}
_OUTPUT_KIND_TO_FRF = {
    "displacement": "receptance",
    "velocity": "mobility",
    "acceleration": "accelerance",
}


def _check_symmetric(name: str, A: np.ndarray) -> None:
    if not np.allclose(A, A.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError(f"{name} must be symmetric")


@dataclass
class SystemModel:
    """Mass, damping, stiffness matrices of a linear mechanical system."""

    M: np.ndarray
    C: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        self.K = np.asarray(self.K, dtype=float)
        n = self.M.shape[0]
        for name, A in (("M", self.M), ("C", self.C), ("K", self.K)):
            if A.shape != (n, n):
                raise ValueError("M, C, K must be square with matching shape")
            _check_symmetric(name, A)
        try:
            np.linalg.cholesky(self.M)
        except np.linalg.LinAlgError:
            raise ValueError("M must be positive definite") from None
        for name, A in (("C", self.C), ("K", self.K)):
            lo = np.linalg.eigvalsh(A).min()
            if lo < -1e-10 * max(1.0, np.abs(A).max()):
                raise ValueError(f"{name} must be positive semidefinite")

    @property
    def n_dof(self) -> int:
        return self.M.shape[0]


@dataclass
class FrfMatrix:
    """Complex FRF samples H[i_out, j_in, f] over a frequency grid."""

    values: np.ndarray
    freqs: np.ndarray
    kind: str = "receptance"
    coherence: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        self.freqs = np.asarray(self.freqs, dtype=float)
        if self.values.ndim != 3:
            raise ValueError("values must be (n_out, n_in, n_freq)")
        if self.values.shape[2] != self.freqs.size:
            raise ValueError("frequency axis mismatch")
        if self.kind not in FRF_KINDS:
            raise ValueError(f"kind must be one of {FRF_KINDS}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("FRF values must be finite")

    @property
    def n_out(self) -> int:
        return self.values.shape[0]

    @property
    def n_in(self) -> int:
        return self.values.shape[1]

    def band(self, f_lo: float, f_hi: float) -> "FrfMatrix":
        keep = (self.freqs >= f_lo) & (self.freqs <= f_hi)
        coh = self.coherence[:, :, keep] if self.coherence is not None else None
        return FrfMatrix(self.values[:, :, keep], self.freqs[keep], self.kind, coh)


def direct_frf(model: SystemModel, freqs_hz) -> FrfMatrix:
    """H(w) = [-w^2 M + i w C + K]^-1 via per-frequency linear solves."""
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    n = model.n_dof
    out = np.empty((n, n, freqs_hz.size), dtype=complex)
    eye = np.eye(n)
    for k, f in enumerate(freqs_hz):
        w = 2.0 * np.pi * f
        A = -w * w * model.M + 1j * w * model.C + model.K
        try:
            out[:, :, k] = np.linalg.solve(A, eye)
        except np.linalg.LinAlgError:
            raise ValueError(f"dynamic stiffness is singular at {f} Hz") from None
    return FrfMatrix(out, freqs_hz, "receptance")


def estimate_frf(
    inputs: list[TimeSeries],
    outputs: list[TimeSeries],
    method: str = "H1",
    window: str = "hann",
    nperseg: int | None = None,
    band: tuple[float, float] | None = None,
) -> FrfMatrix:
    """Spectral FRF estimate from input/output records.

    Inputs are treated as separate experiments (one column per input);
    cross and auto spectra are Welch-averaged with 50% overlap.  With
    ``band`` given, the default block length spans at least 20 periods
    of the lowest band frequency; otherwise a single block is used.
    H1 = Gxf/Gff rejects output noise, H2 = Gxx/Gfx input noise.
    Ordinary coherence for each (output, input) pair rides along on the
    result.
    """
    if method not in ("H1", "H2"):
        raise ValueError("method must be 'H1' or 'H2'")
    if not inputs or not outputs:
        raise ValueError("need at least one input and one output record")
    n = inputs[0].n
    dt = inputs[0].dt
    for s in [*inputs, *outputs]:
        if s.n != n or abs(s.dt - dt) > 1e-12 * dt:
            raise ValueError("all records must share length and dt")
    fs = 1.0 / dt
    if nperseg is None:
        nperseg = n if band is None else min(n, int(np.ceil(20.0 * fs / band[0])))
    nperseg = min(nperseg, n)

    kinds = {s.kind for s in outputs}
    kind = _OUTPUT_KIND_TO_FRF.get(kinds.pop() if len(kinds) == 1 else "", "mobility")

    def spec(a, b):
        f, G = csd(a, b, fs=fs, window=window, nperseg=nperseg,
                   noverlap=nperseg // 2, detrend=False)
        return f, G

    n_out, n_in = len(outputs), len(inputs)
    freqs = None
    H = None
    coh = None
    for j, u in enumerate(inputs):
        f, Gff = spec(u.samples, u.samples)
        if freqs is None:
            freqs = f
            H = np.empty((n_out, n_in, f.size), dtype=complex)
            coh = np.empty((n_out, n_in, f.size), dtype=float)
        inband = slice(None) if band is None else (f >= band[0]) & (f <= band[1])
        if np.any(np.abs(Gff[inband]) == 0.0):
            raise ValueError(
                f"auto-spectrum of input {u.label!r} vanishes in the band"
            )
        for i, y in enumerate(outputs):
            # scipy's csd(a, b) is conj(A)*B, so csd(force, response)
            # is the response-over-force cross spectrum G_XF
            _, Gxf = spec(u.samples, y.samples)
            _, Gxx = spec(y.samples, y.samples)
            if method == "H1":
                H[i, j] = Gxf / Gff
            else:
                Gfx = np.conj(Gxf)
                if np.any(np.abs(Gfx[inband]) == 0.0):
                    raise ValueError(
                        f"cross-spectrum for output {y.label!r} vanishes in the band"
                    )
                H[i, j] = Gxx / Gfx
            with np.errstate(invalid="ignore", divide="ignore"):
                c = np.abs(Gxf) ** 2 / (np.abs(Gff) * np.abs(Gxx))
            coh[i, j] = np.nan_to_num(c.real)
    result = FrfMatrix(H, freqs, kind, coherence=coh)
    return result.band(*band) if band is not None else result


def reconstruct_frf(modal, freqs_hz) -> FrfMatrix:
    """Receptance from identified modal parameters.

    H(W) = sum_k [ q_k psi_k psi_k^T / (iW - lam_k)
                 + conj(q_k) conj(psi_k psi_k^T) / (iW - conj(lam_k)) ].
    """
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    zetas = np.asarray(modal.zetas, dtype=float)
    if np.any((zetas <= 0.0) | (zetas >= 1.0)):
        raise ValueError(f"damping ratios must lie in (0, 1), got {zetas}")
    n_dof = modal.n_dof
    s = 2j * np.pi * freqs_hz
    H = np.zeros((n_dof, n_dof, freqs_hz.size), dtype=complex)
    for mode in modal.modes:
        lam = mode.pole
        outer = np.outer(mode.psi, mode.psi)
        H += (mode.q * outer)[:, :, None] / (s - lam)[None, None, :]
        H += (np.conj(mode.q * outer))[:, :, None] / (s - np.conj(lam))[None, None, :]
    return FrfMatrix(H, freqs_hz, "receptance")


def convert_frf(H: FrfMatrix, target_kind: str) -> FrfMatrix:
    """Hop along receptance -> mobility -> accelerance by factors of iW."""
    if target_kind not in FRF_KINDS:
        raise ValueError(f"target kind must be one of {FRF_KINDS}")
    steps = _KIND_ORDER[target_kind] - _KIND_ORDER[H.kind]
    if steps == 0:
        return FrfMatrix(H.values.copy(), H.freqs, H.kind, H.coherence)
    s = 2j * np.pi * H.freqs
    if steps < 0 and np.any(H.freqs == 0.0):
        raise ValueError("cannot divide by iW at 0 Hz; remove the DC sample")
    values = H.values * s[None, None, :] ** steps
    return FrfMatrix(values, H.freqs, target_kind, H.coherence)


def reconstruction_error(measured: FrfMatrix, reconstructed: FrfMatrix) -> float:
    """Sum of squared complex deviations over the common grid."""
    if measured.freqs.shape != reconstructed.freqs.shape or not np.allclose(
        measured.freqs, reconstructed.freqs, rtol=1e-12, atol=1e-12
    ):
        raise ValueError("FRF frequency grids do not match")
    if measured.values.shape != reconstructed.values.shape:
        raise ValueError("FRF shapes do not match")
    return float(np.sum(np.abs(measured.values - reconstructed.values) ** 2))


def write_frf_csv(H: FrfMatrix, path) -> Path:
    """Columns freq_hz, out_dof, in_dof, re, im, kind."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("freq_hz,out_dof,in_dof,re,im,kind\n")
        for i in range(H.n_out):
            for j in range(H.n_in):
                for k, f in enumerate(H.freqs):
                    v = H.values[i, j, k]
                    fh.write(f"{f:.17g},{i},{j},{v.real:.17g},{v.imag:.17g},{H.kind}\n")
    return path


def read_frf_csv(path) -> FrfMatrix:
    path = Path(path)
    rows = np.genfromtxt(path, delimiter=",", names=True,
                         dtype=None, encoding="utf-8")
    kind = str(np.atleast_1d(rows["kind"])[0])
    out_idx = np.unique(rows["out_dof"]).astype(int)
    in_idx = np.unique(rows["in_dof"]).astype(int)
    freqs = np.unique(rows["freq_hz"])
    values = np.zeros((out_idx.size, in_idx.size, freqs.size), dtype=complex)
    fpos = {f: k for k, f in enumerate(freqs)}
    opos = {o: k for k, o in enumerate(out_idx)}
    ipos = {i: k for k, i in enumerate(in_idx)}
    for r in np.atleast_1d(rows):
        values[opos[int(r["out_dof"])], ipos[int(r["in_dof"])],
               fpos[float(r["freq_hz"])]] = r["re"] + 1j * r["im"]
    return FrfMatrix(values, freqs, kind)
