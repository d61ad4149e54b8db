"""Reduced-order state-space models from identified modal parameters.

Each complex mode pair contributes a real 2x2 rotation-like block, so
the ROM's transfer function equals the modal residue expansion on the
chosen input/output DOFs exactly.  Simulation uses zero-order-hold
discretization through the matrix exponential.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .frf import FrfMatrix
from .modal_id import ModalSet
from .timefreq import TimeSeries

_NOTE = (
    "conjugate pole pairs realized as real 2x2 blocks [[re, -im], [im, re]]; "
    "B carries Re/Im of psi restricted to inputs, C carries 2*Re/-2*Im of "
    "q*psi (times the pole for velocity outputs, constant feedthrough "
    "omitted) so the transfer function equals the modal residue expansion"
)


@dataclass
class ReducedModel:
    """Real modal state-space realization (2 states per mode)."""

    a_modal: np.ndarray
    b_modal: np.ndarray
    c_out: np.ndarray
    mode_count: int
    input_dofs: list
    output_dofs: list
    modal_frequencies_hz: np.ndarray
    realization_note: str = _NOTE
    provenance_hash: str = ""

    def __post_init__(self):
        self.a_modal = np.asarray(self.a_modal, dtype=float)
        self.b_modal = np.asarray(self.b_modal, dtype=float)
        self.c_out = np.asarray(self.c_out, dtype=float)
        r = self.mode_count
        if self.a_modal.shape != (2 * r, 2 * r):
            raise ValueError("A must be 2r x 2r")
        if self.b_modal.shape[0] != 2 * r or self.c_out.shape[1] != 2 * r:
            raise ValueError("B/C dimensions must match the state size")
        eig = np.linalg.eigvals(self.a_modal)
        if np.max(eig.real) >= 0.0:
            raise ValueError("reduced model must be stable (Re(eig) < 0)")

    @property
    def n_states(self) -> int:
        return 2 * self.mode_count

    def transfer_function(self, freqs_hz) -> FrfMatrix:
        """C (iW I - A)^-1 B sampled on the grid."""
        freqs_hz = np.asarray(freqs_hz, dtype=float)
        n = self.n_states
        out = np.empty((self.c_out.shape[0], self.b_modal.shape[1],
                        freqs_hz.size), dtype=complex)
        for k, f in enumerate(freqs_hz):
            sIA = 2j * np.pi * f * np.eye(n) - self.a_modal
            out[:, :, k] = self.c_out @ np.linalg.solve(sIA, self.b_modal)
        return FrfMatrix(out, freqs_hz, "receptance")

    def to_json_dict(self) -> dict:
        return {
            "A": self.a_modal.tolist(),
            "B": self.b_modal.tolist(),
            "C": self.c_out.tolist(),
            "mode_count": self.mode_count,
            "input_dofs": list(self.input_dofs),
            "output_dofs": list(self.output_dofs),
            "modal_frequencies_hz": self.modal_frequencies_hz.tolist(),
            "realization_note": self.realization_note,
            "provenance_hash": self.provenance_hash,
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json_dict(), indent=1, sort_keys=True))
        return path

    @classmethod
    def from_json_dict(cls, data: dict) -> "ReducedModel":
        return cls(
            a_modal=np.array(data["A"]),
            b_modal=np.array(data["B"]),
            c_out=np.array(data["C"]),
            mode_count=int(data["mode_count"]),
            input_dofs=list(data["input_dofs"]),
            output_dofs=list(data["output_dofs"]),
            modal_frequencies_hz=np.array(data["modal_frequencies_hz"]),
            realization_note=data.get("realization_note", _NOTE),
            provenance_hash=data.get("provenance_hash", ""),
        )

    @classmethod
    def load(cls, path) -> "ReducedModel":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


@dataclass
class SimulationResult:
    t: np.ndarray
    y: np.ndarray
    x_state: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.y.shape[1] != self.t.size:
            raise ValueError("output length must match the time grid")


def build_rom(
    modal: ModalSet,
    input_dofs: list,
    output_dofs: list,
    output_kind: str = "displacement",
) -> ReducedModel:
    """Assemble the block-diagonal modal state space.

    For displacement outputs the transfer function reproduces the
    receptance residue expansion exactly; velocity outputs scale each
    residue by its pole (the vanishing constant feedthrough of a
    complete modal expansion is dropped).
    """
    if output_kind not in ("displacement", "velocity"):
        raise ValueError("output_kind must be 'displacement' or 'velocity'")
    freqs = modal.frequencies
    zetas = modal.zetas
    if np.any(freqs <= 0.0) or np.any((zetas <= 0.0) | (zetas >= 1.0)):
        raise ValueError(
            f"modes must have f > 0 and zeta in (0, 1); got f={freqs}, "
            f"zeta={zetas}"
        )
    r = modal.n_modes
    A = np.zeros((2 * r, 2 * r))
    B = np.zeros((2 * r, len(input_dofs)))
    Cm = np.zeros((len(output_dofs), 2 * r))
    for k, mode in enumerate(modal.modes):
        lam = mode.pole
        sl = slice(2 * k, 2 * k + 2)
        A[sl, sl] = [[lam.real, -lam.imag], [lam.imag, lam.real]]
        psi_in = mode.psi[list(input_dofs)]
        B[sl, :] = np.vstack([psi_in.real, psi_in.imag])
        u = mode.q * mode.psi[list(output_dofs)]
        if output_kind == "velocity":
            u = lam * u
        Cm[:, sl] = np.column_stack([2.0 * u.real, -2.0 * u.imag])
    digest = hashlib.sha256(
        json.dumps(modal.to_json_dict(), sort_keys=True).encode()
    ).hexdigest()
    return ReducedModel(
        a_modal=A,
        b_modal=B,
        c_out=Cm,
        mode_count=r,
        input_dofs=list(input_dofs),
        output_dofs=list(output_dofs),
        modal_frequencies_hz=freqs,
        provenance_hash=digest,
    )


def simulate_rom(
    rom: ReducedModel,
    forces: list[TimeSeries],
    keep_state: bool = False,
) -> SimulationResult:
    """Zero-order-hold simulation from zero initial state."""
    if len(forces) != rom.b_modal.shape[1]:
        raise ValueError(
            f"need {rom.b_modal.shape[1]} force channels, got {len(forces)}"
        )
    dt = forces[0].dt
    n = forces[0].n
    for f in forces:
        if f.n != n or abs(f.dt - dt) > 1e-12 * dt:
            raise ValueError("force channels must share dt and length")
    f_max = float(rom.modal_frequencies_hz.max())
    dt_max = 1.0 / (20.0 * f_max)
    if dt > dt_max:
        raise ValueError(
            f"dt={dt:.6g} s too coarse; need dt <= 1/(20*f_max) = {dt_max:.6g} s"
        )
    ns = rom.n_states
    n_in = rom.b_modal.shape[1]
    aug = np.zeros((ns + n_in, ns + n_in))
    aug[:ns, :ns] = rom.a_modal * dt
    aug[:ns, ns:] = rom.b_modal * dt
    E = expm(aug)
    Ad = E[:ns, :ns]
    Bd = E[:ns, ns:]
    u = np.vstack([f.samples for f in forces])
    x = np.zeros((ns, n))
    for k in range(n - 1):
        x[:, k + 1] = Ad @ x[:, k] + Bd @ u[:, k]
    y = rom.c_out @ x
    return SimulationResult(
        t=np.arange(n) * dt,
        y=y,
        x_state=x if keep_state else None,
    )
