"""Combine per-drive-point modal estimates into one modal set.

Mode shapes from different drive points are phase-aligned and blended
with per-mode nonnegative weights summing to one; the weights minimize
the squared deviation between all measured FRFs and the FRF
reconstructed from the blended set, solved by projected gradient on
the per-mode simplices from multiple deterministic starts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frf import FrfMatrix
from .modal_id import ModalSet, assemble_modes

N_RANDOM_RESTARTS = 8
_SEED = 2024
_FLAT_TOL = 1e-12


class ModeMatchError(ValueError):
    pass


@dataclass
class DriveEstimate:
    """Modal estimate plus the measured FRF column for one drive point."""

    drive_dof: int
    modal: ModalSet
    measured_frf: FrfMatrix

    def __post_init__(self):
        if self.measured_frf.n_out != self.modal.n_dof:
            raise ValueError("measured FRF rows must match the modal DOF count")
        if self.measured_frf.n_in != 1:
            raise ValueError("measured FRF must hold exactly the drive column")


@dataclass
class FusionWeights:
    """w[j][k]: weight of drive point k for mode j; rows on the simplex."""

    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.ndim != 2:
            raise ValueError("weights must be (n_modes, n_drives)")
        if np.any(self.w < -1e-12):
            raise ValueError("weights must be nonnegative")
        if not np.allclose(self.w.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("each mode's weights must sum to one")


@dataclass
class FusionResult:
    modal: ModalSet
    weights: FusionWeights
    e_value: float
    e_per_drive: np.ndarray
    iterations: int

    def report_dict(self) -> dict:
        return {
            "weights": self.w_list(),
            "E_initial_per_drive": self.e_per_drive.tolist(),
            "E_final": self.e_value,
            "iterations": self.iterations,
        }

    def w_list(self) -> list:
        return self.weights.w.tolist()


def project_simplex(y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the unit simplex (sort-based)."""
    u = np.sort(y)[::-1]
    css = (np.cumsum(u) - 1.0) / np.arange(1, y.size + 1)
    k = np.nonzero(u > css)[0][-1]
    return np.maximum(y - css[k], 0.0)


def _match_and_align(estimates: list[DriveEstimate]):
    """Match modes across drive points by frequency proximity and align
    phases.

    Returns per-mode shape matrices (n_dof, n_drives) rotated so each
    column's inner product with the first estimate is real positive,
    plus the matched frequency and damping tables (n_modes, n_drives).
    """
    ref = estimates[0].modal
    f_ref = ref.frequencies
    gaps = np.diff(np.sort(f_ref))
    tol = 0.5 * gaps.min() if gaps.size else np.inf
    n_drives = len(estimates)
    shapes = [np.empty((ref.n_dof, n_drives), dtype=complex)
              for _ in range(ref.n_modes)]
    f_matched = np.empty((ref.n_modes, n_drives))
    z_matched = np.empty((ref.n_modes, n_drives))
    for k, est in enumerate(estimates):
        f_est = est.modal.frequencies
        if f_est.size != f_ref.size:
            raise ModeMatchError("estimates carry different mode counts")
        for j, fj in enumerate(f_ref):
            close = np.where(np.abs(f_est - fj) < tol)[0]
            if close.size != 1:
                raise ModeMatchError(
                    f"mode at {fj:.4g} Hz matches {close.size} candidates in "
                    f"drive {est.drive_dof}: "
                    f"{[float(f_est[c]) for c in close]} Hz"
                )
            mode = est.modal.modes[close[0]]
            psi = mode.psi
            inner = np.vdot(shapes[j][:, 0] if k else psi, psi)
            shapes[j][:, k] = psi * np.exp(-1j * np.angle(inner)) if k else psi
            f_matched[j, k] = mode.f_hz
            z_matched[j, k] = mode.zeta
    return shapes, f_matched, z_matched


class _Objective:
    """E(w) = sum over drives, outputs, band frequencies of
    |H_meas - H_recon(w)|^2, with the reconstruction converted to each
    measured FRF's kind.

    Identified shapes carry unit-norm moduli, so their residue levels
    sit a mode-dependent factor away from physical FRF magnitudes; with
    fixed scalings that offset floods E and hides shape quality.  Each
    evaluation therefore first fits the per-mode complex scalings by
    linear least squares against all measured columns (variable
    projection); E is the remaining, purely shape-driven misfit.
    """

    def __init__(self, estimates, shapes, freqs, zetas, band):
        self.shapes = shapes
        self.freqs = freqs
        self.zetas = zetas
        self.n_modes = len(shapes)
        self.n_drives = len(estimates)
        self.targets = []
        for est in estimates:
            H = est.measured_frf
            keep = (H.freqs >= band[0]) & (H.freqs <= band[1])
            if not keep.any():
                raise ValueError("no measured FRF samples inside the band")
            self.targets.append({
                "freqs": H.freqs[keep],
                "values": H.values[:, 0, keep],
                "kind": H.kind,
                "drive": est.drive_dof,
            })

    def _poles(self):
        w = 2.0 * np.pi * self.freqs
        return -self.zetas * w + 1j * w * np.sqrt(1.0 - self.zetas ** 2)

    def _mode_terms(self, psis):
        """Per target, per mode: the unscaled residue responses U (pole)
        and V (conjugate pole), each (n_dof, n_f)."""
        lam = self._poles()
        terms = []
        for tgt in self.targets:
            s = 2j * np.pi * tgt["freqs"]
            factor = {"receptance": np.ones_like(s), "mobility": s,
                      "accelerance": s * s}[tgt["kind"]]
            d = tgt["drive"]
            rows = []
            for j in range(self.n_modes):
                psi = psis[j]
                outer_col = psi * psi[d]
                U = outer_col[:, None] * (factor / (s - lam[j]))[None, :]
                V = np.conj(outer_col)[:, None] * (
                    factor / (s - np.conj(lam[j])))[None, :]
                rows.append((U, V))
            terms.append(rows)
        return terms

    def fit_scalings(self, w: np.ndarray):
        """Least-squares per-mode complex scalings for the blended shapes."""
        psis = [self.shapes[j] @ w[j] for j in range(self.n_modes)]
        terms = self._mode_terms(psis)
        cols = []
        rhs = []
        for tgt, rows in zip(self.targets, terms):
            rhs.append(tgt["values"].ravel())
            cols.append([(U + V).ravel() for U, V in rows]
                        + [(1j * (U - V)).ravel() for U, V in rows])
        rhs = np.concatenate(rhs)
        design = np.column_stack([np.concatenate([c[j] for c in cols])
                                  for j in range(2 * self.n_modes)])
        A = np.vstack([design.real, design.imag])
        b = np.concatenate([rhs.real, rhs.imag])
        coef, *_ = np.linalg.lstsq(A, b, rcond=None)
        q = coef[: self.n_modes] + 1j * coef[self.n_modes:]
        return psis, q

    def _residuals(self, w: np.ndarray):
        psis, q = self.fit_scalings(w)
        terms = self._mode_terms(psis)
        out = []
        for tgt, rows in zip(self.targets, terms):
            model = np.zeros_like(tgt["values"])
            for j, (U, V) in enumerate(rows):
                model += q[j] * U + np.conj(q[j]) * V
            out.append(model - tgt["values"])
        return psis, q, out

    def value(self, w: np.ndarray) -> float:
        _, _, resids = self._residuals(w)
        return float(sum(np.sum(np.abs(r) ** 2) for r in resids))

    def gradient(self, w: np.ndarray) -> np.ndarray:
        # envelope theorem: at the fitted scalings the inner problem is
        # stationary, so only the explicit shape dependence contributes
        psis, q, resids = self._residuals(w)
        lam = self._poles()
        grad = np.zeros_like(w)
        for tgt, resid in zip(self.targets, resids):
            s = 2j * np.pi * tgt["freqs"]
            factor = {"receptance": np.ones_like(s), "mobility": s,
                      "accelerance": s * s}[tgt["kind"]]
            d = tgt["drive"]
            for j in range(self.n_modes):
                psi = psis[j]
                base = factor / (s - lam[j])
                base_c = factor / (s - np.conj(lam[j]))
                for k in range(self.n_drives):
                    pk = self.shapes[j][:, k]
                    # d(psi psi^T)[i, d] / dw_jk = pk[i] psi[d] + psi[i] pk[d]
                    dvec = q[j] * (pk * psi[d] + psi * pk[d])
                    dH = dvec[:, None] * base[None, :] \
                        + np.conj(dvec)[:, None] * base_c[None, :]
                    grad[j, k] += 2.0 * float(
                        np.sum(np.real(np.conj(resid) * dH)))
        return grad


def _projected_gradient(obj: _Objective, w0: np.ndarray,
                        max_iter: int = 300) -> tuple[np.ndarray, float, int]:
    w = w0.copy()
    e = obj.value(w)
    step = 1.0
    iters = 0
    for _ in range(max_iter):
        g = obj.gradient(w)
        improved = False
        while step >= 1e-14:
            trial = np.vstack([project_simplex(w[j] - step * g[j])
                               for j in range(w.shape[0])])
            e_trial = obj.value(trial)
            if e_trial < e - 1e-15:
                w, e = trial, e_trial
                improved = True
                step *= 1.5
                break
            step *= 0.5
        iters += 1
        if not improved:
            break
    return w, e, iters


def fuse_mode_estimates(
    estimates: list[DriveEstimate],
    freq_band: tuple[float, float],
) -> FusionResult:
    """Optimally blend drive-point estimates.

    Runs projected gradient from the uniform start, every vertex, and
    eight seeded Dirichlet restarts; the lowest reconstruction error
    wins, with ties broken toward the uniform weighting.
    """
    if not estimates:
        raise ValueError("need at least one drive estimate")
    # canonical ordering makes the result exactly permutation-invariant
    order = sorted(range(len(estimates)),
                   key=lambda k: (estimates[k].drive_dof, k))
    inverse = np.argsort(order)
    estimates = [estimates[k] for k in order]
    n_drives = len(estimates)
    ref = estimates[0].modal
    n_modes = ref.n_modes
    shapes, f_matched, z_matched = _match_and_align(estimates)
    # poles enter the objective at their across-drive mean and stay
    # fixed while only the shape weights are optimized
    freqs = f_matched.mean(axis=1)
    zetas = z_matched.mean(axis=1)

    if n_drives == 1:
        w = np.ones((n_modes, 1))
        obj = _Objective(estimates, shapes, freqs, zetas, freq_band)
        e = obj.value(w)
        modal = _normalized_modal(shapes, w, f_matched, z_matched,
                                  ref.reference_dof, obj)
        return FusionResult(modal, FusionWeights(w), e, np.array([e]), 0)

    obj = _Objective(estimates, shapes, freqs, zetas, freq_band)
    uniform = np.full((n_modes, n_drives), 1.0 / n_drives)
    starts = [uniform]
    for k in range(n_drives):
        v = np.zeros((n_modes, n_drives))
        v[:, k] = 1.0
        starts.append(v)
    rng = np.random.default_rng(_SEED)
    starts.extend(rng.dirichlet(np.ones(n_drives), size=n_modes)
                  for _ in range(N_RANDOM_RESTARTS))

    e_vertices = np.array([obj.value(s) for s in starts[1:1 + n_drives]])
    best_w, best_e, best_iters = None, np.inf, 0
    for w0 in starts:
        w, e, iters = _projected_gradient(obj, w0)
        if best_w is None or e < best_e - _FLAT_TOL * (1.0 + abs(best_e)):
            best_w, best_e, best_iters = w, e, iters

    e_uniform = obj.value(uniform)
    if abs(best_e - e_uniform) <= _FLAT_TOL * (1.0 + abs(e_uniform)):
        best_w, best_e = uniform, e_uniform

    modal = _normalized_modal(shapes, best_w, f_matched, z_matched,
                              ref.reference_dof, obj)
    # report weights and vertex errors in the caller's estimate order
    return FusionResult(modal, FusionWeights(best_w[:, inverse]),
                        float(best_e), e_vertices[inverse], best_iters)


def _normalized_modal(shapes, w, f_matched, z_matched, reference_dof,
                      obj: _Objective) -> ModalSet:
    """Fused set: shapes renormalized to unit moduli, poles combined
    with the same per-mode weights so weakly excited drive points do
    not pollute frequency or damping, and scalings calibrated against
    the measured FRFs (the normalization and reference rotation are
    folded into each scaling so the residues are unchanged)."""
    freqs = np.sum(w * f_matched, axis=1)
    zetas = np.sum(w * z_matched, axis=1)
    psis, q = obj.fit_scalings(w)
    moduli = []
    phases = []
    scalings = []
    for j in range(len(shapes)):
        psi = psis[j]
        rot = np.exp(-1j * np.angle(psi[reference_dof]))
        norm = np.linalg.norm(np.abs(psi))
        psi = psi * rot / norm
        moduli.append(np.abs(psi))
        phases.append(np.degrees(np.angle(psi)))
        scalings.append(q[j] * norm ** 2 / rot ** 2)
    return assemble_modes(freqs, zetas, np.array(moduli), np.array(phases),
                          reference_dof=reference_dof, provenance="fusion",
                          scalings=scalings)
