"""Linearization and frequency-domain analysis.

Numerical linearization by central differences, eigenvalues with frequency
and damping, participation factors and mode shapes, and maximum singular
value sweeps of the transfer matrix ``C (sI - A)^-1 B + D``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


def _steps(x0):
    return np.maximum(1e-6, 1e-6 * np.abs(x0))


def jacobian_fd(f, x0, h=None):
    """Central-difference Jacobian of ``f`` at ``x0``; columns evaluated in order."""
    x0 = np.asarray(x0, dtype=float)
    h = _steps(x0) if h is None else h
    f0 = np.asarray(f(x0))
    J = np.empty((f0.size, x0.size))
    for j in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[j] += h[j]
        xm[j] -= h[j]
        J[:, j] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * h[j])
    return J


@dataclass
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    state_labels: list[str] = field(default_factory=list)
    input_labels: list[str] = field(default_factory=list)
    output_labels: list[str] = field(default_factory=list)
    flagged: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        p = self.B.shape[1] if self.B.ndim == 2 else 0
        q = self.C.shape[0] if self.C.ndim == 2 else 0
        if self.B.shape != (n, p) or self.C.shape != (q, n) or self.D.shape != (q, p):
            raise ValueError("inconsistent (A, B, C, D) dimensions")


class NotAnEquilibrium(ValueError):
    pass


# Real parts below this (1/s) are treated as zero. The closed-loop systems
# have a structural zero eigenvalue (a common rotation of all device angles)
# whose finite-difference estimate lands at about 1e-10.
ZERO_TOL = 1e-6


def linearize(model, op, outputs=None, richardson=True, tol=1e-6) -> LinearModel:
    """Linear model of ``model`` about the operating point ``op``.

    ``richardson`` repeats the state Jacobian with halved steps and records
    entries whose relative change exceeds 1e-3 (beyond an absolute floor)
    in ``flagged``.
    """
    from .assembly import outputs as eval_outputs, vector_field

    model = op.model
    x0, u0 = op.x0, op.u0
    f0 = vector_field(model, x0, u0)
    if np.abs(f0).max() > tol:
        raise NotAnEquilibrium(f"|f(x0,u0)| = {np.abs(f0).max():.3e}")
    chans = model.output_channels if outputs is None else list(outputs)
    h = _steps(x0)
    A = jacobian_fd(lambda x: vector_field(model, x, u0), x0, h)
    B = jacobian_fd(lambda u: vector_field(model, x0, u), u0) if u0.size else np.zeros((x0.size, 0))
    C = jacobian_fd(lambda x: eval_outputs(model, x, u0, chans), x0, h)
    D = (jacobian_fd(lambda u: eval_outputs(model, x0, u, chans), u0)
         if u0.size else np.zeros((len(chans), 0)))
    flagged = []
    if richardson:
        A2 = jacobian_fd(lambda x: vector_field(model, x, u0), x0, h / 2)
        scale = np.abs(A).max()
        diff = np.abs(A2 - A)
        rel = diff / np.maximum(np.abs(A), 1e-9 * scale)
        flagged = [tuple(map(int, ij)) for ij in np.argwhere((rel > 1e-3) & (diff > 1e-9 * scale))]
    return LinearModel(A, B, C, D, model.state_labels(), model.input_labels(), chans, flagged)


@dataclass
class ModeReport:
    eigenvalue: complex
    participation: np.ndarray
    shape_angle_deg: np.ndarray
    right_vector: np.ndarray = field(repr=False, default=None)

    @property
    def f_hz(self) -> float:
        return abs(self.eigenvalue.imag) / (2 * np.pi)

    @property
    def zeta_pct(self) -> float:
        lam = self.eigenvalue
        return -100.0 * lam.real / abs(lam) if lam != 0 else 0.0

    @property
    def unstable(self) -> bool:
        return self.eigenvalue.real > ZERO_TOL

    @property
    def sigma(self) -> float:
        return self.eigenvalue.real

    def dominant(self, labels, k=5):
        order = np.argsort(-self.participation, kind="stable")[:k]
        return [(labels[i], float(self.participation[i]), float(self.shape_angle_deg[i]))
                for i in order]


class EigenAnalysisError(np.linalg.LinAlgError):
    pass


def eigen_analysis(lm: LinearModel | np.ndarray) -> list[ModeReport]:
    """Modes of ``A`` with normalized participation factors.

    Complex modes are reported once (positive imaginary part). Left
    eigenvectors come from the same decomposition (eigenvectors of ``A.T``)
    and are scaled so that ``psi_i phi_i = 1``. Mode shapes are
    right-eigenvector angles relative to the largest-participation state.
    """
    A = lm.A if isinstance(lm, LinearModel) else np.asarray(lm, dtype=float)
    if A.shape[0] == 0:
        return []
    lam, phi, psi = _eig_left_right(A)
    reports = []
    for i in range(lam.size):
        if lam[i].imag < 0 and np.any(np.isclose(lam, np.conj(lam[i]), rtol=1e-9, atol=1e-12)):
            continue
        pf = np.abs(phi[:, i] * psi[i, :])
        pf = pf / pf.max() if pf.max() > 0 else pf
        ref = int(np.argmax(pf))
        shape = phi[:, i] / phi[ref, i] if phi[ref, i] != 0 else phi[:, i]
        reports.append(ModeReport(complex(lam[i]), pf, np.degrees(np.angle(shape)), phi[:, i]))
    reports.sort(key=lambda r: (-r.eigenvalue.real, r.f_hz))
    return reports


def _eig_left_right(A):
    try:
        lam, vl, phi = scipy.linalg.eig(A, left=True, right=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenAnalysisError(
            f"eigendecomposition failed (cond(A) = {np.linalg.cond(A):.3e})") from exc
    psi = vl.conj().T
    scale = np.einsum("ij,ji->i", psi, phi)
    if np.any(np.abs(scale) < 1e-14):
        raise EigenAnalysisError(
            f"defective eigenvector matrix (cond = {np.linalg.cond(phi):.3e})")
    return lam, phi, psi / scale[:, None]


def participation_factors(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Participation matrix ``P[k, i] = |phi_ki psi_ik|`` (columns max-normalized) and eigenvalues."""
    lam, phi, psi = _eig_left_right(np.asarray(A, dtype=float))
    P = np.abs(phi * psi.T)
    return P / P.max(axis=0, keepdims=True), lam


def unstable_modes(modes, f_band=None):
    out = [m for m in modes if m.unstable and m.eigenvalue.imag > 0]
    out += [m for m in modes if m.unstable and m.eigenvalue.imag == 0 and f_band is None]
    if f_band is not None:
        out = [m for m in out if f_band[0] <= m.f_hz <= f_band[1]]
    return out


def default_grid(f_min=0.1, f_max=200.0, points=400) -> np.ndarray:
    return np.logspace(np.log10(f_min), np.log10(f_max), points)


def sigma_max_sweep(lm: LinearModel, f_grid) -> np.ndarray:
    """Largest singular value of the frequency response at each grid frequency.

    Uses a Hessenberg reduction of ``A`` once, then one solve per point.
    Points coinciding with an undamped pole return ``inf``.
    """
    f_grid = np.asarray(f_grid, dtype=float)
    if np.any(f_grid <= 0):
        raise ValueError("frequency grid must be positive")
    n = lm.A.shape[0]
    out = np.empty(f_grid.size)
    if n == 0:
        out[:] = np.linalg.svd(lm.D, compute_uv=False)[0] if lm.D.size else 0.0
        return out
    H, Q = scipy.linalg.hessenberg(lm.A, calc_q=True)
    Bq = Q.T @ lm.B
    Cq = lm.C @ Q
    eye = np.eye(n)
    for k, f in enumerate(f_grid):
        s = 2j * np.pi * f
        try:
            X = scipy.linalg.solve(s * eye - H, Bq, check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
            out[k] = np.inf
            continue
        G = Cq @ X + lm.D
        if not np.all(np.isfinite(G)):
            out[k] = np.inf
            continue
        out[k] = np.linalg.svd(G, compute_uv=False)[0] if G.size else 0.0
    return out


def to_db(gain):
    with np.errstate(divide="ignore"):
        return 20 * np.log10(gain)
