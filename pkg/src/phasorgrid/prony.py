"""Classical Prony analysis of uniformly sampled ringdowns.

The signal is modelled as a sum of damped complex exponentials
``y[n] = sum_i b_i z_i**n``. The characteristic polynomial comes from a
least-squares linear prediction, its roots give ``lambda_i = ln(z_i)/dt``
and the residues ``b_i`` follow from a second least-squares fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PronyRankError(np.linalg.LinAlgError):
    """The linear-prediction matrix is rank deficient for the requested order."""


@dataclass(frozen=True)
class PronyMode:
    eigenvalue: complex
    amplitude: float
    phase_rad: float
    energy: float = 0.0

    @property
    def sigma(self) -> float:
        return self.eigenvalue.real

    @property
    def f_hz(self) -> float:
        return abs(self.eigenvalue.imag) / (2 * np.pi)

    @property
    def zeta_pct(self) -> float:
        lam = self.eigenvalue
        return -100.0 * lam.real / abs(lam) if lam != 0 else 0.0


@dataclass
class PronyResult:
    """Fitted modes (sorted by energy over the window) and fit quality.

    ``residual`` is the relative reconstruction error ``|y - fit| / |y|``.
    Complex-conjugate pairs appear as two entries with the same amplitude.
    """

    modes: list[PronyMode]
    dt: float
    order: int
    residual: float
    fitted: np.ndarray

    def dominant(self, f_band=None) -> PronyMode:
        """Largest-amplitude oscillatory mode, optionally inside ``f_band`` (Hz)."""
        cands = [m for m in self.modes if m.eigenvalue.imag > 0]
        if f_band is not None:
            cands = [m for m in cands if f_band[0] <= m.f_hz <= f_band[1]]
        if not cands:
            raise ValueError("no oscillatory mode in the requested band")
        return max(cands, key=lambda m: m.amplitude)


def _hankel(y, order):
    n = y.size - order
    return np.column_stack([y[order - k - 1:order - k - 1 + n] for k in range(order)])


def singular_values(y, max_order=None) -> np.ndarray:
    """Singular values of the data Hankel matrix used for order selection."""
    y = np.asarray(y, dtype=float)
    L = max_order or min(y.size // 2, 60)
    H = _hankel(y, L)
    return np.linalg.svd(H, compute_uv=False)


def suggest_order(y, energy=1 - 1e-8, max_order=None) -> int:
    """Smallest model order whose singular values hold ``energy`` of the total.

    The singular values are squared before accumulating, so a clean signal of
    ``k`` real damped sinusoids returns ``2k``.
    """
    s = singular_values(y, max_order)
    e = np.cumsum(s ** 2) / np.sum(s ** 2)
    return int(np.searchsorted(e, energy) + 1)


def prony(y, dt: float, order: int | None = None, rcond: float = 1e-13,
          remove_mean: bool = False) -> PronyResult:
    """Fit ``order`` exponential modes to the samples ``y`` taken every ``dt`` s.

    ``order`` defaults to :func:`suggest_order`. ``remove_mean`` subtracts the
    window mean first (off by default, a constant is then fitted as a mode at
    ``s = 0``). The prediction matrix counts as rank deficient when its
    smallest singular value is below ``rcond`` times the largest; slow,
    closely spaced modes legitimately reach 1e-10, surplus order sits at
    rounding level.

    Raises
    ------
    PronyRankError
        When the prediction matrix has rank below ``order`` (order too high
        for the information in the signal, or too few samples).
    """
    y = np.asarray(y, dtype=float)
    if remove_mean:
        y = y - y.mean()
    if dt <= 0:
        raise ValueError("dt must be positive")
    order = suggest_order(y) if order is None else int(order)
    if order < 1:
        raise ValueError("order must be >= 1")
    if y.size < 3 * order:
        raise PronyRankError(f"{y.size} samples cannot identify order {order} (need {3 * order})")
    H = _hankel(y, order)
    rhs = y[order:]
    sv = np.linalg.svd(H, compute_uv=False)
    rank = int(np.sum(sv > rcond * sv[0])) if sv[0] > 0 else 0
    if rank < order:
        raise PronyRankError(f"prediction matrix rank {rank} < order {order}; "
                             f"try order <= {rank}")
    a = np.linalg.lstsq(H, rhs, rcond=None)[0]
    z = np.roots(np.concatenate([[1.0], -a]))
    z = z[np.abs(z) > 0]
    lam = np.log(z.astype(complex)) / dt
    n = np.arange(y.size)
    V = z[None, :] ** n[:, None]
    b = np.linalg.lstsq(V, y.astype(complex), rcond=None)[0]
    fitted = (V @ b).real
    energy = np.sum(np.abs(V * b[None, :]) ** 2, axis=0)
    modes = [PronyMode(complex(l), float(2 * abs(bi) if abs(l.imag) > 0 else abs(bi)),
                       float(np.angle(bi)), float(e)) for l, bi, e in zip(lam, b, energy)]
    modes.sort(key=lambda m: (-m.energy, -m.eigenvalue.imag))
    norm = np.linalg.norm(y)
    res = float(np.linalg.norm(y - fitted) / norm) if norm > 0 else 0.0
    return PronyResult(modes, dt, order, res, fitted)
