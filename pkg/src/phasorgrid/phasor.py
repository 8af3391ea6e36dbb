"""Time-varying phasor calculus: baseband, space-phasor (dq0) and generalized averaging.

Everything here is a pure function of its inputs. Scalars and numpy arrays
are both accepted wherever a sample or an angle is expected, so whole
waveforms can be transformed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

ALPHA = np.exp(2j * np.pi / 3)
_SHIFTS = np.array([0.0, -2 * np.pi / 3, 2 * np.pi / 3])

DQ = "DQ"
ALPHA_BETA = "alphabeta"


class FrameMismatch(ValueError):
    """Two phasors in different rotating frames were combined."""


@dataclass(frozen=True)
class ThreePhaseSample:
    a: float | np.ndarray
    b: float | np.ndarray
    c: float | np.ndarray

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])

    def is_balanced(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.abs(np.asarray(self.a) + self.b + self.c) <= tol))


@dataclass(frozen=True)
class FrameAngle:
    """Angle ``rho`` (rad) and speed ``omega`` (pu of omega_s) of a rotating frame."""

    rho: float | np.ndarray
    omega: float = 1.0
    frame: str = DQ

    def advance(self, dt: float, omega_s: float) -> "FrameAngle":
        return FrameAngle(self.rho + self.omega * omega_s * dt, self.omega, self.frame)


@dataclass(frozen=True)
class Phasor:
    re: float | np.ndarray
    im: float | np.ndarray
    frame: str = DQ

    @classmethod
    def from_complex(cls, z, frame: str = DQ) -> "Phasor":
        z = np.asarray(z, dtype=complex)
        if z.ndim == 0:
            z = complex(z)
            return cls(z.real, z.imag, frame)
        return cls(z.real, z.imag, frame)

    @property
    def value(self):
        return self.re + 1j * np.asarray(self.im) if np.ndim(self.re) else complex(self.re, self.im)

    def __abs__(self):
        return np.abs(self.value)

    @property
    def angle(self):
        return np.angle(self.value)

    def _check(self, other: "Phasor"):
        if not isinstance(other, Phasor):
            raise TypeError("phasor arithmetic needs two Phasor operands")
        if other.frame != self.frame:
            raise FrameMismatch(f"cannot combine frame {self.frame!r} with {other.frame!r}")

    def __add__(self, other: "Phasor") -> "Phasor":
        self._check(other)
        return Phasor(self.re + other.re, self.im + other.im, self.frame)

    def __sub__(self, other: "Phasor") -> "Phasor":
        self._check(other)
        return Phasor(self.re - other.re, self.im - other.im, self.frame)

    def __neg__(self) -> "Phasor":
        return Phasor(-self.re, -self.im, self.frame)

    def __mul__(self, k) -> "Phasor":
        if isinstance(k, Phasor):
            raise TypeError("multiply a phasor by a scalar (impedance, gain), not by a phasor")
        return Phasor.from_complex(self.value * k, self.frame)

    __rmul__ = __mul__

    def isclose(self, other: "Phasor", tol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.all(np.abs(self.value - other.value) <= tol))


# ---------------------------------------------------------------- transforms
def park_matrix(rho) -> np.ndarray:
    """2/3-scaled Park matrix (cosine row, negative-sine row, one-half row)."""
    ang = rho + _SHIFTS
    return (2.0 / 3.0) * np.array([np.cos(ang), -np.sin(ang), np.full(3, 0.5)])


def park_transform(x: ThreePhaseSample, angle: FrameAngle):
    """d + jq phasor in the frame of ``angle`` and the zero-sequence component."""
    rho = np.asarray(angle.rho, dtype=float)
    a, b, c = (np.asarray(v, dtype=float) for v in (x.a, x.b, x.c))
    d = (2 / 3) * (a * np.cos(rho) + b * np.cos(rho - 2 * np.pi / 3) + c * np.cos(rho + 2 * np.pi / 3))
    q = -(2 / 3) * (a * np.sin(rho) + b * np.sin(rho - 2 * np.pi / 3) + c * np.sin(rho + 2 * np.pi / 3))
    z = (a + b + c) / 3
    if d.ndim == 0:
        return Phasor(float(d), float(q), angle.frame), float(z)
    return Phasor(d, q, angle.frame), z


def inverse_park(p: Phasor, zero, angle: FrameAngle) -> ThreePhaseSample:
    if p.frame != angle.frame:
        raise FrameMismatch(f"phasor frame {p.frame!r} does not match angle frame {angle.frame!r}")
    rho = np.asarray(angle.rho, dtype=float)
    out = [p.re * np.cos(rho + s) - p.im * np.sin(rho + s) + zero for s in _SHIFTS]
    if np.ndim(out[0]) == 0:
        out = [float(v) for v in out]
    return ThreePhaseSample(*out)


def space_phasor(x: ThreePhaseSample) -> Phasor:
    """alpha + j beta = (2/3)[1, a, a*] x."""
    z = (2 / 3) * (np.asarray(x.a) + ALPHA * np.asarray(x.b) + np.conj(ALPHA) * np.asarray(x.c))
    return Phasor.from_complex(z, ALPHA_BETA)


def rotate_frame(p: Phasor, delta, target_frame: str) -> Phasor:
    """Multiply by exp(j*delta) and relabel: x_target = exp(j*delta) x_source."""
    return Phasor.from_complex(p.value * np.exp(1j * np.asarray(delta)), target_frame)


# ---------------------------------------------------------------- baseband
@dataclass(frozen=True)
class EnvelopeSignal:
    """Modulated carrier ``X(t) cos(omega_s t + theta(t) - shift)`` with known derivatives.

    ``bandwidth`` (rad/s) declares the highest frequency present in the
    envelope ``X e^{j theta}``; it gates baseband construction.
    """

    X: Callable
    dX: Callable
    theta: Callable
    dtheta: Callable
    bandwidth: float = 0.0

    @classmethod
    def constant(cls, X0: float, theta0: float = 0.0) -> "EnvelopeSignal":
        return cls(lambda t: X0 + 0 * t, lambda t: 0 * t, lambda t: theta0 + 0 * t,
                   lambda t: 0 * t, 0.0)

    @classmethod
    def am(cls, X0: float, depth: float, f_mod: float, theta0: float = 0.0,
           linear: bool = False) -> "EnvelopeSignal":
        """Sinusoidal (or, with ``linear``, ramp) amplitude modulation."""
        w = 2 * np.pi * f_mod
        if linear:
            return cls(lambda t: X0 * (1 + depth * t), lambda t: X0 * depth + 0 * t,
                       lambda t: theta0 + 0 * t, lambda t: 0 * t, 0.0)
        return cls(lambda t: X0 * (1 + depth * np.sin(w * t)),
                   lambda t: X0 * depth * w * np.cos(w * t),
                   lambda t: theta0 + 0 * t, lambda t: 0 * t, w)

    def phase(self, t, omega_s, shift=0.0):
        return self.X(t) * np.cos(omega_s * t + self.theta(t) - shift)

    def abc(self, t, omega_s) -> ThreePhaseSample:
        return ThreePhaseSample(*(self.phase(t, omega_s, s) for s in (0, 2 * np.pi / 3, 4 * np.pi / 3)))

    def envelope(self, t):
        return self.X(t) * np.exp(1j * self.theta(t))

    def d_envelope(self, t):
        return (self.dX(t) + 1j * self.X(t) * self.dtheta(t)) * np.exp(1j * self.theta(t))


class BasebandBandwidthError(ValueError):
    """Envelope bandwidth reaches the carrier: the baseband phasor is not defined."""


def baseband_phasor(signal: EnvelopeSignal, t, omega_s: float) -> Phasor:
    """Low-pass phasor ``x_bb`` with ``x = Re{x_bb e^{j omega_s t}}``.

    Only defined for band-pass signals, i.e. envelopes band-limited strictly
    below the carrier frequency.
    """
    if signal.bandwidth >= omega_s:
        raise BasebandBandwidthError(
            f"envelope bandwidth {signal.bandwidth:.4g} rad/s >= carrier {omega_s:.4g} rad/s")
    return Phasor.from_complex(signal.envelope(np.asarray(t, dtype=float)), "baseband")


# ---------------------------------------------------------------- generalized averaging
@dataclass(frozen=True)
class FourierCoefficient:
    k: int
    value: complex
    window: float


@dataclass(frozen=True)
class SequenceCoefficients:
    pos: complex
    neg: complex
    zero: complex


class InsufficientWindow(ValueError):
    pass


def _lagrange_segment(t, y, a, b):
    """Integral over [a, b] of the cubic through the four samples ``(t, y)``."""
    gx, gw = np.polynomial.legendre.leggauss(3)
    xs = 0.5 * (b - a) * gx + 0.5 * (a + b)
    vals = np.zeros(xs.size, dtype=complex)
    for i in range(4):
        li = np.ones_like(xs)
        for j in range(4):
            if j != i:
                li *= (xs - t[j]) / (t[i] - t[j])
        vals += y[i] * li
    return 0.5 * (b - a) * np.dot(gw, vals)


def window_integral(y: np.ndarray, dt: float, t0: float, a: float, b: float) -> complex:
    """Integral of uniformly sampled ``y`` over [a, b].

    Trapezoidal rule on the samples inside the window. When the window edges
    fall between samples, Gregory end corrections and cubic-interpolated edge
    pieces keep the error at fourth order; whole-sample windows use the plain
    rule, which is spectrally accurate for periodic integrands.
    """
    y = np.asarray(y)
    n = y.size
    i0 = int(np.ceil((a - t0) / dt - 1e-9))
    i1 = int(np.floor((b - t0) / dt + 1e-9))
    if i0 < 0 or i1 > n - 1 or i1 - i0 < 4:
        raise InsufficientWindow(f"window [{a}, {b}] not covered by samples")
    seg = y[i0:i1 + 1]
    total = dt * (seg.sum() - 0.5 * (seg[0] + seg[-1]))
    ta = t0 + i0 * dt
    tb = t0 + i1 * dt
    aligned = abs(ta - a) < 1e-9 * dt and abs(tb - b) < 1e-9 * dt
    if aligned:
        return complex(total)
    d0 = np.diff(seg[:4], n=1)[0], np.diff(seg[:4], n=2)[0], np.diff(seg[:4], n=3)[0]
    d1 = np.diff(seg[-4:], n=1)[-1], np.diff(seg[-4:], n=2)[-1], np.diff(seg[-4:], n=3)[-1]
    total -= dt / 12 * (d1[0] - d0[0])
    total -= dt / 24 * (d1[1] + d0[1])
    total -= 19 * dt / 720 * (d1[2] - d0[2])
    if ta - a > 1e-12:
        lo = max(i0 - 1, 0)
        idx = np.arange(lo, lo + 4)
        total += _lagrange_segment(t0 + idx * dt, y[idx], a, ta)
    if b - tb > 1e-12:
        hi = min(i1 + 1, n - 1)
        idx = np.arange(hi - 3, hi + 1)
        total += _lagrange_segment(t0 + idx * dt, y[idx], tb, b)
    return complex(total)


def sliding_coefficient(samples, k: int, T: float, t: float, dt: float,
                        t0: float = 0.0) -> FourierCoefficient:
    """k-th coefficient ``(1/T) int_{t-T}^{t} x(tau) e^{-jk omega_s tau} dtau``.

    ``samples[i]`` is ``x(t0 + i*dt)``; ``omega_s = 2*pi/T``.
    """
    x = np.asarray(samples)
    tau = t0 + dt * np.arange(x.size)
    ws = 2 * np.pi / T
    g = x * np.exp(-1j * k * ws * tau)
    return FourierCoefficient(k, window_integral(g, dt, t0, t - T, t) / T, T)


T_SEQ = np.array([[1, 1, 1], [np.conj(ALPHA), ALPHA, 1], [ALPHA, np.conj(ALPHA), 1]]) / np.sqrt(3)


def sequence_coefficients(abc, k: int, T: float, t: float, dt: float, t0: float = 0.0,
                          kernel_sign: int = -1) -> SequenceCoefficients:
    """Dynamic positive, negative and zero sequence coefficients of harmonic ``k``.

    Averages ``e^{s jk omega_s tau} T^H x(tau)`` over the window, with
    ``s = kernel_sign``. The default ``s = -1`` matches the scalar coefficient
    and places a positive-sequence carrier at ``k = 1``. ``s = +1`` is the
    opposite-sign kernel, which moves that content to ``k = -1``.
    """
    x = np.asarray(abc.as_array() if isinstance(abc, ThreePhaseSample) else abc)
    if x.shape[0] != 3:
        raise ValueError("expected three rows (a, b, c)")
    tau = t0 + dt * np.arange(x.shape[1])
    ws = 2 * np.pi / T
    seq = T_SEQ.conj().T @ x
    ker = np.exp(kernel_sign * 1j * k * ws * tau)
    out = [window_integral(ker * row, dt, t0, t - T, t) / T for row in seq]
    return SequenceCoefficients(*out)


# ---------------------------------------------------------------- derivative rules
_FD8 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])


def fd_derivative(y: np.ndarray, dt: float) -> np.ndarray:
    """Eighth-order central difference; the four samples at each end are NaN."""
    y = np.asarray(y)
    out = np.full(y.shape, np.nan, dtype=np.result_type(y, float))
    n = y.shape[-1]
    acc = 0
    for j, w in enumerate(_FD8):
        if w:
            acc = acc + w * y[..., j:n - 8 + j]
    out[..., 4:n - 4] = acc / dt
    return out


def derivative_rule_residual(representation: str, signal: EnvelopeSignal, omega_s: float,
                             duration: float = 0.1, fs: float = 10e3, k: int = 1,
                             frame_angle: Callable | None = None,
                             frame_speed: Callable | None = None) -> float:
    """Largest mismatch between the two sides of a phasor derivative identity.

    ``baseband``: derivative of the single-phase waveform (finite
    differences) against ``Re{(x_bb' + j omega_s x_bb) e^{j omega_s t}}``
    with ``x_bb'`` analytic; the phasor map is a bijection on band-pass
    signals, so comparing in time is equivalent.

    ``spc``: Park transform of the finite-difference derivative of the
    three-phase set against ``x_bb' + j omega(t) x_bb`` in a frame with angle
    ``frame_angle(t)`` and speed ``frame_speed(t)`` (rad/s; default omega_s).

    ``gavg``: k-th sliding coefficient of ``dx/dt`` against the
    finite-difference rate of the k-th coefficient plus ``jk omega_s`` times it.
    """
    dt = 1.0 / fs
    t = np.arange(int(round(duration * fs)) + 1) * dt
    if representation == "baseband":
        baseband_phasor(signal, 0.0, omega_s)  # bandwidth gate
        x = signal.phase(t, omega_s)
        lhs = fd_derivative(x, dt)
        rhs = ((signal.d_envelope(t) + 1j * omega_s * signal.envelope(t))
               * np.exp(1j * omega_s * t)).real
        return float(np.nanmax(np.abs(lhs - rhs)))
    if representation == "spc":
        rho = frame_angle(t) if frame_angle else omega_s * t
        w = frame_speed(t) if frame_speed else np.full_like(t, omega_s)
        abc = signal.abc(t, omega_s).as_array()
        dabc = fd_derivative(abc, dt)
        lhs, _ = park_transform(ThreePhaseSample(*dabc), FrameAngle(rho))
        rot = np.exp(1j * (omega_s * t - rho))
        x_bb = signal.envelope(t) * rot
        dx_bb = signal.d_envelope(t) * rot + 1j * (omega_s - w) * x_bb
        rhs = dx_bb + 1j * w * x_bb
        return float(np.nanmax(np.abs(lhs.value - rhs)))
    if representation == "gavg":
        T = 2 * np.pi / omega_s
        x = signal.phase(t, omega_s)
        dx = (signal.dX(t) * np.cos(omega_s * t + signal.theta(t))
              - signal.X(t) * (omega_s + signal.dtheta(t)) * np.sin(omega_s * t + signal.theta(t)))
        t_eval = t[t >= T + 5 * dt]
        X = np.array([sliding_coefficient(x, k, T, te, dt).value for te in t_eval])
        dX_avg = np.array([sliding_coefficient(dx, k, T, te, dt).value for te in t_eval])
        rhs = fd_derivative(X, dt) + 1j * k * omega_s * X
        return float(np.nanmax(np.abs(dX_avg - rhs)))
    raise ValueError(f"unknown representation {representation!r}")
