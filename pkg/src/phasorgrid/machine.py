"""Sixth-order subtransient synchronous generator with simple controls.

Rotor and flux equations follow the usual two-axis subtransient model with
states (delta, omega, E'q, E'd, psi1d, psi2q); stator quantities are kept in
the lagging-d convention internally. The network-facing complex quantity is
``x_DQ = exp(j*delta) * (x_q + j*x_d')`` where ``x_d' = -x_d`` is the d
component in the leading-d orientation. ``to_network`` / ``to_machine`` are
the only place where that mapping lives.

Two stator variants exist. In QPC form the stator and step-up transformer
are algebraic and the machine behaves as a Norton source behind
``R_s + R_g + j(L_d'' + L_g)``. In SPC form the combined stator/transformer
current is a state driven by the speed- and transformer-voltage corrected
subtransient emf.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class SGParams:
    """Machine, transformer and control data, per unit on system base."""

    Xd: float
    Xq: float
    Xdp: float
    Xqp: float
    Xdpp: float
    Xqpp: float
    Xl: float
    Rs: float
    Td0p: float
    Tq0p: float
    Td0pp: float
    Tq0pp: float
    H: float
    D: float = 0.0
    Rg: float = 0.0
    Lg: float = 0.15 / 9
    KA: float = 200.0
    TA: float = 0.01
    Efd_min: float = -np.inf
    Efd_max: float = np.inf
    R_gov: float = 0.05
    T_gov: float = 0.2
    T_t: float = 0.5
    exciter: bool = True
    governor: bool = True

    def __post_init__(self):
        if not self.Xd >= self.Xdp >= self.Xdpp > 0:
            raise ValueError("need Xd >= Xd' >= Xd'' > 0")
        if not self.Xq >= self.Xqp >= self.Xqpp > 0:
            raise ValueError("need Xq >= Xq' >= Xq'' > 0")
        if not (self.Xdp > self.Xl and self.Xqp > self.Xl):
            raise ValueError("leakage reactance must be below the transient reactances")
        if abs(self.Xdpp - self.Xqpp) > 0.05 * self.Xdpp:
            raise ValueError("subtransient saliency is not modelled (Xd'' must equal Xq'')")
        for nm in ("Td0p", "Tq0p", "Td0pp", "Tq0pp", "H", "TA", "T_gov", "T_t"):
            if getattr(self, nm) <= 0:
                raise ValueError(f"{nm} must be positive")

    @property
    def R_total(self) -> float:
        return self.Rs + self.Rg

    @property
    def L_total(self) -> float:
        return self.Xdpp + self.Lg

    def rescaled(self, machine_mva: float, system_mva: float = 100.0) -> "SGParams":
        """Convert impedances and inertia from machine base to system base."""
        k = system_mva / machine_mva
        imp = {nm: getattr(self, nm) * k
               for nm in ("Xd", "Xq", "Xdp", "Xqp", "Xdpp", "Xqpp", "Xl", "Rs", "Rg", "Lg")}
        return replace(self, H=self.H / k, D=self.D / k, **imp)


STATE_NAMES = ("delta", "omega", "Eqp", "Edp", "psi1d", "psi2q", "Efd", "Pgv", "Pm")
STATOR_NAMES = ("isD", "isQ")


def to_network(x_q, x_d, delta):
    """Machine (q, lagging d) components to a synchronous-frame complex."""
    return np.exp(1j * delta) * (x_q - 1j * x_d)


def to_machine(x_DQ, delta):
    """Synchronous-frame complex to machine (q, lagging d) components."""
    z = x_DQ * np.exp(-1j * delta)
    return z.real, -z.imag


def subtransient_emf(p: SGParams, Eqp, Edp, psi1d, psi2q):
    """E''q and E''d (lagging-d convention) from the flux states."""
    kd1 = (p.Xdpp - p.Xl) / (p.Xdp - p.Xl)
    kd2 = (p.Xdp - p.Xdpp) / (p.Xdp - p.Xl)
    kq1 = (p.Xqpp - p.Xl) / (p.Xqp - p.Xl)
    kq2 = (p.Xqp - p.Xqpp) / (p.Xqp - p.Xl)
    return kd1 * Eqp + kd2 * psi1d, kq1 * Edp - kq2 * psi2q


def flux_derivatives(p: SGParams, Eqp, Edp, psi1d, psi2q, Efd, Id, Iq):
    dEqp = (-Eqp - (p.Xd - p.Xdp) * (
        Id - (p.Xdp - p.Xdpp) / (p.Xdp - p.Xl) ** 2 * (psi1d + (p.Xdp - p.Xl) * Id - Eqp)
    ) + Efd) / p.Td0p
    dpsi1d = (-psi1d + Eqp - (p.Xdp - p.Xl) * Id) / p.Td0pp
    dEdp = (-Edp + (p.Xq - p.Xqp) * (
        Iq - (p.Xqp - p.Xqpp) / (p.Xqp - p.Xl) ** 2 * (psi2q + (p.Xqp - p.Xl) * Iq + Edp)
    )) / p.Tq0p
    dpsi2q = (-psi2q - Edp - (p.Xqp - p.Xl) * Iq) / p.Tq0pp
    return dEqp, dEdp, dpsi1d, dpsi2q


def exciter_governor_turbine(Efd, Pgv, Pm, omega, v_t_mag, V_ref, P_ref, p: SGParams):
    """Static exciter, droop governor and first-order turbine derivatives."""
    if p.exciter:
        dEfd = (p.KA * (V_ref - v_t_mag) - Efd) / p.TA
        if (Efd >= p.Efd_max and dEfd > 0) or (Efd <= p.Efd_min and dEfd < 0):
            dEfd = 0.0
    else:
        dEfd = 0.0
    if p.governor:
        dPgv = (P_ref - (omega - 1.0) / p.R_gov - Pgv) / p.T_gov
        dPm = (Pgv - Pm) / p.T_t
    else:
        dPgv = dPm = 0.0
    return dEfd, dPgv, dPm


class SynchronousMachine:
    """One generator bound to a network node, in QPC or SPC form."""

    def __init__(self, name: str, params: SGParams, omega_s: float, spc: bool,
                 V_ref: float = 1.0, P_ref: float = 0.0):
        self.name = name
        self.p = params
        self.omega_s = omega_s
        self.spc = spc
        self.V_ref = V_ref
        self.P_ref = P_ref
        self.n_states = len(STATE_NAMES) + (2 if spc else 0)
        self.n_inputs = 0

    def with_references(self, V_ref: float, P_ref: float) -> "SynchronousMachine":
        return SynchronousMachine(self.name, self.p, self.omega_s, self.spc, V_ref, P_ref)

    def state_labels(self) -> list[str]:
        names = STATE_NAMES + (STATOR_NAMES if self.spc else ())
        return [f"{self.name}.{nm}" for nm in names]

    # QPC ---------------------------------------------------------------
    def norton(self, x):
        """Norton source current and shunt admittance seen from the HV node."""
        p = self.p
        Eppq, Eppd = subtransient_emf(p, x[2], x[3], x[4], x[5])
        Z = p.R_total + 1j * p.L_total
        return to_network(Eppq, Eppd, x[0]) / Z, 1.0 / Z

    def current(self, x, v_N):
        if self.spc:
            return x[9] + 1j * x[10]
        i_src, y = self.norton(x)
        return i_src - y * v_N

    def derivatives(self, x, v_N, u=None):
        """State derivatives and injected current for node voltage ``v_N``."""
        p = self.p
        ws = self.omega_s
        delta, omega, Eqp, Edp, psi1d, psi2q, Efd, Pgv, Pm = x[:9]
        i_DQ = self.current(x, v_N)
        Iq, Id = to_machine(i_DQ, delta)
        Eppq, Eppd = subtransient_emf(p, Eqp, Edp, psi1d, psi2q)
        v_t = v_N + (p.Rg + 1j * p.Lg) * i_DQ
        Te = Eppd * Id + Eppq * Iq
        dEqp, dEdp, dpsi1d, dpsi2q = flux_derivatives(p, Eqp, Edp, psi1d, psi2q, Efd, Id, Iq)
        dEfd, dPgv, dPm = exciter_governor_turbine(Efd, Pgv, Pm, omega, abs(v_t),
                                                   self.V_ref, self.P_ref, p)
        dx = np.empty(self.n_states)
        dx[0] = ws * (omega - 1.0)
        dx[1] = (Pm - Te - p.D * (omega - 1.0)) / (2 * p.H)
        dx[2:9] = dEqp, dEdp, dpsi1d, dpsi2q, dEfd, dPgv, dPm
        if self.spc:
            kd1 = (p.Xdpp - p.Xl) / (p.Xdp - p.Xl)
            kd2 = (p.Xdp - p.Xdpp) / (p.Xdp - p.Xl)
            kq1 = (p.Xqpp - p.Xl) / (p.Xqp - p.Xl)
            kq2 = (p.Xqp - p.Xqpp) / (p.Xqp - p.Xl)
            dEppq = kd1 * dEqp + kd2 * dpsi1d
            dEppd = kq1 * dEdp - kq2 * dpsi2q
            # speed voltage on E'' plus transformer voltage from its rate of change
            Eq = Eppq * omega - dEppd / ws
            Ed = Eppd * omega + dEppq / ws
            E_DQ = to_network(Eq, Ed, delta)
            L = p.L_total
            di = ws / L * (E_DQ - v_N - 1j * L * i_DQ - p.R_total * i_DQ)
            dx[9], dx[10] = di.real, di.imag
        return dx, i_DQ

    def initialize(self, v_t: complex, S: complex):
        """States and references reproducing terminal voltage and output power.

        ``v_t`` and ``S`` are the low-voltage terminal phasor and the power
        delivered there (from the power flow). Returns ``(x0, V_ref, P_ref,
        v_hv)`` where ``v_hv`` is the implied HV-side node voltage.
        """
        p = self.p
        I = np.conj(S / v_t)
        delta = np.angle(v_t + (p.Rs + 1j * p.Xq) * I)
        Iq, Id = to_machine(I, delta)
        Vq, Vd = to_machine(v_t, delta)
        Eqp = Vq + p.Rs * Iq + p.Xdp * Id
        Edp = (p.Xq - p.Xqp) * Iq
        psi1d = Eqp - (p.Xdp - p.Xl) * Id
        psi2q = -Edp - (p.Xqp - p.Xl) * Iq
        Efd = Eqp + (p.Xd - p.Xdp) * Id
        Eppq, Eppd = subtransient_emf(p, Eqp, Edp, psi1d, psi2q)
        Te = Eppd * Id + Eppq * Iq
        x = [delta, 1.0, Eqp, Edp, psi1d, psi2q, Efd, Te, Te]
        if self.spc:
            x += [I.real, I.imag]
        V_ref = abs(v_t) + Efd / p.KA
        v_hv = v_t - (p.Rg + 1j * p.Lg) * I
        return np.array(x, dtype=float), V_ref, Te, v_hv
