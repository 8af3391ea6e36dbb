"""Droop-controlled grid-forming converter, averaged model.

The converter is described in its own ``d_c``-``q_c`` frame, whose angle
``rho`` (relative to the synchronous D-Q frame) is driven by a
power-frequency droop. The dc link is fed by a first-order functional
source whose current reference compensates the dc voltage error, the
conductive load ``G_c`` and the power drawn by the bridge.

State order (15 real states)::

    v_dc, i_src, i_f(d,q), v_C(d,q), i_t(d,q), rho, x_P,
    xi_o, xi_v(d,q), xi_i(d,q)

Per-unit reactive elements carry a ``1/omega_s`` time scaling, so
``(L/omega_s) di/dt = v - R i - j*w*L i`` with ``w`` the frame speed in pu.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STATE_NAMES = ("v_dc", "i_src", "ifd", "ifq", "vCd", "vCq", "itd", "itq",
               "rho", "xP", "xi_o", "xi_vd", "xi_vq", "xi_id", "xi_iq")


@dataclass(frozen=True)
class GFCParams:
    """Converter, filter, transformer and control data on system base."""

    tau_c: float = 0.05
    G_c: float = 0.45
    C_c: float = 325.73
    k_dc: float = 1080.0
    R: float = 5.5556e-5
    L: float = 0.0042
    C: float = 2.0358
    R_on: float = 0.0
    R_t: float = 0.002 / 9
    L_t: float = 0.15 / 9
    P_c: float = 7.0
    v_dc_ref: float = 1.0
    m_p: float = 0.05 / 9
    omega_f: float = 200 * np.pi
    Kp_ac: float = 0.0010
    Ki_ac: float = 0.5000
    Kp_i: float = 0.0411
    Ki_i: float = 1.7389e-4
    Kp_v: float = 9.3600
    Ki_v: float = 0.0554
    current_feedforward: bool = True
    dc_coupling: bool = False
    S_base: float = 100.0
    V_dc_base: float = 48.98
    V_ac_base: float = 20.0

    def __post_init__(self):
        for nm in ("tau_c", "C_c", "k_dc", "L", "C", "L_t", "v_dc_ref", "omega_f"):
            if getattr(self, nm) <= 0:
                raise ValueError(f"{nm} must be positive")
        for nm in ("G_c", "R", "R_on", "R_t", "m_p", "Kp_ac", "Ki_ac", "Kp_i", "Ki_i",
                   "Kp_v", "Ki_v"):
            if getattr(self, nm) < 0:
                raise ValueError(f"{nm} must be non-negative")


class DCLinkCollapse(FloatingPointError):
    """The dc-link voltage left the physical region (v_dc <= 0)."""


def dc_reference_current(v_dc, P_t, P_ref, p: GFCParams):
    """Source current reference: dc-voltage error, conductance and power compensation."""
    return (p.k_dc * (p.v_dc_ref - v_dc) + p.G_c * v_dc
            + P_ref / p.v_dc_ref + (P_ref - P_t) / p.v_dc_ref)


def dc_side_derivatives(v_dc, i_src, P_t, P_ref, p: GFCParams, omega_s: float):
    """Derivatives of (v_dc, i_src) given the bridge ac power ``P_t``."""
    if v_dc <= 0:
        raise DCLinkCollapse(f"dc-link voltage {v_dc} <= 0")
    i_ref = dc_reference_current(v_dc, P_t, P_ref, p)
    di_src = (i_ref - i_src) / p.tau_c
    dv_dc = omega_s / p.C_c * (i_src - p.G_c * v_dc - P_t / v_dc)
    return dv_dc, di_src


def droop_and_outer(x_P, v_C, xi_o, P_ref, V_ref, p: GFCParams):
    """Frame speed (pu), capacitor-voltage reference and outer-loop error.

    The outer loop trims the d-axis capacitor voltage reference with a PI
    on the magnitude error; the q-axis reference is zero, which aligns the
    capacitor voltage space phasor with the d_c axis.
    """
    omega_c = 1.0 + p.m_p * (P_ref - x_P)
    err = V_ref - abs(v_C)
    v_ref = V_ref + p.Kp_ac * err + p.Ki_ac * xi_o
    return omega_c, complex(v_ref, 0.0), err


def inner_loops(v_C, i_f, i_t, v_ref, xi_v, xi_i, p: GFCParams):
    """Cascaded voltage and current PIs with cross-coupling decoupling.

    Returns the bridge voltage command and the two loop errors (for the
    integrators). Decoupling terms use the nominal frame speed.
    """
    e_v = v_ref - v_C
    i_ref = p.Kp_v * e_v + p.Ki_v * xi_v + 1j * p.C * v_C
    if p.current_feedforward:
        i_ref = i_ref + i_t
    e_i = i_ref - i_f
    e_cmd = p.Kp_i * e_i + p.Ki_i * xi_i + v_C + 1j * p.L * i_f
    return e_cmd, e_v, e_i


def bridge_voltage(e_cmd, v_dc, p: GFCParams):
    """Averaged bridge output; modulation is normalised by the nominal dc voltage."""
    if p.dc_coupling:
        return e_cmd * v_dc / p.v_dc_ref
    return e_cmd


def ac_side_derivatives(e_conv, i_f, v_C, i_t, v_pcc, omega_c, p: GFCParams,
                        omega_s: float):
    """Filter-inductor, capacitor and transformer current derivatives (frame quantities)."""
    w = omega_c
    di_f = omega_s / p.L * (e_conv - v_C - (p.R + p.R_on) * i_f - 1j * w * p.L * i_f)
    dv_C = omega_s / p.C * (i_f - i_t - 1j * w * p.C * v_C)
    di_t = omega_s / p.L_t * (v_C - v_pcc - p.R_t * i_t - 1j * w * p.L_t * i_t)
    return di_f, dv_C, di_t


class GridFormingConverter:
    """One converter bound to a network node.

    ``P_ref`` and ``V_ref`` are the dispatch references fixed at
    initialization; the scalar input ``u`` is added to the power reference.
    """

    n_inputs = 1

    def __init__(self, name: str, params: GFCParams, omega_s: float,
                 P_ref: float | None = None, V_ref: float = 1.0):
        self.name = name
        self.p = params
        self.omega_s = omega_s
        self.P_ref = params.P_c if P_ref is None else P_ref
        self.V_ref = V_ref
        self.n_states = len(STATE_NAMES)

    def with_references(self, P_ref: float, V_ref: float) -> "GridFormingConverter":
        return GridFormingConverter(self.name, self.p, self.omega_s, P_ref, V_ref)

    def state_labels(self) -> list[str]:
        return [f"{self.name}.{nm}" for nm in STATE_NAMES]

    def current(self, x, v_N=None):
        """Transformer current injected into the network, synchronous frame."""
        return (x[6] + 1j * x[7]) * np.exp(1j * x[8])

    def norton(self, x):
        return self.current(x), 0.0

    def terminal_power(self, x):
        """Bridge ac power ``Re{e_conv conj(i_f)}``."""
        p = self.p
        i_f = x[2] + 1j * x[3]
        v_C = x[4] + 1j * x[5]
        i_t = x[6] + 1j * x[7]
        _, v_ref, _ = droop_and_outer(x[9], v_C, x[10], self.P_ref, self.V_ref, p)
        e_cmd, _, _ = inner_loops(v_C, i_f, i_t, v_ref, x[11] + 1j * x[12],
                                  x[13] + 1j * x[14], p)
        e_conv = bridge_voltage(e_cmd, x[0], p)
        return (e_conv * np.conj(i_f)).real

    def derivatives(self, x, v_N, u=0.0):
        p = self.p
        ws = self.omega_s
        v_dc, i_src = x[0], x[1]
        i_f = x[2] + 1j * x[3]
        v_C = x[4] + 1j * x[5]
        i_t = x[6] + 1j * x[7]
        rho, x_P, xi_o = x[8], x[9], x[10]
        xi_v = x[11] + 1j * x[12]
        xi_i = x[13] + 1j * x[14]
        rot = np.exp(1j * rho)
        P_ref = self.P_ref + u
        omega_c, v_ref, e_o = droop_and_outer(x_P, v_C, xi_o, P_ref, self.V_ref, p)
        e_cmd, e_v, e_i = inner_loops(v_C, i_f, i_t, v_ref, xi_v, xi_i, p)
        e_conv = bridge_voltage(e_cmd, v_dc, p)
        P_t = (e_conv * np.conj(i_f)).real
        dv_dc, di_src = dc_side_derivatives(v_dc, i_src, P_t, P_ref, p, ws)
        di_f, dv_C, di_t = ac_side_derivatives(e_conv, i_f, v_C, i_t, v_N / rot, omega_c, p, ws)
        dx = np.empty(15)
        dx[0], dx[1] = dv_dc, di_src
        dx[2], dx[3] = di_f.real, di_f.imag
        dx[4], dx[5] = dv_C.real, dv_C.imag
        dx[6], dx[7] = di_t.real, di_t.imag
        dx[8] = ws * (omega_c - 1.0)
        dx[9] = p.omega_f * (P_t - x_P)
        dx[10] = e_o
        dx[11], dx[12] = e_v.real, e_v.imag
        dx[13], dx[14] = e_i.real, e_i.imag
        return dx, i_t * rot

    def initialize(self, v_C_DQ: complex, S: complex):
        """States and references for capacitor voltage ``v_C_DQ`` delivering ``S``.

        Returns ``(x0, P_ref, V_ref, v_pcc)`` with ``v_pcc`` the implied
        HV-side voltage in the synchronous frame.
        """
        p = self.p
        rho = np.angle(v_C_DQ)
        rot = np.exp(1j * rho)
        i_t_DQ = np.conj(S / v_C_DQ)
        v_pcc = v_C_DQ - (p.R_t + 1j * p.L_t) * i_t_DQ
        v_C = v_C_DQ / rot
        i_t = i_t_DQ / rot
        i_f = i_t + 1j * p.C * v_C
        e_conv = v_C + (p.R + p.R_on + 1j * p.L) * i_f
        P_t = (e_conv * np.conj(i_f)).real
        v_dc = p.v_dc_ref
        i_src = p.G_c * v_dc + P_t / v_dc
        V_ref = abs(v_C)
        xi_o = 0.0
        # voltage loop: zero error, integrator supplies what feedforwards do not
        need_v = i_f - 1j * p.C * v_C - (i_t if p.current_feedforward else 0.0)
        xi_v = need_v / p.Ki_v if p.Ki_v > 0 else 0.0
        e_cmd = e_conv / (v_dc / p.v_dc_ref) if p.dc_coupling else e_conv
        need_i = e_cmd - v_C - 1j * p.L * i_f
        xi_i = need_i / p.Ki_i if p.Ki_i > 0 else 0.0
        x = np.array([v_dc, i_src, i_f.real, i_f.imag, v_C.real, v_C.imag,
                      i_t.real, i_t.imag, rho, P_t, xi_o,
                      np.real(xi_v), np.imag(xi_v), np.real(xi_i), np.imag(xi_i)])
        return x, P_t, V_ref, v_pcc
