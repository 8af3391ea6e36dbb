"""Compiled vector field for long time-domain runs.

Mirrors :func:`phasorgrid.assembly.vector_field` with device parameters
packed into arrays and the (linear) network reduced to dense complex
matrices extracted from the reference implementation. Agreement with the
reference path is checked by the test suite to rounding level.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .gfc import DCLinkCollapse, GridFormingConverter
from .machine import SynchronousMachine

SG, GFC = 0, 1

_SG_FIELDS = ("Xd", "Xq", "Xdp", "Xqp", "Xdpp", "Xqpp", "Xl", "Rs", "Td0p", "Tq0p",
              "Td0pp", "Tq0pp", "H", "D", "Rg", "Lg", "KA", "TA", "Efd_min", "Efd_max",
              "R_gov", "T_gov", "T_t", "exciter", "governor")
_GFC_FIELDS = ("tau_c", "G_c", "C_c", "k_dc", "R", "L", "C", "R_on", "R_t", "L_t",
               "v_dc_ref", "m_p", "omega_f", "Kp_ac", "Ki_ac", "Kp_i", "Ki_i", "Kp_v",
               "Ki_v", "current_feedforward", "dc_coupling")
_NPAR = max(len(_SG_FIELDS), len(_GFC_FIELDS)) + 2


def _pack(dev) -> np.ndarray:
    row = np.zeros(_NPAR)
    if isinstance(dev, SynchronousMachine):
        vals = [float(getattr(dev.p, nm)) for nm in _SG_FIELDS] + [dev.V_ref, dev.P_ref]
    else:
        vals = [float(getattr(dev.p, nm)) for nm in _GFC_FIELDS] + [dev.P_ref, dev.V_ref]
    row[:len(vals)] = vals
    return row


@njit(cache=True)
def _sg_emf(p, Eqp, Edp, psi1d, psi2q):
    Xdp, Xqp, Xdpp, Xqpp, Xl = p[2], p[3], p[4], p[5], p[6]
    kd1 = (Xdpp - Xl) / (Xdp - Xl)
    kd2 = (Xdp - Xdpp) / (Xdp - Xl)
    kq1 = (Xqpp - Xl) / (Xqp - Xl)
    kq2 = (Xqp - Xqpp) / (Xqp - Xl)
    return kd1 * Eqp + kd2 * psi1d, kq1 * Edp - kq2 * psi2q


@njit(cache=True)
def _sg_norton(p, x):
    Eppq, Eppd = _sg_emf(p, x[2], x[3], x[4], x[5])
    Z = (p[7] + p[14]) + 1j * (p[4] + p[15])
    return np.exp(1j * x[0]) * (Eppq - 1j * Eppd) / Z, 1.0 / Z


@njit(cache=True)
def _sg_rhs(p, x, v_N, spc, ws, dx):
    Xd, Xq, Xdp, Xqp, Xdpp, Xqpp, Xl, Rs = p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]
    Td0p, Tq0p, Td0pp, Tq0pp, H, D, Rg, Lg = p[8], p[9], p[10], p[11], p[12], p[13], p[14], p[15]
    KA, TA, Efd_min, Efd_max, R_gov, T_gov, T_t = p[16], p[17], p[18], p[19], p[20], p[21], p[22]
    exciter, governor, V_ref, P_ref = p[23], p[24], p[25], p[26]
    delta, omega, Eqp, Edp, psi1d, psi2q, Efd, Pgv, Pm = (x[0], x[1], x[2], x[3], x[4],
                                                          x[5], x[6], x[7], x[8])
    if spc:
        i_DQ = x[9] + 1j * x[10]
    else:
        i_src, y = _sg_norton(p, x)
        i_DQ = i_src - y * v_N
    rot = np.exp(1j * delta)
    zm = i_DQ / rot
    Iq, Id = zm.real, -zm.imag
    Eppq, Eppd = _sg_emf(p, Eqp, Edp, psi1d, psi2q)
    v_t = v_N + (Rg + 1j * Lg) * i_DQ
    Te = Eppd * Id + Eppq * Iq
    dEqp = (-Eqp - (Xd - Xdp) * (
        Id - (Xdp - Xdpp) / (Xdp - Xl) ** 2 * (psi1d + (Xdp - Xl) * Id - Eqp)) + Efd) / Td0p
    dpsi1d = (-psi1d + Eqp - (Xdp - Xl) * Id) / Td0pp
    dEdp = (-Edp + (Xq - Xqp) * (
        Iq - (Xqp - Xqpp) / (Xqp - Xl) ** 2 * (psi2q + (Xqp - Xl) * Iq + Edp))) / Tq0p
    dpsi2q = (-psi2q - Edp - (Xqp - Xl) * Iq) / Tq0pp
    dEfd = 0.0
    if exciter > 0:
        dEfd = (KA * (V_ref - abs(v_t)) - Efd) / TA
        if (Efd >= Efd_max and dEfd > 0) or (Efd <= Efd_min and dEfd < 0):
            dEfd = 0.0
    dPgv = 0.0
    dPm = 0.0
    if governor > 0:
        dPgv = (P_ref - (omega - 1.0) / R_gov - Pgv) / T_gov
        dPm = (Pgv - Pm) / T_t
    dx[0] = ws * (omega - 1.0)
    dx[1] = (Pm - Te - D * (omega - 1.0)) / (2 * H)
    dx[2] = dEqp
    dx[3] = dEdp
    dx[4] = dpsi1d
    dx[5] = dpsi2q
    dx[6] = dEfd
    dx[7] = dPgv
    dx[8] = dPm
    if spc:
        kd1 = (Xdpp - Xl) / (Xdp - Xl)
        kd2 = (Xdp - Xdpp) / (Xdp - Xl)
        kq1 = (Xqpp - Xl) / (Xqp - Xl)
        kq2 = (Xqp - Xqpp) / (Xqp - Xl)
        dEppq = kd1 * dEqp + kd2 * dpsi1d
        dEppd = kq1 * dEdp - kq2 * dpsi2q
        Eq = Eppq * omega - dEppd / ws
        Ed = Eppd * omega + dEppq / ws
        E_DQ = rot * (Eq - 1j * Ed)
        L = Xdpp + Lg
        di = ws / L * (E_DQ - v_N - 1j * L * i_DQ - (Rs + Rg) * i_DQ)
        dx[9] = di.real
        dx[10] = di.imag
    return i_DQ


@njit(cache=True)
def _gfc_rhs(p, x, v_N, u, ws, dx):
    """Returns (injected current, ok flag); ok is False on dc-link collapse."""
    tau_c, G_c, C_c, k_dc, R, L, C, R_on, R_t, L_t = (p[0], p[1], p[2], p[3], p[4], p[5],
                                                     p[6], p[7], p[8], p[9])
    v_dc_ref, m_p, omega_f, Kp_ac, Ki_ac, Kp_i, Ki_i, Kp_v, Ki_v = (p[10], p[11], p[12], p[13],
                                                                   p[14], p[15], p[16], p[17],
                                                                   p[18])
    ff, dc_coupling = p[19], p[20]
    P_ref = p[21] + u
    V_ref = p[22]
    v_dc, i_src = x[0], x[1]
    i_f = x[2] + 1j * x[3]
    v_C = x[4] + 1j * x[5]
    i_t = x[6] + 1j * x[7]
    rho, x_P, xi_o = x[8], x[9], x[10]
    xi_v = x[11] + 1j * x[12]
    xi_i = x[13] + 1j * x[14]
    rot = np.exp(1j * rho)
    omega_c = 1.0 + m_p * (P_ref - x_P)
    e_o = V_ref - abs(v_C)
    v_ref = V_ref + Kp_ac * e_o + Ki_ac * xi_o + 0j
    e_v = v_ref - v_C
    i_ref = Kp_v * e_v + Ki_v * xi_v + 1j * C * v_C
    if ff > 0:
        i_ref = i_ref + i_t
    e_i = i_ref - i_f
    e_cmd = Kp_i * e_i + Ki_i * xi_i + v_C + 1j * L * i_f
    e_conv = e_cmd * v_dc / v_dc_ref if dc_coupling > 0 else e_cmd
    P_t = (e_conv * np.conj(i_f)).real
    if v_dc <= 0:
        return i_t * rot, False
    i_dc_ref = (k_dc * (v_dc_ref - v_dc) + G_c * v_dc
                + P_ref / v_dc_ref + (P_ref - P_t) / v_dc_ref)
    dx[0] = ws / C_c * (i_src - G_c * v_dc - P_t / v_dc)
    dx[1] = (i_dc_ref - i_src) / tau_c
    v_pcc = v_N / rot
    w = omega_c
    di_f = ws / L * (e_conv - v_C - (R + R_on) * i_f - 1j * w * L * i_f)
    dv_C = ws / C * (i_f - i_t - 1j * w * C * v_C)
    di_t = ws / L_t * (v_C - v_pcc - R_t * i_t - 1j * w * L_t * i_t)
    dx[2] = di_f.real
    dx[3] = di_f.imag
    dx[4] = dv_C.real
    dx[5] = dv_C.imag
    dx[6] = di_t.real
    dx[7] = di_t.imag
    dx[8] = ws * (omega_c - 1.0)
    dx[9] = omega_f * (P_t - x_P)
    dx[10] = e_o
    dx[11] = e_v.real
    dx[12] = e_v.imag
    dx[13] = e_i.real
    dx[14] = e_i.imag
    return i_t * rot, True


@njit(cache=True)
def _system_rhs(x, u, kind, off, node, uidx, P, spc, net_off, n_nodes, nl, Mz, Mi, Zbus, ws):
    """Returns (dx, failed device index or -1)."""
    m = kind.size
    dx = np.empty(x.size)
    i_dev = np.empty(m, dtype=np.complex128)
    if spc:
        nc = (x.size - net_off) // 2
        z = np.empty(nc, dtype=np.complex128)
        for k in range(nc):
            z[k] = x[net_off + 2 * k] + 1j * x[net_off + 2 * k + 1]
        v_N = z[nl:nl + n_nodes].copy()
    else:
        inj = np.zeros(n_nodes, dtype=np.complex128)
        for j in range(m):
            xs = x[off[j]:off[j + 1]]
            if kind[j] == SG:
                inj[node[j]] += _sg_norton(P[j], xs)[0]
            else:
                inj[node[j]] += (xs[6] + 1j * xs[7]) * np.exp(1j * xs[8])
        v_N = Zbus @ inj
    for j in range(m):
        xs = x[off[j]:off[j + 1]]
        dxs = dx[off[j]:off[j + 1]]
        if kind[j] == SG:
            i_dev[j] = _sg_rhs(P[j], xs, v_N[node[j]], spc, ws, dxs)
        else:
            uj = u[uidx[j]] if uidx[j] >= 0 else 0.0
            i_dev[j], ok = _gfc_rhs(P[j], xs, v_N[node[j]], uj, ws, dxs)
            if not ok:
                return dx, j
    if spc:
        dz = Mz @ z + Mi @ i_dev
        for k in range(dz.size):
            dx[net_off + 2 * k] = dz[k].real
            dx[net_off + 2 * k + 1] = dz[k].imag
    return dx, -1


class CompiledVectorField:
    """Callable ``f(x, u)`` equivalent to the reference vector field of ``model``."""

    def __init__(self, model):
        devs = model.devices
        self.names = [d.name for d in devs]
        self.kind = np.array([SG if isinstance(d, SynchronousMachine) else GFC for d in devs],
                             dtype=np.int64)
        self.off = np.asarray(model.offsets, dtype=np.int64)
        self.node = np.asarray(model.device_nodes, dtype=np.int64)
        uidx = -np.ones(len(devs), dtype=np.int64)
        for col, j in enumerate(model.input_devices):
            uidx[j] = col
        self.uidx = uidx
        self.P = np.array([_pack(d) for d in devs])
        self.spc = model.framework == "spc"
        self.ws = float(model.omega_s)
        t = model.topology
        self.n_nodes = t.n
        self.nl = t.l
        self.net_off = model.network_offset
        empty = np.zeros((1, 1), dtype=np.complex128)
        if self.spc:
            self.Mz, self.Mi = _linear_network_maps(model.network, len(devs))
            self.Zbus = empty
        else:
            self.Mz = self.Mi = empty
            self.Zbus = _impedance_matrix(model)
        for d in devs:
            if not isinstance(d, (SynchronousMachine, GridFormingConverter)):
                raise TypeError(f"no compiled kernel for {type(d).__name__}")

    def __call__(self, x, u=None):
        u = np.zeros(max(1, self.uidx.max() + 1)) if u is None or len(u) == 0 else u
        dx, bad = _system_rhs(np.ascontiguousarray(x, dtype=np.float64),
                              np.asarray(u, dtype=np.float64), self.kind, self.off,
                              self.node, self.uidx, self.P, self.spc, self.net_off,
                              self.n_nodes, self.nl, self.Mz, self.Mi, self.Zbus, self.ws)
        if bad >= 0:
            raise DCLinkCollapse(f"{self.names[bad]}: dc-link voltage <= 0")
        return dx


def _linear_network_maps(net, m):
    """Complex matrices with ``dz = Mz z + Mi i_dev`` (exact: the network is linear)."""
    nc = net.n_complex
    Mz = np.empty((nc, nc), dtype=complex)
    Mi = np.empty((nc, m), dtype=complex)
    zero_z = np.zeros(nc, dtype=complex)
    zero_i = np.zeros(m, dtype=complex)
    for k in range(nc):
        e = zero_z.copy()
        e[k] = 1.0
        Mz[:, k] = net.derivatives(e, zero_i)
    for k in range(m):
        e = zero_i.copy()
        e[k] = 1.0
        Mi[:, k] = net.derivatives(zero_z, e)
    return Mz, Mi


def _impedance_matrix(model):
    import scipy.linalg

    return scipy.linalg.lu_solve(model.lu, np.eye(model.topology.n, dtype=complex))


def compile_model(model) -> CompiledVectorField:
    return CompiledVectorField(model)
