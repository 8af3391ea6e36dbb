"""Lumped pi-section transmission network in the synchronous D-Q frame.

Two views of the same passive network are provided:

* the dynamic (SPC) form, where every series R-L branch current, every node
  voltage and every load-inductor current is a state, and
* the algebraic (QPC) form, an admittance matrix evaluated at nominal
  frequency.

All quantities are per unit on the system base; time is in seconds and the
reactive elements carry the usual ``1/omega_s`` scaling, so ``L`` and ``C``
are the per-unit reactance and susceptance at nominal frequency.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

OMEGA_STAR = 1.0


class TopologyError(ValueError):
    """Raised for an inconsistent or unsupported network description."""


@dataclass(frozen=True)
class Branch:
    from_node: int
    to_node: int
    R: float
    L: float
    C: float = 0.0
    name: str = ""


@dataclass(frozen=True)
class Load:
    node: int
    R: float = np.inf
    L: float = np.inf
    C: float = 0.0
    name: str = ""

    @property
    def has_inductor(self) -> bool:
        return np.isfinite(self.L)


@dataclass(frozen=True)
class Topology:
    """Network nodes, series branches, device attachment points and loads.

    Node indices are zero based. ``devices`` lists the node each device
    transformer current is injected into; ``node_names`` is for labelling.
    """

    n: int
    branches: tuple[Branch, ...]
    devices: tuple[int, ...] = ()
    loads: tuple[Load, ...] = ()
    node_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.n < 1:
            raise TopologyError("network needs at least one node")
        for b in self.branches:
            for k in (b.from_node, b.to_node):
                if not 0 <= k < self.n:
                    raise TopologyError(f"branch {b.name!r} references node {k}")
            if b.R < 0 or b.L <= 0 or b.C < 0:
                raise TopologyError(f"branch {b.name!r} needs R >= 0, L > 0, C >= 0")
        for k in self.devices:
            if not 0 <= k < self.n:
                raise TopologyError(f"device attached to invalid node {k}")
        for ld in self.loads:
            if not 0 <= ld.node < self.n:
                raise TopologyError(f"load {ld.name!r} at invalid node {ld.node}")
            if ld.R <= 0 or ld.L <= 0 or ld.C < 0:
                raise TopologyError(f"load {ld.name!r} needs R > 0, L > 0, C >= 0")
        if not self.node_names:
            object.__setattr__(self, "node_names", tuple(str(k + 1) for k in range(self.n)))
        _check_connected(self)

    @property
    def l(self) -> int:
        return len(self.branches)

    @property
    def m(self) -> int:
        return len(self.devices)

    @property
    def inductive_loads(self) -> list[int]:
        return [k for k, ld in enumerate(self.loads) if ld.has_inductor]

    def node_capacitance(self) -> np.ndarray:
        """Half line charging of incident branches plus load capacitance per node."""
        c = np.zeros(self.n)
        for b in self.branches:
            c[b.from_node] += b.C / 2
            c[b.to_node] += b.C / 2
        for ld in self.loads:
            c[ld.node] += ld.C
        return c

    def node_conductance(self) -> np.ndarray:
        g = np.zeros(self.n)
        for ld in self.loads:
            g[ld.node] += 1.0 / ld.R
        return g


def _check_connected(t: Topology) -> None:
    parent = list(range(t.n))

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for b in t.branches:
        parent[find(b.from_node)] = find(b.to_node)
    roots = {find(k) for k in range(t.n)}
    if len(roots) > 1:
        raise TopologyError(f"network is disconnected ({len(roots)} islands)")


@dataclass(frozen=True)
class IncidenceMatrices:
    CCI: np.ndarray  # n x (m + l): device columns first, then series branches
    CCU: np.ndarray  # l x n


def build_incidence(t: Topology) -> IncidenceMatrices:
    """Node-injection and branch-voltage incidence matrices.

    ``i_N = CCI @ concat(i_dev, i_l)`` gives the net current injected into
    every node, ``v_l = CCU @ v_N`` the drop across every series branch
    (from-node minus to-node). Device currents flow into their node.
    """
    cci = np.zeros((t.n, t.m + t.l))
    for j, k in enumerate(t.devices):
        cci[k, j] = 1.0
    ccu = np.zeros((t.l, t.n))
    for j, b in enumerate(t.branches):
        cci[b.from_node, t.m + j] -= 1.0
        cci[b.to_node, t.m + j] += 1.0
        ccu[j, b.from_node] += 1.0
        ccu[j, b.to_node] -= 1.0
    return IncidenceMatrices(cci, ccu)


@dataclass
class NetworkStateSPC:
    i_l: np.ndarray
    v_N: np.ndarray
    i_L: np.ndarray

    def to_real(self) -> np.ndarray:
        z = np.concatenate([self.i_l, self.v_N, self.i_L])
        return np.column_stack([z.real, z.imag]).ravel()

    @classmethod
    def from_real(cls, x: np.ndarray, t: Topology) -> "NetworkStateSPC":
        z = x[0::2] + 1j * x[1::2]
        nl, nn = t.l, t.n
        return cls(z[:nl], z[nl:nl + nn], z[nl + nn:])


class SPCNetwork:
    """Precomputed dynamic network; evaluation is a pure function of its inputs."""

    def __init__(self, t: Topology, omega_s: float):
        self.topology = t
        self.omega_s = omega_s
        inc = build_incidence(t)
        self.CCI = inc.CCI
        self.CCU = inc.CCU
        self.CCI_dev = inc.CCI[:, :t.m]
        self.CCI_br = inc.CCI[:, t.m:]
        self.R_l = np.array([b.R for b in t.branches])
        self.L_l = np.array([b.L for b in t.branches])
        self.C_N = t.node_capacitance()
        if np.any(self.C_N <= 0):
            bad = [t.node_names[k] for k in np.flatnonzero(self.C_N <= 0)]
            raise TopologyError(f"nodes without shunt capacitance in SPC mode: {bad}")
        self.G_N = t.node_conductance()
        ind = t.inductive_loads
        self.load_nodes = np.array([t.loads[k].node for k in ind], dtype=int)
        self.L_L = np.array([t.loads[k].L for k in ind])
        self.load_incidence = np.zeros((t.n, len(ind)))
        for j, k in enumerate(self.load_nodes):
            self.load_incidence[k, j] = 1.0
        self.n_complex = t.l + t.n + len(ind)
        self.n_states = 2 * self.n_complex

    def state_labels(self) -> list[str]:
        t = self.topology
        names = []
        for b in t.branches:
            tag = b.name or f"{t.node_names[b.from_node]}-{t.node_names[b.to_node]}"
            names.append(f"line{tag}.i")
        names += [f"bus{nm}.v" for nm in t.node_names]
        names += [f"load{t.loads[k].name or t.node_names[t.loads[k].node]}.iL"
                  for k in t.inductive_loads]
        return [f"{nm}{ax}" for nm in names for ax in ("D", "Q")]

    def split(self, z: np.ndarray):
        t = self.topology
        return z[:t.l], z[t.l:t.l + t.n], z[t.l + t.n:]

    def derivatives(self, z: np.ndarray, i_dev: np.ndarray) -> np.ndarray:
        """Complex derivatives of (i_l, v_N, i_L) given device injections."""
        ws = self.omega_s
        i_l, v_N, i_L = self.split(z)
        i_N = self.CCI_dev @ i_dev + self.CCI_br @ i_l
        v_l = self.CCU @ v_N
        di_l = ws / self.L_l * (v_l - 1j * OMEGA_STAR * self.L_l * i_l - self.R_l * i_l)
        i_load = self.load_incidence @ i_L
        dv_N = ws / self.C_N * (i_N - i_load - self.G_N * v_N
                                - 1j * OMEGA_STAR * self.C_N * v_N)
        di_L = ws / self.L_L * (v_N[self.load_nodes] - 1j * OMEGA_STAR * self.L_L * i_L)
        return np.concatenate([di_l, dv_N, di_L])

    def equilibrium(self, v_N: np.ndarray) -> np.ndarray:
        """Branch and load-inductor currents consistent with given node voltages."""
        i_l = (self.CCU @ v_N) / (self.R_l + 1j * OMEGA_STAR * self.L_l)
        i_L = v_N[self.load_nodes] / (1j * OMEGA_STAR * self.L_L)
        return np.concatenate([i_l, v_N, i_L])

    def jacobian(self) -> np.ndarray:
        """Analytic real Jacobian of the network-only states (injections held)."""
        n = self.n_complex
        Jc = np.zeros((n, n), dtype=complex)
        t = self.topology
        nl, nn = t.l, t.n
        ws = self.omega_s
        il = slice(0, nl)
        vn = slice(nl, nl + nn)
        iL = slice(nl + nn, n)
        Jc[il, il] = np.diag(-ws / self.L_l * (self.R_l + 1j * self.L_l))
        Jc[il, vn] = (ws / self.L_l)[:, None] * self.CCU
        Jc[vn, il] = (ws / self.C_N)[:, None] * self.CCI_br
        Jc[vn, vn] = np.diag(-ws / self.C_N * (self.G_N + 1j * self.C_N))
        Jc[vn, iL] = -(ws / self.C_N)[:, None] * self.load_incidence
        Jc[iL, vn] = (ws / self.L_L)[:, None] * self.load_incidence.T
        Jc[iL, iL] = np.diag(-1j * ws * np.ones(len(self.L_L)))
        return complex_to_real_matrix(Jc)


def complex_to_real_matrix(M: np.ndarray) -> np.ndarray:
    """Real matrix acting on interleaved (re, im) pairs equivalent to complex M."""
    n, k = M.shape
    out = np.zeros((2 * n, 2 * k))
    out[0::2, 0::2] = M.real
    out[0::2, 1::2] = -M.imag
    out[1::2, 0::2] = M.imag
    out[1::2, 1::2] = M.real
    return out


def spc_network_derivatives(state: NetworkStateSPC, inj: np.ndarray, t: Topology,
                            omega_s: float = 120 * np.pi) -> NetworkStateSPC:
    net = SPCNetwork(t, omega_s)
    z = np.concatenate([state.i_l, state.v_N, state.i_L])
    dz = net.derivatives(z, np.asarray(inj, dtype=complex))
    return NetworkStateSPC(*net.split(dz))


def build_admittance(t: Topology) -> np.ndarray:
    """Nodal admittance matrix at nominal frequency, loads folded in as shunts."""
    Y = np.zeros((t.n, t.n), dtype=complex)
    for b in t.branches:
        y = 1.0 / (b.R + 1j * OMEGA_STAR * b.L)
        i, k = b.from_node, b.to_node
        Y[i, i] += y + 1j * b.C / 2
        Y[k, k] += y + 1j * b.C / 2
        Y[i, k] -= y
        Y[k, i] -= y
    for ld in t.loads:
        y = 1j * ld.C
        if np.isfinite(ld.R):
            y += 1.0 / ld.R
        if ld.has_inductor:
            y += 1.0 / (1j * OMEGA_STAR * ld.L)
        Y[ld.node, ld.node] += y
    return Y


def qpc_solve(Y: np.ndarray, inj: np.ndarray) -> np.ndarray:
    """Bus voltages from ``Y v = i`` by dense LU."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(Y, check_finite=True)
    except (ValueError, np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
        raise np.linalg.LinAlgError(f"admittance matrix cannot be factored: {exc}") from exc
    if np.any(np.abs(np.diag(lu[0])) < 1e-14 * max(1.0, np.abs(Y).max())):
        raise np.linalg.LinAlgError("singular admittance matrix")
    return scipy.linalg.lu_solve(lu, inj)
