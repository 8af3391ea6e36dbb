"""Whole-system assembly: power flow, interconnection and initialization.

A :class:`SystemModel` exposes a single vector field ``f(x, u)`` in either
framework:

* ``spc`` - devices read the node-voltage states of the dynamic network and
  the network integrates the device injections;
* ``qpc`` - the network is an admittance matrix solved at every evaluation
  from the device Norton sources.

State ordering is devices in declaration order (generators, then
converters), followed by the network states (series branches, nodes, load
inductors) in SPC mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import powerflow as pfm
from .config import SystemConfig
from .gfc import GFCParams, GridFormingConverter
from .machine import SGParams, SynchronousMachine
from .network import Branch, Load, SPCNetwork, Topology, build_admittance

FRAMEWORKS = ("spc", "qpc")


class InitializationError(RuntimeError):
    pass


# ---------------------------------------------------------------- power flow
def _sg_params(g) -> SGParams:
    base = SGParams(**g.params.model_dump())
    return base


def device_params(cfg: SystemConfig):
    """Device parameter objects on system base, keyed by device name."""
    out = {}
    for g in cfg.generators:
        out[g.name] = _sg_params(g).rescaled(g.mva, cfg.s_base_mva)
    for c in cfg.converters:
        out[c.name] = GFCParams(P_c=c.P, **c.params.model_dump())
    return out


def check_physics(cfg: SystemConfig) -> None:
    """Re-check device and network invariants; failures carry the config path."""
    from .config import ConfigError
    from .network import TopologyError

    for i, g in enumerate(cfg.generators):
        try:
            _sg_params(g).rescaled(g.mva, cfg.s_base_mva)
        except ValueError as exc:
            raise ConfigError(str(exc), f"generators.{i}.params") from exc
    for i, c in enumerate(cfg.converters):
        try:
            GFCParams(P_c=c.P, **c.params.model_dump())
        except ValueError as exc:
            raise ConfigError(str(exc), f"converters.{i}.params") from exc
    hv = network_buses(cfg)
    hidx = {b: k for k, b in enumerate(hv)}
    try:
        Topology(len(hv), tuple(Branch(hidx[ln.from_bus], hidx[ln.to_bus], ln.R, ln.L, ln.C, ln.name)
                                for ln in cfg.lines),
                 tuple(hidx[d.hv_bus] for d in (*cfg.generators, *cfg.converters)), (), tuple(hv))
    except (TopologyError, ValueError) as exc:
        raise ConfigError(str(exc), "lines") from exc


def network_buses(cfg: SystemConfig) -> list[str]:
    seen = []
    for ln in cfg.lines:
        for b in (ln.from_bus, ln.to_bus):
            if b not in seen:
                seen.append(b)
    return sorted(seen, key=_bus_key)


def _bus_key(name: str):
    return (0, int(name), name) if name.isdigit() else (1, 0, name)


@dataclass
class PFCase:
    """Bus/branch data of the power-flow network (terminal buses included)."""

    buses: list[str]
    Y: np.ndarray
    lines: dict  # name -> (i, k, y_series, b_half)


def _pf_network(cfg: SystemConfig) -> PFCase:
    params = device_params(cfg)
    terminals = [d.bus for d in (*cfg.generators, *cfg.converters)]
    buses = network_buses(cfg) + sorted(terminals, key=_bus_key)
    idx = {b: k for k, b in enumerate(buses)}
    Y = np.zeros((len(buses), len(buses)), dtype=complex)
    lines = {}

    def add(i, k, z, b_half):
        y = 1.0 / z
        Y[i, i] += y + 1j * b_half
        Y[k, k] += y + 1j * b_half
        Y[i, k] -= y
        Y[k, i] -= y
        return y

    for ln in cfg.lines:
        i, k = idx[ln.from_bus], idx[ln.to_bus]
        y = add(i, k, ln.R + 1j * ln.L, ln.C / 2)
        lines[ln.name] = (i, k, y, ln.C / 2)
    for g in cfg.generators:
        p = params[g.name]
        add(idx[g.bus], idx[g.hv_bus], p.Rg + 1j * p.Lg, 0.0)
    for c in cfg.converters:
        p = params[c.name]
        add(idx[c.bus], idx[c.hv_bus], p.R_t + 1j * p.L_t, 0.0)
    return PFCase(buses, Y, lines)


def line_flow(case: PFCase, V: np.ndarray, name: str, from_bus: str | None = None) -> complex:
    """Complex power entering line ``name`` at ``from_bus`` (default its from end)."""
    i, k, y, bh = case.lines[name]
    if from_bus is not None and case.buses[k] == from_bus:
        i, k = k, i
    I = (V[i] - V[k]) * y + 1j * bh * V[i]
    return V[i] * np.conj(I)


def solve_power_flow(cfg: SystemConfig) -> pfm.PowerFlowResult:
    """Power flow of the configured dispatch, honouring an optional tie-flow target."""
    case = _pf_network(cfg)
    idx = {b: k for k, b in enumerate(case.buses)}
    n = len(case.buses)
    loads = {ld.bus: [ld.P, ld.Q - ld.Q_shunt] for ld in cfg.loads}
    tf = cfg.power_flow.tie_flow

    def run(load_override=None):
        P = np.zeros(n)
        Q = np.zeros(n)
        types = [pfm.PQ] * n
        Vm = np.ones(n)
        Va = np.zeros(n)
        for bus, (pl, ql) in loads.items():
            if load_override is not None and bus == tf.adjust_load:
                pl = load_override
            P[idx[bus]] -= pl
            Q[idx[bus]] -= ql
        for d in (*cfg.generators, *cfg.converters):
            k = idx[d.bus]
            types[k] = pfm.SLACK if d.role == "slack" else pfm.PV
            P[k] += d.P
            Vm[k] = d.V
            Va[k] = np.radians(d.angle_deg)
        V, err, it = pfm.newton_raphson(case.Y, types, P, Q, Vm, Va,
                                        tol=cfg.power_flow.tol,
                                        max_iter=cfg.power_flow.max_iter)
        return V, err, it

    adjusted = {}
    if tf is None:
        V, err, it = run()
    else:
        def flow(pl):
            V, _, _ = run(pl)
            return sum(line_flow(case, V, nm, tf.from_bus).real for nm in tf.lines) - tf.target

        p0 = loads[tf.adjust_load][0]
        p1 = p0 + 0.1
        f0, f1 = flow(p0), flow(p1)
        for _ in range(30):
            if abs(f1) < 1e-12:
                break
            p0, p1, f0 = p1, p1 - f1 * (p1 - p0) / (f1 - f0), f1
            f1 = flow(p1)
        else:
            raise pfm.PowerFlowError("tie-flow target not reached")
        V, err, it = run(p1)
        adjusted = {f"load{tf.adjust_load}.P": p1}
    S = V * np.conj(case.Y @ V)
    res = pfm.PowerFlowResult(case.buses, V, S, it, err, adjusted)
    res.case = case
    return res


def tie_flow(cfg: SystemConfig, pf: pfm.PowerFlowResult) -> float:
    tf = cfg.power_flow.tie_flow
    if tf is None:
        raise ValueError("configuration defines no tie flow")
    return sum(line_flow(pf.case, pf.V, nm, tf.from_bus).real for nm in tf.lines)


# ---------------------------------------------------------------- system model
@dataclass
class SystemModel:
    framework: str
    config: SystemConfig
    topology: Topology
    devices: list
    device_nodes: np.ndarray
    offsets: np.ndarray
    n_states: int
    omega_s: float
    input_devices: list = field(default_factory=list)
    output_channels: list = field(default_factory=list)
    network: SPCNetwork | None = None
    lu: tuple | None = None
    Y: np.ndarray | None = None

    @property
    def n_inputs(self) -> int:
        return len(self.input_devices)

    @property
    def network_offset(self) -> int:
        return int(self.offsets[-1])

    def state_labels(self) -> list[str]:
        labels = []
        for d in self.devices:
            labels += d.state_labels()
        if self.network is not None:
            labels += self.network.state_labels()
        return labels

    def input_labels(self) -> list[str]:
        return [f"{self.devices[k].name}.u" for k in self.input_devices]

    def device(self, name: str):
        for d in self.devices:
            if d.name == name:
                return d
        raise KeyError(name)

    def device_slice(self, name: str) -> slice:
        for k, d in enumerate(self.devices):
            if d.name == name:
                return slice(self.offsets[k], self.offsets[k + 1])
        raise KeyError(name)

    def with_devices(self, devices: list) -> "SystemModel":
        m = SystemModel(**{**self.__dict__, "devices": list(devices)})
        if self.framework == "qpc":
            m._factor_qpc()
        return m

    def _factor_qpc(self):
        Yt = self.Y.copy()
        for d, k in zip(self.devices, self.device_nodes):
            if isinstance(d, SynchronousMachine):
                Yt[k, k] += d.norton(np.zeros(9))[1]
        self.lu = scipy.linalg.lu_factor(Yt)
        if np.any(np.abs(np.diag(self.lu[0])) < 1e-12):
            raise np.linalg.LinAlgError("singular QPC network")


def build_model(cfg: SystemConfig, pf: pfm.PowerFlowResult, framework: str | None = None) -> SystemModel:
    """Assemble devices and network; loads become impedances at the solved voltage."""
    framework = framework or cfg.framework
    if framework not in FRAMEWORKS:
        raise ValueError(f"unknown framework {framework!r}")
    spc = framework == "spc"
    omega_s = 2 * np.pi * cfg.frequency_hz
    hv = network_buses(cfg)
    hidx = {b: k for k, b in enumerate(hv)}
    params = device_params(cfg)
    devices = []
    nodes = []
    for g in cfg.generators:
        devices.append(SynchronousMachine(g.name, params[g.name], omega_s, spc))
        nodes.append(hidx[g.hv_bus])
    for c in cfg.converters:
        devices.append(GridFormingConverter(c.name, params[c.name], omega_s))
        nodes.append(hidx[c.hv_bus])
    adjusted = pf.adjusted
    loads = []
    for ld in cfg.loads:
        V = abs(pf.V[pf.bus(ld.bus)])
        P = adjusted.get(f"load{ld.bus}.P", ld.P)
        loads.append(Load(hidx[ld.bus],
                          R=V ** 2 / P if P > 0 else np.inf,
                          L=V ** 2 / ld.Q if ld.Q > 0 else np.inf,
                          C=ld.Q_shunt / V ** 2, name=ld.bus))
    branches = [Branch(hidx[ln.from_bus], hidx[ln.to_bus], ln.R, ln.L, ln.C, ln.name)
                for ln in cfg.lines]
    topo = Topology(len(hv), tuple(branches), tuple(nodes), tuple(loads), tuple(hv))
    sizes = [d.n_states for d in devices]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    inputs = [k for k, d in enumerate(devices) if isinstance(d, GridFormingConverter)]
    outputs = []
    for k in inputs:
        nm = devices[k].name
        outputs += [f"{nm}.v_dc", f"{nm}.itd", f"{nm}.itq"]
    model = SystemModel(framework, cfg, topo, devices, np.array(nodes), offsets,
                        int(offsets[-1]), omega_s, inputs, outputs)
    if spc:
        model.network = SPCNetwork(topo, omega_s)
        model.n_states += model.network.n_states
    else:
        model.Y = build_admittance(topo)
        model._factor_qpc()
    return model


def _complex_pairs(x):
    return x[0::2] + 1j * x[1::2]


def node_voltages(model: SystemModel, x: np.ndarray) -> np.ndarray:
    """Network node voltages for state ``x`` (algebraic solve in QPC)."""
    if model.framework == "spc":
        z = _complex_pairs(x[model.network_offset:])
        return model.network.split(z)[1]
    inj = np.zeros(model.topology.n, dtype=complex)
    for d, k, a, b in zip(model.devices, model.device_nodes, model.offsets[:-1], model.offsets[1:]):
        inj[k] += d.norton(x[a:b])[0]
    return scipy.linalg.lu_solve(model.lu, inj)


def vector_field(model: SystemModel, x: np.ndarray, u: np.ndarray | None = None) -> np.ndarray:
    """State derivative ``f(x, u)``."""
    u = np.zeros(model.n_inputs) if u is None else u
    v_N = node_voltages(model, x)
    dx = np.empty(model.n_states)
    i_dev = np.empty(len(model.devices), dtype=complex)
    uk = dict(zip(model.input_devices, u))
    for j, (d, k) in enumerate(zip(model.devices, model.device_nodes)):
        a, b = model.offsets[j], model.offsets[j + 1]
        dx[a:b], i_dev[j] = d.derivatives(x[a:b], v_N[k], uk.get(j, 0.0))
    if model.framework == "spc":
        z = _complex_pairs(x[model.network_offset:])
        dz = model.network.derivatives(z, i_dev)
        dx[model.network_offset::2] = dz.real
        dx[model.network_offset + 1::2] = dz.imag
    return dx


def outputs(model: SystemModel, x: np.ndarray, u: np.ndarray | None = None,
            channels: list[str] | None = None) -> np.ndarray:
    """Evaluate named output channels (``device.state`` or ``busN.vm``)."""
    channels = model.output_channels if channels is None else channels
    labels = model.state_labels()
    y = np.empty(len(channels))
    v_N = None
    for j, ch in enumerate(channels):
        if ch in labels:
            y[j] = x[labels.index(ch)]
        elif ch.startswith("bus") and ch.endswith(".vm"):
            if v_N is None:
                v_N = node_voltages(model, x)
            y[j] = abs(v_N[model.topology.node_names.index(ch[3:-3])])
        elif ch.endswith(".P_t"):
            y[j] = model.device(ch[:-4]).terminal_power(x[model.device_slice(ch[:-4])])
        else:
            raise KeyError(f"unknown output channel {ch!r}")
    return y


# ---------------------------------------------------------------- initialization
@dataclass
class OperatingPoint:
    model: SystemModel
    x0: np.ndarray
    u0: np.ndarray
    pf: pfm.PowerFlowResult
    residual: float

    def report(self) -> dict:
        return {
            "framework": self.model.framework,
            "residual_inf": self.residual,
            "buses": {b: {"vm": float(abs(v)), "va_deg": float(np.degrees(np.angle(v))),
                          "P": float(s.real), "Q": float(s.imag)}
                      for b, v, s in zip(self.pf.bus_names, self.pf.V, self.pf.S)},
        }


def initialize(model: SystemModel, pf: pfm.PowerFlowResult, tol: float = 1e-8) -> OperatingPoint:
    """Back-solve device states and references so that ``f(x0, 0) = 0``."""
    cfg = model.config
    x0 = np.zeros(model.n_states)
    devices = []
    specs = {d.name: d for d in (*cfg.generators, *cfg.converters)}
    for j, d in enumerate(model.devices):
        k = pf.bus(specs[d.name].bus)
        v_t, S = pf.V[k], pf.S[k]
        a, b = model.offsets[j], model.offsets[j + 1]
        if isinstance(d, SynchronousMachine):
            xd, V_ref, P_ref, _ = d.initialize(v_t, S)
            devices.append(d.with_references(V_ref, P_ref))
        else:
            xd, P_ref, V_ref, _ = d.initialize(v_t, S)
            devices.append(d.with_references(P_ref, V_ref))
        x0[a:b] = xd
    model = model.with_devices(devices)
    if model.framework == "spc":
        v_N = np.array([pf.V[pf.bus(b)] for b in model.topology.node_names])
        z = model.network.equilibrium(v_N)
        x0[model.network_offset::2] = z.real
        x0[model.network_offset + 1::2] = z.imag
    u0 = np.zeros(model.n_inputs)
    x0 = _refine(model, x0, u0, tol)
    res = float(np.abs(vector_field(model, x0, u0)).max())
    if not res < tol:
        f = vector_field(model, x0, u0)
        worst = model.state_labels()[int(np.argmax(np.abs(f)))]
        raise InitializationError(f"equilibrium residual {res:.3e} above {tol:g} (worst: {worst})")
    return OperatingPoint(model, x0, u0, pf, res)


def _refine(model, x0, u0, tol, max_iter=8):
    """Damped Gauss-Newton polish of the equilibrium (least squares: angle drift is singular)."""
    x = x0.copy()
    f = vector_field(model, x, u0)
    if np.abs(f).max() < tol * 1e-2:
        return x
    from .analysis import jacobian_fd

    for _ in range(max_iter):
        J = jacobian_fd(lambda z: vector_field(model, z, u0), x)
        dx = np.linalg.lstsq(J, -f, rcond=1e-12)[0]
        step = 1.0
        while step > 1e-3:
            xn = x + step * dx
            fn = vector_field(model, xn, u0)
            if np.abs(fn).max() < np.abs(f).max():
                break
            step /= 2
        else:
            break
        x, f = xn, fn
        if np.abs(f).max() < tol * 1e-2:
            break
    return x
