"""End-to-end study pipelines shared by the command line and the test suite."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import analysis, prony, simulate
from .assembly import OperatingPoint, build_model, initialize, solve_power_flow, tie_flow
from .config import SystemConfig

log = logging.getLogger(__name__)

# Published small-signal results for the two shipped cases, printed beside
# ours for inspection only (f in Hz, zeta in %).
PUBLISHED = {
    "case1": {"spc_linear": (43.135, -2.11), "emt_prony": (43.183, -3.40)},
    "case2": {"spc_linear": (43.33, None)},
}


def operating_point(cfg: SystemConfig, framework: str, pf=None) -> OperatingPoint:
    pf = solve_power_flow(cfg) if pf is None else pf
    return initialize(build_model(cfg, pf, framework), pf)


@dataclass
class SmallSignal:
    framework: str
    op: OperatingPoint
    lm: analysis.LinearModel
    modes: list
    f_grid: np.ndarray | None = None
    sigma: np.ndarray | None = None

    @property
    def unstable(self) -> list:
        return analysis.unstable_modes(self.modes)

    @property
    def oscillatory_unstable(self) -> list:
        return [m for m in self.unstable if m.eigenvalue.imag > 0]


def small_signal(cfg: SystemConfig, framework: str, pf=None, sweep: bool = True) -> SmallSignal:
    op = operating_point(cfg, framework, pf)
    outs = cfg.analysis.outputs or None
    lm = analysis.linearize(op.model, op, outs)
    if lm.flagged:
        log.info("%d Jacobian entries flagged by the Richardson check", len(lm.flagged))
    modes = analysis.eigen_analysis(lm)
    res = SmallSignal(framework, op, lm, modes)
    if sweep:
        sw = cfg.analysis.sweep
        res.f_grid = analysis.default_grid(sw.f_min, sw.f_max, sw.points)
        res.sigma = analysis.sigma_max_sweep(lm, res.f_grid)
    return res


def sim_config(cfg: SystemConfig, framework: str, t_end: float | None = None,
               channels=None) -> simulate.SimConfig:
    sc = cfg.simulation
    d = sc.disturbance
    return simulate.SimConfig(
        t_end=sc.t_end if t_end is None else t_end,
        dt=sc.dt or simulate.default_dt(framework),
        method=sc.method,
        disturbance=simulate.Disturbance(tuple(d.inputs), d.waveform, d.magnitude, d.start,
                                         d.duration),
        channels=tuple(channels if channels is not None else sc.channels),
        decimation=sc.decimation,
    )


def ringdown_fit(cfg: SystemConfig, res: simulate.SimResult) -> prony.PronyResult:
    """Prony fit of the configured channel over the configured post-disturbance window.

    The channel is taken as a deviation from its initial value and resampled
    to ``step`` by decimation.
    """
    pc = cfg.analysis.prony
    ch = pc.channel or res.channels[0]
    y = res.channel(ch)
    dt = res.t[1] - res.t[0]
    k = max(1, int(round(pc.step / dt)))
    sel = (res.t >= pc.t_start - 1e-12) & (res.t <= pc.t_stop + 1e-12)
    if sel.sum() < 2 or res.t[-1] < pc.t_stop - 1e-9:
        raise prony.PronyRankError(
            f"run ended at t = {res.t[-1]:.4f} s, before the fit window [{pc.t_start}, {pc.t_stop}]")
    seg = (y[sel] - y[0])[::k]
    return prony.prony(seg, dt * k, pc.order)


def dominant_oscillation(fit: prony.PronyResult) -> prony.PronyMode:
    """Highest-energy oscillatory mode of a fit."""
    osc = [m for m in fit.modes if m.eigenvalue.imag > 0]
    if not osc:
        raise ValueError("fit contains no oscillatory mode")
    return osc[0]


@dataclass
class CaseStudy:
    name: str
    tie_flow: float | None
    results: dict = field(default_factory=dict)  # framework -> SmallSignal
    runs: dict = field(default_factory=dict)  # framework -> SimResult
    fits: dict = field(default_factory=dict)  # framework -> PronyResult | str

    def table(self) -> list[dict]:
        """Rows comparing the unstable mode across approaches."""
        rows = []
        for fw, ss in self.results.items():
            um = ss.oscillatory_unstable
            if um:
                m = max(um, key=lambda r: r.eigenvalue.real)
                rows.append({"approach": f"{fw.upper()} linearization", "f_hz": m.f_hz,
                             "zeta_pct": m.zeta_pct, "unstable": True})
            else:
                least = min((m for m in ss.modes if m.eigenvalue.imag > 0),
                            key=lambda r: r.zeta_pct)
                rows.append({"approach": f"{fw.upper()} linearization", "f_hz": least.f_hz,
                             "zeta_pct": least.zeta_pct, "unstable": False})
        for fw, fit in self.fits.items():
            if isinstance(fit, str):
                rows.append({"approach": f"{fw.upper()} simulation + Prony", "f_hz": np.nan,
                             "zeta_pct": np.nan, "unstable": None, "note": fit})
                continue
            m = dominant_oscillation(fit)
            rows.append({"approach": f"{fw.upper()} simulation + Prony", "f_hz": m.f_hz,
                         "zeta_pct": m.zeta_pct, "unstable": m.sigma > 0})
        pub = PUBLISHED.get(self.name, {})
        for key, label in (("spc_linear", "published SPC linearization"),
                           ("emt_prony", "published EMT + Prony")):
            if key in pub:
                f, z = pub[key]
                rows.append({"approach": label, "f_hz": f,
                             "zeta_pct": np.nan if z is None else z, "unstable": True})
        return rows


def case_study(cfg: SystemConfig, simulate_frameworks=("spc", "qpc"),
               t_end: float | None = None) -> CaseStudy:
    pf = solve_power_flow(cfg)
    tf = tie_flow(cfg, pf) if cfg.power_flow.tie_flow else None
    cs = CaseStudy(cfg.name, tf)
    for fw in ("spc", "qpc"):
        cs.results[fw] = small_signal(cfg, fw, pf)
    for fw in simulate_frameworks:
        op = cs.results[fw].op
        run = simulate.integrate(op, sim_config(cfg, fw, t_end))
        cs.runs[fw] = run
        try:
            cs.fits[fw] = ringdown_fit(cfg, run)
        except (prony.PronyRankError, ValueError) as exc:
            cs.fits[fw] = f"no fit: {exc}"
    return cs
