"""Command-line front end.

Every command reads one configuration file and writes CSV artifacts (plus
SVG plots for sweeps and time series with ``--format svg``) into ``--out``.
CSV files start with ``#`` provenance lines (configuration hash, tool
version, command line) followed by a header row; floats carry 17
significant digits.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, prony, simulate, studies
from .assembly import InitializationError, check_physics, solve_power_flow, tie_flow
from .config import ConfigError, bundled_case, config_hash, load_config
from .gfc import DCLinkCollapse
from .powerflow import PowerFlowError

log = logging.getLogger("phasorgrid")

NUMERICAL_ERRORS = (PowerFlowError, InitializationError, analysis.NotAnEquilibrium,
                    np.linalg.LinAlgError, FloatingPointError, DCLinkCollapse,
                    prony.PronyRankError)


class Artifacts:
    """Writes provenance-stamped CSV (and optional SVG) files into one directory."""

    def __init__(self, out: Path, cfg, argv, svg: bool):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.header = [f"config_hash={config_hash(cfg)}", f"version=phasorgrid {__version__}",
                       f"command={shlex.join(argv)}"]
        self.svg = svg
        self.written = []

    def csv(self, name: str, columns: list[str], rows) -> Path:
        path = self.out / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in self.header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.written.append(path)
        return path

    def plot(self, name: str, draw) -> Path | None:
        if not self.svg:
            return None
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7, 4))
        draw(ax)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = self.out / name
        fig.savefig(path, format="svg", metadata={"Description": "; ".join(self.header)})
        plt.close(fig)
        self.written.append(path)
        return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return v


# ---------------------------------------------------------------- commands
def cmd_powerflow(args, cfg, art):
    pf = solve_power_flow(cfg)
    rows = [(b, abs(v), np.degrees(np.angle(v)), s.real, s.imag)
            for b, v, s in zip(pf.bus_names, pf.V, pf.S)]
    art.csv("powerflow.csv", ["bus", "vm_pu", "va_deg", "p_pu", "q_pu"], rows)
    print(f"power flow converged in {pf.iterations} iterations, mismatch {pf.mismatch:.2e}")
    for k, v in pf.adjusted.items():
        print(f"  adjusted {k} = {v:.6f} pu")
    if cfg.power_flow.tie_flow:
        print(f"  tie flow = {tie_flow(cfg, pf):.6f} pu")


def cmd_simulate(args, cfg, art):
    op = studies.operating_point(cfg, args.framework)
    sc = studies.sim_config(cfg, args.framework, args.t_end)
    res = simulate.integrate(op, sc)
    _write_run(art, res, f"timeseries_{args.framework}")
    for e in res.events:
        print(f"event: {e}")
    print(f"simulated {res.t[-1]:.4f} s, {len(res.channels)} channels")


def _write_run(art, res, stem):
    art.csv(f"{stem}.csv", ["t"] + res.channels, np.column_stack([res.t, res.y]).tolist())

    def draw(ax):
        y = res.y - res.y[0]
        for j, ch in enumerate(res.channels):
            ax.plot(res.t, y[:, j], lw=0.8, label=ch)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("deviation from initial value (pu)")
        ax.legend(fontsize=7, ncol=3)

    art.plot(f"{stem}.svg", draw)


def cmd_linearize(args, cfg, art):
    ss = studies.small_signal(cfg, args.framework, sweep=False)
    lm = ss.lm
    for nm, M, rows, cols in (("A", lm.A, lm.state_labels, lm.state_labels),
                              ("B", lm.B, lm.state_labels, lm.input_labels),
                              ("C", lm.C, lm.output_labels, lm.state_labels),
                              ("D", lm.D, lm.output_labels, lm.input_labels)):
        art.csv(f"{nm}_{args.framework}.csv", ["row"] + list(cols),
                [[r] + list(M[i]) for i, r in enumerate(rows)])
    print(f"{lm.A.shape[0]} states, {lm.B.shape[1]} inputs, {lm.C.shape[0]} outputs; "
          f"{len(lm.flagged)} entries flagged by the step-halving check")


def _modes_rows(ss):
    labels = ss.lm.state_labels
    rows = []
    for i, m in enumerate(ss.modes):
        dom = "; ".join(f"{nm}:{p:.3f}" for nm, p, _ in m.dominant(labels, 3))
        rows.append((i, m.eigenvalue.real, m.eigenvalue.imag, m.f_hz, m.zeta_pct, m.unstable, dom))
    return rows


MODE_COLUMNS = ["mode", "re", "im", "f_hz", "zeta_pct", "unstable", "dominant_states"]


def cmd_eigs(args, cfg, art):
    ss = studies.small_signal(cfg, args.framework, sweep=False)
    art.csv(f"modes_{args.framework}.csv", MODE_COLUMNS, _modes_rows(ss))
    um = ss.unstable
    print(f"{len(ss.modes)} modes, {len(um)} unstable")
    for m in um:
        print(f"  unstable: f = {m.f_hz:.3f} Hz, zeta = {m.zeta_pct:.3f} %")


def cmd_pfactors(args, cfg, art):
    ss = studies.small_signal(cfg, args.framework, sweep=False)
    if args.mode is not None:
        if not 0 <= args.mode < len(ss.modes):
            raise SystemExit(f"mode index out of range 0..{len(ss.modes) - 1}")
        picked = [(args.mode, ss.modes[args.mode])]
    else:
        picked = [(i, m) for i, m in enumerate(ss.modes) if m.unstable and m.eigenvalue.imag > 0]
        if not picked:
            osc = [(i, m) for i, m in enumerate(ss.modes) if m.eigenvalue.imag > 0]
            picked = [min(osc, key=lambda im: im[1].zeta_pct)]
    labels = ss.lm.state_labels
    rows = []
    for i, m in picked:
        for k in np.argsort(-m.participation, kind="stable"):
            rows.append((i, m.f_hz, m.zeta_pct, labels[k], m.participation[k], m.shape_angle_deg[k]))
        print(f"mode {i}: f = {m.f_hz:.3f} Hz, zeta = {m.zeta_pct:.3f} %")
        for nm, p, a in m.dominant(labels, 5):
            print(f"  {nm:24s} {p:7.4f} {a:9.2f} deg")
    art.csv(f"participation_{args.framework}.csv",
            ["mode", "f_hz", "zeta_pct", "state", "participation", "shape_angle_deg"], rows)


def cmd_sigma(args, cfg, art):
    ss = studies.small_signal(cfg, args.framework)
    art.csv(f"sigma_{args.framework}.csv", ["f_hz", "sigma_max", "sigma_max_db"],
            zip(ss.f_grid, ss.sigma, analysis.to_db(ss.sigma)))

    def draw(ax):
        ax.semilogx(ss.f_grid, analysis.to_db(ss.sigma), label=args.framework.upper())
        ax.set_xlabel("frequency (Hz)")
        ax.set_ylabel("max singular value (dB)")
        ax.legend()

    art.plot(f"sigma_{args.framework}.svg", draw)
    k = int(np.argmax(ss.sigma))
    print(f"largest gain {ss.sigma[k]:.4g} at {ss.f_grid[k]:.3f} Hz")


def cmd_prony(args, cfg, art):
    channel = args.channel or cfg.analysis.prony.channel
    if args.input:
        res = read_timeseries(args.input, channel)
    else:
        op = studies.operating_point(cfg, args.framework)
        res = simulate.integrate(op, studies.sim_config(cfg, args.framework, args.t_end,
                                                        [channel] if channel else None))
    pc = cfg.analysis.prony.model_copy(update={"channel": res.channels[0] if not channel else channel})
    cfg = cfg.model_copy(update={"analysis": cfg.analysis.model_copy(update={"prony": pc})})
    fit = studies.ringdown_fit(cfg, res)
    art.csv(f"prony_{args.framework}.csv",
            ["mode", "amplitude", "sigma", "f_hz", "zeta_pct", "phase_rad", "energy"],
            [(i, m.amplitude, m.sigma, m.f_hz, m.zeta_pct, m.phase_rad, m.energy)
             for i, m in enumerate(fit.modes)])
    m = studies.dominant_oscillation(fit)
    print(f"order {fit.order}, relative residual {fit.residual:.3e}")
    print(f"dominant oscillation: f = {m.f_hz:.3f} Hz, zeta = {m.zeta_pct:.3f} %")


def read_timeseries(path, channel=None) -> simulate.SimResult:
    """Load a CSV written by ``simulate`` (``#`` lines skipped, first column time)."""
    with open(path, encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, body = rows[0], np.array(rows[1:], dtype=float)
    ch = channel or header[1]
    if ch not in header:
        raise KeyError(ch)
    return simulate.SimResult(body[:, 0], body[:, [header.index(ch)]], [ch])


def cmd_casestudy(args, cfg, art):
    cs = studies.case_study(cfg, t_end=args.t_end)
    rows = cs.table()
    art.csv("comparison.csv", ["approach", "f_hz", "zeta_pct", "unstable", "note"],
            [(r["approach"], r["f_hz"], r["zeta_pct"], r["unstable"], r.get("note", ""))
             for r in rows])
    for fw, ss in cs.results.items():
        art.csv(f"modes_{fw}.csv", MODE_COLUMNS, _modes_rows(ss))
    g = cs.results["spc"].f_grid
    art.csv("sigma.csv", ["f_hz", "sigma_spc", "sigma_qpc", "sigma_spc_db", "sigma_qpc_db"],
            zip(g, cs.results["spc"].sigma, cs.results["qpc"].sigma,
                analysis.to_db(cs.results["spc"].sigma), analysis.to_db(cs.results["qpc"].sigma)))

    def draw(ax):
        for fw in ("spc", "qpc"):
            ax.semilogx(g, analysis.to_db(cs.results[fw].sigma), label=fw.upper())
        ax.set_xlabel("frequency (Hz)")
        ax.set_ylabel("max singular value (dB)")
        ax.legend()

    art.plot("sigma.svg", draw)
    for fw, run in cs.runs.items():
        _write_run(art, run, f"timeseries_{fw}")
    print(f"case study {cfg.name}")
    if cs.tie_flow is not None:
        print(f"  tie flow: {cs.tie_flow:.6f} pu")
    print(f"  {'approach':34s} {'f (Hz)':>9s} {'zeta (%)':>9s}  unstable")
    for r in rows:
        flag = {True: "yes", False: "no", None: "-"}[r["unstable"]]
        print(f"  {r['approach']:34s} {r['f_hz']:9.3f} {r['zeta_pct']:9.3f}  {flag}"
              + (f"  ({r['note']})" if r.get("note") else ""))
    for fw, run in cs.runs.items():
        for e in run.events:
            print(f"  {fw} run event: {e}")


COMMANDS = {
    "powerflow": (cmd_powerflow, "solve the power flow"),
    "simulate": (cmd_simulate, "time-domain run with the configured disturbance"),
    "linearize": (cmd_linearize, "A, B, C, D about the initialized operating point"),
    "eigs": (cmd_eigs, "eigenvalues with frequency and damping"),
    "pfactors": (cmd_pfactors, "participation factors and mode shapes"),
    "sigma": (cmd_sigma, "maximum singular value sweep"),
    "prony": (cmd_prony, "Prony fit of a simulated (or supplied) ringdown"),
    "casestudy": (cmd_casestudy, "full comparison for shipped case 1 or 2"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--framework", choices=("spc", "qpc"), default=None,
                        help="network representation (default: from the config)")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--format", choices=("csv", "svg"), default="csv",
                        help="csv: tables only; svg: tables plus plots")
    common.add_argument("--seed", type=int, default=None,
                        help="accepted for forward compatibility; has no effect")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="phasorgrid", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"phasorgrid {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_)
        if name == "casestudy":
            sp.add_argument("case", choices=("1", "2"))
            sp.add_argument("--config", help="override the shipped configuration file")
        else:
            sp.add_argument("config", help="system configuration file")
        if name in ("simulate", "prony", "casestudy"):
            sp.add_argument("--t-end", type=float, default=None, help="override horizon (s)")
        if name == "pfactors":
            sp.add_argument("--mode", type=int, default=None,
                            help="mode index as listed by eigs (default: unstable modes)")
        if name == "prony":
            sp.add_argument("--channel", default=None)
            sp.add_argument("--input", default=None,
                            help="fit a CSV time series (first column time) instead of simulating")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        path = bundled_case(f"case{args.case}") if args.command == "casestudy" and not args.config \
            else Path(args.config)
        cfg = load_config(path)
        check_physics(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return 2
    args.framework = args.framework or cfg.framework
    art = Artifacts(Path(args.out), cfg, ["phasorgrid"] + argv, args.format == "svg")
    func = COMMANDS[args.command][0]
    try:
        func(args, cfg, art)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3
    except KeyError as exc:
        print(f"configuration error: unknown name {exc}", file=sys.stderr)
        return 2
    for pth in art.written:
        log.info("wrote %s", pth)
    return 0


if __name__ == "__main__":
    sys.exit(main())
