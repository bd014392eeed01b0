"""Command-line front end.

Every command accepts ``--config FILE.json`` whose keys mirror the long
flags (``tau1``, ``horizon``, ``x0``, ...); flags given on the command line
take precedence. Results go to ``--out`` as CSV and JSON next to PNG figures
and gnuplot scripts.

Exit codes for ``simulate`` and ``netbed``: 0 Converged, 2 LimitCycle,
3 Diverged, 4 Inconclusive, 1 on any error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import harmonic, lmi, nyquist, plotting
from .errors import SatDelayError
from .plant import ControlLaw, DelayPair, Saturation
from .sim import SimConfig, run
from .topology import graph_from_dict

__all__ = ["main", "build_parser", "EXIT_CODES"]

EXIT_CODES = {"Converged": 0, "LimitCycle": 2, "Diverged": 3, "Inconclusive": 4}

DEFAULTS = {
    "law": "u1",
    "tau1": "0",
    "tau2": None,
    "delta": 50.0,
    "step": 0.01,
    "horizon": 600.0,
    "method": "nyquist",
    "integrator": "euler",
    "velocity_tap": "internal",
    "out": ".",
    "seed": 0,
    "x0": None,
    "v0": None,
    "ports": None,
    "mode": "lockstep",
    "omega_max": nyquist.OMEGA_MAX,
    "plot": True,
}


class ConfigError(ValueError):
    pass


def _float_list(text) -> list:
    """Parse ``0,0.1,0.2``, ``a:b:step`` or a JSON list into floats."""
    if text is None:
        return []
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    if not text:
        return []
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ConfigError(f"range must be start:stop:step, got {text!r}")
        count = int(math.floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1
        return [round(parts[0] + k * parts[2], 12) for k in range(max(count, 0))]
    return [float(p) for p in text.split(",") if p.strip()]


def _settings(args) -> dict:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config JSON must be an object")
    merged = dict(DEFAULTS)
    merged.update({k.replace("-", "_"): v for k, v in cfg.items()})
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "config", "func"):
            merged[key] = value
    return merged


def _graph(settings):
    source = settings.get("graph")
    if source is None:
        raise ConfigError("a graph is required (--graph FILE or 'graph' in the config)")
    if isinstance(source, dict):
        data = source
    else:
        try:
            data = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read graph file {source}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"graph file {source} must hold a JSON object")
    return graph_from_dict(data), data


def _initial_state(settings, data, n):
    x0 = settings.get("x0")
    if x0 is None:
        x0 = data.get("initial_positions")
    x0 = _float_list(x0) if x0 is not None else [10.0 * i for i in range(n)]
    v0 = settings.get("v0")
    if v0 is None:
        v0 = data.get("initial_velocities")
    v0 = _float_list(v0) if v0 is not None else [0.0] * n
    if len(x0) != n or len(v0) != n:
        raise ConfigError(f"initial state needs {n} entries per vector, got {len(x0)} and {len(v0)}")
    return x0, v0


def _delays(settings):
    t1 = _float_list(settings["tau1"])
    t2 = _float_list(settings["tau2"]) if settings["tau2"] is not None else []
    if len(t1) != 1 or len(t2) != 1:
        raise ConfigError("this command needs a single --tau1 and --tau2")
    return DelayPair(t1[0], t2[0])


def _outdir(settings) -> Path:
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report_verdict(verdict, out: Path) -> int:
    (out / "verdict.json").write_text(json.dumps(verdict.to_dict(), indent=1) + "\n")
    freq = verdict.frequency
    extra = f" frequency={freq:.4f} rad/s amplitude={verdict.amplitude:.4g}" if freq else ""
    print(f"verdict={verdict.kind} final_psi={verdict.final_psi:.6g}{extra}")
    return EXIT_CODES[verdict.kind]


def cmd_simulate(settings) -> int:
    topo, data = _graph(settings)
    delays = _delays(settings)
    x0, v0 = _initial_state(settings, data, topo.n)
    config = SimConfig(
        initial_positions=x0, initial_velocities=v0, horizon=float(settings["horizon"]),
        step=float(settings["step"]), delays=delays, law=settings["law"],
        saturation=Saturation(float(settings["delta"])), velocity_tap=settings["velocity_tap"],
        method=settings["integrator"],
    )
    traj, verdict = run(config, topo)
    out = _outdir(settings)
    traj.to_csv(out / "trajectory.csv")
    plotting.trajectory_gnuplot("trajectory.csv", topo.n, out / "trajectory.gp")
    if settings["plot"]:
        plotting.plot_trajectory(traj, out / "trajectory.png")
    return _report_verdict(verdict, out)


def _fmt(value) -> str:
    if value is None:
        return "none"
    if math.isinf(value):
        return "inf"
    return f"{value:.4f}"


def _margin_columns(topo, laws, grid, method, seed):
    """Column name -> list of values over the grid plus the equal-delay entry."""
    cols = {}
    for law in laws:
        if method in ("lmi", "both"):
            vals = [lmi.lmi_margin(topo, law, t1, seed=seed) for t1 in grid]
            eq = lmi.equal_delay_margin_lmi(topo, law, seed=seed)
            bad = [m for m in vals + [eq] if m.inconclusive]
            if bad:
                print(f"warning: solver stalled in {len(bad)} lmi margin(s) for {law.value}", file=sys.stderr)
            cols[f"lmi_{law.value}"] = [m.value for m in vals] + [eq.value]
        if method in ("nyquist", "both"):
            vals = [nyquist.max_tau2(topo, law, t1) for t1 in grid]
            cols[f"nyquist_{law.value}"] = vals + [nyquist.equal_delay_margin(topo, law)]
    return cols


def cmd_margin(settings) -> int:
    topo, _ = _graph(settings)
    laws = [ControlLaw.parse(v) for v in str(settings["law"]).split(",")]
    grid = _float_list(settings["tau1"])
    method = settings["method"]
    cols = _margin_columns(topo, laws, grid, method, int(settings["seed"]))
    out = _outdir(settings)
    lines = ["tau1," + ",".join(cols)]
    labels = [f"{t:g}" for t in grid] + ["tau1=tau2"]
    for k, label in enumerate(labels):
        lines.append(label + "," + ",".join(_fmt(v[k]) for v in cols.values()))
    text = "\n".join(lines) + "\n"
    (out / "margin.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_region(settings) -> int:
    topo, _ = _graph(settings)
    law = ControlLaw.parse(settings["law"])
    grid = _float_list(settings["tau1"])
    method = settings["method"]
    out = _outdir(settings)
    files = {}
    nyq_vals = lmi_vals = None
    if method in ("nyquist", "both"):
        sweep = nyquist.sweep_region(topo, law, grid)
        sweep.to_csv(out / "region_nyquist.csv")
        files["Nyquist"] = "region_nyquist.csv"
        nyq_vals = sweep.tau2_max
    if method in ("lmi", "both"):
        sweep = lmi.sweep_lmi(topo, law, grid, seed=int(settings["seed"]))
        sweep.to_csv(out / "region_lmi.csv")
        files["Lyapunov-Krasovskii"] = "region_lmi.csv"
        lmi_vals = [m.value for m in sweep.margins]
    plotting.region_gnuplot(files, out / "region.gp")
    if settings["plot"]:
        plotting.plot_region(grid, nyq_vals, lmi_vals, out / "region.png")
    for k, t1 in enumerate(grid):
        row = [f"{t1:g}"]
        if nyq_vals is not None:
            row.append(f"nyquist={_fmt(nyq_vals[k])}")
        if lmi_vals is not None:
            row.append(f"lmi={_fmt(lmi_vals[k])}")
        print(" ".join(row))
    return 0


def cmd_locus(settings) -> int:
    topo, _ = _graph(settings)
    law = ControlLaw.parse(settings["law"])
    delays = _delays(settings)
    result = nyquist.is_stable(topo, law, delays, omega_max=float(settings["omega_max"]))
    lam = result.critical_lambda
    if lam is None:
        eigs = nyquist.loop_eigenvalues(topo)
        lam = min(eigs, key=lambda z: z.real) if eigs else -1.0
    loop = nyquist.LoopTransfer(law, lam, delays)
    out = _outdir(settings)
    nyquist.write_locus_csv(loop, out / "locus.csv")
    plotting.locus_gnuplot("locus.csv", out / "locus.gp")
    if settings["plot"]:
        w = np.geomspace(0.05, 10.0, 2000)
        plotting.plot_locus(w, nyquist.loop_response(loop, w), out / "locus.png")
    pred = harmonic.predict_limit_cycle(result, harmonic.DescribingFunction(float(settings["delta"])))
    report = {
        "stable": result.stable,
        "omega_bar": result.omega_bar,
        "magnitude": result.magnitude,
        "critical_lambda": None if result.critical_lambda is None else str(result.critical_lambda),
        "reason": result.reason,
        "limit_cycle": pred.exists,
        "amplitude": pred.amplitude,
        "frequency": pred.frequency,
    }
    (out / "locus.json").write_text(json.dumps(report, indent=1) + "\n")
    om = "none" if result.omega_bar is None else f"{result.omega_bar:.4f}"
    print(f"stable={result.stable} omega_bar={om} |G|={result.magnitude:.4f} limit_cycle={pred.exists}")
    return 0


def cmd_netbed(settings) -> int:
    from .netbed import RunManifest, orchestrate

    topo, data = _graph(settings)
    delays = _delays(settings)
    x0, v0 = _initial_state(settings, data, topo.n)
    ports = settings.get("ports")
    manifest = RunManifest(
        topology=topo, law=ControlLaw.parse(settings["law"]), delays=delays,
        horizon=float(settings["horizon"]), initial_positions=x0, initial_velocities=v0,
        step=float(settings["step"]), delta=float(settings["delta"]),
        ports=None if ports is None else [int(p) for p in _float_list(ports)],
        mode=settings["mode"], velocity_tap=settings["velocity_tap"],
    )
    out = _outdir(settings)
    result = orchestrate(manifest, out / "netbed")
    result.trajectory.to_csv(out / "trajectory.csv")
    plotting.trajectory_gnuplot("trajectory.csv", topo.n, out / "trajectory.gp")
    if settings["plot"]:
        plotting.plot_trajectory(result.trajectory, out / "trajectory.png")
    return _report_verdict(result.verdict, out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="satdelay", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, single_delay):
        p.add_argument("--config", help="JSON file mirroring the flags")
        p.add_argument("--graph", help="graph JSON file")
        p.add_argument("--law", help="u1, u2, u3 or u4")
        p.add_argument("--tau1", help="input delay in seconds" + ("" if single_delay else "; list or start:stop:step"))
        p.add_argument("--delta", type=float, help="saturation level")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="solver seed")
        p.add_argument("--no-plot", dest="plot", action="store_const", const=False, help="skip PNG rendering")

    def dynamics(p):
        p.add_argument("--tau2", help="communication delay in seconds")
        p.add_argument("--step", type=float, help="integration step in seconds")
        p.add_argument("--horizon", type=float, help="simulated time in seconds")
        p.add_argument("--x0", help="initial positions, comma separated")
        p.add_argument("--v0", help="initial velocities, comma separated")
        p.add_argument("--velocity-tap", dest="velocity_tap", choices=["internal", "saturated"])

    p = sub.add_parser("simulate", help="integrate the delayed network and classify the outcome")
    common(p, single_delay=True)
    dynamics(p)
    p.add_argument("--integrator", choices=["euler", "heun"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("margin", help="maximum tau2 per tau1 in table layout")
    common(p, single_delay=False)
    p.add_argument("--method", choices=["nyquist", "lmi", "both"])
    p.set_defaults(func=cmd_margin)

    p = sub.add_parser("region", help="stable region boundary with CSV and plot script")
    common(p, single_delay=False)
    p.add_argument("--method", choices=["nyquist", "lmi", "both"])
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("locus", help="Nyquist locus and harmonic-balance prediction")
    common(p, single_delay=True)
    p.add_argument("--tau2", help="communication delay in seconds")
    p.add_argument("--omega-max", dest="omega_max", type=float, help="frequency search cap in rad/s")
    p.set_defaults(func=cmd_locus)

    p = sub.add_parser("netbed", help="run the UDP testbed on loopback")
    common(p, single_delay=True)
    dynamics(p)
    p.add_argument("--ports", help="listen ports, comma separated")
    p.add_argument("--mode", choices=["lockstep", "realtime"])
    p.set_defaults(func=cmd_netbed)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _settings(args)
        return args.func(settings)
    except (SatDelayError, ConfigError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
