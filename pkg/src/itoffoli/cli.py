"""Command-line front end: presets, single runs, sweeps and report files.

Subcommands: ``modes``, ``simulate``, ``sweep``, ``echo-solve``, ``fidelity``.
Every subcommand accepts ``--config``, ``--preset``, ``--out``, ``--workers``,
``--nmax`` and ``--dt-scale``; extra parameters go through ``--set key=value``.
"""
from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, field
import json
import logging
import os
from pathlib import Path
import sys
import time

import numpy as np

from . import __version__
from .analysis import (diagnostics, fidelity_report, fingerprint, process_matrix,
                       thermal_fidelity)
from .config import PRESETS, ConfigError, RunSpec, parse_config, resolve, read_config_file
from .crystal import CrystalModel
from .evolution import default_timestep, itoffoli_sequence
from .multibeat import MultibeatSolution, solve_for_config
from .spinmodel import target_pair

log = logging.getLogger(__name__)

SCHEMA = f"# itoffoli report schema v1 (package {__version__})"
RESULT_COLUMNS = ["average_fidelity", "leakage", "max_offresonant_phase", "degeneracy_flagged",
                  "dt_us", "n_steps", "dt_check_delta", "echo_phase_error", "status", "error",
                  "wall_time_s"]


@dataclass
class RunRecord:
    fingerprint: str
    preset: str
    row: dict
    traces: dict = field(default_factory=dict)
    unitary: np.ndarray | None = None
    wall_time: float = 0.0


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return "" if v is None else str(v)


def execute(spec: RunSpec, *, dt_scale: float = 1.0, check_dt: bool = False,
            trace_inputs=(), solution: MultibeatSolution | None = None) -> RunRecord:
    """Run one gate configuration and collect its report row."""
    start = time.perf_counter()
    cfg = spec.gate
    row = spec.record()
    row["preset"] = spec.preset
    row["fingerprint"] = fingerprint(cfg.fingerprint_params() | {"echo": spec.echo,
                                                                 "nbar_cm": spec.nbar_cm})
    if spec.echo == "multibeat" and solution is None:
        solution = solve_for_config(cfg, spec.t_mb)
    row["echo_phase_error"] = solution.max_phase_error if solution is not None else None
    traces, unitary = {}, None
    if spec.nbar_cm > 0:
        f, per_n = thermal_fidelity(cfg, spec.nbar_cm, echo=spec.echo, multibeat=solution,
                                    dt_scale=dt_scale)
        row.update(average_fidelity=f, fidelity_n0=per_n[0][1])
        row["dt_us"] = default_timestep(cfg, dt_scale) * 1e6
    else:
        res = itoffoli_sequence(cfg, dt_scale=dt_scale, echo=spec.echo, multibeat=solution,
                                trace_inputs=trace_inputs)
        rep = fidelity_report(res)
        diag = diagnostics(res)
        row.update(average_fidelity=rep.average_fidelity, leakage=rep.leakage,
                   max_offresonant_phase=diag.max_offresonant_phase,
                   degeneracy_flagged=diag.flagged, dt_us=res.dt * 1e6, n_steps=res.n_steps)
        if check_dt:
            half = itoffoli_sequence(cfg, dt=res.dt / 2, echo=spec.echo, multibeat=solution)
            row["dt_check_delta"] = abs(fidelity_report(half).average_fidelity - rep.average_fidelity)
        traces = {b: res.traces[b].as_arrays() for b in res.traces}
        unitary = process_matrix(res.columns, cfg.space.qubit_dim)
    row["status"] = "ok"
    wall = time.perf_counter() - start
    row["wall_time_s"] = wall
    return RunRecord(row["fingerprint"], spec.preset, row, traces, unitary, wall)


def _sweep_worker(args) -> dict:
    params, preset, dt_scale = args
    try:
        return execute(resolve(params, preset), dt_scale=dt_scale).row
    except Exception as exc:  # sweep continues past failed points
        row = dict(params)
        row.update(preset=preset, status="failed", error=f"{type(exc).__name__}: {exc}")
        return row


# --------------------------------------------------------------- writers

def write_report(path: Path, rows: list[dict]):
    """CSV with a versioned schema comment; config keys first, results last."""
    keys = sorted({k for r in rows for k in r} - set(RESULT_COLUMNS) - {"preset", "fingerprint"})
    columns = ["preset", "fingerprint"] + keys + RESULT_COLUMNS
    with open(path, "w", newline="") as fh:
        fh.write(SCHEMA + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def write_trace(path: Path, trace: dict):
    n_modes = trace["x"].shape[1] if trace["x"].ndim == 2 else 0
    header = ["t_us"] + [f"x_{m}" for m in range(n_modes)] + [f"p_{m}" for m in range(n_modes)] \
        + ["sigma_x", "sigma_y", "sigma_z"]
    with open(path, "w", newline="") as fh:
        fh.write(SCHEMA + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, t in enumerate(trace["times"]):
            vals = [t * 1e6, *trace["x"][i], *trace["p"][i], *trace["bloch"][i]]
            w.writerow([_fmt(v) for v in vals])


def write_unitary(path: Path, u: np.ndarray):
    with open(path, "w") as fh:
        fh.write("# real part\n")
        np.savetxt(fh, u.real, fmt="% .8f")
        fh.write("# imaginary part\n")
        np.savetxt(fh, u.imag, fmt="% .8f")


PLOT_TEMPLATE = '''"""Regenerate the {name} figures from the CSV files next to this script."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

here = Path(__file__).parent


def read(name):
    with open(here / name) as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    return rows[0], np.array(rows[1:], dtype=float)


fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
for path in sorted(here.glob("trace_*.csv")):
    head, data = read(path.name)
    axes[0].plot(data[:, head.index("x_0")], data[:, head.index("p_0")], label=path.stem[6:])
    for k in ("sigma_x", "sigma_y", "sigma_z"):
        axes[1].plot(data[:, 0], data[:, head.index(k)], label=f"{{path.stem[6:]}} {{k}}")
axes[0].set_xlabel("<x>")
axes[0].set_ylabel("<p>")
axes[0].legend(fontsize=7)
axes[1].set_xlabel("t (us)")
axes[1].legend(fontsize=6)
if (here / "unitary.txt").exists():
    text = (here / "unitary.txt").read_text().split("# imaginary part")
    re_part = np.loadtxt(text[0].splitlines()[1:])
    axes[2].imshow(re_part, cmap="RdBu", vmin=-1, vmax=1)
    axes[2].set_title("Re U")
fig.tight_layout()
fig.savefig(here / "{name}.png", dpi=150)
'''

SWEEP_PLOT_TEMPLATE = '''"""Process error against the swept parameter, from report.csv."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent
with open(here / "report.csv") as fh:
    rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
rows = [r for r in rows if r["status"] == "ok"]
x = [float(r["{param}"]) for r in rows]
y = [1 - float(r["average_fidelity"]) for r in rows]
plt.semilogy(x, y, "o-")
plt.xlabel("{param}")
plt.ylabel("1 - F")
plt.savefig(here / "sweep.png", dpi=150)
'''


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from None
    return out


# ------------------------------------------------------------ subcommands

def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    if args.nmax is not None:
        out["fock_nmax"] = args.nmax
    return out


def _spec(args) -> RunSpec:
    return parse_config(args.config, args.preset or "", _overrides(args))


def cmd_modes(args) -> int:
    overrides = _overrides(args)
    if args.config or args.preset:
        spec = _spec(args)
        crystal = spec.gate.crystal
    else:
        n = int(overrides.get("n_ions", 3))
        crystal = CrystalModel.build(n, 2 * np.pi * 1e6, eta_cm_per_ion=0.1)
    print("positions:", " ".join(f"{u:.5f}" for u in crystal.positions))
    print("ratios:", " ".join(f"{r:.5f}" for r in crystal.mode_ratios))
    print("lamb-dicke:")
    for row in crystal.lamb_dicke:
        print("  " + " ".join(f"{v: .5f}" for v in row))
    if args.out:
        out = _out_dir(args.out)
        with open(out / "modes.csv", "w", newline="") as fh:
            fh.write(SCHEMA + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mode", "ratio", "freq_khz"] + [f"eta_{i}" for i in range(crystal.n_ions)])
            for m in range(crystal.n_modes):
                w.writerow([m, _fmt(crystal.mode_ratios[m]), _fmt(crystal.mode_freqs[m] / 2e3 / np.pi)]
                           + [_fmt(v) for v in crystal.lamb_dicke[m]])
    return 0


def _default_traces(spec: RunSpec) -> list[int]:
    a, b = target_pair(spec.gate.n_qubits, spec.gate.target_index)
    return sorted({a, b, 1})


def cmd_simulate(args) -> int:
    spec = _spec(args)
    out = _out_dir(args.out)
    traces = [int(s, 2) for s in args.trace] if args.trace else _default_traces(spec)
    rec = execute(spec, dt_scale=args.dt_scale, check_dt=args.check_dt, trace_inputs=traces)
    write_report(out / "report.csv", [rec.row])
    n = spec.gate.n_qubits
    for b, tr in rec.traces.items():
        write_trace(out / f"trace_{b:0{n}b}.csv", tr)
    if rec.unitary is not None:
        write_unitary(out / "unitary.txt", rec.unitary)
    name = spec.preset or "run"
    (out / f"plot_{name}.py").write_text(PLOT_TEMPLATE.format(name=name))
    print(f"F = {rec.row['average_fidelity']:.6f}  ({rec.wall_time:.1f} s)")
    return 0


def _sweep_values(args) -> list[str]:
    if args.values:
        return [v.strip() for v in args.values.split(",") if v.strip()]
    if args.range:
        lo, hi, num = float(args.range[0]), float(args.range[1]), int(args.range[2])
        return [f"{v:.10g}" for v in np.linspace(lo, hi, num)]
    raise ConfigError("sweep needs --values or --range", "values")


def cmd_sweep(args) -> int:
    base = read_config_file(args.config) if args.config else {}
    base.update(_overrides(args))
    preset = args.preset or ""
    resolve(base, preset)  # fail early on a bad base configuration
    jobs = [(base | {args.param: v}, preset, args.dt_scale) for v in _sweep_values(args)]
    workers = args.workers or os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_worker, jobs))
    else:
        rows = [_sweep_worker(j) for j in jobs]
    out = _out_dir(args.out)
    write_report(out / "report.csv", rows)
    (out / "plot_sweep.py").write_text(SWEEP_PLOT_TEMPLATE.format(param=args.param))
    for r in rows:
        f = r.get("average_fidelity")
        print(f"{args.param}={r[args.param]}  " + (f"F={f:.6f}" if f is not None else r.get("error", "")))
    return 0 if all(r.get("status") == "ok" for r in rows) else 3


def cmd_echo_solve(args) -> int:
    spec = _spec(args)
    sol = solve_for_config(spec.gate, spec.t_mb)
    out = _out_dir(args.out)
    (out / "echo_solution.json").write_text(sol.to_json())
    with open(out / "tones.csv", "w", newline="") as fh:
        fh.write(SCHEMA + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["harmonic", "tone_khz", "amplitude_khz"])
        for k, mu, a in zip(sol.harmonics, sol.tone_freqs, sol.amplitudes):
            w.writerow([int(k), _fmt(mu / 2e3 / np.pi), _fmt(a / 2e3 / np.pi)])
    print(f"t_mb = {sol.t_mb * 1e6:.4f} us, {sol.n_pulses} pulses, {len(sol.harmonics)} tones, "
          f"max phase error {sol.max_phase_error:.2e} rad, converged={sol.converged}")
    return 0 if sol.converged else 4


def cmd_fidelity(args) -> int:
    spec = _spec(args)
    rec = execute(spec, dt_scale=args.dt_scale, check_dt=args.check_dt)
    if args.out:
        write_report(_out_dir(args.out) / "report.csv", [rec.row])
    print(f"F = {rec.row['average_fidelity']:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("--nmax", default=None, help="Fock cutoff per mode: auto or an integer")
    common.add_argument("--dt-scale", type=float, default=1.0)
    common.add_argument("--set", action="append", metavar="KEY=VALUE")
    common.add_argument("--check-dt", action="store_true", help="rerun at half the step")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="itoffoli", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("modes", parents=[common]).set_defaults(func=cmd_modes)
    p = sub.add_parser("simulate", parents=[common])
    p.add_argument("--trace", nargs="*", help="input bitstrings to trace")
    p.set_defaults(func=cmd_simulate, out="out")
    p = sub.add_parser("sweep", parents=[common])
    p.add_argument("--param", required=True)
    p.add_argument("--values")
    p.add_argument("--range", nargs=3, metavar=("START", "STOP", "NUM"))
    p.set_defaults(func=cmd_sweep, out="out")
    sub.add_parser("echo-solve", parents=[common]).set_defaults(func=cmd_echo_solve, out="out")
    sub.add_parser("fidelity", parents=[common]).set_defaults(func=cmd_fidelity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "ConfigError", "key": exc.key, "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
