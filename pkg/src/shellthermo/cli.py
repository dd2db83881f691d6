"""Command-line entry point.

    shellthermo <geometry-check|run-2d|run-3d|converge|energy-audit> --config PATH [--out DIR] [--deterministic]

Exit codes: 0 success, 1 invalid input, 2 numerical failure.  On failure an
``error.json`` is written to the output directory.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import convergence, membrane, scaled3d
from .config import RunConfig, jsonable, read_config
from .errors import ConfigError, NumericalFailure, ValidationError
from .geometry import check_elliptic
from .mesh import Mesh3D, mesh_for_chart, read_mesh

log = logging.getLogger("shellthermo")

THREADS_ENV = "SHELLTHERMO_THREADS"
COMMANDS = ("geometry-check", "run-2d", "run-3d", "converge", "energy-audit")
TRAJ_COLUMNS = ["t", "E_kin", "E_el", "E_th", "E_diss", "W", "residual",
                "probe_xi1", "probe_xi2", "probe_xi3", "probe_zeta"]
ENERGY_TOL = 1e-8


def fmt(x):
    return format(float(x), ".17g")


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _base_mesh(cfg: RunConfig, chart):
    path = cfg.mesh_path()
    if path is None:
        return mesh_for_chart(chart, cfg.mesh.n1, cfg.mesh.n2)
    try:
        return read_mesh(path)
    except OSError as exc:
        raise ValidationError([f"[mesh] cannot read mesh file {path}: {exc.strerror}"]) from exc
    except ValueError as exc:
        raise ValidationError([f"[mesh] bad mesh file {path}: {exc}"]) from exc


def trajectory_csv(traj, probes, eps=None):
    led = traj.ledger
    res = led.residual
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJ_COLUMNS + (["eps"] if eps is not None else []))
    for i, k in enumerate(traj.recorded_steps):
        row = [traj.times[i], led.kinetic[k], led.elastic[k], led.thermal[k], led.dissipated[k],
               led.work[k], res[k], *probes[i]]
        if eps is not None:
            row.append(eps)
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def _ledger_summary(traj):
    led = traj.ledger
    return {"steps": int(len(led.t) - 1), "dt": float(traj.dt), "T": float(led.t[-1]),
            "max_residual": float(led.residual.max()),
            "max_relative_residual": float(led.relative_residual.max()),
            "final_energy": float(led.total[-1]), "total_work": float(led.work[-1])}


# -- subcommands ---------------------------------------------------------

def cmd_geometry_check(cfg: RunConfig, out: Path):
    rep = check_elliptic(cfg.build_chart(), tuple(cfg.geometry.grid), cfg.geometry.threshold)
    _write(out / "ellipticity.json", _dump_json(rep.to_dict()))
    log.info("uniform_elliptic=%s kappa in [%g, %g]", rep.uniform_elliptic, rep.kappa_min, rep.kappa_max)


def _run2d(cfg: RunConfig):
    chart = cfg.build_chart()
    mesh = _base_mesh(cfg, chart)
    sys2 = membrane.assemble(mesh, chart, cfg.material, cfg.loads)
    traj = membrane.simulate(sys2, cfg.time.T, cfg.time.dt, cfg.time.scheme, cfg.time.stride)
    return sys2, traj


def _run3d(cfg: RunConfig, eps=None):
    eps = cfg.shell.epsilon if eps is None else eps
    chart = cfg.build_chart()
    mesh3 = Mesh3D(_base_mesh(cfg, chart), cfg.mesh.layers)
    sys3 = scaled3d.assemble3d(mesh3, chart, cfg.material, eps, cfg.loads)
    traj = scaled3d.simulate3d(sys3, cfg.time.T, cfg.time.dt, cfg.time.scheme, cfg.time.stride)
    return sys3, traj


def cmd_run_2d(cfg: RunConfig, out: Path):
    sys2, traj = _run2d(cfg)
    probes = [membrane.State2D.from_free(sys2, traj.u[i], traj.v[i], traj.theta[i]).probe(sys2.mesh, cfg.output.probe)
              for i in range(len(traj.times))]
    _write(out / "trajectory.csv", trajectory_csv(traj, probes))
    _write(out / "summary.json", _dump_json({"run": "2d", **_ledger_summary(traj), "config": jsonable(cfg)}))


def cmd_run_3d(cfg: RunConfig, out: Path):
    sys3, traj = _run3d(cfg)
    mesh3 = sys3.mesh
    probes = []
    for i in range(len(traj.times)):
        st = scaled3d.State3D.from_free(sys3, traj.u[i], traj.v[i], traj.theta[i])
        # through-thickness means, so the probe columns compare directly with run-2d
        u_avg = scaled3d.average_x3(mesh3, st.u)
        th_avg = scaled3d.average_x3(mesh3, st.theta)
        base = mesh3.base
        e, bary = base.locate(cfg.output.probe)
        nodes = base.triangles[e]
        probes.append((*(bary @ u_avg[nodes]), bary @ th_avg[nodes]))
    _write(out / "trajectory.csv", trajectory_csv(traj, probes, eps=sys3.eps))
    summary = {"run": "3d", "eps": float(sys3.eps), "layers": mesh3.layers, **_ledger_summary(traj),
               "transverse_dissipation": float(traj.extra["transverse_dissipation"][-1]),
               "config": jsonable(cfg)}
    _write(out / "summary.json", _dump_json(summary))


def sweep_config(cfg: RunConfig, workers=None) -> convergence.SweepConfig:
    return convergence.SweepConfig(
        chart=cfg.build_chart(), material=cfg.material, loads=cfg.loads,
        mesh=(cfg.mesh.n1, cfg.mesh.n2), layers=cfg.mesh.layers, T=cfg.time.T, dt=cfg.time.dt,
        scheme=cfg.time.scheme, eps_list=tuple(cfg.sweep.eps_list), sample_times=cfg.sample_times(),
        floor_factor=cfg.sweep.floor_factor, workers=cfg.sweep.workers if workers is None else workers)


def cmd_converge(cfg: RunConfig, out: Path):
    chart = cfg.build_chart()
    mesh2 = _base_mesh(cfg, chart)
    scfg = sweep_config(cfg)
    report = convergence.run_sweep(scfg, mesh2, Mesh3D(mesh2, cfg.mesh.layers))
    _write(out / "report.csv", report.to_csv())
    _write(out / "report.json", report.to_json() + "\n")
    slopes = convergence.averaged_field_convergence(report, strict=False)
    if "insufficient_data" not in slopes["flags"]:
        _write(out / "slopes.csv", convergence.slopes_csv(slopes))


def _non_increasing_after(ledger, t_start):
    """Largest energy increase between consecutive steps after ``t_start``."""
    idx = np.nonzero(ledger.t >= t_start)[0]
    if len(idx) < 2:
        return 0.0
    tot = ledger.total[idx]
    return float(max(0.0, np.max(np.diff(tot))))


def cmd_energy_audit(cfg: RunConfig, out: Path):
    t_off = [s.t_off for s in (cfg.loads.f, cfg.loads.h, cfg.loads.q) if not s.is_zero]
    t_quiet = max(t_off) if t_off else 0.0
    result = {"scheme": cfg.time.scheme, "tolerance": float(ENERGY_TOL),
              "identity_expected": cfg.time.scheme == "midpoint", "runs": {}}
    for label, runner in (("2d", _run2d), ("3d", _run3d)):
        s, traj = runner(cfg)
        led = traj.ledger
        rel = float(led.relative_residual.max())
        entry = {**_ledger_summary(traj), "coupling_deviation": float(s.ops.coupling_deviation()),
                 "identity_holds": bool(rel <= ENERGY_TOL)}
        if math.isfinite(t_quiet):
            rise = _non_increasing_after(led, t_quiet)
            entry["loads_off_after"] = float(t_quiet)
            entry["max_energy_rise_after_loads_off"] = float(rise)
            entry["non_increasing_after_loads_off"] = bool(rise <= ENERGY_TOL * max(1.0, float(np.max(led.total))))
        if label == "3d":
            entry["eps"] = float(s.eps)
        result["runs"][label] = entry
    _write(out / "energy_audit.json", _dump_json(result))


HANDLERS = {"geometry-check": cmd_geometry_check, "run-2d": cmd_run_2d, "run-3d": cmd_run_3d,
            "converge": cmd_converge, "energy-audit": cmd_energy_audit}


# -- plumbing ------------------------------------------------------------

def error_payload(exc, code):
    cause = exc.__cause__ or exc.__context__
    d = {"error": type(exc).__name__, "cause": type(cause).__name__ if cause is not None else None,
         "message": str(exc), "exit_code": code}
    if isinstance(exc, ValidationError):
        d["errors"] = exc.errors
    if getattr(exc, "line", None) is not None:
        d["line"], d["column"] = exc.line, exc.column
    return d


def thread_count(deterministic):
    if deterministic:
        return 1
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError([f"{THREADS_ENV} must be a positive integer, got {raw!r}"]) from None
    if n < 1:
        raise ValidationError([f"{THREADS_ENV} must be a positive integer, got {raw!r}"])
    return n


def build_parser():
    p = argparse.ArgumentParser(prog="shellthermo", description="Thermoelastic shell solvers and convergence sweeps.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="TOML (or JSON) run configuration")
    p.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
    p.add_argument("--deterministic", action="store_true", help="single-threaded, byte-reproducible outputs")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out) if args.out else None
    code = 0
    try:
        cfg = read_config(args.config)
        if args.deterministic:
            cfg = replace(cfg, flags=replace(cfg.flags, deterministic=True), sweep=replace(cfg.sweep, workers=1))
        if out is None:
            out = Path(cfg.output.dir)
            if not out.is_absolute() and cfg.base_dir:
                out = Path(cfg.base_dir) / out
        logging.basicConfig(level=logging.INFO if cfg.flags.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        threads = thread_count(cfg.flags.deterministic)
        start = time.perf_counter()
        with threadpool_limits(limits=threads):
            HANDLERS[args.command](cfg, out)
        log.info("%s finished in %.2f s", args.command, time.perf_counter() - start)
    except ConfigError as exc:
        code = 1
        err = exc
    except (NumericalFailure, np.linalg.LinAlgError) as exc:
        code = 2
        err = exc
    if code:
        target = out if out is not None else Path(".")
        _write(target / "error.json", _dump_json(error_payload(err, code)))
        print(f"shellthermo: {type(err).__name__}: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
