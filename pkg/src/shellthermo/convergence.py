"""Thickness sweeps comparing the scaled 3D solution with the membrane limit."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import membrane, scaled3d, timestep
from .errors import IncompatibleMeshes, InsufficientData
from .loads import LoadCase
from .material import MaterialParams
from .mesh import Mesh2D, Mesh3D, mesh_for_chart

FIELDS = ("err_u_tan_H1", "err_u3_L2", "err_theta_L2", "err_theta_H1s")
AVG_FIELDS = ("avg_u_tan_H1", "avg_u3_L2", "avg_theta_L2")
# fields whose decrease is the acceptance property
MONOTONE_FIELDS = ("err_u_tan_H1", "err_u3_L2", "err_theta_L2")


@dataclass
class SweepConfig:
    chart: object
    material: MaterialParams
    loads: LoadCase
    mesh: tuple = (16, 16)
    layers: int = 4
    T: float = 1.0
    dt: float = 0.005
    scheme: str = "midpoint"
    eps_list: tuple = (0.4, 0.2, 0.1, 0.05)
    sample_times: tuple = (0.5, 1.0)
    floor_factor: float = 4.0     # floor run at eps_list[-1] / floor_factor; 0 disables
    workers: int = 1

    def violations(self):
        out = []
        eps = list(self.eps_list)
        if not eps:
            out.append("sweep.eps_list must not be empty")
        if any(not (e > 0) for e in eps):
            out.append("sweep.eps_list entries must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            out.append("sweep.eps_list must be strictly decreasing")
        if any(not (0 < t <= self.T) for t in self.sample_times):
            out.append("sweep.sample_times must lie in (0, T]")
        return out


@dataclass
class ConvergenceReport:
    eps_list: list
    sample_times: list
    errors: dict                       # field -> array (n_eps, n_times)
    averaged: dict                     # averaged-field errors, same layout
    floor: dict | None = None          # field -> array (n_times,)
    floor_eps: float | None = None
    transverse_dissipation: list = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)

    def monotone(self):
        """Per field and sample time: strictly decreasing along the sweep."""
        out = {}
        for f in FIELDS + AVG_FIELDS:
            E = self.errors[f] if f in self.errors else self.averaged[f]
            out[f] = [bool(np.all(np.diff(E[:, j]) < 0)) for j in range(E.shape[1])]
        return out

    def above_floor(self):
        if self.floor is None:
            return None
        return {f: [bool(np.all(self.errors[f][:, j] > self.floor[f][j])) for j in range(len(self.sample_times))]
                for f in FIELDS}

    def rows(self):
        for i, eps in enumerate(self.eps_list):
            for j, t in enumerate(self.sample_times):
                yield [eps, t] + [float(self.errors[f][i, j]) for f in FIELDS]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "t_sample", *FIELDS])
        for r in self.rows():
            w.writerow([format(x, ".17g") for x in r])
        return buf.getvalue()

    def to_dict(self):
        def arr(d):
            return {k: [[_num(x) for x in row] for row in np.asarray(v)] for k, v in d.items()}
        slopes = averaged_field_convergence(self, strict=False)
        return {
            "eps_list": [_num(e) for e in self.eps_list],
            "sample_times": [_num(t) for t in self.sample_times],
            "errors": arr(self.errors),
            "averaged_errors": arr(self.averaged),
            "floor": None if self.floor is None else {k: [_num(x) for x in v] for k, v in self.floor.items()},
            "floor_eps": _num(self.floor_eps) if self.floor_eps is not None else None,
            "monotone": self.monotone(),
            "above_floor": self.above_floor(),
            "slopes": slopes,
            "transverse_dissipation": [_num(x) for x in self.transverse_dissipation],
            "config": self.config_echo,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


class SurfaceNorms:
    """P1 mass and gradient matrices on the base mesh in parameter coordinates."""

    def __init__(self, mesh: Mesh2D):
        grads, area = membrane.p1_gradients(mesh)
        Me = area[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
        Le = area[:, None, None] * np.einsum("eai,ebi->eab", grads, grads)
        t = mesh.triangles
        N = mesh.n_nodes
        r = np.broadcast_to(t[:, :, None], Me.shape).ravel()
        c = np.broadcast_to(t[:, None, :], Me.shape).ravel()
        self.mass = sp.coo_matrix((Me.ravel(), (r, c)), shape=(N, N)).tocsr()
        self.stiff = sp.coo_matrix((Le.ravel(), (r, c)), shape=(N, N)).tocsr()
        self.area = area

    def l2(self, f):
        return float(np.sqrt(max(f @ (self.mass @ f), 0.0)))

    def h1(self, f):
        return float(np.sqrt(max(f @ (self.mass @ f) + f @ (self.stiff @ f), 0.0)))

    def l2_p0(self, c):
        return float(np.sqrt(np.sum(self.area * c * c)))


def check_meshes(mesh2d: Mesh2D, mesh3d: Mesh3D):
    if not mesh2d.same_as(mesh3d.base):
        raise IncompatibleMeshes("the 2D mesh and the base of the 3D mesh differ")


def field_errors(norms: scaled3d.ErrorNorms, snorms: SurfaceNorms, mesh3: Mesh3D,
                 st3: scaled3d.State3D, st2: membrane.State2D):
    """Full-field and thickness-averaged errors of one 3D state against the 2D state."""
    eu = math.sqrt(sum(norms.h1(st3.u[:, a] - norms.extend(st2.xi_tan[:, a])) ** 2 for a in range(2)))
    e3 = norms.l2_p1_minus_p0(st3.u[:, 2], st2.xi3)
    dth = st3.theta - norms.extend(st2.zeta)
    full = dict(err_u_tan_H1=eu, err_u3_L2=e3, err_theta_L2=norms.l2(dth), err_theta_H1s=norms.h1_semi(dth))
    avg_u = scaled3d.average_x3(mesh3, st3.u)
    avg_u3 = scaled3d.average_x3(mesh3, st3.u[:, 2], to="elements")
    avg_th = scaled3d.average_x3(mesh3, st3.theta)
    avg = dict(
        avg_u_tan_H1=math.sqrt(sum(snorms.h1(avg_u[:, a] - st2.xi_tan[:, a]) ** 2 for a in range(2))),
        avg_u3_L2=snorms.l2_p0(avg_u3 - st2.xi3),
        avg_theta_L2=snorms.l2(avg_th - st2.zeta),
    )
    return full, avg


def run_sweep(cfg: SweepConfig, mesh2d: Mesh2D | None = None, mesh3d: Mesh3D | None = None) -> ConvergenceReport:
    problems = cfg.violations()
    if problems:
        raise ValueError("; ".join(problems))
    if mesh2d is None:
        mesh2d = mesh_for_chart(cfg.chart, *cfg.mesh)
    if mesh3d is None:
        mesh3d = Mesh3D(mesh2d, cfg.layers)
    check_meshes(mesh2d, mesh3d)

    sys2 = membrane.assemble(mesh2d, cfg.chart, cfg.material, cfg.loads)
    traj2 = membrane.simulate(sys2, cfg.T, cfg.dt, cfg.scheme, stride=10 ** 9, record_times=cfg.sample_times)
    states2d = []
    for t in cfg.sample_times:
        k = traj2.index_of(t)
        states2d.append(membrane.State2D.from_free(sys2, traj2.u[k], traj2.v[k], traj2.theta[k], t))

    norms = scaled3d.ErrorNorms(mesh3d)
    snorms = SurfaceNorms(mesh2d)
    eps_all = [float(e) for e in cfg.eps_list]
    floor_eps = eps_all[-1] / cfg.floor_factor if cfg.floor_factor and cfg.floor_factor > 0 else None
    jobs = eps_all + ([floor_eps] if floor_eps is not None else [])

    def job(eps):
        return _sweep_point(cfg, mesh3d, eps, states2d, norms, snorms)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(job, jobs))      # map preserves input order
    else:
        results = [job(e) for e in jobs]

    nE, nT = len(eps_all), len(cfg.sample_times)
    errors = {f: np.zeros((nE, nT)) for f in FIELDS}
    averaged = {f: np.zeros((nE, nT)) for f in AVG_FIELDS}
    trans = []
    for i, (full_rows, avg_rows, tdiss) in enumerate(results[:nE]):
        for j in range(nT):
            for f in FIELDS:
                errors[f][i, j] = full_rows[j][f]
            for f in AVG_FIELDS:
                averaged[f][i, j] = avg_rows[j][f]
        trans.append(tdiss)
    floor = None
    if floor_eps is not None:
        full_rows = results[-1][0]
        floor = {f: np.array([full_rows[j][f] for j in range(nT)]) for f in FIELDS}
    echo = dict(chart=cfg.chart.params(), material=cfg.material.to_dict(), mesh=list(cfg.mesh),
                layers=cfg.layers, T=cfg.T, dt=cfg.dt, scheme=cfg.scheme,
                loads={k: getattr(cfg.loads, k).to_dict() for k in ("f", "h", "q")},
                floor_factor=cfg.floor_factor)
    return ConvergenceReport(eps_all, [float(t) for t in cfg.sample_times], errors, averaged,
                             floor, floor_eps, trans, _jsonable(echo))


def _sweep_point(cfg, mesh3, eps, states2d, norms, snorms):
    sys3 = scaled3d.assemble3d(mesh3, cfg.chart, cfg.material, eps, cfg.loads)
    traj = timestep.integrate(sys3.ops, cfg.T, cfg.dt, cfg.scheme, stride=1)
    tdiss = scaled3d.transverse_dissipation(sys3, traj)[-1]
    full_rows, avg_rows = [], []
    for t, st2 in zip(cfg.sample_times, states2d):
        k = traj.index_of(t)
        st3 = scaled3d.State3D.from_free(sys3, traj.u[k], traj.v[k], traj.theta[k], t)
        f, a = field_errors(norms, snorms, mesh3, st3, st2)
        full_rows.append(f)
        avg_rows.append(a)
    return full_rows, avg_rows, float(tdiss)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return _num(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def fit_slope(eps, err):
    """Least-squares slope of log(err) against log(eps)."""
    return float(np.polyfit(np.log(np.asarray(eps, float)), np.log(np.asarray(err, float)), 1)[0])


def averaged_field_convergence(report: ConvergenceReport, strict=True):
    """Fitted log-log decay slopes per field and sample time.

    Fields with a zero or non-finite error anywhere get a NaN slope (None in
    JSON) and are listed under ``flags``; they are never dropped silently.
    """
    if len(report.eps_list) < 3:
        if strict:
            raise InsufficientData(f"need at least 3 eps values, got {len(report.eps_list)}")
        return {"slopes": {}, "flags": ["insufficient_data"]}
    slopes, flags = {}, []
    tables = {**report.errors, **report.averaged}
    for f, E in tables.items():
        per_t = []
        for j, t in enumerate(report.sample_times):
            col = np.asarray(E)[:, j]
            if np.any(~np.isfinite(col)) or np.any(col <= 0):
                per_t.append(float("nan"))
                flags.append(f"{f}@t={t:g}: zero or invalid error, slope undefined")
            else:
                per_t.append(fit_slope(report.eps_list, col))
        slopes[f] = per_t
    if strict:
        return {"slopes": slopes, "flags": flags}
    return {"slopes": {k: [_num(x) for x in v] for k, v in slopes.items()}, "flags": flags}


def slopes_csv(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["field", "sample_index", "slope"])
    for f, vals in table["slopes"].items():
        for j, s in enumerate(vals):
            w.writerow([f, j, "nan" if s is None or not math.isfinite(s) else format(s, ".17g")])
    return buf.getvalue()


@dataclass
class DescaledSolution:
    eps: float
    xi: np.ndarray            # free-dof trajectory, identical to the scaled one
    zeta: np.ndarray
    F_eps: list               # physical mechanical resultant vectors (full dofs), one per load term
    Q_eps: list
    residual: float           # max abs residual of the de-scaled weak form
    residual_scaled: float    # same quantity for the scaled limit problem
    load_scale: float         # max abs de-scaled load entry, for relative checks

    @property
    def relative_residual(self):
        return self.residual / max(self.load_scale, 1e-300) if self.load_scale > 0 else self.residual


def descale(sys2: membrane.SemiDiscreteSystem, traj: timestep.Trajectory, eps: float, loads: LoadCase):
    """Physical-thickness view of a membrane trajectory.

    Fields are unchanged.  Load resultants become F^eps = 2 eps f + eps h and
    Q^eps = 2 eps q, and every operator of the weak form carries a factor eps,
    so the de-scaled residual equals eps times the scaled one.  The
    trajectory must have every step recorded.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    vecs = membrane.load_vectors(sys2, loads)
    F_eps = [eps * m for m, _, _ in vecs]
    Q_eps = [eps * q for _, q, _ in vecs]
    o = sys2.ops
    ops_eps = timestep.CoupledOperators(eps * o.M, eps * o.K, eps * o.G, eps * o.D, eps * o.M_th, eps * o.K_th,
                                        tuple(timestep.LoadTerm(eps * term.mech, eps * term.therm, term.time_fn)
                                              for term in o.loads))
    res_eps, load_eps = discrete_residual(ops_eps, traj)
    res, _ = discrete_residual(o, traj)
    return DescaledSolution(float(eps), traj.u, traj.theta, F_eps, Q_eps, res_eps, res, load_eps)


def discrete_residual(ops: timestep.CoupledOperators, traj: timestep.Trajectory):
    """Largest midpoint-equation residual over the steps and the largest load entry."""
    if len(traj.recorded_steps) != len(traj.ledger.t):
        raise ValueError("residual check needs every step recorded (stride 1)")
    dt = traj.dt
    worst, scale = 0.0, 0.0
    for n in range(len(traj.times) - 1):
        t = traj.times[n]
        F, Q = ops.load_vectors(t + 0.5 * dt)
        um = 0.5 * (traj.u[n] + traj.u[n + 1])
        thm = 0.5 * (traj.theta[n] + traj.theta[n + 1])
        vm = (traj.u[n + 1] - traj.u[n]) / dt
        rm = ops.M @ ((traj.v[n + 1] - traj.v[n]) / dt) + ops.K @ um - ops.G @ thm - F
        rt = ops.M_th @ ((traj.theta[n + 1] - traj.theta[n]) / dt) + ops.K_th @ thm + ops.D @ vm - Q
        worst = max(worst, float(np.abs(rm).max(initial=0.0)), float(np.abs(rt).max(initial=0.0)))
        scale = max(scale, float(np.abs(F).max(initial=0.0)), float(np.abs(Q).max(initial=0.0)))
    return worst, scale
