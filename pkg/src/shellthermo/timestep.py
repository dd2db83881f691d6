"""Implicit time integration of the semi-discrete coupled system.

Both the membrane and the scaled 3D problem reduce, after restriction to
free dofs, to

    M u'' + K u - G th          = F(t)
    M_th th' + K_th th + D u'   = Q(t)

with G = D^T.  The midpoint rule reproduces the continuous energy identity
exactly, so the ledger residual measures roundoff only.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SizeExceeded, SolveFailure

SCHEMES = ("midpoint", "damped")
ORACLE_MAX_DOFS = 400


@dataclass(frozen=True)
class LoadTerm:
    """One separable load contribution: vectors on free dofs times a time profile."""
    mech: np.ndarray
    therm: np.ndarray
    time_fn: Callable[[float], float]


@dataclass(frozen=True, eq=False)
class CoupledOperators:
    M: sp.csr_matrix
    K: sp.csr_matrix
    G: sp.csr_matrix      # mechanical equation: -G th
    D: sp.csr_matrix      # thermal equation: +D u'
    M_th: sp.csr_matrix
    K_th: sp.csr_matrix
    loads: tuple = ()     # LoadTerm, ...

    @property
    def n_mech(self):
        return self.M.shape[0]

    @property
    def n_therm(self):
        return self.M_th.shape[0]

    def with_loads(self, loads):
        return CoupledOperators(self.M, self.K, self.G, self.D, self.M_th, self.K_th, tuple(loads))

    def load_vectors(self, t):
        F = np.zeros(self.n_mech)
        Q = np.zeros(self.n_therm)
        for term in self.loads:
            s = float(term.time_fn(t))
            if s != 0.0:
                F += s * term.mech
                Q += s * term.therm
        return F, Q

    def coupling_deviation(self):
        """max |G - D^T|; zero when the two blocks are true transposes."""
        diff = (self.G - self.D.T).tocoo()
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0

    def energies(self, u, v, th):
        return (0.5 * float(v @ (self.M @ v)),
                0.5 * float(u @ (self.K @ u)),
                0.5 * float(th @ (self.M_th @ th)))


@dataclass
class EnergyLedger:
    t: np.ndarray
    kinetic: np.ndarray
    elastic: np.ndarray
    thermal: np.ndarray
    dissipated: np.ndarray
    work: np.ndarray

    @property
    def total(self):
        return self.kinetic + self.elastic + self.thermal

    @property
    def residual(self):
        return np.abs(self.total + self.dissipated - self.work)

    @property
    def relative_residual(self):
        return self.residual / max(1.0, float(np.max(np.abs(self.work))))


@dataclass
class Trajectory:
    dt: float
    scheme: str
    times: np.ndarray               # recorded instants
    u: np.ndarray                   # (n_rec, n_mech) free-dof values
    v: np.ndarray
    theta: np.ndarray
    ledger: EnergyLedger
    recorded_steps: np.ndarray
    extra: dict = field(default_factory=dict)

    def index_of(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} was not recorded")
        return i


def step_count(T, dt):
    if not (T > 0 and dt > 0 and dt < T):
        raise ValueError("need 0 < dt < T")
    n = int(math.ceil(T / dt - 1e-9))
    return n, T / n


class TimeStepper:
    """Factors the step matrix once and advances (u, v, theta)."""

    def __init__(self, ops: CoupledOperators, dt: float, scheme: str = "midpoint"):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.ops = ops
        self.dt = float(dt)
        self.scheme = scheme
        o = ops
        if scheme == "midpoint":
            A = sp.bmat([[2.0 / dt ** 2 * o.M + 0.5 * o.K, -0.5 * o.G],
                         [o.D / dt, o.M_th / dt + 0.5 * o.K_th]], format="csc")
            self._rhs_th = (o.M_th / dt - 0.5 * o.K_th).tocsr()
        else:
            A = sp.bmat([[o.M + dt ** 2 * o.K, -dt * o.G],
                         [dt * o.D, o.M_th + dt * o.K_th]], format="csc")
        self._lu = self._factor(A)

    @staticmethod
    def _factor(A):
        if A.shape[0] == 0:
            return None
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                lu = spla.splu(A)
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise SolveFailure(f"step matrix is singular: {exc}") from exc
        diag = np.abs(lu.U.diagonal())
        if diag.size and (not np.all(np.isfinite(diag)) or diag.min() <= 1e-14 * diag.max()):
            raise SolveFailure("step matrix is numerically singular")
        return lu

    def _solve(self, rhs):
        if self._lu is None:
            return rhs
        x = self._lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SolveFailure("non-finite solution of the step system")
        return x

    def step(self, t, u, v, th):
        """Advance from t to t + dt.  Returns (u1, v1, th1, F, Q) with the loads used."""
        o, dt, nm = self.ops, self.dt, self.ops.n_mech
        if self.scheme == "midpoint":
            F, Q = o.load_vectors(t + 0.5 * dt)
            rm = F - o.K @ u + (2.0 / dt) * (o.M @ v) + 0.5 * (o.G @ th)
            rt = Q + self._rhs_th @ th
            x = self._solve(np.concatenate([rm, rt]))
            du, th1 = x[:nm], x[nm:]
            return u + du, 2.0 / dt * du - v, th1, F, Q
        F, Q = o.load_vectors(t + dt)
        rm = o.M @ v + dt * (F - o.K @ u)
        rt = o.M_th @ th + dt * Q
        x = self._solve(np.concatenate([rm, rt]))
        v1, th1 = x[:nm], x[nm:]
        return u + dt * v1, v1, th1, F, Q


def integrate(ops: CoupledOperators, T: float, dt: float, scheme="midpoint",
              stride: int = 1, record_times: Sequence[float] = ()) -> Trajectory:
    """Run from homogeneous initial data to T, keeping every ``stride``-th state."""
    n, dt = step_count(T, dt)
    stepper = TimeStepper(ops, dt, scheme)
    stride = max(1, int(stride))
    keep = set(range(0, n + 1, stride)) | {n}
    for tr in record_times:
        k = int(round(tr / dt))
        if abs(k * dt - tr) > 1e-9 * max(1.0, T) or not 0 <= k <= n:
            raise ValueError(f"record time {tr} is not on the time grid (dt = {dt})")
        keep.add(k)

    u = np.zeros(ops.n_mech)
    v = np.zeros(ops.n_mech)
    th = np.zeros(ops.n_therm)
    led = {k: np.zeros(n + 1) for k in ("kinetic", "elastic", "thermal", "dissipated", "work")}
    rec_t, rec_u, rec_v, rec_th, rec_k = [0.0], [u.copy()], [v.copy()], [th.copy()], [0]
    for i in range(n):
        t = i * dt
        u1, v1, th1, F, Q = stepper.step(t, u, v, th)
        if scheme == "midpoint":
            vm, thm = 0.5 * (v + v1), 0.5 * (th + th1)
        else:
            vm, thm = v1, th1
        led["dissipated"][i + 1] = led["dissipated"][i] + dt * float(thm @ (ops.K_th @ thm))
        led["work"][i + 1] = led["work"][i] + dt * (float(F @ vm) + float(Q @ thm))
        u, v, th = u1, v1, th1
        ek, ee, et = ops.energies(u, v, th)
        led["kinetic"][i + 1], led["elastic"][i + 1], led["thermal"][i + 1] = ek, ee, et
        if i + 1 in keep:
            rec_t.append((i + 1) * dt)
            rec_u.append(u.copy())
            rec_v.append(v.copy())
            rec_th.append(th.copy())
            rec_k.append(i + 1)
    ledger = EnergyLedger(t=np.arange(n + 1) * dt, **led)
    return Trajectory(dt, scheme, np.array(rec_t), np.array(rec_u), np.array(rec_v),
                      np.array(rec_th), ledger, np.array(rec_k))


def oracle_solve(ops: CoupledOperators, T: float, dt_fine: float):
    """Classical RK4 on the explicit first-order form; returns (u, v, theta) at T.

    Uses dense Cholesky factors of M and M_th, so it is only meant for
    small systems.
    """
    n_tot = ops.n_mech + ops.n_therm
    if n_tot > ORACLE_MAX_DOFS:
        raise SizeExceeded(f"oracle limited to {ORACLE_MAX_DOFS} dofs, system has {n_tot}")
    n, h = step_count(T, dt_fine)
    cM = sla.cho_factor(ops.M.toarray())
    cT = sla.cho_factor(ops.M_th.toarray()) if ops.n_therm else None
    K, G, D, Kth = (A.toarray() for A in (ops.K, ops.G, ops.D, ops.K_th))
    nm = ops.n_mech

    def rhs(t, y):
        u, v, th = y[:nm], y[nm:2 * nm], y[2 * nm:]
        F, Q = ops.load_vectors(t)
        a = sla.cho_solve(cM, F - K @ u + G @ th)
        thd = sla.cho_solve(cT, Q - Kth @ th - D @ v) if cT is not None else th
        return np.concatenate([v, a, thd])

    y = np.zeros(2 * nm + ops.n_therm)
    for i in range(n):
        t = i * h
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y[:nm], y[nm:2 * nm], y[2 * nm:]
