"""Galerkin discretisation of the two-dimensional thermoelastic membrane.

Unknowns: xi_1, xi_2 and zeta are continuous piecewise-linear and vanish on
the boundary; xi_3 is piecewise constant (it enters the strain without
derivatives).  Full mechanical vectors are laid out as
``[xi_1 (nodes), xi_2 (nodes), xi_3 (elements)]``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import timestep
from .errors import AssemblyFailure, DegenerateChart
from .geometry import check_elliptic, eval_frame
from .loads import LoadCase, spatial_profile
from .material import CouplingCoefficients, MaterialParams, membrane_tensor
from .mesh import Mesh2D

# 3-point interior rule, exact for quadratics on triangles
TRI_BARY = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
TRI_WEIGHTS = np.full(3, 1.0 / 3.0)


def p1_gradients(mesh: Mesh2D):
    """Constant parameter-space gradients of the three hat functions, (M, 3, 2), and areas."""
    p = mesh.nodes[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)  # columns are edge vectors
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(det <= 0):
        raise AssemblyFailure("mesh has degenerate or negatively oriented triangles")
    Jinv = np.linalg.inv(J)
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.einsum("ra,eab->erb", ref, Jinv)
    return grads, 0.5 * det


def quadrature_points(mesh: Mesh2D):
    p = mesh.nodes[mesh.triangles]
    return np.einsum("qa,eai->eqi", TRI_BARY, p)


def strain_gamma(frame, eta, grad_eta):
    """gamma_ab(eta) = 1/2 (d_b eta_a + d_a eta_b) - Gamma^s_ab eta_s - b_ab eta_3.

    ``eta`` has shape (..., 3) (covariant components) and ``grad_eta`` shape
    (..., 2, 2) with ``grad_eta[..., a, b] = d_b eta_a``.
    """
    eta = np.asarray(eta, dtype=float)
    g = np.asarray(grad_eta, dtype=float)
    sym = 0.5 * (g + np.swapaxes(g, -1, -2))
    return (sym - np.einsum("...sab,...s->...ab", frame.christoffel, eta[..., :2])
            - frame.b_lower * eta[..., 2, None, None])


def strain_operator(frame, grads):
    """gamma for each of the 7 local mechanical basis functions: (M, Q, 7, 2, 2).

    Local order: xi_1 at the 3 vertices, xi_2 at the 3 vertices, xi_3.
    """
    E, Q = frame.sqrt_a.shape
    phi = np.broadcast_to(TRI_BARY, (E, Q, 3))
    B = np.zeros((E, Q, 7, 2, 2))
    for comp in range(2):
        for a in range(3):
            col = 3 * comp + a
            g = grads[:, None, a, :]  # (E, 1, 2)
            B[:, :, col, comp, :] += 0.5 * g
            B[:, :, col, :, comp] += 0.5 * g
            B[:, :, col] -= frame.christoffel[:, :, comp] * phi[:, :, a, None, None]
    B[:, :, 6] = -frame.b_lower
    return B


@dataclass(frozen=True, eq=False)
class SemiDiscreteSystem:
    """Assembled membrane operators.  ``ops`` acts on free dofs only."""
    mesh: Mesh2D
    chart: object
    material: MaterialParams
    ops: timestep.CoupledOperators
    free_mech: np.ndarray
    free_therm: np.ndarray
    n_mech_full: int
    n_therm_full: int
    full: dict = field(default_factory=dict)   # unrestricted matrices, for diagnostics
    elliptic: bool = True

    @property
    def M(self):
        return self.ops.M

    @property
    def K(self):
        return self.ops.K

    @property
    def G(self):
        return self.ops.G

    @property
    def D(self):
        return self.ops.D

    @property
    def M_th(self):
        return self.ops.M_th

    @property
    def K_th(self):
        return self.ops.K_th

    def expand_mech(self, u):
        out = np.zeros(u.shape[:-1] + (self.n_mech_full,))
        out[..., self.free_mech] = u
        return out

    def expand_therm(self, th):
        out = np.zeros(th.shape[:-1] + (self.n_therm_full,))
        out[..., self.free_therm] = th
        return out

    def with_loads(self, loads: LoadCase):
        return _replace_ops(self, self.ops.with_loads(load_terms(self, loads)))

    def without_coupling(self):
        """Same system with both coupling blocks removed."""
        o = self.ops
        Z = sp.csr_matrix(o.G.shape)
        return _replace_ops(self, timestep.CoupledOperators(o.M, o.K, Z, Z.T.tocsr(), o.M_th, o.K_th, o.loads))


def _replace_ops(sys, ops):
    return SemiDiscreteSystem(sys.mesh, sys.chart, sys.material, ops, sys.free_mech, sys.free_therm,
                              sys.n_mech_full, sys.n_therm_full, sys.full, sys.elliptic)


def _mech_dofs(mesh):
    N = mesh.n_nodes
    t = mesh.triangles
    e = np.arange(mesh.n_elements)
    return np.column_stack([t, N + t, 2 * N + e])


def _coo(rows, cols, vals, shape):
    r = np.broadcast_to(rows[:, :, None], vals.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], vals.shape).ravel()
    return sp.coo_matrix((vals.ravel(), (r, c)), shape=shape).tocsr()


def frames_at_quadrature(mesh, chart):
    try:
        return eval_frame(chart, quadrature_points(mesh), curvature_derivatives=False)
    except DegenerateChart as exc:
        raise AssemblyFailure(f"degenerate element frame: {exc}") from exc


def assemble(mesh: Mesh2D, chart, mat: MaterialParams, loads: LoadCase | None = None,
             check_ellipticity=True) -> SemiDiscreteSystem:
    elliptic = True
    if check_ellipticity:
        elliptic = check_elliptic(chart).uniform_elliptic
        if not elliptic:
            warnings.warn(f"chart {chart.name!r} is not uniformly elliptic; the membrane "
                          "stiffness may lose definiteness", RuntimeWarning, stacklevel=2)
    grads, area = p1_gradients(mesh)
    fr = frames_at_quadrature(mesh, chart)
    coef = CouplingCoefficients.from_material(mat)
    w = area[:, None] * TRI_WEIGHTS[None, :] * fr.sqrt_a       # (E, Q)
    phi = np.broadcast_to(TRI_BARY, w.shape + (3,))
    N, E = mesh.n_nodes, mesh.n_elements
    nmf = 2 * N + E
    mdofs = _mech_dofs(mesh)
    tdofs = mesh.triangles

    B = strain_operator(fr, grads)
    C = membrane_tensor(fr, mat)
    Ke = np.einsum("eq,eqiab,eqabst,eqjst->eij", w, B, C, B)

    # mass 2 rho (xi_a a^ab eta_b + xi_3 eta_3) sqrt(a)
    Me = np.zeros((E, 7, 7))
    pp = np.einsum("eq,eqi,eqj->eqij", w, phi, phi)
    for a in range(2):
        for b in range(2):
            Me[:, 3 * a:3 * a + 3, 3 * b:3 * b + 3] = 2 * mat.rho * np.einsum("eqij,eq->eij", pp, fr.a_upper[:, :, a, b])
    Me[:, 6, 6] = 2 * mat.rho * w.sum(axis=1)

    # coupling 4 c zeta a^ab gamma_ab(eta) sqrt(a): rows mechanical, columns thermal
    trB = np.einsum("eqab,eqiab->eqi", fr.a_upper, B)
    Ge = coef.mech_thermal * np.einsum("eq,eqi,eqj->eij", w, trB, phi)

    Mthe = coef.heat_capacity_eff * pp.sum(axis=1)
    Kthe = 2 * mat.k * np.einsum("eq,eia,eqab,ejb->eij", w, grads, fr.a_upper, grads)

    K = _coo(mdofs, mdofs, Ke, (nmf, nmf))
    M = _coo(mdofs, mdofs, Me, (nmf, nmf))
    G = _coo(mdofs, tdofs, Ge, (nmf, N))
    D = _coo(tdofs, mdofs, np.swapaxes(Ge, 1, 2), (N, nmf))
    Mth = _coo(tdofs, tdofs, Mthe, (N, N))
    Kth = _coo(tdofs, tdofs, Kthe, (N, N))
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    Kth = 0.5 * (Kth + Kth.T)
    Mth = 0.5 * (Mth + Mth.T)

    interior = mesh.interior_nodes
    free_mech = np.concatenate([interior, N + interior, 2 * N + np.arange(E)])
    free_therm = interior

    def restrict(A, r, c):
        return A[r][:, c].tocsr()

    ops = timestep.CoupledOperators(
        M=restrict(M, free_mech, free_mech), K=restrict(K, free_mech, free_mech),
        G=restrict(G, free_mech, free_therm), D=restrict(D, free_therm, free_mech),
        M_th=restrict(Mth, free_therm, free_therm), K_th=restrict(Kth, free_therm, free_therm))
    sys = SemiDiscreteSystem(mesh, chart, mat, ops, free_mech, free_therm, nmf, N,
                             full=dict(M=M, K=K, G=G, D=D, M_th=Mth, K_th=Kth), elliptic=elliptic)
    if loads is not None:
        sys = sys.with_loads(loads)
    return sys


def load_vectors(sys: SemiDiscreteSystem, loads: LoadCase):
    """Spatial parts of the resultants F = 2 f + h and Q = 2 q, on full dofs.

    Returns a list of (mech, therm, spec) triples, one per non-zero load.
    """
    mesh, chart = sys.mesh, sys.chart
    fr = frames_at_quadrature(mesh, chart)
    _, area = p1_gradients(mesh)
    w = area[:, None] * TRI_WEIGHTS[None, :] * fr.sqrt_a
    qp = quadrature_points(mesh)
    N, E = mesh.n_nodes, mesh.n_elements
    out = []
    for spec, scale, thermal in ((loads.f, 2.0, False), (loads.h, 1.0, False), (loads.q, 2.0, True)):
        if spec.is_zero:
            continue
        s = scale * spec.amplitude * spatial_profile(spec.spatial, qp, chart.y1_range, chart.y2_range)
        mech = np.zeros(sys.n_mech_full)
        therm = np.zeros(sys.n_therm_full)
        if thermal:
            np.add.at(therm, mesh.triangles, np.einsum("eq,eq,qa->ea", w, s, TRI_BARY))
        else:
            c = np.asarray(spec.components, dtype=float)
            nodal = np.einsum("eq,eq,qa->ea", w, s, TRI_BARY)
            np.add.at(mech, mesh.triangles, c[0] * nodal)
            np.add.at(mech, N + mesh.triangles, c[1] * nodal)
            mech[2 * N:] += c[2] * (w * s).sum(axis=1)
        out.append((mech, therm, spec))
    return out


def load_terms(sys: SemiDiscreteSystem, loads: LoadCase):
    return tuple(timestep.LoadTerm(mech[sys.free_mech], therm[sys.free_therm], spec.time_fn())
                 for mech, therm, spec in load_vectors(sys, loads))


@dataclass
class State2D:
    xi_tan: np.ndarray     # (N, 2) nodal xi_1, xi_2
    xi3: np.ndarray        # (M,) per element
    xi_dot_tan: np.ndarray
    xi3_dot: np.ndarray
    zeta: np.ndarray       # (N,)
    t: float = 0.0

    @classmethod
    def from_free(cls, sys: SemiDiscreteSystem, u, v, th, t=0.0):
        N = sys.mesh.n_nodes
        U = sys.expand_mech(u)
        V = sys.expand_mech(v)
        return cls(np.column_stack([U[:N], U[N:2 * N]]), U[2 * N:].copy(),
                   np.column_stack([V[:N], V[N:2 * N]]), V[2 * N:].copy(),
                   sys.expand_therm(th), float(t))

    @classmethod
    def zero(cls, sys):
        return cls.from_free(sys, np.zeros(sys.ops.n_mech), np.zeros(sys.ops.n_mech), np.zeros(sys.ops.n_therm))

    def to_free(self, sys):
        U = np.concatenate([self.xi_tan[:, 0], self.xi_tan[:, 1], self.xi3])
        V = np.concatenate([self.xi_dot_tan[:, 0], self.xi_dot_tan[:, 1], self.xi3_dot])
        return U[sys.free_mech], V[sys.free_mech], self.zeta[sys.free_therm]

    def probe(self, mesh, y):
        e, bary = mesh.locate(y)
        nodes = mesh.triangles[e]
        x = bary @ self.xi_tan[nodes]
        return float(x[0]), float(x[1]), float(self.xi3[e]), float(bary @ self.zeta[nodes])


def step(sys: SemiDiscreteSystem, state: State2D, dt: float, scheme="midpoint") -> State2D:
    u, v, th = state.to_free(sys)
    u1, v1, th1, _, _ = timestep.TimeStepper(sys.ops, dt, scheme).step(state.t, u, v, th)
    return State2D.from_free(sys, u1, v1, th1, state.t + dt)


def simulate(sys: SemiDiscreteSystem, T: float, dt: float, scheme="midpoint", stride=1,
             record_times=()) -> timestep.Trajectory:
    return timestep.integrate(sys.ops, T, dt, scheme, stride, record_times)


def states(sys: SemiDiscreteSystem, traj: timestep.Trajectory):
    return [State2D.from_free(sys, traj.u[i], traj.v[i], traj.theta[i], traj.times[i])
            for i in range(len(traj.times))]


def oracle_solve(sys: SemiDiscreteSystem, T: float, dt_fine: float):
    return timestep.oracle_solve(sys.ops, T, dt_fine)
