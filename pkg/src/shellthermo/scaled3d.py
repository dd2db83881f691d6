"""The scaled three-dimensional thermoelastic problem on Omega = omega x (-1, 1).

Thickness enters only through explicit 1/eps factors in the transverse
derivatives and through the frame of Theta(y, eps x3) = theta(y) + eps x3 a3(y).
Elements are prisms (P1 triangle x P1 interval) carrying three covariant
displacement components and the temperature at every node.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import timestep
from .errors import AssemblyFailure, DegenerateChart
from .geometry import GeometryFrame, eval_frame
from .loads import LoadCase, spatial_profile
from .material import CouplingCoefficients, MaterialParams, isotropic_tensor
from .membrane import TRI_BARY, TRI_WEIGHTS, p1_gradients, quadrature_points
from .mesh import Mesh2D, Mesh3D

GAUSS2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)   # on [-1, 1], unit weights


@dataclass(frozen=True)
class ScaledFrame:
    """Frame of the scaled body at points (y, x3) for one eps.

    ``christoffel3[..., p, i, j]`` is Gamma^p_ij(eps) = g^p . d_i g_j, where
    derivatives are taken in the thin-domain coordinate x3^eps = eps x3.
    """
    eps: float
    x3: np.ndarray
    g_cov: np.ndarray         # (..., 3, 3)  g_i
    g_contra: np.ndarray      # (..., 3, 3)  g^i
    g_lower: np.ndarray       # (..., 3, 3)
    g_upper: np.ndarray       # (..., 3, 3)
    christoffel3: np.ndarray  # (..., 3, 3, 3)
    sqrt_g: np.ndarray        # signed triple product g_1 . (g_2 x g_3)

    @property
    def g_det(self):
        return self.sqrt_g ** 2


def scaled_frame_from_surface(frame: GeometryFrame, x3, eps):
    """Scaled frame over a surface frame; ``x3`` broadcasts against the frame's points."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if frame.b_mixed_deriv is None:
        raise ValueError("surface frame lacks curvature derivatives")
    x3 = np.asarray(x3, dtype=float)
    z = eps * x3
    a = frame.a_cov                   # [a, i]
    a3 = frame.a3
    bm = frame.b_mixed                # [s, a] -> b^s_a
    da3 = -np.einsum("...sa,...si->...ai", bm, a)            # d_a a3 (Weingarten)
    # d_b d_a a3 = -[(d_b b^s_a) a_s + b^s_a d_b a_s]
    dda3 = -(np.einsum("...bsa,...si->...abi", frame.b_mixed_deriv, a)
             + np.einsum("...sa,...sbi->...abi", bm, frame.da_cov))
    dda3 = 0.5 * (dda3 + np.swapaxes(dda3, -3, -2))

    zs = z[..., None, None]
    shape = np.broadcast_shapes(a.shape[:-2], z.shape)
    g = np.zeros(shape + (3, 3))
    g[..., :2, :] = a + zs * da3
    g[..., 2, :] = np.broadcast_to(a3[..., None, :], shape + (1, 3))[..., 0, :]
    sqrt_g = np.einsum("...i,...i->...", g[..., 0, :], np.cross(g[..., 1, :], g[..., 2, :]))
    # both principal factors 1 - eps x3 kappa must stay positive; when they flip
    # together sqrt(g) is positive again, so the sign alone is not enough
    shifter = np.eye(2) - zs * bm
    tr = np.broadcast_to(np.trace(shifter, axis1=-2, axis2=-1), shape)
    if np.any(~(sqrt_g > 0)) or np.any(~(tr > 0)):
        raise DegenerateChart(
            f"Theta(y, eps x3) is degenerate for eps = {eps:g}: a factor 1 - eps x3 kappa is not positive "
            f"(min sqrt(g) = {np.min(sqrt_g):.3e}, min shifter trace = {np.min(tr):.3e})")
    g_lower = np.einsum("...ik,...jk->...ij", g, g)
    g_upper = np.linalg.inv(g_lower)
    g_upper = 0.5 * (g_upper + np.swapaxes(g_upper, -1, -2))
    g_contra = np.einsum("...ij,...jk->...ik", g_upper, g)

    # dg[..., i, j, :] = d_i g_j
    dg = np.zeros(shape + (3, 3, 3))
    dg[..., :2, :2, :] = np.swapaxes(frame.da_cov, -3, -2) + zs[..., None] * dda3
    dg[..., :2, 2, :] = np.broadcast_to(da3, shape + (2, 3))
    dg[..., 2, :2, :] = np.broadcast_to(da3, shape + (2, 3))
    chris = np.einsum("...pk,...ijk->...pij", g_contra, dg)
    return ScaledFrame(float(eps), np.broadcast_to(x3, shape), g, g_contra, g_lower, g_upper, chris, sqrt_g)


def eval_scaled_frame(chart, x, eps):
    """ScaledFrame at points ``x`` of shape (..., 3) = (y1, y2, x3)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise ValueError("x must have trailing dimension 3")
    if np.any(np.abs(x[..., 2]) > 1.0 + 1e-12):
        raise ValueError("x3 must lie in [-1, 1]")
    fr = eval_frame(chart, x[..., :2])
    return scaled_frame_from_surface(fr, x[..., 2], eps)


def scaled_strain(sframe: ScaledFrame, v, grad_v):
    """e_{i||j}(eps; v) from covariant components and their derivatives.

    ``grad_v[..., i, j]`` = d_j v_i with j = 2 the derivative in the scaled
    variable x3 (the 1/eps factor is applied here).
    """
    v = np.asarray(v, dtype=float)
    d = np.array(grad_v, dtype=float)
    d[..., 2] = d[..., 2] / sframe.eps
    sym = 0.5 * (d + np.swapaxes(d, -1, -2))
    return sym - np.einsum("...pij,...p->...ij", sframe.christoffel3, v)


def extruded_points(mesh3: Mesh3D):
    """Gauss abscissae in x3 per layer, (layers, 2), and the layer-local linear weights."""
    z = mesh3.z
    hz = z[1:] - z[:-1]
    mid = 0.5 * (z[1:] + z[:-1])
    x3 = mid[:, None] + 0.5 * hz[:, None] * GAUSS2[None, :]
    lo = 0.5 * (1.0 - GAUSS2)      # weight of the bottom node
    return x3, hz, np.stack([lo, 1.0 - lo], axis=-1)


@dataclass(frozen=True, eq=False)
class SemiDiscreteSystem3D:
    mesh: Mesh3D
    chart: object
    material: MaterialParams
    eps: float
    ops: timestep.CoupledOperators
    free_mech: np.ndarray
    free_therm: np.ndarray
    n_mech_full: int
    n_therm_full: int
    K_th_transverse: sp.csr_matrix     # (1/eps^2) d3 part of K_th on free dofs
    full: dict = field(default_factory=dict)

    def expand_mech(self, u):
        out = np.zeros(u.shape[:-1] + (self.n_mech_full,))
        out[..., self.free_mech] = u
        return out

    def expand_therm(self, th):
        out = np.zeros(th.shape[:-1] + (self.n_therm_full,))
        out[..., self.free_therm] = th
        return out

    def with_loads(self, loads: LoadCase):
        return _replace_ops(self, self.ops.with_loads(load_terms3d(self, loads)))

    def without_coupling(self):
        o = self.ops
        Z = sp.csr_matrix(o.G.shape)
        return _replace_ops(self, timestep.CoupledOperators(o.M, o.K, Z, Z.T.tocsr(), o.M_th, o.K_th, o.loads))


def _replace_ops(s, ops):
    return SemiDiscreteSystem3D(s.mesh, s.chart, s.material, s.eps, ops, s.free_mech, s.free_therm,
                                s.n_mech_full, s.n_therm_full, s.K_th_transverse, s.full)


class _PrismData:
    """Per-prism quadrature data shared by assembly, loads and norms.

    Point axes are (element, triangle point, layer, gauss point) flattened
    to (E3, 6) with E3 = layers * base elements in layer-major order.
    """

    def __init__(self, mesh3: Mesh3D, chart=None, eps=None):
        base = mesh3.base
        self.mesh3 = mesh3
        self.grads, self.area = p1_gradients(base)
        x3, hz, lin = extruded_points(mesh3)
        L, E = mesh3.layers, base.n_elements
        self.x3, self.hz = x3, hz
        # scalar basis at the 6 points of each prism: (L, E, 3 tri pts, 2 gauss, 6 nodes)
        phi = TRI_BARY[:, None, :, None] * lin[None, :, None, :]      # (3, 2, 3, 2)
        phi = np.concatenate([phi[..., 0], phi[..., 1]], axis=-1)     # bottom nodes then top
        self.phi = np.broadcast_to(phi, (L, E, 3, 2, 6))
        dz = np.array([-1.0, 1.0])
        dphi = np.zeros((L, E, 3, 2, 6, 3))
        for k in range(L):
            for top in range(2):
                s = slice(3 * top, 3 * top + 3)
                dphi[k, :, :, :, s, :2] = self.grads[:, None, None, :, :] * lin[None, None, :, top, None, None]
                dphi[k, :, :, :, s, 2] = TRI_BARY[None, :, None, :] * dz[top] / hz[k]
        self.dphi = dphi
        # parameter-space quadrature weight (no metric)
        self.wq = (self.area[None, :, None, None] * TRI_WEIGHTS[None, None, :, None]
                   * 0.5 * hz[:, None, None, None] * np.ones((1, 1, 1, 2)))
        self.wq = np.broadcast_to(self.wq, (L, E, 3, 2))
        self.dofs = mesh3.prisms.reshape(L, E, 6)
        self.frame = None
        self.sframe = None
        if chart is not None:
            try:
                fr = eval_frame(chart, quadrature_points(base))          # (E, 3)
                self.frame = fr
                self.sframe = scaled_frame_from_surface(_expand_frame(fr), x3[:, None, None, :], eps)
                # the faces x3 = +-1 lie outside the Gauss points but bound the body
                scaled_frame_from_surface(fr, np.array([-1.0, 1.0])[:, None, None], eps)
            except DegenerateChart as exc:
                raise AssemblyFailure(f"degenerate element frame: {exc}") from exc


def _expand_frame(fr: GeometryFrame):
    """Insert broadcast axes so a (E, Q) surface frame combines with (L, 1, 1, 2) x3 values."""
    def ex(arr, tail):
        if arr is None:
            return None
        return arr[None, :, :, None, ...] if tail else arr[None, :, :, None]
    kw = {}
    for name in ("y", "theta", "a_cov", "a3", "a_contra", "a_lower", "a_upper", "b_lower",
                 "b_mixed", "christoffel", "da_cov", "b_mixed_deriv", "b_cov_deriv"):
        kw[name] = ex(getattr(fr, name), True)
    kw["sqrt_a"] = fr.sqrt_a[None, :, :, None]
    return GeometryFrame(**kw)


def _coo(rows, cols, vals, shape):
    r = np.broadcast_to(rows[..., :, None], vals.shape).ravel()
    c = np.broadcast_to(cols[..., None, :], vals.shape).ravel()
    return sp.coo_matrix((vals.ravel(), (r, c)), shape=shape).tocsr()


def strain_operator3d(pd: _PrismData, eps):
    """Scaled strains of the 18 local basis functions: (L, E, 3, 2, 18, 3, 3).

    Local order: component-major, i.e. v_c at the 6 prism nodes for c = 1, 2, 3.
    """
    sf = pd.sframe
    L, E = pd.phi.shape[:2]
    dphi = pd.dphi.copy()
    dphi[..., 2] /= eps
    B = np.zeros((L, E, 3, 2, 18, 3, 3))
    for c in range(3):
        cols = slice(6 * c, 6 * c + 6)
        B[..., cols, c, :] += 0.5 * dphi
        B[..., cols, :, c] += 0.5 * dphi
        B[..., cols, :, :] -= sf.christoffel3[..., None, c, :, :] * pd.phi[..., None, None]
    return B


def assemble3d(mesh3: Mesh3D, chart, mat: MaterialParams, eps: float,
               loads: LoadCase | None = None) -> SemiDiscreteSystem3D:
    if not eps > 0:
        raise ValueError("eps must be positive")
    pd = _PrismData(mesh3, chart, eps)
    sf = pd.sframe
    coef = CouplingCoefficients.from_material(mat)
    w = pd.wq * sf.sqrt_g                                              # (L, E, 3, 2)
    Nn = mesh3.n_nodes
    nmf = 3 * Nn
    tdofs = pd.dofs
    mdofs = np.concatenate([tdofs, Nn + tdofs, 2 * Nn + tdofs], axis=-1)

    B = strain_operator3d(pd, eps)
    A = isotropic_tensor(sf.g_upper, mat.lam, mat.mu)
    AB = np.einsum("...ijkl,...nkl->...nij", A, B, optimize=True)
    Ke = np.einsum("leqg,leqgmij,leqgnij->lemn", w, B, AB, optimize=True)

    phi = pd.phi
    pp = np.einsum("leqg,leqga,leqgb->leqgab", w, phi, phi, optimize=True)
    Me = np.zeros(Ke.shape)
    for a in range(2):
        for b in range(2):
            Me[..., 6 * a:6 * a + 6, 6 * b:6 * b + 6] = mat.rho * np.einsum(
                "leqgij,leqg->leij", pp, sf.g_upper[..., a, b], optimize=True)
    Me[..., 12:, 12:] = mat.rho * pp.sum(axis=(2, 3))

    # coupling alpha_T (3 lam + 2 mu) theta (e_ab g^ab + e_33) sqrt(g)
    trB = np.einsum("...ij,...nij->...n", sf.g_upper, B, optimize=True)
    Ge = coef.duhamel * np.einsum("leqg,leqgm,leqga->lema", w, trB, phi, optimize=True)

    Mthe = mat.beta * pp.sum(axis=(2, 3))
    dphi = pd.dphi
    Kth_plane = mat.k * np.einsum("leqg,leqgai,leqgij,leqgbj->leab", w, dphi[..., :2],
                                  sf.g_upper[..., :2, :2], dphi[..., :2], optimize=True)
    Kth_trans = mat.k / eps ** 2 * np.einsum("leqg,leqga,leqgb->leab", w, dphi[..., 2], dphi[..., 2],
                                             optimize=True)

    K = _coo(mdofs, mdofs, Ke, (nmf, nmf))
    M = _coo(mdofs, mdofs, Me, (nmf, nmf))
    G = _coo(mdofs, tdofs, Ge, (nmf, Nn))
    D = _coo(tdofs, mdofs, np.swapaxes(Ge, -1, -2), (Nn, nmf))
    Mth = _coo(tdofs, tdofs, Mthe, (Nn, Nn))
    Kp = _coo(tdofs, tdofs, Kth_plane, (Nn, Nn))
    Kt = _coo(tdofs, tdofs, Kth_trans, (Nn, Nn))
    K, M, Mth, Kp, Kt = (0.5 * (X + X.T) for X in (K, M, Mth, Kp, Kt))

    free_nodes = np.flatnonzero(~mesh3.lateral)
    free_mech = np.concatenate([free_nodes, Nn + free_nodes, 2 * Nn + free_nodes])

    def restrict(X, r, c):
        return X[r][:, c].tocsr()

    Kt_f = restrict(Kt, free_nodes, free_nodes)
    ops = timestep.CoupledOperators(
        M=restrict(M, free_mech, free_mech), K=restrict(K, free_mech, free_mech),
        G=restrict(G, free_mech, free_nodes), D=restrict(D, free_nodes, free_mech),
        M_th=restrict(Mth, free_nodes, free_nodes),
        K_th=(restrict(Kp, free_nodes, free_nodes) + Kt_f).tocsr())
    sys = SemiDiscreteSystem3D(mesh3, chart, mat, float(eps), ops, free_mech, free_nodes, nmf, Nn, Kt_f,
                               full=dict(M=M, K=K, G=G, D=D, M_th=Mth, K_th_plane=Kp, K_th_transverse=Kt))
    if loads is not None:
        sys = sys.with_loads(loads)
    return sys


def load_vectors3d(sys: SemiDiscreteSystem3D, loads: LoadCase):
    """Volume force f0, top-face traction h1 (the 1/eps and eps cancel) and heat q0."""
    mesh3, chart = sys.mesh, sys.chart
    base = mesh3.base
    pd = _PrismData(mesh3, chart, sys.eps)
    w = pd.wq * pd.sframe.sqrt_g
    Nn = mesh3.n_nodes
    N = base.n_nodes
    qp = quadrature_points(base)                                   # (E, 3, 2)
    out = []
    for spec, kind in ((loads.f, "volume"), (loads.h, "top"), (loads.q, "heat")):
        if spec.is_zero:
            continue
        s = spec.amplitude * spatial_profile(spec.spatial, qp, chart.y1_range, chart.y2_range)  # (E, 3)
        mech = np.zeros(sys.n_mech_full)
        therm = np.zeros(sys.n_therm_full)
        if kind == "top":
            top = scaled_frame_from_surface(pd.frame, np.ones((1, 1)), sys.eps)
            wt = base_weights(base) * top.sqrt_g                   # (E, 3)
            nodal = np.einsum("eq,eq,qa->ea", wt, s, TRI_BARY)
            idx = mesh3.layers * N + base.triangles
            c = np.asarray(spec.components, dtype=float)
            for comp in range(3):
                np.add.at(mech, comp * Nn + idx, c[comp] * nodal)
        else:
            nodal = np.einsum("leqg,eq,leqga->lea", w, s, pd.phi, optimize=True)
            if kind == "heat":
                np.add.at(therm, pd.dofs, nodal)
            else:
                c = np.asarray(spec.components, dtype=float)
                for comp in range(3):
                    np.add.at(mech, comp * Nn + pd.dofs, c[comp] * nodal)
        out.append((mech, therm, spec))
    return out


def base_weights(base: Mesh2D):
    _, area = p1_gradients(base)
    return area[:, None] * TRI_WEIGHTS[None, :]


def load_terms3d(sys: SemiDiscreteSystem3D, loads: LoadCase):
    return tuple(timestep.LoadTerm(mech[sys.free_mech], therm[sys.free_therm], spec.time_fn())
                 for mech, therm, spec in load_vectors3d(sys, loads))


@dataclass
class State3D:
    u: np.ndarray        # (n_nodes, 3) covariant components
    u_dot: np.ndarray
    theta: np.ndarray    # (n_nodes,)
    t: float = 0.0

    @classmethod
    def from_free(cls, sys: SemiDiscreteSystem3D, u, v, th, t=0.0):
        Nn = sys.mesh.n_nodes
        U = sys.expand_mech(u).reshape(3, Nn).T
        V = sys.expand_mech(v).reshape(3, Nn).T
        return cls(U.copy(), V.copy(), sys.expand_therm(th), float(t))

    def probe(self, mesh3: Mesh3D, y, x3=0.0):
        """Interpolated (u_1, u_2, u_3, theta) at (y, x3)."""
        base = mesh3.base
        e, bary = base.locate(y)
        z = mesh3.z
        k = int(np.clip(np.searchsorted(z, x3, side="right") - 1, 0, mesh3.layers - 1))
        s = (x3 - z[k]) / (z[k + 1] - z[k])
        N = base.n_nodes
        nodes = base.triangles[e]
        lo, hi = k * N + nodes, (k + 1) * N + nodes
        u = (1 - s) * (bary @ self.u[lo]) + s * (bary @ self.u[hi])
        th = (1 - s) * (bary @ self.theta[lo]) + s * (bary @ self.theta[hi])
        return float(u[0]), float(u[1]), float(u[2]), float(th)


def simulate3d(sys: SemiDiscreteSystem3D, T, dt, scheme="midpoint", stride=1, record_times=()):
    """Integrate from rest; the trajectory's ``extra['transverse_dissipation']``
    holds the cumulative (1/eps^2) |d3 theta|^2 channel."""
    traj = timestep.integrate(sys.ops, T, dt, scheme, stride, record_times)
    traj.extra["transverse_dissipation"] = transverse_dissipation(sys, traj)
    return traj


def transverse_dissipation(sys, traj):
    """Time integral of the transverse heat-flux channel over the recorded states.

    Uses the midpoint rule between consecutive recorded states, so it is exact
    (relative to the ledger) when every step is recorded.
    """
    th = traj.theta
    if len(th) < 2:
        return np.zeros(len(th))
    mid = 0.5 * (th[1:] + th[:-1])
    dts = np.diff(traj.times)
    inc = dts * np.einsum("ni,ni->n", mid, (sys.K_th_transverse @ mid.T).T)
    return np.concatenate([[0.0], np.cumsum(inc)])


def average_x3(mesh3: Mesh3D, field_values, to="nodes"):
    """Through-thickness mean 1/2 int_{-1}^{1} field dx3 of a nodal P1 field.

    Exact for the piecewise-linear vertical interpolant (trapezoid per layer).
    ``to='elements'`` further averages the three vertices of each base
    triangle, which is the mean over the element of the P1 field.
    """
    f = np.asarray(field_values, dtype=float)
    N = mesh3.base.n_nodes
    F = f.reshape((mesh3.layers + 1, N) + f.shape[1:])
    hz = np.diff(mesh3.z)
    w = np.zeros(mesh3.layers + 1)
    w[:-1] += 0.5 * hz
    w[1:] += 0.5 * hz
    avg = np.tensordot(w / 2.0, F, axes=(0, 0))
    if to == "nodes":
        return avg
    if to == "elements":
        return avg[mesh3.base.triangles].mean(axis=1)
    raise ValueError("to must be 'nodes' or 'elements'")


class ErrorNorms:
    """Discrete norms on Omega in parameter coordinates for comparing 3D and 2D fields.

    The scalar P1 mass and gradient matrices use the Euclidean measure dy dx3,
    matching the H^1(Omega) / L^2(Omega) norms of the convergence statement.
    """

    def __init__(self, mesh3: Mesh3D):
        pd = _PrismData(mesh3)
        self.mesh3 = mesh3
        Nn = mesh3.n_nodes
        E = mesh3.base.n_elements
        w = pd.wq
        Me = np.einsum("leqg,leqga,leqgb->leab", w, pd.phi, pd.phi, optimize=True)
        Le = np.einsum("leqg,leqgai,leqgbi->leab", w, pd.dphi, pd.dphi, optimize=True)
        self.mass = _coo(pd.dofs, pd.dofs, Me, (Nn, Nn))
        self.stiff = _coo(pd.dofs, pd.dofs, Le, (Nn, Nn))
        # mixed P1 (3D nodes) x P0 (base elements) mass and the P0 mass
        Mix = np.einsum("leqg,leqga->lea", w, pd.phi)
        cols = np.broadcast_to(np.arange(E)[None, :, None], pd.dofs.shape)
        self.mixed = sp.coo_matrix((Mix.ravel(), (pd.dofs.ravel(), cols.ravel())), shape=(Nn, E)).tocsr()
        self.p0_mass = w.sum(axis=(0, 2, 3))

    def extend(self, nodal2d):
        """x3-independent extension of a base nodal field."""
        return np.tile(np.asarray(nodal2d, dtype=float), self.mesh3.layers + 1)

    def l2(self, f):
        return float(np.sqrt(max(f @ (self.mass @ f), 0.0)))

    def h1_semi(self, f):
        return float(np.sqrt(max(f @ (self.stiff @ f), 0.0)))

    def h1(self, f):
        return float(np.sqrt(max(f @ (self.mass @ f) + f @ (self.stiff @ f), 0.0)))

    def l2_p1_minus_p0(self, f, c):
        val = f @ (self.mass @ f) - 2.0 * f @ (self.mixed @ c) + c @ (self.p0_mass * c)
        return float(np.sqrt(max(val, 0.0)))
