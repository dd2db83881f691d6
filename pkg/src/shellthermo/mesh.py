"""Triangulations of the parameter rectangle and their prism extrusions."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class Mesh2D:
    nodes: np.ndarray       # (N, 2) parameter coordinates
    triangles: np.ndarray   # (M, 3) node indices, counter-clockwise
    boundary: np.ndarray    # (N,) bool

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        bnd = np.ascontiguousarray(self.boundary, dtype=bool)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise ValueError("nodes must have shape (N, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ValueError("triangles must have shape (M, 3)")
        if bnd.shape != (nodes.shape[0],):
            raise ValueError("boundary flags must have one entry per node")
        if tris.size and (tris.min() < 0 or tris.max() >= nodes.shape[0]):
            raise ValueError("triangle references a node that does not exist")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary", bnd)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.triangles.shape[0]

    @property
    def boundary_nodes(self):
        return np.flatnonzero(self.boundary)

    @property
    def interior_nodes(self):
        return np.flatnonzero(~self.boundary)

    def signed_areas(self):
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def h_max(self):
        p = self.nodes[self.triangles]
        edges = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return float(np.sqrt((edges ** 2).sum(-1)).max())

    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    def same_as(self, other):
        return (isinstance(other, Mesh2D)
                and self.nodes.shape == other.nodes.shape
                and self.triangles.shape == other.triangles.shape
                and np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.boundary, other.boundary))

    def locate(self, y):
        """Index of a triangle containing ``y`` and its barycentric weights."""
        y = np.asarray(y, dtype=float)
        p = self.nodes[self.triangles]
        T = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        rhs = y - p[:, 0]
        lam12 = np.linalg.solve(T, rhs[..., None])[..., 0]
        bary = np.column_stack([1.0 - lam12.sum(-1), lam12])
        score = bary.min(axis=1)
        e = int(np.argmax(score))
        if score[e] < -1e-9:
            raise ValueError(f"point {tuple(y)} lies outside the mesh")
        return e, bary[e]


def generate_mesh(n1, n2, y1_range=(0.0, 1.0), y2_range=(0.0, 1.0)):
    """Structured triangulation: each cell is cut along its (0,0)-(1,1) diagonal."""
    if n1 < 2 or n2 < 2:
        raise ValueError("mesh resolution must be at least 2 in each direction")
    y1 = np.linspace(y1_range[0], y1_range[1], n1 + 1)
    y2 = np.linspace(y2_range[0], y2_range[1], n2 + 1)
    Y1, Y2 = np.meshgrid(y1, y2, indexing="ij")
    nodes = np.column_stack([Y1.ravel(), Y2.ravel()])
    idx = np.arange((n1 + 1) * (n2 + 1)).reshape(n1 + 1, n2 + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[1:, :-1].ravel()
    v01 = idx[:-1, 1:].ravel()
    v11 = idx[1:, 1:].ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    tris = np.stack([lower, upper], axis=1).reshape(-1, 3)
    bnd = np.zeros_like(Y1, dtype=bool)
    bnd[0, :] = bnd[-1, :] = bnd[:, 0] = bnd[:, -1] = True
    return Mesh2D(nodes, tris, bnd.ravel())


def mesh_for_chart(chart, n1, n2):
    return generate_mesh(n1, n2, chart.y1_range, chart.y2_range)


def write_mesh(mesh: Mesh2D, path):
    lines = [f"nodes {mesh.n_nodes} elements {mesh.n_elements}"]
    for (a, b), flag in zip(mesh.nodes, mesh.boundary):
        lines.append(f"{a:.17g} {b:.17g} {int(flag)}")
    for i, j, k in mesh.triangles:
        lines.append(f"{i} {j} {k}")
    Path(path).write_text("\n".join(lines) + "\n")


def parse_mesh(text):
    """Parse the plain-text mesh format; node indices are 0-based."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise ValueError("empty mesh file")
    head = rows[0]
    if len(head) != 4 or head[0] != "nodes" or head[2] != "elements":
        raise ValueError("mesh header must read 'nodes N elements M'")
    n, m = int(head[1]), int(head[3])
    if len(rows) != 1 + n + m:
        raise ValueError(f"mesh file declares {n} nodes and {m} elements but has {len(rows) - 1} data lines")
    node_rows = rows[1:1 + n]
    if any(len(r) != 3 for r in node_rows):
        raise ValueError("node lines must read 'y1 y2 boundary_flag'")
    nodes = np.array([[float(r[0]), float(r[1])] for r in node_rows])
    flags = np.array([int(r[2]) != 0 for r in node_rows])
    elem_rows = rows[1 + n:]
    if any(len(r) != 3 for r in elem_rows):
        raise ValueError("element lines must read 'i j k'")
    tris = np.array([[int(v) for v in r] for r in elem_rows], dtype=np.int64).reshape(-1, 3)
    mesh = Mesh2D(nodes, tris, flags)
    if np.any(mesh.signed_areas() <= 0):
        raise ValueError("mesh contains triangles that are not positively oriented")
    return mesh


def read_mesh(path):
    return parse_mesh(Path(path).read_text())


@dataclass(frozen=True, eq=False)
class Mesh3D:
    """Extrusion of a base triangulation over x3 in [-1, 1].

    Node ``k * N + i`` sits above base node ``i`` at level ``z[k]``.
    """

    base: Mesh2D
    layers: int = 4

    def __post_init__(self):
        if int(self.layers) < 2:
            raise ValueError("at least two layers are required")
        object.__setattr__(self, "layers", int(self.layers))

    @property
    def z(self):
        return np.linspace(-1.0, 1.0, self.layers + 1)

    @property
    def n_nodes(self):
        return self.base.n_nodes * (self.layers + 1)

    @property
    def n_elements(self):
        return self.base.n_elements * self.layers

    @property
    def nodes(self):
        N = self.base.n_nodes
        y = np.tile(self.base.nodes, (self.layers + 1, 1))
        x3 = np.repeat(self.z, N)
        return np.column_stack([y, x3])

    @property
    def prisms(self):
        """(n_elements, 6): bottom triangle then top triangle, layer-major."""
        N = self.base.n_nodes
        t = self.base.triangles
        out = [np.hstack([t + k * N, t + (k + 1) * N]) for k in range(self.layers)]
        return np.vstack(out)

    @property
    def lateral(self):
        return np.tile(self.base.boundary, self.layers + 1)

    @property
    def top_nodes(self):
        N = self.base.n_nodes
        return np.arange(self.layers * N, (self.layers + 1) * N)
