"""Midsurface charts and the differential geometry of the surface they define.

All evaluation routines are vectorised: a parameter array ``y`` of shape
``(..., 2)`` yields frame arrays with the same leading shape.  Index order
follows the tensor notation literally, e.g. ``christoffel[..., s, a, b]`` is
Gamma^s_{ab} and ``b_mixed[..., b, a]`` is b^b_a (upper index first).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateChart

# Minimum |a_1 x a_2| accepted before the chart is declared degenerate.
DEGENERACY_TOL = 1e-10
# Step of the 4th-order central difference used for d_a b^s_b.
CURVATURE_FD_STEP = 1e-5


class Chart:
    """Analytic chart y -> theta(y) of the middle surface.

    Subclasses implement :meth:`jet`, returning theta, its first partials
    stacked as ``(..., 2, 3)`` and second partials as ``(..., 2, 2, 3)``.
    """

    name = "chart"

    def __init__(self, y1_range=(-0.5, 0.5), y2_range=(-0.5, 0.5)):
        self.y1_range = (float(y1_range[0]), float(y1_range[1]))
        self.y2_range = (float(y2_range[0]), float(y2_range[1]))
        if not (self.y1_range[0] < self.y1_range[1] and self.y2_range[0] < self.y2_range[1]):
            raise ValueError("parameter ranges must be non-empty intervals")

    @property
    def param_domain(self):
        return (self.y1_range, self.y2_range)

    def jet(self, y):
        raise NotImplementedError

    def eval(self, y):
        return self.jet(y)[0]

    def eval_d1(self, y):
        return self.jet(y)[1][..., 0, :]

    def eval_d2(self, y):
        return self.jet(y)[1][..., 1, :]

    def eval_d11(self, y):
        return self.jet(y)[2][..., 0, 0, :]

    def eval_d12(self, y):
        return self.jet(y)[2][..., 0, 1, :]

    def eval_d22(self, y):
        return self.jet(y)[2][..., 1, 1, :]

    def contains(self, y, tol=1e-12):
        y = np.asarray(y, dtype=float)
        (a1, b1), (a2, b2) = self.param_domain
        return bool(
            np.all(y[..., 0] >= a1 - tol) and np.all(y[..., 0] <= b1 + tol)
            and np.all(y[..., 1] >= a2 - tol) and np.all(y[..., 1] <= b2 + tol)
        )

    def params(self):
        return {"y1_range": list(self.y1_range), "y2_range": list(self.y2_range)}

    def __repr__(self):
        return f"{type(self).__name__}({self.params()})"


class PlaneChart(Chart):
    """theta(y) = (y1, y2, 0); normal +e3. Not elliptic, used for exact checks."""

    name = "plane"

    def jet(self, y):
        y = np.asarray(y, dtype=float)
        shape = y.shape[:-1]
        theta = np.zeros(shape + (3,))
        theta[..., 0] = y[..., 0]
        theta[..., 1] = y[..., 1]
        d = np.zeros(shape + (2, 3))
        d[..., 0, 0] = 1.0
        d[..., 1, 1] = 1.0
        dd = np.zeros(shape + (2, 2, 3))
        return theta, d, dd


class EllipsoidCap(Chart):
    """Patch of the ellipsoid x^2/A^2 + y^2/B^2 + z^2/C^2 = 1.

    y1 is the longitude and y2 the latitude:
    theta = (A cos y2 cos y1, B cos y2 sin y1, C sin y2).  With this parameter
    order a_1 x a_2 points outwards, so b_ab is negative definite.  The
    latitude range must stay away from the poles (|y2| < pi/2).
    """

    name = "ellipsoid_cap"

    def __init__(self, semi_axes=(1.0, 1.0, 0.5), y1_range=(-0.6, 0.6), y2_range=(-0.6, 0.6)):
        super().__init__(y1_range, y2_range)
        self.semi_axes = tuple(float(s) for s in semi_axes)
        if len(self.semi_axes) != 3 or min(self.semi_axes) <= 0:
            raise ValueError("semi_axes must be three positive lengths")
        if max(abs(self.y2_range[0]), abs(self.y2_range[1])) >= 0.5 * np.pi:
            raise ValueError("latitude range must exclude the poles")

    def jet(self, y):
        y = np.asarray(y, dtype=float)
        s = np.asarray(self.semi_axes)
        c1, s1 = np.cos(y[..., 0]), np.sin(y[..., 0])
        c2, s2 = np.cos(y[..., 1]), np.sin(y[..., 1])
        z = np.zeros_like(c1)
        theta = np.stack([c2 * c1, c2 * s1, s2], axis=-1) * s
        d1 = np.stack([-c2 * s1, c2 * c1, z], axis=-1) * s
        d2 = np.stack([-s2 * c1, -s2 * s1, c2], axis=-1) * s
        d11 = np.stack([-c2 * c1, -c2 * s1, z], axis=-1) * s
        d12 = np.stack([s2 * s1, -s2 * c1, z], axis=-1) * s
        d22 = np.stack([-c2 * c1, -c2 * s1, -s2], axis=-1) * s
        d = np.stack([d1, d2], axis=-2)
        dd = np.stack([np.stack([d11, d12], axis=-2), np.stack([d12, d22], axis=-2)], axis=-3)
        return theta, d, dd

    def params(self):
        out = super().params()
        out["semi_axes"] = list(self.semi_axes)
        return out


class SphereCap(EllipsoidCap):
    """Spherical patch of radius R in longitude/latitude coordinates (outward normal)."""

    name = "sphere_cap"

    def __init__(self, radius=1.0, y1_range=(-0.6, 0.6), y2_range=(-0.6, 0.6)):
        super().__init__((radius, radius, radius), y1_range, y2_range)
        self.radius = float(radius)

    def params(self):
        out = Chart.params(self)
        out["radius"] = self.radius
        return out


class CallableChart(Chart):
    """User chart built from plain callables.

    ``theta``, ``d1`` ... ``d22`` each map an array ``(..., 2)`` to
    ``(..., 3)``.  The curvature sign follows from the user's parameter order.
    """

    def __init__(self, name, theta, d1, d2, d11, d12, d22, y1_range, y2_range):
        super().__init__(y1_range, y2_range)
        self.name = name
        self._f = (theta, d1, d2, d11, d12, d22)

    def jet(self, y):
        y = np.asarray(y, dtype=float)
        theta, d1, d2, d11, d12, d22 = (np.asarray(f(y), dtype=float) for f in self._f)
        d = np.stack([d1, d2], axis=-2)
        dd = np.stack([np.stack([d11, d12], axis=-2), np.stack([d12, d22], axis=-2)], axis=-3)
        return theta, d, dd


BUILTIN_CHARTS = {"plane": PlaneChart, "sphere_cap": SphereCap, "ellipsoid_cap": EllipsoidCap}


def make_chart(name, **params):
    try:
        cls = BUILTIN_CHARTS[name]
    except KeyError:
        raise ValueError(
            f"unknown chart {name!r}; available: {', '.join(sorted(BUILTIN_CHARTS))}"
        ) from None
    if cls is PlaneChart:
        params = {k: v for k, v in params.items() if k in ("y1_range", "y2_range")}
    elif cls is SphereCap:
        params = {k: v for k, v in params.items() if k in ("radius", "y1_range", "y2_range")}
    else:
        params = {k: v for k, v in params.items() if k in ("semi_axes", "y1_range", "y2_range")}
    return cls(**params)


@dataclass(frozen=True)
class GeometryFrame:
    y: np.ndarray
    theta: np.ndarray
    a_cov: np.ndarray         # (..., 2, 3)   a_alpha
    a3: np.ndarray            # (..., 3)
    a_contra: np.ndarray      # (..., 2, 3)   a^alpha
    a_lower: np.ndarray       # (..., 2, 2)
    a_upper: np.ndarray       # (..., 2, 2)
    b_lower: np.ndarray       # (..., 2, 2)
    b_mixed: np.ndarray       # (..., 2, 2)   [b, a] -> b^b_a
    christoffel: np.ndarray   # (..., 2, 2, 2) [s, a, b] -> Gamma^s_ab
    sqrt_a: np.ndarray        # (...)
    da_cov: np.ndarray        # (..., 2, 2, 3) [a, b] -> d_b a_a
    b_mixed_deriv: np.ndarray = field(default=None)  # (..., 2, 2, 2) [a, s, b] -> d_a b^s_b
    b_cov_deriv: np.ndarray = field(default=None)    # (..., 2, 2, 2) [s, b, a] -> b^s_b|_a

    @property
    def det_a(self):
        return self.sqrt_a ** 2


def _core(chart, y):
    theta, d, dd = chart.jet(y)
    cross = np.cross(d[..., 0, :], d[..., 1, :])
    norm = np.linalg.norm(cross, axis=-1)
    if np.any(~(norm >= DEGENERACY_TOL)):
        raise DegenerateChart(
            f"chart {chart.name!r}: |a_1 x a_2| below {DEGENERACY_TOL:g} (min {np.min(norm):.3e})"
        )
    a3 = cross / norm[..., None]
    a_lower = np.einsum("...ai,...bi->...ab", d, d)
    a_upper = np.linalg.inv(a_lower)
    a_upper = 0.5 * (a_upper + np.swapaxes(a_upper, -1, -2))
    a_contra = np.einsum("...sb,...bi->...si", a_upper, d)
    b_lower = np.einsum("...i,...abi->...ab", a3, dd)
    christoffel = np.einsum("...si,...abi->...sab", a_contra, dd)
    b_mixed = np.einsum("...bs,...sa->...ba", a_upper, b_lower)
    return dict(
        theta=theta, a_cov=d, a3=a3, a_contra=a_contra, a_lower=a_lower, a_upper=a_upper,
        b_lower=b_lower, b_mixed=b_mixed, christoffel=christoffel, sqrt_a=norm, da_cov=dd,
    )


def _b_mixed_derivative(chart, y, h=CURVATURE_FD_STEP):
    out = []
    for alpha in range(2):
        e = np.zeros(2)
        e[alpha] = h
        bp1 = _core(chart, y + e)["b_mixed"]
        bm1 = _core(chart, y - e)["b_mixed"]
        bp2 = _core(chart, y + 2 * e)["b_mixed"]
        bm2 = _core(chart, y - 2 * e)["b_mixed"]
        out.append((-bp2 + 8.0 * bp1 - 8.0 * bm1 + bm2) / (12.0 * h))
    return np.stack(out, axis=-3)


def eval_frame(chart, y, *, curvature_derivatives=True):
    """All first/second fundamental form data of the chart at ``y``.

    ``b_cov_deriv`` (b^s_b|_a) needs d_a b^s_b, obtained from fourth-order
    central differences of b^s_b with step 1e-5; pass
    ``curvature_derivatives=False`` to skip it.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != 2:
        raise ValueError("y must have trailing dimension 2")
    if not chart.contains(y):
        raise ValueError("evaluation point outside the chart's parameter domain")
    data = _core(chart, y)
    if curvature_derivatives:
        db = _b_mixed_derivative(chart, y)
        chris = data["christoffel"]
        bm = data["b_mixed"]
        term1 = np.moveaxis(db, -3, -1)  # [a, s, b] -> [s, b, a]
        term2 = np.einsum("...sat,...tb->...sba", chris, bm)
        term3 = np.einsum("...tab,...st->...sba", chris, bm)
        data["b_mixed_deriv"] = db
        data["b_cov_deriv"] = term1 + term2 - term3
    return GeometryFrame(y=y, **data)


@dataclass
class EllipticityReport:
    kappa_min: float
    kappa_max: float
    same_sign: bool
    uniform_elliptic: bool
    grid_resolution: tuple
    threshold: float
    chart: str = ""
    curvature_sign: int = 0

    def to_dict(self):
        d = asdict(self)
        d["grid_resolution"] = list(self.grid_resolution)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def interior_grid(chart, n1, n2):
    """Uniform tensor grid inset by one cell from the boundary, shape (n1, n2, 2)."""
    (a1, b1), (a2, b2) = chart.param_domain
    t1 = a1 + (b1 - a1) * np.arange(1, n1 + 1) / (n1 + 1)
    t2 = a2 + (b2 - a2) * np.arange(1, n2 + 1) / (n2 + 1)
    Y1, Y2 = np.meshgrid(t1, t2, indexing="ij")
    return np.stack([Y1, Y2], axis=-1)


def principal_curvatures(frame):
    """Eigenvalues of the pencil b v = kappa a v, ascending, shape (..., 2)."""
    L = np.linalg.cholesky(frame.a_lower)
    Linv = np.linalg.inv(L)
    S = Linv @ frame.b_lower @ np.swapaxes(Linv, -1, -2)
    return np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, -1, -2)))


def check_elliptic(chart, grid=(16, 16), threshold=1e-6):
    n1, n2 = grid
    if n1 < 8 or n2 < 8:
        raise ValueError("ellipticity check needs at least 8x8 interior samples")
    frame = eval_frame(chart, interior_grid(chart, n1, n2), curvature_derivatives=False)
    kappa = principal_curvatures(frame)
    absk = np.abs(kappa)
    pos = np.all(kappa > 0.0)
    neg = np.all(kappa < 0.0)
    same_sign = bool(pos or neg)
    kmin = float(absk.min())
    return EllipticityReport(
        kappa_min=kmin,
        kappa_max=float(absk.max()),
        same_sign=same_sign,
        uniform_elliptic=bool(same_sign and kmin > threshold),
        grid_resolution=(int(n1), int(n2)),
        threshold=float(threshold),
        chart=chart.name,
        curvature_sign=1 if pos else (-1 if neg else 0),
    )


@dataclass
class FrameResidual:
    b_rel: float
    christoffel_rel: float

    @property
    def max_rel(self):
        return max(self.b_rel, self.christoffel_rel)


def _rel(diff, ref):
    scale = float(np.max(np.abs(ref))) if np.size(ref) else 0.0
    err = float(np.max(np.abs(diff))) if np.size(diff) else 0.0
    if scale == 0.0:
        return err
    return err / scale


def fd_validate_frame(chart, y, h=1e-4):
    """Rebuild b_ab and Gamma^s_ab from central differences of a_alpha and a_3.

    b_ab is recovered through the Weingarten route -a_alpha . d_b a_3 and the
    Christoffel symbols from a^s . d_b a_a, so neither uses the chart's second
    derivatives.
    """
    y = np.asarray(y, dtype=float)
    if not 1e-6 <= h <= 1e-3:
        raise ValueError("finite-difference step must lie in [1e-6, 1e-3]")
    (a1, b1), (a2, b2) = chart.param_domain
    if (np.any(y[..., 0] - 2 * h <= a1) or np.any(y[..., 0] + 2 * h >= b1)
            or np.any(y[..., 1] - 2 * h <= a2) or np.any(y[..., 1] + 2 * h >= b2)):
        raise ValueError("validation point closer than 2h to the boundary")
    frame = eval_frame(chart, y, curvature_derivatives=False)
    da = []
    da3 = []
    for beta in range(2):
        e = np.zeros(2)
        e[beta] = h
        p = _core(chart, y + e)
        m = _core(chart, y - e)
        da.append((p["a_cov"] - m["a_cov"]) / (2 * h))   # (..., 2[a], 3)
        da3.append((p["a3"] - m["a3"]) / (2 * h))        # (..., 3)
    da = np.stack(da, axis=-2)    # (..., a, b, 3) = d_b a_a
    da3 = np.stack(da3, axis=-2)  # (..., b, 3)
    b_fd = -np.einsum("...ai,...bi->...ab", frame.a_cov, da3)
    chris_fd = np.einsum("...si,...abi->...sab", frame.a_contra, da)
    return FrameResidual(
        b_rel=_rel(b_fd - frame.b_lower, frame.b_lower),
        christoffel_rel=_rel(chris_fd - frame.christoffel, frame.christoffel),
    )
