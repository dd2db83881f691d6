"""Material constants and constitutive tensors.

Tensors are returned with the point axes first and the four tensor indices
last, e.g. ``(..., 2, 2, 2, 2)`` for the membrane tensor.  All quantities are
SI; there is no nondimensionalisation layer.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import SymmetryViolation


@dataclass(frozen=True)
class MaterialParams:
    rho: float = 1.0
    lam: float = 1.0
    mu: float = 1.0
    alpha_T: float = 0.1
    k: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("invalid material: " + "; ".join(problems))

    def violations(self):
        out = []
        if not self.mu > 0:
            out.append("mu must be > 0")
        if not self.lam >= 0:
            out.append("lambda must be >= 0")
        if not self.rho > 0:
            out.append("rho must be > 0")
        if not self.k > 0:
            out.append("k must be > 0")
        if not self.beta > 0:
            out.append("beta must be > 0")
        if not self.alpha_T >= 0:
            out.append("alpha_T must be >= 0")
        return out

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class CouplingCoefficients:
    mech_thermal: float       # 4 alpha_T mu (3 lam + 2 mu) / (lam + 2 mu)
    heat_capacity_eff: float  # 2 (beta + alpha_T^2 (3 lam + 2 mu)^2 / (lam + 2 mu))
    duhamel: float            # alpha_T (3 lam + 2 mu)

    @classmethod
    def from_material(cls, mat: MaterialParams):
        lam, mu, aT = mat.lam, mat.mu, mat.alpha_T
        duhamel = aT * (3 * lam + 2 * mu)
        return cls(
            mech_thermal=4.0 * aT * mu * (3 * lam + 2 * mu) / (lam + 2 * mu),
            heat_capacity_eff=2.0 * (mat.beta + duhamel ** 2 / (lam + 2 * mu)),
            duhamel=duhamel,
        )


def isotropic_tensor(g_upper, lam, mu):
    """lam g^ij g^kl + mu (g^ik g^jl + g^il g^jk) for any dimension."""
    g = np.asarray(g_upper)
    return (lam * np.einsum("...ij,...kl->...ijkl", g, g)
            + mu * (np.einsum("...ik,...jl->...ijkl", g, g)
                    + np.einsum("...il,...jk->...ijkl", g, g)))


def membrane_tensor(frame, mat: MaterialParams):
    """Two-dimensional membrane tensor a^{abst} at the frame's points."""
    a = frame.a_upper
    lam, mu = mat.lam, mat.mu
    c = 4.0 * lam * mu / (lam + 2.0 * mu)
    return (c * np.einsum("...ab,...st->...abst", a, a)
            + 2.0 * mu * (np.einsum("...as,...bt->...abst", a, a)
                          + np.einsum("...at,...bs->...abst", a, a)))


def limit_tensor3d(frame, mat: MaterialParams):
    """A^{ijkl}(0), filled component class by component class."""
    a = frame.a_upper
    lam, mu = mat.lam, mat.mu
    A = np.zeros(a.shape[:-2] + (3, 3, 3, 3))
    A[..., :2, :2, :2, :2] = (lam * np.einsum("...ab,...st->...abst", a, a)
                              + mu * (np.einsum("...as,...bt->...abst", a, a)
                                      + np.einsum("...at,...bs->...abst", a, a)))
    A[..., :2, :2, 2, 2] = lam * a
    A[..., 2, 2, :2, :2] = lam * a
    # A^{a3s3}(0) = mu a^{as} together with its minor-symmetric copies
    A[..., :2, 2, :2, 2] = mu * a
    A[..., 2, :2, :2, 2] = mu * a
    A[..., :2, 2, 2, :2] = mu * a
    A[..., 2, :2, 2, :2] = mu * a
    A[..., 2, 2, 2, 2] = lam + 2.0 * mu
    return A


def scaled_tensor3d(sframe, mat: MaterialParams):
    """A^{ijkl}(eps) from the contravariant metric of the scaled frame."""
    return isotropic_tensor(sframe.g_upper, mat.lam, mat.mu)


def _voigt_basis(d):
    pairs = [(i, i) for i in range(d)] + [(i, j) for i in range(d) for j in range(i + 1, d)]
    E = np.zeros((len(pairs), d, d))
    for n, (i, j) in enumerate(pairs):
        if i == j:
            E[n, i, i] = 1.0
        else:
            E[n, i, j] = E[n, j, i] = 1.0 / np.sqrt(2.0)
    return E


def check_symmetries(tensor, tol=1e-10):
    T = np.asarray(tensor)
    scale = max(1.0, float(np.max(np.abs(T))))
    checks = {
        "minor (ij)": np.swapaxes(T, -4, -3),
        "minor (kl)": np.swapaxes(T, -2, -1),
        "major": np.moveaxis(T, (-4, -3), (-2, -1)),
    }
    for label, Tp in checks.items():
        dev = float(np.max(np.abs(Tp - T)))
        if dev > tol * scale:
            raise SymmetryViolation(f"{label} symmetry broken by {dev:.3e}")


def voigt_matrix(tensor):
    """Matrix of the tensor on symmetric matrices in an orthonormal basis.

    Off-diagonal basis elements carry 1/sqrt(2) so that the matrix
    eigenvalues are the operator eigenvalues for the Frobenius inner product.
    """
    T = np.asarray(tensor)
    E = _voigt_basis(T.shape[-1])
    return np.einsum("Iij,...ijkl,Jkl->...IJ", E, T, E)


def ellipticity_estimate(tensor, tol=1e-10):
    """Smallest eigenvalue of the tensor acting on symmetric matrices."""
    check_symmetries(tensor, tol)
    V = voigt_matrix(tensor)
    return np.linalg.eigvalsh(0.5 * (V + np.swapaxes(V, -1, -2)))[..., 0]
