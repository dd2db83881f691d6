import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import flattened_min_eig
from shellthermo.errors import SymmetryViolation
from shellthermo.geometry import EllipsoidCap, PlaneChart, SphereCap, eval_frame, interior_grid
from shellthermo.material import (CouplingCoefficients, MaterialParams, check_symmetries, ellipticity_estimate,
                                  isotropic_tensor, limit_tensor3d, membrane_tensor, scaled_tensor3d, voigt_matrix)
from shellthermo.scaled3d import scaled_frame_from_surface


def test_flat_membrane_tensor_eigenvalues():
    mat = MaterialParams(lam=1.5, mu=0.7)
    fr = eval_frame(PlaneChart(), np.array([0.1, 0.2]))
    a = membrane_tensor(fr, mat)
    c = 4 * mat.lam * mat.mu / (mat.lam + 2 * mat.mu)
    # deviatoric part sees 4 mu, the identity direction 2c + 4 mu
    w = np.linalg.eigvalsh(voigt_matrix(a))
    np.testing.assert_allclose(w, sorted([4 * mat.mu, 4 * mat.mu, 2 * c + 4 * mat.mu]), rtol=1e-13)
    assert ellipticity_estimate(a) == pytest.approx(flattened_min_eig(a), abs=1e-12)
    assert ellipticity_estimate(a) == pytest.approx(4 * mat.mu, rel=1e-13)


def test_limit_tensor_matches_isotropic_form():
    # A(0) filled class by class equals the isotropic tensor of the metric diag(a^ab, 1)
    fr = eval_frame(EllipsoidCap(), interior_grid(EllipsoidCap(), 4, 4))
    g = np.zeros(fr.a_upper.shape[:-2] + (3, 3))
    g[..., :2, :2] = fr.a_upper
    g[..., 2, 2] = 1.0
    mat = MaterialParams(lam=2.0, mu=0.5)
    np.testing.assert_allclose(limit_tensor3d(fr, mat), isotropic_tensor(g, mat.lam, mat.mu), atol=1e-13)


def test_scaled_tensor_approaches_limit():
    fr = eval_frame(SphereCap(), interior_grid(SphereCap(), 4, 4))
    mat = MaterialParams()
    A0 = limit_tensor3d(fr, mat)
    gaps = [np.max(np.abs(scaled_tensor3d(scaled_frame_from_surface(fr, 1.0, e), mat) - A0)) for e in (1e-2, 1e-3)]
    assert gaps[1] < gaps[0] / 5


def test_symmetries_checked():
    fr = eval_frame(SphereCap(), np.array([0.1, 0.1]))
    a = membrane_tensor(fr, MaterialParams())
    check_symmetries(a)
    bad = a.copy()
    bad[0, 1, 0, 0] += 1e-3
    with pytest.raises(SymmetryViolation):
        check_symmetries(bad)
    with pytest.raises(SymmetryViolation):
        ellipticity_estimate(bad)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.1, 5.0),
       st.lists(st.floats(-1.0, 1.0), min_size=9, max_size=9))
def test_voigt_matches_flattened_oracle(lam, mu, entries):
    B = np.array(entries).reshape(3, 3) + 2.0 * np.eye(3)
    g = np.linalg.inv(B @ B.T)
    A = isotropic_tensor(g, lam, mu)
    est = ellipticity_estimate(A)
    assert est > 0
    assert abs(est - flattened_min_eig(A)) < 1e-10 * max(1.0, abs(est))


def test_coefficients():
    mat = MaterialParams(lam=2.0, mu=1.0, alpha_T=0.5, beta=3.0)
    c = CouplingCoefficients.from_material(mat)
    assert c.duhamel == pytest.approx(0.5 * 8.0)
    assert c.mech_thermal == pytest.approx(4 * 0.5 * 1.0 * 8.0 / 4.0)
    assert c.heat_capacity_eff == pytest.approx(2 * (3.0 + 16.0 / 4.0))
    z = CouplingCoefficients.from_material(MaterialParams(alpha_T=0.0))
    assert z.duhamel == 0 and z.mech_thermal == 0 and z.heat_capacity_eff == 2.0


@pytest.mark.parametrize("kw", [dict(mu=0.0), dict(lam=-1.0), dict(rho=0.0), dict(k=-1.0), dict(beta=0.0)])
def test_invalid_material(kw):
    with pytest.raises(ValueError):
        MaterialParams(**kw)
