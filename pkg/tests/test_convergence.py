import math

import numpy as np
import pytest

from shellthermo import convergence, membrane
from shellthermo.convergence import (ConvergenceReport, SweepConfig, averaged_field_convergence, descale,
                                     discrete_residual, run_sweep, slopes_csv)
from shellthermo.errors import IncompatibleMeshes, InsufficientData
from shellthermo.geometry import SphereCap
from shellthermo.loads import LoadCase, LoadSpec
from shellthermo.material import MaterialParams
from shellthermo.mesh import Mesh3D, mesh_for_chart

CHART = SphereCap(2.0)


def small(**kw):
    base = dict(chart=CHART, material=MaterialParams(), loads=LoadCase(), mesh=(4, 4), layers=2,
                T=0.1, dt=0.02, eps_list=(0.2, 0.1, 0.05), sample_times=(0.06, 0.1), floor_factor=2.0)
    base.update(kw)
    return SweepConfig(**base)


def test_zero_loads_give_zero_errors():
    rep = run_sweep(small())
    for f in convergence.FIELDS:
        assert np.all(rep.errors[f] == 0.0)
    for f in convergence.AVG_FIELDS:
        assert np.all(rep.averaged[f] == 0.0)
    table = averaged_field_convergence(rep)
    assert all(math.isnan(s) for v in table["slopes"].values() for s in v)
    assert len(table["flags"]) == len(table["slopes"]) * 2
    assert "nan" in slopes_csv(table)


def test_uncoupled_sweep_has_no_temperature_error():
    rep = run_sweep(small(material=MaterialParams(alpha_T=0.0),
                          loads=LoadCase(f=LoadSpec("bubble", "smoothstep", t_ramp=0.05))))
    assert np.all(rep.errors["err_theta_L2"] == 0.0)
    assert np.all(rep.errors["err_theta_H1s"] == 0.0)
    assert np.all(rep.errors["err_u3_L2"] > 0)


@pytest.fixture(scope="module")
def loaded_report():
    loads = LoadCase(f=LoadSpec("bubble", "smoothstep", t_ramp=0.05), q=LoadSpec("bubble", "smoothstep", t_ramp=0.05))
    return run_sweep(small(loads=loads))


def test_report_layout(loaded_report):
    rep = loaded_report
    assert rep.floor_eps == pytest.approx(0.025)
    assert len(rep.transverse_dissipation) == 3
    for f in convergence.FIELDS:
        assert rep.errors[f].shape == (3, 2) and np.all(rep.errors[f] >= 0)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "eps,t_sample,err_u_tan_H1,err_u3_L2,err_theta_L2,err_theta_H1s"
    assert len(lines) == 1 + 3 * 2
    first = lines[1].split(",")
    assert first[0] == format(0.2, ".17g") and float(first[2]) == rep.errors["err_u_tan_H1"][0, 0]
    d = rep.to_dict()
    assert set(d["monotone"]) == set(convergence.FIELDS + convergence.AVG_FIELDS)
    assert d["config"]["mesh"] == [4, 4]


def test_threads_do_not_change_results(loaded_report):
    loads = LoadCase(f=LoadSpec("bubble", "smoothstep", t_ramp=0.05), q=LoadSpec("bubble", "smoothstep", t_ramp=0.05))
    par = run_sweep(small(loads=loads, workers=3))
    assert par.to_csv() == loaded_report.to_csv()
    assert par.to_json() == loaded_report.to_json()


def test_slope_arithmetic():
    eps = [0.4, 0.2, 0.1, 0.05]
    errs = {f: np.array([[3.0 ** -k] for k in range(4)]) for f in convergence.FIELDS}
    avg = {f: np.array([[2.0 ** -k] for k in range(4)]) for f in convergence.AVG_FIELDS}
    rep = ConvergenceReport(eps, [1.0], errs, avg)
    s = averaged_field_convergence(rep)["slopes"]
    assert s["err_u3_L2"][0] == pytest.approx(math.log(3) / math.log(2))
    assert s["avg_theta_L2"][0] == pytest.approx(1.0)
    assert all(rep.monotone()[f] == [True] for f in convergence.FIELDS)


def test_insufficient_data():
    errs = {f: np.ones((2, 1)) for f in convergence.FIELDS}
    avg = {f: np.ones((2, 1)) for f in convergence.AVG_FIELDS}
    rep = ConvergenceReport([0.2, 0.1], [1.0], errs, avg)
    with pytest.raises(InsufficientData):
        averaged_field_convergence(rep)
    assert averaged_field_convergence(rep, strict=False)["flags"] == ["insufficient_data"]


def test_mesh_mismatch():
    m = mesh_for_chart(CHART, 4, 4)
    other = Mesh3D(mesh_for_chart(CHART, 5, 4), 2)
    with pytest.raises(IncompatibleMeshes):
        run_sweep(small(), m, other)


def test_sweep_validation():
    assert small(eps_list=(0.1, 0.2, 0.05)).violations()
    assert small(sample_times=(0.5,)).violations()
    with pytest.raises(ValueError):
        run_sweep(small(eps_list=()))


@pytest.fixture(scope="module")
def membrane_run():
    mesh = mesh_for_chart(CHART, 5, 5)
    loads = LoadCase(f=LoadSpec("uniform", "ramp", amplitude=0.7), h=LoadSpec("uniform", "ramp", amplitude=0.4),
                     q=LoadSpec("bubble", "sine"))
    sys2 = membrane.assemble(mesh, CHART, MaterialParams(), loads)
    return sys2, loads, membrane.simulate(sys2, 0.2, 0.01)


def test_descale_is_field_identity(membrane_run):
    sys2, loads, tr = membrane_run
    for eps in (1.0, 0.3, 0.01):
        d = descale(sys2, tr, eps, loads)
        assert d.xi is tr.u and d.zeta is tr.theta


def test_descale_unit_eps_reproduces_scaled_residual(membrane_run):
    sys2, loads, tr = membrane_run
    d = descale(sys2, tr, 1.0, loads)
    assert d.residual == d.residual_scaled
    d = descale(sys2, tr, 0.1, loads)
    assert d.residual == pytest.approx(0.1 * d.residual_scaled, rel=1e-6, abs=1e-18)
    assert d.relative_residual < 1e-10


def test_descaled_load_resultants(membrane_run):
    # constant f through the thickness: F^eps = 2 eps f + eps h, integrated over the cap
    sys2, loads, tr = membrane_run
    eps = 0.05
    d = descale(sys2, tr, eps, loads)
    N = sys2.mesh.n_nodes
    (a1, b1), (a2, b2) = CHART.param_domain
    area = CHART.radius ** 2 * (b1 - a1) * (math.sin(b2) - math.sin(a2))
    assert d.F_eps[0][2 * N:].sum() == pytest.approx(2 * eps * 0.7 * area, rel=1e-4)
    assert d.F_eps[1][2 * N:].sum() == pytest.approx(eps * 0.4 * area, rel=1e-4)
    with pytest.raises(ValueError):
        descale(sys2, tr, 0.0, loads)


def test_discrete_residual_needs_every_step(membrane_run):
    sys2, _, _ = membrane_run
    sparse = membrane.simulate(sys2, 0.2, 0.01, stride=5)
    with pytest.raises(ValueError):
        discrete_residual(sys2.ops, sparse)
