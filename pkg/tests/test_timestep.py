import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from shellthermo.errors import SizeExceeded, SolveFailure
from shellthermo.loads import LoadCase, LoadSpec, spatial_profile, temporal_profile
from shellthermo.timestep import CoupledOperators, LoadTerm, TimeStepper, integrate, oracle_solve, step_count


def scalar_ops(m=1.0, k=4.0, g=0.0, c=1.0, kth=2.0, F=1.0, Q=0.0, fn=lambda t: 1.0):
    one = lambda x: sp.csr_matrix([[x]])
    return CoupledOperators(one(m), one(k), one(g), one(g), one(c), one(kth),
                            (LoadTerm(np.array([F]), np.array([Q]), fn),))


def random_ops(seed, nm=6, nt=4):
    rng = np.random.default_rng(seed)

    def spd(n):
        A = rng.normal(size=(n, n))
        return sp.csr_matrix(A @ A.T + n * np.eye(n))

    G = sp.csr_matrix(rng.normal(size=(nm, nt)))
    loads = (LoadTerm(rng.normal(size=nm), rng.normal(size=nt), temporal_profile("sine", period=0.3)),
             LoadTerm(rng.normal(size=nm), np.zeros(nt), temporal_profile("smoothstep", t_ramp=0.1)))
    return CoupledOperators(spd(nm), spd(nm), G, G.T.tocsr(), spd(nt), spd(nt), loads)


def test_undamped_oscillator_second_order():
    # m u'' + k u = F from rest: u = F/k (1 - cos w t)
    ops = scalar_ops()
    T, w = 1.0, 2.0
    errs = []
    for dt in (0.02, 0.01, 0.005):
        tr = integrate(ops, T, dt)
        errs.append(abs(tr.u[-1, 0] - 0.25 * (1 - math.cos(w * T))))
    assert 3.6 < errs[0] / errs[1] < 4.4
    assert 3.6 < errs[1] / errs[2] < 4.4


def test_heat_relaxation():
    # c th' + kth th = Q: th = Q/kth (1 - exp(-kth t / c))
    ops = scalar_ops(F=0.0, Q=3.0)
    tr = integrate(ops, 1.0, 0.001)
    assert tr.theta[-1, 0] == pytest.approx(1.5 * (1 - math.exp(-2.0)), rel=1e-5)
    assert np.all(tr.u == 0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_ledger_closes_for_random_systems(seed):
    ops = random_ops(seed)
    tr = integrate(ops, 0.5, 0.01)
    assert np.max(tr.ledger.relative_residual) < 1e-10
    assert np.all(np.diff(tr.ledger.dissipated) >= 0)


def test_damped_scheme_loses_energy_without_loads():
    ops = random_ops(3)
    quiet = ops.with_loads((LoadTerm(ops.loads[0].mech, ops.loads[0].therm,
                                     temporal_profile("switch_off", t_ramp=0.05, t_off=0.2)),))
    tr = integrate(quiet, 1.0, 0.01, scheme="damped")
    after = tr.ledger.t > 0.21
    assert np.all(np.diff(tr.ledger.total[after]) <= 1e-14)


def test_oracle_matches_midpoint():
    ops = random_ops(11, nm=4, nt=2)
    u, v, th = oracle_solve(ops, 0.3, 1e-4)
    tr = integrate(ops, 0.3, 1e-3)
    assert np.max(np.abs(tr.u[-1] - u)) < 1e-4 * max(1.0, np.max(np.abs(u)))
    assert np.max(np.abs(tr.theta[-1] - th)) < 1e-4 * max(1.0, np.max(np.abs(th)))


def test_oracle_size_limit():
    n = 401
    I = sp.identity(n, format="csr")
    Z = sp.csr_matrix((n, 1))
    ops = CoupledOperators(I, I, Z, Z.T.tocsr(), sp.identity(1, format="csr"), sp.identity(1, format="csr"))
    with pytest.raises(SizeExceeded):
        oracle_solve(ops, 1.0, 0.1)


def test_singular_step_matrix():
    Z = sp.csr_matrix((2, 2))
    ops = CoupledOperators(Z, Z, sp.csr_matrix((2, 1)), sp.csr_matrix((1, 2)),
                           sp.identity(1, format="csr"), sp.identity(1, format="csr"))
    with pytest.raises(SolveFailure):
        TimeStepper(ops, 0.1)


def test_step_count_and_records():
    assert step_count(1.0, 0.3) == (4, 0.25)
    assert step_count(1.0, 0.1)[0] == 10
    with pytest.raises(ValueError):
        step_count(1.0, 1.0)
    ops = scalar_ops()
    tr = integrate(ops, 1.0, 0.1, stride=4, record_times=(0.5,))
    np.testing.assert_allclose(tr.times, [0.0, 0.4, 0.5, 0.8, 1.0])
    assert len(tr.ledger.t) == 11
    with pytest.raises(ValueError):
        integrate(ops, 1.0, 0.1, record_times=(0.55,))
    with pytest.raises(KeyError):
        tr.index_of(0.3)


def test_temporal_profiles():
    assert temporal_profile("zero")(0.7) == 0.0
    assert temporal_profile("ramp", t_ramp=0.5)(0.25) == 0.5
    s = temporal_profile("smoothstep", t_ramp=1.0)
    assert s(0.0) == 0.0 and s(0.5) == 0.5 and s(2.0) == 1.0
    off = temporal_profile("switch_off", t_ramp=0.1, t_off=0.5)
    assert off(0.4) == 1.0 and off(0.5) == 0.0
    assert temporal_profile("sine", period=2.0)(0.5) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        temporal_profile("square")


def test_spatial_profiles():
    y = np.array([[0.0, 0.0], [-1.0, 0.0], [0.5, 0.25]])
    b = spatial_profile("bubble", y, (-1.0, 1.0), (-1.0, 1.0))
    assert b[0] == 1.0 and b[1] == 0.0
    assert b[2] == pytest.approx(16 * 0.75 * 0.25 * 0.625 * 0.375)
    assert np.all(spatial_profile("uniform", y, (-1, 1), (-1, 1)) == 1.0)


def test_load_validation():
    assert LoadCase().violations() == []
    bad = LoadCase(h=LoadSpec("uniform", "constant"))
    assert any("t = 0" in p for p in bad.violations())
    assert LoadSpec("bubble", "wobble").violations()
    assert LoadSpec("uniform", "constant", amplitude=0.0).is_zero
