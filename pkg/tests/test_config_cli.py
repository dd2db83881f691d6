import csv
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shellthermo import cli
from shellthermo.config import RunConfig, parse_config, read_config, serialize
from shellthermo.errors import ParseError, ValidationError

SMALL = """
[mesh]
n1 = 4
n2 = 4
layers = 2

[time]
T = 0.1
dt = 0.02
"""


def test_empty_config_is_default():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.chart.name == "sphere_cap" and cfg.chart.radius == 2.0
    assert cfg.sample_times() == (0.5, 1.0)


def test_dt_not_below_T_names_time_section():
    with pytest.raises(ValidationError) as info:
        parse_config("[time]\nT = 0.1\ndt = 0.1\n")
    assert any(e.startswith("[time]") and "dt" in e for e in info.value.errors)


def test_unknown_chart_lists_available():
    with pytest.raises(ValidationError) as info:
        parse_config('[chart]\nname = "torus"\n')
    msg = " ".join(info.value.errors)
    for name in ("plane", "sphere_cap", "ellipsoid_cap"):
        assert name in msg


def test_all_errors_collected():
    text = """
[chart]
name = "sphere_cap"
radius = -1.0
[mesh]
n1 = 1
[time]
scheme = "leapfrog"
[material]
mu = -2.0
[sweep]
eps_list = [0.1, 0.2]
[bogus]
x = 1
"""
    with pytest.raises(ValidationError) as info:
        parse_config(text)
    errs = info.value.errors
    for part in ("radius", "[mesh]", "scheme", "mu", "decreasing", "bogus"):
        assert any(part in e for e in errs), part
    assert len(errs) >= 6


def test_type_errors_and_unknown_keys():
    with pytest.raises(ValidationError) as info:
        parse_config('[time]\nT = "long"\ncolour = 3\n[loads.f]\nshape = "x"\n')
    errs = info.value.errors
    assert any("[time]" in e and "colour" in e for e in errs)
    assert any("expected" in e and "'long'" in e for e in errs)
    assert any("[loads.f]" in e and "shape" in e for e in errs)


def test_parse_error_location():
    with pytest.raises(ParseError) as info:
        parse_config("[time]\nT = 1.0\ndt = = 0.1\n")
    assert info.value.line == 3 and info.value.column is not None
    with pytest.raises(ParseError) as info:
        parse_config('{"time": {"T": 1.0,,}}')
    assert info.value.line == 1


def test_json_and_aliases():
    cfg = parse_config('{"time": {"T": 2.0, "dt": 0.01}, "material": {"lambda": 3.0}, "mesh": {"resolution": [6, 5]}}')
    assert cfg.time.T == 2.0 and cfg.material.lam == 3.0
    assert (cfg.mesh.n1, cfg.mesh.n2) == (6, 5)


def test_sample_times_must_sit_on_grid():
    with pytest.raises(ValidationError):
        parse_config("[time]\nT = 1.0\ndt = 0.1\n[sweep]\nsample_times = [0.55]\n")
    cfg = parse_config("[time]\nT = 1.0\ndt = 0.1\n[sweep]\nsample_times = [0.3, 1.0]\n")
    assert cfg.sample_times() == (0.3, 1.0)


finite = st.floats(0.05, 5.0, allow_nan=False)


@settings(max_examples=30, deadline=None)
@given(radius=finite, T=st.floats(0.5, 3.0), n=st.integers(2, 20), alpha=st.floats(0.0, 1.0),
       t_off=st.one_of(st.just(math.inf), st.floats(0.2, 0.4)))
def test_serialize_round_trip(radius, T, n, alpha, t_off):
    text = f"""
[chart]
radius = {radius!r}
[mesh]
n1 = {n}
[time]
T = {T!r}
[material]
alpha_T = {alpha!r}
[loads.f]
temporal = "switch_off"
t_ramp = 0.1
t_off = {'inf' if math.isinf(t_off) else repr(t_off)}
"""
    cfg = parse_config(text)
    assert parse_config(serialize(cfg)) == cfg


def test_read_config_missing_file(tmp_path):
    with pytest.raises(ValidationError):
        read_config(tmp_path / "nope.toml")


# -- command line --------------------------------------------------------

def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_geometry_check(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["geometry-check", "--config", write(tmp_path, ""), "--out", str(out)]) == 0
    rep = json.loads((out / "ellipticity.json").read_text())
    assert rep["uniform_elliptic"] is True


def test_geometry_check_plane_not_elliptic(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, '[chart]\nname = "plane"\ny1_range = [0.0, 1.0]\ny2_range = [0.0, 1.0]\n')
    assert cli.main(["geometry-check", "--config", cfg, "--out", str(out)]) == 0
    assert json.loads((out / "ellipticity.json").read_text())["uniform_elliptic"] is False


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


ZERO_LOADS = SMALL + """
[loads.f]
amplitude = 0.0
[loads.q]
amplitude = 0.0
"""


def test_run2d_zero_loads(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run-2d", "--config", write(tmp_path, ZERO_LOADS), "--out", str(out)]) == 0
    rows = read_csv(out / "trajectory.csv")
    assert len(rows) == 6
    assert rows[0]["t"] == "0" and rows[-1]["t"] == format(0.1, ".17g")
    for r in rows:
        assert all(float(v) == 0.0 for k, v in r.items() if k != "t")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["run"] == "2d"


def test_run3d_writes_eps_column(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run-3d", "--config", write(tmp_path, SMALL + "[shell]\nepsilon = 0.2\n"), "--out", str(out)]) == 0
    rows = read_csv(out / "trajectory.csv")
    assert "eps" in rows[0] and all(float(r["eps"]) == 0.2 for r in rows)
    assert max(float(r["residual"]) for r in rows) < 1e-8


def test_run3d_degenerate_exit_code(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, SMALL + "[shell]\nepsilon = 2.5\n")
    assert cli.main(["run-3d", "--config", cfg, "--out", str(out)]) == 2
    err = json.loads((out / "error.json").read_text())
    assert err["exit_code"] == 2 and err["cause"] == "DegenerateChart"


def test_invalid_config_exit_code(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, "[time]\nT = 0.1\ndt = 0.5\n")
    assert cli.main(["run-2d", "--config", cfg, "--out", str(out)]) == 1
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "ValidationError" and any("[time]" in e for e in err["errors"])


def test_parse_error_exit_code(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run-2d", "--config", write(tmp_path, "[time\n"), "--out", str(out)]) == 1
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "ParseError" and err["line"] == 1


def test_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "many")
    out = tmp_path / "o"
    assert cli.main(["run-2d", "--config", write(tmp_path, SMALL), "--out", str(out)]) == 1
    monkeypatch.setenv(cli.THREADS_ENV, "2")
    assert cli.main(["run-2d", "--config", write(tmp_path, SMALL), "--out", str(out)]) == 0


def test_output_dir_relative_to_config(tmp_path):
    assert cli.main(["run-2d", "--config", write(tmp_path, SMALL + '[output]\ndir = "res"\n')]) == 0
    assert (tmp_path / "res" / "trajectory.csv").exists()


def test_energy_audit(tmp_path):
    out = tmp_path / "o"
    text = SMALL + """
[time]
T = 0.3
dt = 0.01
[loads.f]
temporal = "switch_off"
t_ramp = 0.05
t_off = 0.15
[loads.q]
temporal = "switch_off"
t_ramp = 0.05
t_off = 0.15
"""
    text = text.replace("[time]\nT = 0.1\ndt = 0.02\n", "", 1)
    assert cli.main(["energy-audit", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    audit = json.loads((out / "energy_audit.json").read_text())
    for run in ("2d", "3d"):
        r = audit["runs"][run]
        assert r["identity_holds"] and r["non_increasing_after_loads_off"]
        assert r["loads_off_after"] == 0.15 and r["total_work"] > 0


def test_converge_outputs(tmp_path):
    out = tmp_path / "o"
    text = SMALL + "[sweep]\neps_list = [0.2, 0.1, 0.05]\n"
    assert cli.main(["converge", "--config", write(tmp_path, text), "--out", str(out), "--deterministic"]) == 0
    for name in ("report.csv", "report.json", "slopes.csv"):
        assert (out / name).stat().st_size > 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["eps_list"] == [0.2, 0.1, 0.05]
