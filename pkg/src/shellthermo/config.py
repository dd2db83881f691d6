"""Run configuration: TOML (or JSON) text in, validated :class:`RunConfig` out.

Every section is optional; omitted keys take the defaults below, which
describe the sphere-cap benchmark.  All quantities are SI.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import tomli

from .errors import ParseError, ValidationError
from .geometry import BUILTIN_CHARTS, make_chart
from .loads import LoadCase, LoadSpec
from .material import MaterialParams
from .timestep import SCHEMES, step_count

CHART_PARAMS = {
    "plane": ("y1_range", "y2_range"),
    "sphere_cap": ("radius", "y1_range", "y2_range"),
    "ellipsoid_cap": ("semi_axes", "y1_range", "y2_range"),
}


@dataclass(frozen=True)
class ChartConfig:
    name: str = "sphere_cap"
    radius: float = 2.0
    semi_axes: tuple = (1.0, 1.0, 0.5)
    y1_range: tuple = (-0.6, 0.6)
    y2_range: tuple = (-0.6, 0.6)

    def build(self):
        params = {k: getattr(self, k) for k in CHART_PARAMS[self.name]}
        return make_chart(self.name, **params)


@dataclass(frozen=True)
class MeshConfig:
    n1: int = 16
    n2: int = 16
    file: str = ""
    layers: int = 4


@dataclass(frozen=True)
class TimeConfig:
    T: float = 1.0
    dt: float = 0.005
    scheme: str = "midpoint"
    stride: int = 1


@dataclass(frozen=True)
class Flags:
    deterministic: bool = False
    verbose: bool = False


@dataclass(frozen=True)
class SweepSettings:
    eps_list: tuple = (0.4, 0.2, 0.1, 0.05)
    sample_times: tuple = ()      # empty: midpoint and end of the run
    floor_factor: float = 4.0
    workers: int = 1


@dataclass(frozen=True)
class ShellConfig:
    epsilon: float = 0.1


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    probe: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class GeometryCheckConfig:
    grid: tuple = (16, 16)
    threshold: float = 1e-6


def default_loads():
    return LoadCase(f=LoadSpec("bubble", "smoothstep", components=(0.0, 0.0, 1.0)),
                    q=LoadSpec("bubble", "smoothstep"))


@dataclass(frozen=True)
class RunConfig:
    chart: ChartConfig = field(default_factory=ChartConfig)
    material: MaterialParams = field(default_factory=MaterialParams)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    loads: LoadCase = field(default_factory=default_loads)
    flags: Flags = field(default_factory=Flags)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    shell: ShellConfig = field(default_factory=ShellConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    geometry: GeometryCheckConfig = field(default_factory=GeometryCheckConfig)
    base_dir: str = field(default="", compare=False)

    def build_chart(self):
        return self.chart.build()

    def sample_times(self):
        """Sweep sample instants; defaults to the grid point nearest T/2 and T itself."""
        if self.sweep.sample_times:
            return tuple(self.sweep.sample_times)
        n, dt = step_count(self.time.T, self.time.dt)
        return ((n // 2) * dt, n * dt) if n >= 2 else (n * dt,)

    def mesh_path(self):
        if not self.mesh.file:
            return None
        p = Path(self.mesh.file)
        return p if p.is_absolute() or not self.base_dir else Path(self.base_dir) / p


# key -> (kind, attribute name); kinds drive coercion and type errors
_SCHEMA = {
    "chart": (ChartConfig, {"name": "str", "radius": "float", "semi_axes": "floats3",
                            "y1_range": "floats2", "y2_range": "floats2"}),
    "material": (MaterialParams, {"rho": "float", "lambda": ("float", "lam"), "mu": "float",
                                  "alpha_T": "float", "k": "float", "beta": "float"}),
    "mesh": (MeshConfig, {"n1": "int", "n2": "int", "resolution": ("ints2", None), "file": "str",
                          "layers": "int"}),
    "time": (TimeConfig, {"T": "float", "dt": "float", "scheme": "str", "stride": "int"}),
    "flags": (Flags, {"deterministic": "bool", "verbose": "bool"}),
    "sweep": (SweepSettings, {"eps_list": "floats", "sample_times": "floats", "floor_factor": "float",
                              "workers": "int"}),
    "shell": (ShellConfig, {"epsilon": "float"}),
    "output": (OutputConfig, {"dir": "str", "probe": "floats2"}),
    "geometry": (GeometryCheckConfig, {"grid": "ints2", "threshold": "float"}),
}
_LOAD_KEYS = {"spatial": "str", "temporal": "str", "amplitude": "float", "components": "floats3",
              "t_ramp": "float", "period": "float", "t_off": "float"}


def _coerce(kind, value, where, errors):
    def bad(expect):
        errors.append(f"{where}: expected {expect}, got {value!r}")
        return None

    if kind == "str":
        return value if isinstance(value, str) else bad("a string")
    if kind == "bool":
        return value if isinstance(value, bool) else bad("true or false")
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            return bad("an integer")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return bad("a number")
        return float(value)
    if kind.startswith("floats") or kind.startswith("ints"):
        n = kind[len("floats"):] if kind.startswith("floats") else kind[len("ints"):]
        want_int = kind.startswith("ints")
        if not isinstance(value, list):
            return bad("a list")
        if n and len(value) != int(n):
            return bad(f"a list of {n} entries")
        out = []
        for v in value:
            ok = isinstance(v, int) if want_int else isinstance(v, (int, float))
            if isinstance(v, bool) or not ok:
                return bad("a list of integers" if want_int else "a list of numbers")
            out.append(int(v) if want_int else float(v))
        return tuple(out)
    raise AssertionError(kind)


def _load_document(text):
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        msg = getattr(exc, "msg", str(exc))
        raise ParseError(f"invalid config: {msg}", line, col) from exc


def parse_config(text: str, base_dir="") -> RunConfig:
    """Parse and validate; raises ParseError or a ValidationError listing every problem."""
    doc = _load_document(text)
    if not isinstance(doc, dict):
        raise ValidationError(["top level must be a table of sections"])
    errors: list[str] = []
    sections = {}
    known = set(_SCHEMA) | {"loads"}
    for key in doc:
        if key not in known:
            errors.append(f"unknown section [{key}] (known: {', '.join(sorted(known))})")

    for sec, (cls, keys) in _SCHEMA.items():
        raw = doc.get(sec, {})
        if not isinstance(raw, dict):
            errors.append(f"[{sec}] must be a table")
            raw = {}
        kwargs = {}
        for k, v in raw.items():
            if k not in keys:
                errors.append(f"[{sec}] unknown key {k!r} (known: {', '.join(sorted(keys))})")
                continue
            spec = keys[k]
            kind, attr = spec if isinstance(spec, tuple) else (spec, k)
            val = _coerce(kind, v, f"[{sec}] {k}", errors)
            if val is None:
                continue
            if sec == "mesh" and k == "resolution":
                kwargs["n1"], kwargs["n2"] = val
            else:
                kwargs[attr] = val
        sections[sec] = (cls, kwargs)

    loads_raw = doc.get("loads", {})
    if not isinstance(loads_raw, dict):
        errors.append("[loads] must be a table")
        loads_raw = {}
    load_kwargs = {}
    defaults = default_loads()
    for name in loads_raw:
        if name not in ("f", "h", "q"):
            errors.append(f"[loads] unknown load {name!r} (known: f, h, q)")
    for name in ("f", "h", "q"):
        raw = loads_raw.get(name)
        if raw is None:
            load_kwargs[name] = getattr(defaults, name)
            continue
        if not isinstance(raw, dict):
            errors.append(f"[loads.{name}] must be a table")
            continue
        kw = {}
        for k, v in raw.items():
            if k not in _LOAD_KEYS:
                errors.append(f"[loads.{name}] unknown key {k!r} (known: {', '.join(sorted(_LOAD_KEYS))})")
                continue
            val = _coerce(_LOAD_KEYS[k], v, f"[loads.{name}] {k}", errors)
            if val is not None:
                kw[k] = val
        # a table overrides individual keys of that load's default
        load_kwargs[name] = replace(getattr(defaults, name), **kw)

    built = {}
    for sec, (cls, kwargs) in sections.items():
        if cls is MaterialParams:
            mat_defaults = {f.name: getattr(MaterialParams(), f.name) for f in fields(MaterialParams)}
            candidate = object.__new__(MaterialParams)
            for k, v in {**mat_defaults, **kwargs}.items():
                object.__setattr__(candidate, k, v)
            errors.extend(f"[material] {p}" for p in candidate.violations())
            built[sec] = candidate
        else:
            built[sec] = cls(**kwargs)
    loads = LoadCase(**{k: load_kwargs.get(k, LoadSpec()) for k in ("f", "h", "q")})
    cfg = RunConfig(loads=loads, base_dir=str(base_dir), **built)
    errors.extend(validate(cfg))
    if errors:
        raise ValidationError(errors)
    return cfg


def validate(cfg: RunConfig):
    out = []
    c = cfg.chart
    if c.name not in BUILTIN_CHARTS:
        out.append(f"[chart] unknown chart {c.name!r}; available charts: {', '.join(sorted(BUILTIN_CHARTS))}")
    else:
        if not (c.y1_range[0] < c.y1_range[1] and c.y2_range[0] < c.y2_range[1]):
            out.append("[chart] parameter ranges must be increasing intervals")
        if c.name == "sphere_cap" and not c.radius > 0:
            out.append("[chart] radius must be > 0")
        if c.name == "ellipsoid_cap" and not all(a > 0 for a in c.semi_axes):
            out.append("[chart] semi_axes must be positive")
        if c.name in ("sphere_cap", "ellipsoid_cap"):
            lim = math.pi / 2
            if abs(c.y2_range[0]) >= lim or abs(c.y2_range[1]) >= lim:
                out.append("[chart] y2_range must stay inside (-pi/2, pi/2) to avoid the poles")
    m = cfg.mesh
    if not m.file and (m.n1 < 2 or m.n2 < 2):
        out.append("[mesh] n1 and n2 must be at least 2")
    if m.layers < 2:
        out.append("[mesh] layers must be at least 2")
    t = cfg.time
    if not (t.T > 0):
        out.append("[time] T must be > 0")
    if not (t.dt > 0):
        out.append("[time] dt must be > 0")
    if t.dt >= t.T:
        out.append("[time] dt must be smaller than T")
    if t.scheme not in SCHEMES:
        out.append(f"[time] scheme must be one of {', '.join(SCHEMES)}, got {t.scheme!r}")
    if t.stride < 1:
        out.append("[time] stride must be >= 1")
    out.extend(f"[{p.split(':', 1)[0]}]{p.split(':', 1)[1]}" for p in cfg.loads.violations())
    s = cfg.sweep
    eps = list(s.eps_list)
    if not eps:
        out.append("[sweep] eps_list must not be empty")
    if any(not e > 0 for e in eps):
        out.append("[sweep] eps_list entries must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        out.append("[sweep] eps_list must be strictly decreasing")
    if any(not (0 < x <= t.T) for x in s.sample_times):
        out.append("[sweep] sample_times must lie in (0, T]")
    elif s.sample_times and 0 < t.dt < t.T:
        n, dt = step_count(t.T, t.dt)
        if any(abs(round(x / dt) * dt - x) > 1e-9 * max(1.0, t.T) for x in s.sample_times):
            out.append("[sweep] sample_times must be multiples of the time step")
    if s.floor_factor < 0:
        out.append("[sweep] floor_factor must be >= 0 (0 disables the floor run)")
    if s.workers < 1:
        out.append("[sweep] workers must be >= 1")
    if not cfg.shell.epsilon > 0:
        out.append("[shell] epsilon must be > 0")
    g = cfg.geometry
    if min(g.grid) < 8:
        out.append("[geometry] grid must be at least 8 x 8")
    if not g.threshold >= 0:
        out.append("[geometry] threshold must be >= 0")
    return out


def read_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ValidationError([f"cannot read config {path}: {exc.strerror}"]) from exc
    return parse_config(text, base_dir=str(p.parent))


# -- serialisation -------------------------------------------------------

def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    raise TypeError(f"cannot serialise {v!r}")


def to_dict(cfg: RunConfig):
    c = cfg.chart
    chart = {"name": c.name, **{k: getattr(c, k) for k in CHART_PARAMS.get(c.name, ())}}
    mat = cfg.material
    return {
        "chart": chart,
        "material": {"rho": mat.rho, "lambda": mat.lam, "mu": mat.mu, "alpha_T": mat.alpha_T,
                     "k": mat.k, "beta": mat.beta},
        "mesh": {"n1": cfg.mesh.n1, "n2": cfg.mesh.n2, "file": cfg.mesh.file, "layers": cfg.mesh.layers},
        "time": {"T": cfg.time.T, "dt": cfg.time.dt, "scheme": cfg.time.scheme, "stride": cfg.time.stride},
        "loads": {k: {"spatial": s.spatial, "temporal": s.temporal, "amplitude": s.amplitude,
                      "components": s.components, "t_ramp": s.t_ramp, "period": s.period, "t_off": s.t_off}
                  for k, s in (("f", cfg.loads.f), ("h", cfg.loads.h), ("q", cfg.loads.q))},
        "flags": {"deterministic": cfg.flags.deterministic, "verbose": cfg.flags.verbose},
        "sweep": {"eps_list": cfg.sweep.eps_list, "sample_times": cfg.sweep.sample_times,
                  "floor_factor": cfg.sweep.floor_factor, "workers": cfg.sweep.workers},
        "shell": {"epsilon": cfg.shell.epsilon},
        "output": {"dir": cfg.output.dir, "probe": cfg.output.probe},
        "geometry": {"grid": cfg.geometry.grid, "threshold": cfg.geometry.threshold},
    }


def serialize(cfg: RunConfig) -> str:
    """TOML text that parses back to an equal RunConfig."""
    lines = []
    d = to_dict(cfg)
    for sec, body in d.items():
        if sec == "loads":
            for name, spec in body.items():
                lines.append(f"[loads.{name}]")
                lines.extend(f"{k} = {_fmt(v)}" for k, v in spec.items())
                lines.append("")
            continue
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in body.items())
        lines.append("")
    return "\n".join(lines)


def jsonable(cfg: RunConfig):
    def clean(x):
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if isinstance(x, float) and not math.isfinite(x):
            return repr(x)
        return x
    return clean(to_dict(cfg))
