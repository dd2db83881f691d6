"""Separable load presets: a named spatial profile times a named time profile.

Mechanical loads carry three covariant components; the heat source is
scalar.  Spatial profiles are written in normalised parameter coordinates
so the same preset works on every chart.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

SPATIAL = ("zero", "uniform", "bubble")
TEMPORAL = ("zero", "constant", "ramp", "smoothstep", "sine", "switch_off")


@dataclass(frozen=True)
class LoadSpec:
    spatial: str = "zero"
    temporal: str = "zero"
    amplitude: float = 1.0
    components: tuple = (0.0, 0.0, 1.0)
    t_ramp: float = 0.25
    period: float = 1.0
    t_off: float = math.inf

    def violations(self, label="load"):
        out = []
        if self.spatial not in SPATIAL:
            out.append(f"{label}: unknown spatial profile {self.spatial!r} (available: {', '.join(SPATIAL)})")
        if self.temporal not in TEMPORAL:
            out.append(f"{label}: unknown time profile {self.temporal!r} (available: {', '.join(TEMPORAL)})")
        if len(self.components) != 3:
            out.append(f"{label}: components must have three entries")
        if not self.t_ramp > 0:
            out.append(f"{label}: t_ramp must be > 0")
        if not self.period > 0:
            out.append(f"{label}: period must be > 0")
        if not math.isfinite(self.amplitude):
            out.append(f"{label}: amplitude must be finite")
        return out

    @property
    def is_zero(self):
        return (self.spatial == "zero" or self.temporal == "zero" or self.amplitude == 0.0
                or (not any(self.components)))

    def time_fn(self):
        return temporal_profile(self.temporal, t_ramp=self.t_ramp, period=self.period, t_off=self.t_off)

    def to_dict(self):
        d = asdict(self)
        d["components"] = list(self.components)
        return d


@dataclass(frozen=True)
class LoadCase:
    """Body force f, top-face traction h and heat source q (scaled, x3-independent)."""
    f: LoadSpec = field(default_factory=LoadSpec)
    h: LoadSpec = field(default_factory=LoadSpec)
    q: LoadSpec = field(default_factory=LoadSpec)

    def violations(self):
        out = self.f.violations("loads.f") + self.h.violations("loads.h") + self.q.violations("loads.q")
        if not self.h.is_zero and self.h.temporal in TEMPORAL and self.h.time_fn()(0.0) != 0.0:
            out.append("loads.h: traction must vanish at t = 0 (choose a profile with h(0) = 0)")
        return out


def normalised(y, y1_range, y2_range):
    y = np.asarray(y, dtype=float)
    s1 = (y[..., 0] - y1_range[0]) / (y1_range[1] - y1_range[0])
    s2 = (y[..., 1] - y2_range[0]) / (y2_range[1] - y2_range[0])
    return s1, s2


def spatial_profile(name, y, y1_range, y2_range):
    s1, s2 = normalised(y, y1_range, y2_range)
    if name == "zero":
        return np.zeros_like(s1)
    if name == "uniform":
        return np.ones_like(s1)
    if name == "bubble":
        # vanishes on the boundary, equals 1 at the centre
        return 16.0 * s1 * (1.0 - s1) * s2 * (1.0 - s2)
    raise ValueError(f"unknown spatial profile {name!r}")


def _smoothstep(s):
    s = min(max(s, 0.0), 1.0)
    return s * s * (3.0 - 2.0 * s)


def temporal_profile(name, t_ramp=0.25, period=1.0, t_off=math.inf):
    if name == "zero":
        return lambda t: 0.0
    if name == "constant":
        return lambda t: 1.0
    if name == "ramp":
        return lambda t: min(max(t / t_ramp, 0.0), 1.0)
    if name == "smoothstep":
        return lambda t: _smoothstep(t / t_ramp)
    if name == "sine":
        return lambda t: math.sin(2.0 * math.pi * t / period)
    if name == "switch_off":
        # smooth onset, then off for t >= t_off
        return lambda t: _smoothstep(t / t_ramp) if t < t_off else 0.0
    raise ValueError(f"unknown time profile {name!r}")
