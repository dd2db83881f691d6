"""Dynamic thermoelastic shells: scaled 3D model, membrane limit, convergence sweeps."""
from .config import RunConfig, parse_config, read_config, serialize
from .convergence import ConvergenceReport, SweepConfig, averaged_field_convergence, descale, run_sweep
from .errors import (AssemblyFailure, ConfigError, DegenerateChart, IncompatibleMeshes, InsufficientData,
                     NumericalFailure, ParseError, ShellThermoError, SizeExceeded, SolveFailure,
                     SymmetryViolation, ValidationError)
from .geometry import EllipsoidCap, PlaneChart, SphereCap, check_elliptic, eval_frame, make_chart
from .loads import LoadCase, LoadSpec
from .material import MaterialParams
from .membrane import assemble, simulate
from .mesh import Mesh2D, Mesh3D, generate_mesh
from .scaled3d import assemble3d, simulate3d

__version__ = "0.1.0"
