"""gasketsim - Rotor walks and sandpiles on Sierpinski gasket prefractals."""

__version__ = "0.3.0"

from gasketsim.types import (
    ExperimentKind,
    ExperimentSpec,
    Half,
    HeightLaw,
    MassLaw,
    Policy,
    RotorLaw,
    RunConfig,
)
from gasketsim.errors import (
    CapacityError,
    ConfigError,
    FrontierExceeded,
    GasketSimError,
    MissingRotorError,
    RenderError,
    ToppleCapExceeded,
    UnknownVertexError,
)
from gasketsim.lattice import Direction, LatticeCoord
from gasketsim.graph import PrefractalGraph, build
from gasketsim.rotor import LazyWalk, RotorConfig, WalkState, is_reflecting
from gasketsim.sandpile import Domain, stabilize
from gasketsim.divisible import stabilize_divisible
from gasketsim.audit import AuditResult, ResultAuditor
from gasketsim.render import render_svg

__all__ = [
    "ExperimentKind",
    "ExperimentSpec",
    "Half",
    "HeightLaw",
    "MassLaw",
    "Policy",
    "RotorLaw",
    "RunConfig",
    "CapacityError",
    "ConfigError",
    "FrontierExceeded",
    "GasketSimError",
    "MissingRotorError",
    "RenderError",
    "ToppleCapExceeded",
    "UnknownVertexError",
    "Direction",
    "LatticeCoord",
    "PrefractalGraph",
    "build",
    "LazyWalk",
    "RotorConfig",
    "WalkState",
    "is_reflecting",
    "Domain",
    "stabilize",
    "stabilize_divisible",
    "AuditResult",
    "ResultAuditor",
    "render_svg",
]
