"""splitkit: dominated splittings, bracket decay, and integral-surface
diagnostics for diffeomorphisms of the 3-torus."""

__version__ = "0.1.0"

from .dynamics import PAPER_MATRIX, Cocycle, Diffeo, ShearPerturbation, ToralAutomorphism, cocycle
from .errors import (
    ChartExitError,
    ChartUnsuitableError,
    ConfigError,
    ConvergenceError,
    DegeneratePlaneError,
    SplitkitError,
    TransversalityError,
)
from .geometry import (
    Line1,
    Plane2,
    exterior_square,
    principal_angle,
    project_along,
    restricted_determinant,
    restricted_singular_values,
    torus_distance,
    wrap_point,
)
from .splitting import (
    DominationReport,
    PullbackSequence,
    SplittingSample,
    compute_fast_line,
    compute_slow_plane,
    domination_report,
    restricted_growth,
    splitting_sample,
)

__all__ = [
    "__version__",
    "PAPER_MATRIX",
    "Cocycle",
    "Diffeo",
    "ShearPerturbation",
    "ToralAutomorphism",
    "cocycle",
    "ChartExitError",
    "ChartUnsuitableError",
    "ConfigError",
    "ConvergenceError",
    "DegeneratePlaneError",
    "SplitkitError",
    "TransversalityError",
    "Line1",
    "Plane2",
    "exterior_square",
    "principal_angle",
    "project_along",
    "restricted_determinant",
    "restricted_singular_values",
    "torus_distance",
    "wrap_point",
    "DominationReport",
    "PullbackSequence",
    "SplittingSample",
    "compute_fast_line",
    "compute_slow_plane",
    "domination_report",
    "restricted_growth",
    "splitting_sample",
]
