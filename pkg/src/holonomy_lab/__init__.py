"""Holonomy of hybrid principal bundles with abelian structure group."""

from .curves import ExprCurve, Polyline, Reparametrized, constant_curve
from .errors import (
    AmbiguousCrossing,
    ContinuityViolation,
    CrossCheckFailed,
    DomainError,
    HolonomyError,
    InputError,
    InsufficientData,
    NoPotential,
    NotExact,
    NumericalError,
    ParseError,
    QuadratureNoConvergence,
    UnboundVariable,
    UnknownFunction,
    ValidationFailed,
)
from .expr import evaluate, numeric_partial, parse
from .geometry import (
    Chart,
    ExprPotential,
    Mode,
    connection_form_eval,
    horizontal_velocity,
    make_mode,
    reconstruct_potential,
    segment_holonomy_potential,
    segment_holonomy_quadrature,
)
from .hybrid import (
    BaseLoop,
    Guard,
    HybridBundle,
    Reset,
    Segment,
    detect_crossings,
    repeat_loop,
    reversed_loop,
    segment_loop,
    validate_bundle,
)
from .lift import holonomy_report, hybrid_holonomy, hybrid_lift
from .limits import (
    AlternationSpec,
    alternating_holonomy,
    alternating_system,
    convergence_sweep,
    infinitesimal_holonomy,
)
from .models import build_planar_walker, build_rolling_disk, load_system

__version__ = "0.1.0"

__all__ = [
    "alternating_holonomy",
    "alternating_system",
    "AlternationSpec",
    "AmbiguousCrossing",
    "BaseLoop",
    "build_planar_walker",
    "build_rolling_disk",
    "Chart",
    "connection_form_eval",
    "constant_curve",
    "ContinuityViolation",
    "convergence_sweep",
    "CrossCheckFailed",
    "detect_crossings",
    "DomainError",
    "evaluate",
    "ExprCurve",
    "ExprPotential",
    "Guard",
    "holonomy_report",
    "HolonomyError",
    "horizontal_velocity",
    "hybrid_holonomy",
    "hybrid_lift",
    "HybridBundle",
    "infinitesimal_holonomy",
    "InputError",
    "InsufficientData",
    "load_system",
    "make_mode",
    "Mode",
    "NoPotential",
    "NotExact",
    "numeric_partial",
    "NumericalError",
    "parse",
    "ParseError",
    "Polyline",
    "QuadratureNoConvergence",
    "reconstruct_potential",
    "Reparametrized",
    "repeat_loop",
    "Reset",
    "reversed_loop",
    "Segment",
    "segment_holonomy_potential",
    "segment_holonomy_quadrature",
    "segment_loop",
    "UnboundVariable",
    "UnknownFunction",
    "validate_bundle",
    "ValidationFailed",
]
