"""Ex-ante certainty equivalents for recursive preferences under ambiguity."""

from .cequiv import (
    CertaintyEquivalent,
    Choquet,
    Distortion,
    Entropic,
    Expectation,
    Maxmin,
    PhiDescriptor,
    RankDependent,
    Smooth,
    VariationalGrid,
    evaluate,
    probe_properties,
    spec_from_dict,
    variational_from_entropic,
)
from .core import (
    AdaptedTree,
    Capacity,
    DiscountedUtilityScale,
    Prior,
    ShockSpace,
    lifetime_utility,
    shift,
    truncation_error_bound,
)
from .errors import ConfigurationError, DomainError, GenrectError
from .solver import SolveConfig, SolveReport, cross_check, solve_nested, solve_value_iteration

__version__ = "0.1.0"

__all__ = [
    "CertaintyEquivalent",
    "Choquet",
    "Distortion",
    "Entropic",
    "Expectation",
    "Maxmin",
    "PhiDescriptor",
    "RankDependent",
    "Smooth",
    "VariationalGrid",
    "evaluate",
    "probe_properties",
    "spec_from_dict",
    "variational_from_entropic",
    "AdaptedTree",
    "Capacity",
    "DiscountedUtilityScale",
    "Prior",
    "ShockSpace",
    "lifetime_utility",
    "shift",
    "truncation_error_bound",
    "ConfigurationError",
    "DomainError",
    "GenrectError",
    "SolveConfig",
    "SolveReport",
    "cross_check",
    "solve_nested",
    "solve_value_iteration",
]
