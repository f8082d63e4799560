"""Limit sets, chain prolongations and attracting sets of flows on box grids."""

from .boxcover import BoxMap, BoxSet, Grid, build_box_map, connected_components, cover_points, map_image, ring
from .chains import (ChainGraph, ChainParams, Schedule, a_set, chain_graph, omega_chain, p_set,
                     verify_attracting, verify_quasi_attracting)
from .errors import (ConfigError, EmptyInput, EscapeDominated, Escaped, NonFiniteState, OmegaFlowError,
                     SpaceMismatch, UnknownSystem)
from .flow import FlowSpec, advance, builtin_bounds, builtin_system, orbit_points
from .limits import OmegaResult, check_connected_omega, d_plus, forward_closure, j_plus, lambda_plus, omega_set
from .setmap import (FiniteSetMap, FiniteSpace, closure, closure_D, gamma_iterate, gamma_union,
                     make_cubical_space, orbital_S)

__version__ = "0.1.0"

__all__ = [
    "BoxMap", "BoxSet", "Grid", "build_box_map", "connected_components", "cover_points", "map_image", "ring",
    "ChainGraph", "ChainParams", "Schedule", "a_set", "chain_graph", "omega_chain", "p_set",
    "verify_attracting", "verify_quasi_attracting",
    "ConfigError", "EmptyInput", "EscapeDominated", "Escaped", "NonFiniteState", "OmegaFlowError",
    "SpaceMismatch", "UnknownSystem",
    "FlowSpec", "advance", "builtin_bounds", "builtin_system", "orbit_points",
    "OmegaResult", "check_connected_omega", "d_plus", "forward_closure", "j_plus", "lambda_plus", "omega_set",
    "FiniteSetMap", "FiniteSpace", "closure", "closure_D", "gamma_iterate", "gamma_union",
    "make_cubical_space", "orbital_S",
]
