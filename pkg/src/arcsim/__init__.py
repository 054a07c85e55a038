"""Steady states of fermionic transport junctions with cyclically relaxed reservoirs."""

from .engine import ArcParams, CycleMap, cycle_map, evolve, initial_state, params_from_action, refresh
from .lyapunov import NessState, solve_arc, solve_continuous_cr, solve_periodic_refresh
from .model import Junction, ReservoirSpec, SystemSpec
from .negf import reference
from .observables import current_error, currents, osee, trace_distance

__version__ = "0.1.0"

__all__ = [
    "ArcParams",
    "CycleMap",
    "Junction",
    "NessState",
    "ReservoirSpec",
    "SystemSpec",
    "current_error",
    "currents",
    "cycle_map",
    "evolve",
    "initial_state",
    "osee",
    "params_from_action",
    "reference",
    "refresh",
    "solve_arc",
    "solve_continuous_cr",
    "solve_periodic_refresh",
    "trace_distance",
]
