"""Rank-one mixing special flows over a two-dimensional torus translation."""

from .arith import CFNumber, FixedAngle, PrecisionPolicy, cf_convergents, dist_to_int
from .birkhoff import birkhoff_fast, birkhoff_naive, character_bound, mean_growth_bound
from .ceiling import CeilingSpec, assemble_phi, bump, set_threads
from .config import ExperimentConfig
from .errors import (AliasingError, ConfigError, DegenerateError, InfeasibleScale, InvalidArgument,
                     InvalidSchedule, NonpositiveCeiling, PrecisionError, TorusFlowError)
from .flow import FlowPoint, flow, flow_map, time_index
from .pairgen import GrowthLaw, YPair, build_pair, pair_from_quotients, verify_pair

__all__ = [
    "AliasingError", "CFNumber", "CeilingSpec", "ConfigError", "DegenerateError", "ExperimentConfig",
    "FixedAngle", "FlowPoint", "GrowthLaw", "InfeasibleScale", "InvalidArgument", "InvalidSchedule",
    "NonpositiveCeiling", "PrecisionError", "PrecisionPolicy", "TorusFlowError", "YPair", "assemble_phi",
    "birkhoff_fast", "birkhoff_naive", "build_pair", "bump", "cf_convergents", "character_bound",
    "dist_to_int", "flow", "flow_map", "mean_growth_bound", "pair_from_quotients", "set_threads",
    "time_index", "verify_pair",
]
