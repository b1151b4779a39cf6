"""Geodesics and leading-order Gaussian beams on piecewise metrics (n = 2)."""
from .beam import (
    BeamEvent,
    BeamPath,
    BeamState,
    EventGeometryError,
    RiccatiError,
    match_hessian,
    propagate_beam,
    reflect_at_boundary,
    split_at_interface,
)
from .echo import EchoReport, beam_echo_experiment, facet_distance
from .field import (
    BeamBranch,
    BeamField,
    beam_mass,
    build_beam_tree,
    evaluate_beam_field,
    launch_state,
    locate_points,
    smoothstep_cutoff,
)
from .geodesic import EventError, GeodesicEvent, GeodesicState, SkeletonHit, Trajectory, snell, trace_geodesic, unit_covector

__all__ = [
    "BeamBranch", "BeamEvent", "BeamField", "BeamPath", "BeamState", "EchoReport", "EventError",
    "EventGeometryError", "GeodesicEvent", "GeodesicState", "RiccatiError", "SkeletonHit", "Trajectory",
    "beam_echo_experiment", "beam_mass", "build_beam_tree", "evaluate_beam_field", "facet_distance",
    "launch_state", "locate_points", "match_hessian", "propagate_beam", "reflect_at_boundary", "smoothstep_cutoff",
    "snell", "split_at_interface", "trace_geodesic", "unit_covector",
]
