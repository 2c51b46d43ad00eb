"""Real-time 2D direction-of-arrival estimation with a nonlinear 3-microphone array."""
from .calibrate import CalibrationResult, LmSettings, calibrate_geometry, lm_minimize
from .correlator import (
    CorrelationFunction,
    Weighting,
    cross_correlate,
    measure_frame,
    refine_peak_qi,
    segment_stream,
)
from .filtergate import FilterThresholds, FilterVerdict, apply_gate, compute_beta
from .geometry import (
    ArrayGeometry,
    Direction,
    TdoaTriple,
    cf_map,
    direction_to_point,
    point_to_direction,
    tdoa_from_geometry,
)
from .lattice import (
    FieldDataset,
    MappingLattice,
    fibonacci_lattice,
    interpolate_field_dataset,
    latlong_lattice,
    nns_lookup,
    synthesize_mappings,
)
from .pipeline import FrameEvent, PipelineConfig, process_stream
from .tracker import TrackerParams, TrackerState, active_sources, rfefc_step

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry", "CalibrationResult", "CorrelationFunction", "Direction", "FieldDataset",
    "FilterThresholds", "FilterVerdict", "FrameEvent", "LmSettings", "MappingLattice",
    "PipelineConfig", "TdoaTriple", "TrackerParams", "TrackerState", "Weighting",
    "active_sources", "apply_gate", "calibrate_geometry", "cf_map", "compute_beta",
    "cross_correlate", "direction_to_point", "fibonacci_lattice", "interpolate_field_dataset",
    "latlong_lattice", "lm_minimize", "measure_frame", "nns_lookup", "point_to_direction",
    "process_stream", "refine_peak_qi", "rfefc_step", "segment_stream", "synthesize_mappings",
    "tdoa_from_geometry",
]
