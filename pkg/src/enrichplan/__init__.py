"""Planning workbench for adaptive-enrichment and group sequential trial designs."""

from .boundaries import (
    BoundaryTable,
    CrossingEstimator,
    calibrate_all,
    calibrate_design,
    crossing_probability,
    materialize_boundaries,
    solve_adaptive,
    solve_single_stream,
)
from .errors import CalibrationError, DatasetError, TimeLimitError, ValidationError
from .ingest import ParticipantRecord, PopulationEstimate, estimate_population, parse_dataset
from .model import (
    DesignKind,
    DesignSpec,
    EnrollmentSchedule,
    MonteCarloConfig,
    PopulationParams,
    ZJointLaw,
    alternative_law,
    build_schedule,
    null_law,
    p2t_grid,
    z_covariance,
    z_mean_vector,
)
from .simulate import (
    PerformanceGrid,
    TrialOutcome,
    compute_duration,
    estimate_performance,
    run_adaptive_rules,
    run_standard_rules,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryTable", "CrossingEstimator", "CalibrationError", "DatasetError",
    "DesignKind", "DesignSpec", "EnrollmentSchedule", "MonteCarloConfig",
    "ParticipantRecord", "PerformanceGrid", "PopulationEstimate", "PopulationParams",
    "TimeLimitError", "TrialOutcome", "ValidationError", "ZJointLaw",
    "alternative_law", "build_schedule", "calibrate_all", "calibrate_design",
    "compute_duration", "crossing_probability", "estimate_performance",
    "estimate_population", "materialize_boundaries", "null_law", "p2t_grid",
    "parse_dataset", "run_adaptive_rules", "run_standard_rules",
    "solve_adaptive", "solve_single_stream", "z_covariance", "z_mean_vector",
]
