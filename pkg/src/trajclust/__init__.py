"""Clustering of longitudinal sub-trajectories in a learned feature space.

Pipeline: :mod:`partition` cuts each eye's trajectory into ~1-year windows,
:mod:`metric` compares windows with a composite endpoint/DTW distance,
:mod:`cluster` groups them by spectral clustering, and :mod:`stratify`
turns cluster memberships into linear risk predictors.
"""
from .cluster import (
    AffinityMatrix,
    ClusterModel,
    DegenerateAffinityError,
    assign_new,
    build_affinity,
    cluster_report,
    medoids,
    spectral_cluster,
)
from .core import (
    GRADES,
    Demographics,
    DimensionMismatchError,
    FeatureObservation,
    GradeRecord,
    Label,
    MetricParams,
    SeriesTrajectory,
    SpanError,
    SubTrajectory,
    TargetKind,
    ValidationReport,
    validate_dataset,
)
from .metric import DistanceMatrix, d_path, d_subtraj, d_transition, dtw, pairwise_matrix
from .partition import PartitionConfig, enumerate_windows, partition_dataset, sample_windows
from .stratify import EvalReport, RiskModel, baseline_features, evaluate, fit_linear, membership
from .synth import CohortSpec, generate, oracle_dtw

__version__ = "0.1.0"
