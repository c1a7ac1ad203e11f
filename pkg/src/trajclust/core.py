"""Domain types shared across the pipeline.

All types are immutable after construction. Feature vectors are stored as
read-only float64 numpy arrays so instances can be shared between workers.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DAYS_PER_YEAR = 365.25
# absolute slack applied to every span comparison, in years
SPAN_TOL = 1e-9


class DimensionMismatchError(ValueError):
    """Feature vectors of incompatible dimension were combined."""


class SpanError(ValueError):
    """A sub-trajectory does not cover the configured elapsed-time span."""


def _frozen(a, ndim, dtype=np.float64):
    arr = np.array(a, dtype=dtype, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected {ndim}-d array, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


def in_span(elapsed: float, span_min: float, span_max: float) -> bool:
    """Closed-interval span test shared by partitioning and validation."""
    return span_min - SPAN_TOL <= elapsed <= span_max + SPAN_TOL


@dataclass(frozen=True, eq=False)
class FeatureObservation:
    series_id: str
    patient_id: str
    t: float
    features: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "features", _frozen(self.features, 1))

    @property
    def dim(self) -> int:
        return self.features.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FeatureObservation):
            return NotImplemented
        return (
            self.series_id == other.series_id
            and self.patient_id == other.patient_id
            and self.t == other.t
            and np.array_equal(self.features, other.features)
        )

    def __hash__(self):
        return hash((self.series_id, self.patient_id, self.t))


@dataclass(frozen=True, eq=False)
class SeriesTrajectory:
    """Time-ordered observations of one eye.

    The constructor neither sorts nor rejects out-of-order timestamps; that
    is the job of ingest (:func:`trajectory_from_observations` and the
    loaders), which reject anything :func:`validate_dataset` flags.
    """

    series_id: str
    patient_id: str
    times: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times, 1)
        vectors = _frozen(self.vectors, 2)
        if times.shape[0] < 1:
            raise ValueError(f"series {self.series_id!r} is empty")
        if vectors.shape[0] != times.shape[0]:
            raise ValueError("times and vectors disagree in length")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "vectors", vectors)

    def __len__(self):
        return self.times.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def observations(self) -> list[FeatureObservation]:
        return [
            FeatureObservation(self.series_id, self.patient_id, t, v)
            for t, v in zip(self.times, self.vectors)
        ]

    def __eq__(self, other):
        if not isinstance(other, SeriesTrajectory):
            return NotImplemented
        return (
            self.series_id == other.series_id
            and self.patient_id == other.patient_id
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.vectors, other.vectors)
        )

    def __hash__(self):
        return hash((self.series_id, self.patient_id, len(self)))


def trajectory_from_observations(obs: Sequence[FeatureObservation]) -> SeriesTrajectory:
    """Group observations of a single series into a time-sorted trajectory."""
    if not obs:
        raise ValueError("no observations")
    sid, pid = obs[0].series_id, obs[0].patient_id
    for o in obs:
        if o.series_id != sid:
            raise ValueError(f"mixed series ids {sid!r} and {o.series_id!r}")
        if o.patient_id != pid:
            raise ValueError(f"series {sid!r} maps to several patients")
    report = validate_observations(obs)
    if report:
        first = report.issues[0]
        raise ValueError(f"series {sid!r}: {first.kind} {first.detail}".rstrip())
    ordered = sorted(obs, key=lambda o: o.t)
    return SeriesTrajectory(
        sid,
        pid,
        np.array([o.t for o in ordered]),
        np.stack([o.features for o in ordered]),
    )


@dataclass(frozen=True, eq=False)
class SubTrajectory:
    """Contiguous window ``[start_index, start_index + len)`` of a trajectory.

    Construction fails with :class:`SpanError` when the elapsed time
    ``times[-1] - times[0]`` lies outside ``[span_min, span_max]``.
    """

    series_id: str
    patient_id: str
    start_index: int
    times: np.ndarray
    vectors: np.ndarray
    span_min: float = 0.5
    span_max: float = 1.5

    def __post_init__(self):
        times = _frozen(self.times, 1)
        vectors = _frozen(self.vectors, 2)
        if times.shape[0] < 2:
            raise ValueError("a sub-trajectory needs at least two points")
        if vectors.shape[0] != times.shape[0]:
            raise ValueError("times and vectors disagree in length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sub-trajectory timestamps not strictly increasing")
        if self.start_index < 0:
            raise ValueError("start_index must be non-negative")
        elapsed = float(times[-1] - times[0])
        if not in_span(elapsed, self.span_min, self.span_max):
            raise SpanError(
                f"elapsed {elapsed:.6g} y outside [{self.span_min}, {self.span_max}]"
            )
        object.__setattr__(self, "start_index", int(self.start_index))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "vectors", vectors)

    def __len__(self):
        return self.times.shape[0]

    @property
    def id(self) -> str:
        return f"{self.series_id}@{self.start_index}:{len(self)}"

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def elapsed(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def start(self) -> np.ndarray:
        return self.vectors[0]

    def end(self) -> np.ndarray:
        return self.vectors[-1]

    @property
    def points(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.times.tolist(), self.vectors))

    def __eq__(self, other):
        if not isinstance(other, SubTrajectory):
            return NotImplemented
        return (
            self.series_id == other.series_id
            and self.patient_id == other.patient_id
            and self.start_index == other.start_index
            and self.span_min == other.span_min
            and self.span_max == other.span_max
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.vectors, other.vectors)
        )

    def __hash__(self):
        return hash((self.series_id, self.start_index, len(self)))


@dataclass(frozen=True)
class MetricParams:
    """Weights of the composite distance.

    ``lam`` mixes endpoint distance against DTW; ``phi`` mixes the
    start-anchored (relative) comparison against the absolute one.
    ``local_cost`` and ``dtw_normalize`` select DTW variants for
    sensitivity analysis and are off the default path.
    """

    lam: float = 0.75
    phi: float = 0.75
    local_cost: str = "euclidean"
    dtw_normalize: bool = False

    def __post_init__(self):
        for name in ("lam", "phi"):
            v = float(getattr(self, name))
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
            object.__setattr__(self, name, v)
        if self.local_cost not in ("euclidean", "sqeuclidean"):
            raise ValueError(f"unknown local cost {self.local_cost!r}")


class TargetKind(str, enum.Enum):
    TIME_TO_LATE_AMD = "time_to_late_amd"
    TIME_TO_CNV = "time_to_cnv"
    TIME_TO_CRORA = "time_to_crora"
    VISUAL_ACUITY = "visual_acuity"

    @property
    def is_time_to_event(self) -> bool:
        return self is not TargetKind.VISUAL_ACUITY


@dataclass(frozen=True)
class Label:
    series_id: str
    t: float
    target_kind: TargetKind
    value: float

    def __post_init__(self):
        object.__setattr__(self, "target_kind", TargetKind(self.target_kind))
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise ValueError(f"label value must be finite, got {self.value}")
        if self.target_kind.is_time_to_event and self.value < 0:
            raise ValueError(
                f"negative {self.target_kind.value} for series {self.series_id!r}: {self.value}"
            )


GRADES = ("healthy", "early", "cnv", "crora_small", "crora_large")


@dataclass(frozen=True)
class Demographics:
    patient_id: str
    age_at_epoch: float
    sex: int

    def __post_init__(self):
        if self.sex not in (0, 1):
            raise ValueError(f"sex must be 0 or 1, got {self.sex!r}")


@dataclass(frozen=True)
class GradeRecord:
    """Static grading of one eye at one visit (one of :data:`GRADES`)."""

    series_id: str
    t: float
    grade: str

    def __post_init__(self):
        if self.grade not in GRADES:
            raise ValueError(f"unknown grade {self.grade!r}")


@dataclass(frozen=True)
class ValidationIssue:
    series_id: str
    kind: str
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[ValidationIssue, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self):
        return bool(self.issues)

    def __len__(self):
        return len(self.issues)

    def kinds(self) -> set[str]:
        return {i.kind for i in self.issues}


def validate_observations(obs: Iterable[FeatureObservation]) -> ValidationReport:
    """Check raw records before they are grouped into trajectories.

    Reports dimension mismatches (against the first record), non-finite
    features and repeated timestamps within a series.
    """
    issues = []
    dim = None
    seen: dict[str, set[float]] = {}
    for o in obs:
        if dim is None:
            dim = o.dim
        if o.dim != dim:
            issues.append(ValidationIssue(o.series_id, "dimension mismatch", f"{o.dim} != {dim}"))
        if not np.all(np.isfinite(o.features)) or not math.isfinite(o.t):
            issues.append(ValidationIssue(o.series_id, "non-finite feature", f"t={o.t}"))
        ts = seen.setdefault(o.series_id, set())
        if o.t in ts:
            issues.append(ValidationIssue(o.series_id, "duplicate timestamp", f"t={o.t}"))
        ts.add(o.t)
    return ValidationReport(tuple(issues))


def validate_dataset(trajectories: Sequence[SeriesTrajectory]) -> ValidationReport:
    """Report per-series defects; the dataset is accepted iff the report is empty."""
    issues = []
    dim = trajectories[0].dim if trajectories else None
    for tr in trajectories:
        if tr.dim != dim:
            issues.append(ValidationIssue(tr.series_id, "dimension mismatch", f"{tr.dim} != {dim}"))
        if not np.all(np.isfinite(tr.vectors)):
            issues.append(ValidationIssue(tr.series_id, "non-finite feature"))
        if not np.all(np.isfinite(tr.times)):
            issues.append(ValidationIssue(tr.series_id, "non-finite timestamp"))
        dt = np.diff(tr.times)
        if np.any(dt == 0):
            issues.append(ValidationIssue(tr.series_id, "duplicate timestamp"))
        elif np.any(dt < 0):
            issues.append(ValidationIssue(tr.series_id, "non-monotone timestamps"))
    return ValidationReport(tuple(issues))
