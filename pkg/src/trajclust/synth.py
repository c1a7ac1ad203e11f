"""Synthetic longitudinal cohorts with known latent dynamics.

Every eye follows one archetype: a bounded, piecewise-linear latent disease
state ``s(tau)`` embedded linearly as ``base + s * direction`` and observed
with isotropic Gaussian noise at irregular visit times. Labels (time to
conversion, visual acuity) and static grades are read off the latent
state, so ground truth is available for every downstream test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    GRADES,
    Demographics,
    GradeRecord,
    Label,
    SeriesTrajectory,
    SubTrajectory,
    TargetKind,
)
from .metric import as_points


@dataclass(frozen=True, eq=False)
class Archetype:
    """One family of disease paths.

    ``knots_t``/``knots_s`` define ``s`` as a function of time since the
    path origin (clamped outside the knots, hence bounded). Each eye enters
    the path at a random offset in ``[0, phase_max]`` years. Conversion to
    late disease happens when ``s`` first reaches ``late_threshold``;
    ``subtype`` ("cnv" or "crora") decides which time-to-subtype label is
    also emitted. ``jump``, if set, is added to every observation after
    ``jump_at`` years since entry (imaging-artefact distractor).
    """

    name: str
    knots_t: tuple[float, ...]
    knots_s: tuple[float, ...]
    direction: np.ndarray
    base: np.ndarray
    phase_max: float = 0.0
    late_threshold: float | None = 2.0
    subtype: str | None = None
    jump: np.ndarray | None = None
    jump_at: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        if not np.any(d != 0):
            raise ValueError(f"archetype {self.name!r}: direction must be nonzero")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "base", np.asarray(self.base, dtype=np.float64))
        if len(self.knots_t) != len(self.knots_s) or len(self.knots_t) < 1:
            raise ValueError("knots_t and knots_s must be equally long and non-empty")
        if np.any(np.diff(self.knots_t) <= 0):
            raise ValueError("knots_t must be strictly increasing")
        if self.subtype not in (None, "cnv", "crora"):
            raise ValueError(f"unknown subtype {self.subtype!r}")

    def state(self, tau) -> np.ndarray:
        return np.interp(tau, self.knots_t, self.knots_s)

    def embed(self, s) -> np.ndarray:
        s = np.atleast_1d(s)
        return self.base[None, :] + s[:, None] * self.direction[None, :]

    def time_to_conversion(self, tau: float) -> float | None:
        """Years from path time ``tau`` until ``s`` first reaches the threshold."""
        thr = self.late_threshold
        if thr is None:
            return None
        if self.state(tau) >= thr:
            return 0.0
        kt = np.asarray(self.knots_t)
        ks = np.asarray(self.knots_s)
        pts_t = [tau] + [t for t in kt if t > tau]
        pts_s = [float(self.state(tau))] + [float(s) for t, s in zip(kt, ks) if t > tau]
        for (t0, s0), (t1, s1) in zip(zip(pts_t, pts_s), zip(pts_t[1:], pts_s[1:])):
            if s1 >= thr > s0:
                return float(t0 + (thr - s0) / (s1 - s0) * (t1 - t0) - tau)
        return None

    def grade(self, s: float) -> str:
        thr = self.late_threshold if self.late_threshold is not None else math.inf
        if s < 0.5:
            return "healthy"
        if s < thr:
            return "early"
        if self.subtype == "crora":
            return "crora_small" if s < thr + 1.0 else "crora_large"
        return "cnv"


def _axis(d, k, norm=1.0):
    v = np.zeros(d)
    v[k % d] = norm
    return v


def orthogonal_archetypes(d: int, n: int = 3, direction_norm: float = 1.0) -> list[Archetype]:
    """``n`` archetypes leaving a common origin along orthogonal axes at 1 unit/year."""
    if n > d:
        raise ValueError("need feature_dim >= number of orthogonal archetypes")
    return [
        Archetype(
            name=f"axis_{k}",
            knots_t=(0.0, 10.0),
            knots_s=(0.0, 10.0),
            direction=_axis(d, k, direction_norm),
            base=np.zeros(d),
            phase_max=1.0,
            late_threshold=None,
        )
        for k in range(n)
    ]


def rate_archetypes(d: int, direction_norm: float = 1.0) -> list[Archetype]:
    """Same disease axis and grades, different speeds.

    Eyes enter in the early stage (``s`` between 0.5 and 1.0) and convert at
    ``s = 2``, so time to conversion is governed by the progression rate,
    which a single visit cannot reveal.
    """
    rates = {"slow_progressor": 0.25, "medium_progressor": 0.5, "fast_progressor": 1.0}
    out = []
    for k, (name, r) in enumerate(rates.items()):
        horizon = 12.0
        out.append(
            Archetype(
                name=name,
                knots_t=(0.0, horizon),
                knots_s=(0.5, 0.5 + r * horizon),
                direction=_axis(d, 0, direction_norm),
                base=np.zeros(d),
                phase_max=0.5 / r,
                late_threshold=2.0,
                subtype="crora" if k == 0 else "cnv",
            )
        )
    return out


def default_archetypes(d: int, direction_norm: float = 1.0, distractor: bool = False) -> list[Archetype]:
    """Five clinically flavoured archetypes, plus an optional artefact distractor."""
    z = np.zeros(d)
    e = lambda k: _axis(d, k, direction_norm)  # noqa: E731
    arch = [
        Archetype("stable", (0.0,), (0.6,), e(0), z, late_threshold=2.0),
        Archetype("slow_progressor", (0.0, 12.0), (0.5, 3.5), e(0), z, phase_max=2.0,
                  subtype="crora"),
        Archetype("fast_progressor", (0.0, 4.0), (0.5, 4.5), e(0), z, phase_max=1.0,
                  subtype="cnv"),
        # deposit growth, then collapse into atrophy
        Archetype("regressor", (0.0, 1.5, 3.0, 6.0), (0.5, 1.8, 1.0, 3.0), e(1), z,
                  phase_max=1.0, subtype="crora"),
        # fluid onset along its own axis
        Archetype("converter", (0.0, 1.0, 2.0, 5.0), (0.5, 0.8, 2.6, 3.0), e(2), z,
                  phase_max=1.0, subtype="cnv"),
    ]
    if distractor:
        arch.append(
            Archetype("artefact", (0.0,), (0.8,), e(0), z, late_threshold=None,
                      jump=e(3) * 2.0, jump_at=0.8)
        )
    return arch


PRESETS = {
    "default": default_archetypes,
    "orthogonal": orthogonal_archetypes,
    "rate": rate_archetypes,
}


@dataclass(frozen=True)
class CohortSpec:
    n_patients: int = 100
    eyes_per_patient: int = 2
    visits_mean: int = 8
    visits_jitter: int = 2
    followup_years: float = 2.0
    feature_dim: int = 32
    archetypes: str | tuple = "default"
    noise: float = 0.05
    seed: int = 0
    interval_jitter: float = 0.5
    entry_max: float = 2.0
    va_noise: float = 0.02
    direction_norm: float = 1.0
    distractor: bool = False

    def __post_init__(self):
        for name in ("n_patients", "eyes_per_patient", "visits_mean", "feature_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if self.visits_jitter < 0 or not 0 <= self.interval_jitter < 1:
            raise ValueError("jitter out of range")

    def resolve_archetypes(self) -> list[Archetype]:
        if isinstance(self.archetypes, str):
            fn = PRESETS[self.archetypes]
            if fn is default_archetypes:
                return fn(self.feature_dim, self.direction_norm, self.distractor)
            return fn(self.feature_dim, direction_norm=self.direction_norm)
        return list(self.archetypes)


@dataclass
class SynthCohort:
    trajectories: list[SeriesTrajectory]
    labels: list[Label]
    demographics: dict[str, Demographics]
    grades: list[GradeRecord]
    archetype_of: dict[str, str]
    archetypes: list[Archetype] = field(default_factory=list)

    def truth(self, subs: Sequence[SubTrajectory]) -> np.ndarray:
        """Archetype index of each sub-trajectory's parent eye."""
        names = [a.name for a in self.archetypes]
        return np.array([names.index(self.archetype_of[s.series_id]) for s in subs])


def generate(spec: CohortSpec) -> SynthCohort:
    """Draw a cohort; a pure function of ``spec``."""
    rng = np.random.default_rng(spec.seed)
    archetypes = spec.resolve_archetypes()
    d = spec.feature_dim
    for a in archetypes:
        if a.direction.shape != (d,) or a.base.shape != (d,):
            raise ValueError(f"archetype {a.name!r} does not live in {d} dimensions")

    trajectories, labels, grades = [], [], []
    demographics, archetype_of = {}, {}
    width = len(str(spec.n_patients - 1))
    for p in range(spec.n_patients):
        pid = f"P{p:0{width}d}"
        demographics[pid] = Demographics(pid, float(rng.uniform(55.0, 85.0)), int(rng.integers(2)))
        for e in range(spec.eyes_per_patient):
            sid = f"{pid}-E{e}"
            arch = archetypes[int(rng.integers(len(archetypes)))]
            archetype_of[sid] = arch.name
            n_vis = spec.visits_mean + int(rng.integers(-spec.visits_jitter, spec.visits_jitter + 1))
            n_vis = max(n_vis, 2)
            mean_gap = spec.followup_years / (n_vis - 1)
            gaps = mean_gap * (1.0 + rng.uniform(-spec.interval_jitter, spec.interval_jitter, n_vis - 1))
            entry = float(rng.uniform(0.0, spec.entry_max))
            rel = np.concatenate([[0.0], np.cumsum(gaps)])
            times = entry + rel
            tau = float(rng.uniform(0.0, arch.phase_max)) + rel
            s = arch.state(tau)
            X = arch.embed(s) + rng.normal(0.0, spec.noise, (n_vis, d)) if spec.noise > 0 else arch.embed(s)
            if arch.jump is not None:
                X = X + (rel >= arch.jump_at)[:, None] * arch.jump[None, :]
            va_err = rng.normal(0.0, spec.va_noise, n_vis)
            trajectories.append(SeriesTrajectory(sid, pid, times, X))
            for k in range(n_vis):
                t = float(times[k])
                ttc = arch.time_to_conversion(float(tau[k]))
                if ttc is not None:
                    labels.append(Label(sid, t, TargetKind.TIME_TO_LATE_AMD, ttc))
                    kind = {"cnv": TargetKind.TIME_TO_CNV, "crora": TargetKind.TIME_TO_CRORA}.get(arch.subtype)
                    if kind is not None:
                        labels.append(Label(sid, t, kind, ttc))
                labels.append(Label(sid, t, TargetKind.VISUAL_ACUITY, 0.1 + 0.25 * float(s[k]) + float(va_err[k])))
                grades.append(GradeRecord(sid, t, arch.grade(float(s[k]))))
    return SynthCohort(trajectories, labels, demographics, grades, archetype_of, archetypes)


def oracle_dtw(U, V) -> float:
    """DTW by exhaustive search over every monotone, boundary-anchored warping path.

    Exponential in the sequence lengths; meant for lengths up to about 6.
    Test-only reference for :func:`trajclust.metric.dtw`.
    """
    X, Y = as_points(U).tolist(), as_points(V).tolist()
    n, m = len(X), len(Y)
    if len(X[0]) != len(Y[0]):
        raise ValueError("dimension mismatch")

    def cost(i, j):
        acc = 0.0
        for a, b in zip(X[i], Y[j]):
            diff = a - b
            acc += diff * diff
        return math.sqrt(acc)

    best = math.inf
    # explicit stack of partial paths: (i, j, cost so far)
    stack = [(0, 0, cost(0, 0))]
    while stack:
        i, j, c = stack.pop()
        if i == n - 1 and j == m - 1:
            best = min(best, c)
            continue
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            a, b = i + di, j + dj
            if a < n and b < m:
                stack.append((a, b, c + cost(a, b)))
    return best
