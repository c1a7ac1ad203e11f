"""Partition trajectories into roughly one-year sub-trajectories.

Every contiguous window whose elapsed time lies in
``[span_center - span_half_width, span_center + span_half_width]`` is a
candidate. Candidates are then thinned so that at most one window starts in
each ``bin_width``-year interval, which stops densely sampled eyes from
dominating the clustering.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import SPAN_TOL, SeriesTrajectory, SubTrajectory, in_span


@dataclass(frozen=True)
class PartitionConfig:
    span_center: float = 1.0
    span_half_width: float = 0.5
    bin_width: float = 0.5
    rng_seed: int = 0
    bin_key: str = "start"  # or "midpoint"

    def __post_init__(self):
        if not self.span_half_width < self.span_center:
            raise ValueError("span_half_width must be smaller than span_center")
        if self.span_half_width < 0:
            raise ValueError("span_half_width must be non-negative")
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")
        if self.bin_key not in ("start", "midpoint"):
            raise ValueError(f"unknown bin_key {self.bin_key!r}")

    @property
    def span_min(self) -> float:
        return self.span_center - self.span_half_width

    @property
    def span_max(self) -> float:
        return self.span_center + self.span_half_width


def series_rng(seed: int, series_id: str) -> np.random.Generator:
    """Independent generator per (seed, series) so series never perturb each other."""
    digest = hashlib.sha256(f"{int(seed)}\x00{series_id}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:16], "little"))


def enumerate_windows(traj: SeriesTrajectory, cfg: PartitionConfig) -> list[SubTrajectory]:
    """All index windows ``[i..j]`` whose elapsed time lies in the span."""
    t = traj.times
    out = []
    lo, hi = cfg.span_min, cfg.span_max
    for i in range(len(t) - 1):
        # times are sorted, so the feasible j form a contiguous run
        for j in range(i + 1, len(t)):
            elapsed = float(t[j] - t[i])
            if elapsed > hi + SPAN_TOL:
                break
            if in_span(elapsed, lo, hi):
                out.append(
                    SubTrajectory(
                        traj.series_id,
                        traj.patient_id,
                        i,
                        t[i : j + 1],
                        traj.vectors[i : j + 1],
                        span_min=lo,
                        span_max=hi,
                    )
                )
    return out


def bin_index(sub: SubTrajectory, cfg: PartitionConfig) -> int:
    """Sampling bin of a window, aligned to the dataset epoch."""
    if cfg.bin_key == "start":
        key = sub.t_start
    else:
        key = 0.5 * (sub.t_start + sub.t_end)
    return math.floor(key / cfg.bin_width)


def sample_windows(
    windows: Sequence[SubTrajectory],
    cfg: PartitionConfig,
    rng: np.random.Generator | None = None,
) -> list[SubTrajectory]:
    """Keep exactly one uniformly chosen window per non-empty time bin.

    If ``rng`` is None a per-series generator is derived from
    ``cfg.rng_seed`` and the series id of the windows.
    """
    if not windows:
        return []
    sid = windows[0].series_id
    if any(w.series_id != sid for w in windows):
        raise ValueError("sample_windows expects windows from a single series")
    if rng is None:
        rng = series_rng(cfg.rng_seed, sid)
    bins: dict[int, list[SubTrajectory]] = {}
    for w in windows:
        bins.setdefault(bin_index(w, cfg), []).append(w)
    kept = []
    for b in sorted(bins):
        members = bins[b]
        kept.append(members[int(rng.integers(len(members)))])
    kept.sort(key=lambda w: (w.t_start, len(w)))
    return kept


def partition_dataset(
    trajs: Sequence[SeriesTrajectory], cfg: PartitionConfig
) -> list[SubTrajectory]:
    """Enumerate and thin every series; output ordered by (series_id, t_start)."""
    out = []
    for tr in sorted(trajs, key=lambda tr: tr.series_id):
        out.extend(sample_windows(enumerate_windows(tr, cfg), cfg))
    return out
