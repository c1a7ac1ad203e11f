# %% [markdown]
# # Windows and distances
#
# A trajectory is a sequence of embedding vectors at irregular visit times.
# We cut it into windows spanning roughly a year and compare windows with a
# distance that looks at both where a window sits and how it moves.

# %%
import numpy as np

from trajclust import MetricParams, PartitionConfig, SeriesTrajectory, d_path, d_subtraj, d_transition, dtw
from trajclust.partition import enumerate_windows, sample_windows

rng = np.random.default_rng(0)
times = np.array([0.0, 0.3, 0.7, 1.1, 1.6, 2.2])
traj = SeriesTrajectory("eye-1", "patient-1", times, np.cumsum(rng.normal(size=(6, 4)), axis=0))

# %% [markdown]
# Every contiguous run of visits whose elapsed time lies in [0.5, 1.5] years
# is a candidate window. Many overlap, so we keep one per half-year bin.

# %%
cfg = PartitionConfig(rng_seed=1)
windows = enumerate_windows(traj, cfg)
for w in windows:
    print(f"{w.id:12s} start={w.t_start:.1f} elapsed={w.elapsed:.1f}")
kept = sample_windows(windows, cfg)
print("kept:", [w.id for w in kept])

# %% [markdown]
# The endpoint term only sees the first and last point. DTW sees the shape.
# Two windows with the same endpoints but a detour in the middle differ only
# in the DTW term.

# %%
straight = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
detour = np.array([[0.0, 0.0], [1.0, 1.5], [2.0, 0.0]])
print("transition:", d_transition(straight, detour))
print("dtw:", dtw(straight, detour))
for lam in (1.0, 0.75, 0.0):
    print(f"path lam={lam}:", d_path(straight, detour, lam))

# %% [markdown]
# The full distance blends the path distance of the raw windows with that of
# windows shifted to start at the origin. With ``phi=1`` only the motion counts.

# %%
moved = straight + 3.0
print("phi=0.75:", d_subtraj(straight, moved))
print("phi=1.0:", d_subtraj(straight, moved, MetricParams(phi=1.0)))
