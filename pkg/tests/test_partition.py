import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajclust.core import SPAN_TOL, SeriesTrajectory
from trajclust.partition import (
    PartitionConfig,
    bin_index,
    enumerate_windows,
    partition_dataset,
    sample_windows,
)

from conftest import make_traj

CFG = PartitionConfig()


def brute_force_windows(times, lo=0.5, hi=1.5):
    return [
        (i, j)
        for i in range(len(times))
        for j in range(len(times))
        if j > i and lo - SPAN_TOL <= times[j] - times[i] <= hi + SPAN_TOL
    ]


def spans(windows):
    return [(w.start_index, w.start_index + len(w) - 1) for w in windows]


def test_single_qualifying_pair():
    assert spans(enumerate_windows(make_traj([0.0, 1.0]), CFG)) == [(0, 1)]


def test_too_short_series():
    assert enumerate_windows(make_traj([0.0, 0.2]), CFG) == []
    assert enumerate_windows(make_traj([3.0]), CFG) == []


def test_three_point_example():
    # brute force over (i, j) pairs: (0,1) 0.6, (0,2) 1.2, (1,2) 0.6
    windows = enumerate_windows(make_traj([0.0, 0.6, 1.2]), CFG)
    assert spans(windows) == [(0, 1), (0, 2), (1, 2)]
    assert len(windows[1]) == 3  # intermediary point kept


def test_windows_keep_intermediate_points():
    tr = make_traj([0.0, 0.3, 0.7, 1.0])
    w = [w for w in enumerate_windows(tr, CFG) if w.start_index == 0 and len(w) == 4][0]
    assert np.array_equal(w.vectors, tr.vectors)


def test_same_bin_keeps_one():
    windows = enumerate_windows(make_traj([0.0, 0.1, 1.0]), CFG)
    assert [w.t_start for w in windows] == [0.0, 0.1]
    assert len(sample_windows(windows, CFG)) == 1


def test_different_bins_keep_both():
    windows = enumerate_windows(make_traj([0.0, 0.7, 1.0, 1.7]), CFG)
    picked = [w for w in windows if (w.start_index, len(w)) in {(0, 3), (1, 3)}]
    assert [w.t_start for w in picked] == [0.0, 0.7]
    assert len(sample_windows(picked, CFG)) == 2


def test_three_window_example_sampling():
    windows = enumerate_windows(make_traj([0.0, 0.6, 1.2]), CFG)
    # starts 0.0, 0.0, 0.6 -> bins {0: 2 windows, 1: 1 window}
    for seed in range(20):
        kept = sample_windows(windows, PartitionConfig(rng_seed=seed))
        assert len(kept) == 2
        assert kept[0].start_index == 0 and kept[1].start_index == 1


def test_both_bin0_windows_reachable():
    windows = enumerate_windows(make_traj([0.0, 0.6, 1.2]), CFG)
    lengths = {len(sample_windows(windows, PartitionConfig(rng_seed=s))[0]) for s in range(50)}
    assert lengths == {2, 3}


def test_midpoint_binning():
    cfg = PartitionConfig(bin_key="midpoint")
    windows = enumerate_windows(make_traj([0.0, 0.6, 1.2]), cfg)
    # midpoints 0.3, 0.6, 0.9 -> bins 0, 1, 1
    assert [bin_index(w, cfg) for w in windows] == [0, 1, 1]
    assert len(sample_windows(windows, cfg)) == 2


def test_bins_aligned_to_epoch_not_first_scan():
    windows = enumerate_windows(make_traj([0.4, 0.6, 1.4]), CFG)
    assert sorted({bin_index(w, CFG) for w in windows}) == [0, 1]


def test_per_series_streams_independent():
    a = make_traj(np.linspace(0, 3, 13), series_id="a")
    b = make_traj(np.linspace(0, 3, 11), series_id="b")
    c = make_traj(np.linspace(0, 3, 9), series_id="c")
    cfg = PartitionConfig(rng_seed=5)
    alone = [s for s in partition_dataset([a, b], cfg) if s.series_id == "a"]
    with_c = [s for s in partition_dataset([c, b, a], cfg) if s.series_id == "a"]
    assert alone == with_c


def test_partition_dataset_ordering():
    trajs = [make_traj(np.linspace(0, 3, 10), series_id=sid) for sid in ("z", "a", "m")]
    subs = partition_dataset(trajs, CFG)
    keys = [(s.series_id, s.t_start) for s in subs]
    assert keys == sorted(keys)


def test_config_validation():
    with pytest.raises(ValueError):
        PartitionConfig(span_center=0.5, span_half_width=0.5)
    with pytest.raises(ValueError):
        PartitionConfig(bin_width=0.0)


times_strategy = st.lists(
    st.floats(0.0, 4.0, allow_nan=False).map(lambda x: round(x, 3)),
    min_size=1, max_size=12, unique=True,
).map(sorted)


@settings(max_examples=200, deadline=None)
@given(times=times_strategy, seed=st.integers(0, 2**32))
def test_partition_properties(times, seed):
    tr = make_traj(times)
    windows = enumerate_windows(tr, CFG)
    assert spans(windows) == brute_force_windows(times)
    cfg = PartitionConfig(rng_seed=seed)
    kept = sample_windows(windows, cfg)
    bins = [bin_index(w, cfg) for w in kept]
    assert len(bins) == len(set(bins))
    assert set(bins) == {bin_index(w, cfg) for w in windows}
    for w in kept:
        assert 0.5 <= w.elapsed <= 1.5
    if len(times) > 1:
        assert len(kept) <= math.ceil((times[-1] - times[0]) / cfg.bin_width) + 1
    assert sample_windows(windows, cfg) == kept
