import math

import numpy as np
import pytest

from trajclust.core import (
    FeatureObservation,
    Label,
    MetricParams,
    SeriesTrajectory,
    SpanError,
    SubTrajectory,
    TargetKind,
    trajectory_from_observations,
    validate_dataset,
)


def test_well_formed_series_has_empty_report():
    tr = SeriesTrajectory("a", "p", [0.0, 0.5, 1.0], np.zeros((3, 4)))
    report = validate_dataset([tr])
    assert report.ok and len(report) == 0


def test_nan_feature_reported():
    v = np.zeros((3, 2))
    v[1, 0] = np.nan
    report = validate_dataset([SeriesTrajectory("a", "p", [0.0, 0.5, 1.0], v)])
    assert "non-finite feature" in report.kinds()


def test_duplicate_timestamp_reported():
    report = validate_dataset([SeriesTrajectory("a", "p", [0.0, 0.5, 0.5], np.zeros((3, 2)))])
    assert "duplicate timestamp" in report.kinds()


def test_out_of_order_and_dimension_mismatch_reported():
    a = SeriesTrajectory("a", "p", [0.0, 1.0], np.zeros((2, 2)))
    b = SeriesTrajectory("b", "p", [1.0, 0.0], np.zeros((2, 3)))
    kinds = validate_dataset([a, b]).kinds()
    assert {"dimension mismatch", "non-monotone timestamps"} <= kinds


def test_ingest_sorts_and_rejects_duplicates():
    obs = [FeatureObservation("s", "p", t, [t, 0.0]) for t in (1.0, 0.0, 0.5)]
    tr = trajectory_from_observations(obs)
    assert tr.times.tolist() == [0.0, 0.5, 1.0]
    assert tr.vectors[:, 0].tolist() == [0.0, 0.5, 1.0]
    with pytest.raises(ValueError, match="duplicate"):
        trajectory_from_observations(obs + [FeatureObservation("s", "p", 0.5, [0.0, 0.0])])


@pytest.mark.parametrize("end", [0.49, 1.51, 3.0])
def test_subtrajectory_outside_span_fails(end):
    with pytest.raises(SpanError):
        SubTrajectory("s", "p", 0, [0.0, end], np.zeros((2, 2)))


def test_subtrajectory_span_bounds_inclusive():
    SubTrajectory("s", "p", 0, [0.0, 0.5], np.zeros((2, 2)))
    SubTrajectory("s", "p", 0, [0.0, 1.5], np.zeros((2, 2)))


def test_subtrajectory_accessors_and_value_semantics():
    v = np.arange(6.0).reshape(3, 2)
    a = SubTrajectory("s", "p", 2, [0.1, 0.6, 1.1], v)
    b = SubTrajectory("s", "p", 2, [0.1, 0.6, 1.1], v.copy())
    assert a == b
    assert np.array_equal(a.start(), [0.0, 1.0]) and np.array_equal(a.end(), [4.0, 5.0])
    assert a.elapsed == pytest.approx(1.0)
    with pytest.raises(ValueError):
        a.vectors[0, 0] = 9.0
    v[0, 0] = 9.0  # the instance holds its own copy
    assert a.vectors[0, 0] == 0.0


@pytest.mark.parametrize("lam,phi", [(-0.1, 0.5), (0.5, 1.1), (math.nan, 0.5)])
def test_metric_params_range(lam, phi):
    with pytest.raises(ValueError):
        MetricParams(lam, phi)


def test_metric_params_default():
    p = MetricParams()
    assert (p.lam, p.phi) == (0.75, 0.75)


def test_label_validation():
    assert Label("s", 0.0, "visual_acuity", -0.2).target_kind is TargetKind.VISUAL_ACUITY
    with pytest.raises(ValueError):
        Label("s", 0.0, "time_to_cnv", -1.0)
    with pytest.raises(ValueError):
        Label("s", 0.0, "time_to_everything", 1.0)
