import numpy as np
import pytest

from trajclust.core import TargetKind, validate_dataset
from trajclust.synth import Archetype, CohortSpec, SynthCohort, generate, oracle_dtw, rate_archetypes


def test_noiseless_single_archetype_shares_path():
    arch = rate_archetypes(4)[:1]
    c = generate(CohortSpec(n_patients=1, eyes_per_patient=2, archetypes=tuple(arch), noise=0.0,
                            feature_dim=4, seed=1))
    a = arch[0]
    for tr in c.trajectories:
        # every point lies on base + s * direction with s on the archetype's range
        s = tr.vectors @ a.direction / (a.direction @ a.direction)
        assert np.allclose(tr.vectors, a.embed(s))
        assert np.all(np.diff(s) > 0)


def test_seeded_determinism():
    spec = CohortSpec(n_patients=5, seed=11)
    a, b = generate(spec), generate(spec)
    assert a.trajectories == b.trajectories
    assert a.labels == b.labels and a.grades == b.grades
    assert generate(CohortSpec(n_patients=5, seed=12)).trajectories != a.trajectories


def test_generated_cohort_is_valid():
    c = generate(CohortSpec(n_patients=120, eyes_per_patient=2, visits_mean=8,
                            followup_years=2.0, seed=2))
    assert validate_dataset(c.trajectories).ok
    visits = np.mean([len(tr) for tr in c.trajectories])
    follow = np.mean([tr.times[-1] - tr.times[0] for tr in c.trajectories])
    assert abs(visits - 8) / 8 < 0.1
    assert abs(follow - 2.0) / 2.0 < 0.1
    assert set(c.archetype_of.values()) <= {a.name for a in c.archetypes}


def test_time_to_conversion_rule():
    a = Archetype("x", (0.0, 4.0), (0.0, 4.0), np.ones(2), np.zeros(2), late_threshold=2.0)
    assert a.time_to_conversion(0.5) == pytest.approx(1.5)
    assert a.time_to_conversion(3.0) == 0.0
    never = Archetype("y", (0.0, 4.0), (0.0, 1.0), np.ones(2), np.zeros(2))
    assert never.time_to_conversion(0.0) is None
    # regression and later rise: first crossing counts
    bump = Archetype("z", (0.0, 1.0, 2.0, 4.0), (1.0, 1.5, 1.0, 3.0), np.ones(2), np.zeros(2))
    assert bump.time_to_conversion(0.0) == pytest.approx(2.0 + 0.5 * 2.0)


def test_labels_follow_conversion():
    c = generate(CohortSpec(n_patients=10, archetypes="rate", seed=0, feature_dim=4))
    by_kind = {k: [l for l in c.labels if l.target_kind is k] for k in TargetKind}
    assert by_kind[TargetKind.TIME_TO_LATE_AMD]
    assert all(l.value >= 0 for l in by_kind[TargetKind.TIME_TO_LATE_AMD])
    n_sub = len(by_kind[TargetKind.TIME_TO_CNV]) + len(by_kind[TargetKind.TIME_TO_CRORA])
    assert n_sub == len(by_kind[TargetKind.TIME_TO_LATE_AMD])


def test_distractor_archetype():
    c = generate(CohortSpec(n_patients=30, distractor=True, seed=4, feature_dim=8))
    assert "artefact" in {a.name for a in c.archetypes}


def test_archetype_validation():
    with pytest.raises(ValueError):
        Archetype("bad", (0.0,), (1.0,), np.zeros(3), np.zeros(3))


def test_oracle_dtw_tiny():
    assert oracle_dtw([[0.0]], [[3.0]]) == 3.0
    # 1-D [0, 2] vs [0, 1, 2]: paths (0-0, 2-1, 2-2) etc.; best costs 1
    assert oracle_dtw([0.0, 2.0], [0.0, 1.0, 2.0]) == 1.0
