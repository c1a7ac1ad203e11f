import numpy as np
import pytest
import scipy.linalg
from sklearn.metrics import adjusted_rand_score

from trajclust.cluster import (
    ClusterModel,
    DegenerateAffinityError,
    assign_new,
    build_affinity,
    cluster_report,
    medoids,
    normalized_laplacian,
    spectral_cluster,
)
from trajclust.core import MetricParams
from trajclust.metric import DistanceMatrix, pairwise_matrix
from trajclust.partition import PartitionConfig, partition_dataset


def dm(values):
    values = np.asarray(values, dtype=float)
    return DistanceMatrix(values, MetricParams(), tuple(str(i) for i in range(len(values))))


def block_affinity(sizes, rng):
    n = sum(sizes)
    A = np.zeros((n, n))
    start = 0
    truth = []
    for k, s in enumerate(sizes):
        B = rng.uniform(0.5, 1.0, (s, s))
        A[start:start + s, start:start + s] = 0.5 * (B + B.T)
        truth += [k] * s
        start += s
    return A, np.array(truth)


def random_distances(rng, n):
    X = rng.normal(size=(n, 3))
    return dm(np.linalg.norm(X[:, None] - X[None], axis=-1))


def test_uniform_distances():
    D = dm(np.full((4, 4), 2.0) - 2.0 * np.eye(4))
    with pytest.raises(DegenerateAffinityError):
        build_affinity(D, "shifted_negative")
    A = build_affinity(D, "gaussian")
    off = A.values[~np.eye(4, dtype=bool)]
    assert np.allclose(off, off[0]) and off[0] > 0


def test_duplicate_pair_gets_maximal_affinity():
    D = dm([[0, 0, 3], [0, 0, 2], [3, 2, 0]])
    for kernel in ("shifted_negative", "gaussian"):
        A = build_affinity(D, kernel).values
        assert A[0, 1] == A.max()


def test_gaussian_at_median():
    D = dm([[0, 1, 2], [1, 0, 3], [2, 3, 0]])
    A = build_affinity(D, "gaussian")
    assert A.scale == 2.0
    assert A.values[0, 2] == pytest.approx(np.exp(-0.5)) == pytest.approx(0.6065, abs=1e-4)


def test_shifted_negative_formula(rng):
    D = random_distances(rng, 6)
    A = build_affinity(D)
    assert np.array_equal(A.values, D.values.max() - D.values)
    assert np.all(A.values >= 0)
    assert np.allclose(A.transform(D.values), A.values)


@pytest.mark.parametrize("sizes", [(5, 7), (4, 6, 3), (3, 3, 3, 5)])
def test_block_diagonal_recovered(sizes, rng):
    values, truth = block_affinity(sizes, rng)
    from trajclust.cluster import AffinityMatrix

    A = AffinityMatrix(values, "shifted_negative", 1.0)
    m = len(sizes)
    L, _ = normalized_laplacian(values)
    w = np.linalg.eigvalsh(L)
    assert np.all(np.abs(w[:m]) < 1e-8) and w[m] > 1e-6
    model = spectral_cluster(A, m, seed=0)
    assert adjusted_rand_score(truth, model.assignment) == 1.0
    assert np.allclose(model.eigenvalues, 0.0, atol=1e-8)


def test_n_equals_k_gives_singletons(rng):
    A = build_affinity(random_distances(rng, 4))
    model = spectral_cluster(A, 4, seed=1)
    assert sorted(model.assignment.tolist()) == [0, 1, 2, 3]


def test_laplacian_spectrum_bounds(rng):
    A = build_affinity(random_distances(rng, 40), "gaussian").values
    L, deg = normalized_laplacian(A)
    w, V = scipy.linalg.eigh(L)
    assert w.min() >= -1e-6 and w.max() <= 2 + 1e-6
    assert abs(w[0]) < 1e-8
    v0 = np.sqrt(deg) / np.linalg.norm(np.sqrt(deg))
    assert abs(abs(V[:, 0] @ v0) - 1.0) < 1e-8


def test_determinism_and_relabeling(rng):
    A = build_affinity(random_distances(rng, 60), "gaussian")
    a = spectral_cluster(A, 4, seed=3)
    b = spectral_cluster(A, 4, seed=3)
    assert a == b
    perm = np.array([2, 0, 3, 1])[a.assignment]
    assert adjusted_rand_score(a.assignment, perm) == 1.0


def test_isolated_points_follow_nearest_neighbour():
    D = dm([[0, 1, 9, 9, 50], [1, 0, 9, 9, 48], [9, 9, 0, 1, 60], [9, 9, 1, 0, 60], [50, 48, 60, 60, 0]])
    A = build_affinity(D, "gaussian", scale=1.0)
    model = spectral_cluster(A, 2, seed=0, distances=D)
    assert model.isolated == (4,)
    assert model.assignment[4] == model.assignment[1]


def test_preconditions(rng):
    A = build_affinity(random_distances(rng, 5))
    with pytest.raises(ValueError):
        spectral_cluster(A, 1)
    with pytest.raises(ValueError):
        spectral_cluster(A, 6)


def test_assign_new_and_ties():
    model = ClusterModel(2, np.array([0, 0, 1, 1]), MetricParams(), "shifted_negative", 1.0,
                         np.zeros((4, 2)), 0, np.zeros(2))
    assert assign_new(model, [1.0, 3.0, 0.5, 0.5]) == 1
    assert assign_new(model, [1.0, 1.0, 1.0, 1.0]) == 0
    with pytest.raises(ValueError):
        assign_new(model, [1.0, 2.0])


def test_cluster_model_rejects_empty_cluster():
    with pytest.raises(ValueError):
        ClusterModel(3, np.array([0, 0, 1]), MetricParams(), "gaussian", 1.0, np.zeros((3, 3)), 0, np.zeros(3))


def test_medoids_and_report():
    D = dm([[0, 1, 4, 9], [1, 0, 3, 9], [4, 3, 0, 9], [9, 9, 9, 0]])
    model = ClusterModel(2, np.array([0, 0, 0, 1]), MetricParams(), "gaussian", 1.0,
                         np.zeros((4, 2)), 0, np.zeros(2), ids=("a", "b", "c", "d"))
    assert medoids(model, D) == [1, 3]
    text = cluster_report(model, D)
    assert "0\t3\tb" in text and "1\t1\td" in text


def test_orthogonal_cohort_recovered(orthogonal_cohort):
    subs = partition_dataset(orthogonal_cohort.trajectories, PartitionConfig(rng_seed=0))
    D = pairwise_matrix(subs)
    model = spectral_cluster(build_affinity(D), 3, seed=0, distances=D)
    assert adjusted_rand_score(orthogonal_cohort.truth(subs), model.assignment) >= 0.9
