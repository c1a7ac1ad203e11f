"""Affinity construction and normalized spectral clustering."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from sklearn.cluster import KMeans

from .core import MetricParams
from .metric import DistanceMatrix

KERNELS = ("shifted_negative", "gaussian")
DENSE_EIGEN_LIMIT = 2000


class DegenerateAffinityError(ValueError):
    """Every off-diagonal affinity is zero; there is no graph to cut."""


class ClusteringError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class AffinityMatrix:
    """Similarity matrix derived from distances.

    ``scale`` is the kernel constant and is what :meth:`transform` reuses
    for distances to new points: the shift ``max D`` for
    ``shifted_negative`` and the bandwidth for ``gaussian``.
    """

    values: np.ndarray
    kernel: str
    scale: float

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def transform(self, distances) -> np.ndarray:
        """Apply this kernel, with its fitted constant, to arbitrary distances."""
        return kernel_values(np.asarray(distances, dtype=np.float64), self.kernel, self.scale)

    def subset(self, idx) -> "AffinityMatrix":
        idx = np.asarray(idx, dtype=np.intp)
        return AffinityMatrix(self.values[np.ix_(idx, idx)], self.kernel, self.scale)


def kernel_values(D, kernel, scale):
    if kernel == "shifted_negative":
        return np.maximum(scale - D, 0.0)
    if kernel == "gaussian":
        return np.exp(-(D * D) / (2.0 * scale * scale))
    raise ValueError(f"unknown kernel {kernel!r}")


def _off_diagonal(values):
    n = values.shape[0]
    return values[~np.eye(n, dtype=bool)]


def build_affinity(D: DistanceMatrix | np.ndarray, kernel: str = "shifted_negative",
                   scale: float | None = None) -> AffinityMatrix:
    """Turn distances into affinities.

    ``shifted_negative``: ``A = max(D) - D``, i.e. the negated distance
    shifted to be non-negative. ``gaussian``: ``exp(-D^2 / (2 scale^2))``
    with ``scale`` defaulting to the median off-diagonal distance.
    Diagonal entries follow from ``D_ii = 0`` and are therefore each row's
    maximum.

    Raises
    ------
    DegenerateAffinityError
        If every off-diagonal affinity is zero.
    """
    values = D.values if isinstance(D, DistanceMatrix) else np.asarray(D, dtype=np.float64)
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    off = _off_diagonal(values)
    if scale is None:
        if kernel == "shifted_negative":
            scale = float(off.max()) if off.size else 0.0
        else:
            scale = float(np.median(off)) if off.size else 0.0
    if kernel == "gaussian" and not scale > 0:
        raise DegenerateAffinityError("gaussian bandwidth must be positive (all distances zero?)")
    A = kernel_values(values, kernel, scale)
    if not np.any(_off_diagonal(A) > 0):
        raise DegenerateAffinityError("all off-diagonal affinities are zero")
    return AffinityMatrix(A, kernel, scale)


def normalized_laplacian(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``L = I - Deg^{-1/2} A Deg^{-1/2}`` and the degree vector.

    Zero-degree rows get a zero scaling, so their block of L is the identity.
    """
    deg = A.sum(axis=1)
    with np.errstate(divide="ignore"):
        inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    L = np.eye(A.shape[0]) - (inv_sqrt[:, None] * A) * inv_sqrt[None, :]
    L = 0.5 * (L + L.T)
    return L, deg


def smallest_eigenpairs(L: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs for the ``k`` smallest eigenvalues, ascending, with fixed signs."""
    n = L.shape[0]
    if n <= DENSE_EIGEN_LIMIT:
        w, V = scipy.linalg.eigh(L, subset_by_index=[0, k - 1])
    else:
        try:
            w, V = scipy.sparse.linalg.eigsh(L, k=min(k + 5, n - 1), which="SA", tol=1e-10)
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise ClusteringError("eigensolver failed to converge") from exc
        order = np.argsort(w)[:k]
        w, V = w[order], V[:, order]
    # sign convention: largest-magnitude component positive
    flip = np.sign(V[np.argmax(np.abs(V), axis=0), np.arange(V.shape[1])])
    flip[flip == 0] = 1.0
    return w, V * flip


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """Fitted spectral clustering of ``n`` sub-trajectories into ``K`` groups."""

    K: int
    assignment: np.ndarray
    params: MetricParams
    kernel: str
    scale: float
    embedding: np.ndarray
    seed: int
    eigenvalues: np.ndarray
    ids: tuple[str, ...] = ()
    isolated: tuple[int, ...] = ()
    members: tuple[np.ndarray, ...] = field(init=False)

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.int64, copy=True)
        if a.ndim != 1 or (a.size and (a.min() < 0 or a.max() >= self.K)):
            raise ValueError("assignment must hold cluster ids in [0, K)")
        members = tuple(np.flatnonzero(a == k) for k in range(self.K))
        if any(m.size == 0 for m in members):
            raise ValueError("every cluster must be non-empty")
        for name, arr in (("assignment", a), ("embedding", self.embedding), ("eigenvalues", self.eigenvalues)):
            arr = a if name == "assignment" else np.array(arr, dtype=np.float64, copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        for m in members:
            m.flags.writeable = False
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "isolated", tuple(int(i) for i in self.isolated))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    def counts(self) -> np.ndarray:
        return np.array([m.size for m in self.members])

    def __eq__(self, other):
        if not isinstance(other, ClusterModel):
            return NotImplemented
        return (
            self.K == other.K
            and self.params == other.params
            and self.kernel == other.kernel
            and self.scale == other.scale
            and self.seed == other.seed
            and self.ids == other.ids
            and self.isolated == other.isolated
            and np.array_equal(self.assignment, other.assignment)
            and np.array_equal(self.embedding, other.embedding)
            and np.array_equal(self.eigenvalues, other.eigenvalues)
        )


def spectral_cluster(
    A: AffinityMatrix,
    K: int,
    seed: int = 0,
    distances: DistanceMatrix | np.ndarray | None = None,
    params: MetricParams | None = None,
    ids=None,
    n_init: int = 50,
) -> ClusterModel:
    """Normalized spectral clustering (Ng, Jordan & Weiss).

    Embeds every point by the ``K`` eigenvectors of the symmetric
    normalized Laplacian with smallest eigenvalues, L2-normalizes the rows
    and runs seeded k-means++ (``n_init`` restarts, tol 1e-8) on them.

    Points without any off-diagonal affinity are left out of the embedding
    and afterwards take the cluster of their nearest neighbour (by
    ``distances`` when given, else by affinity); their indices are kept in
    ``ClusterModel.isolated``.
    """
    values = A.values
    n = values.shape[0]
    if K < 2:
        raise ValueError("K must be at least 2")
    if n < K:
        raise ValueError(f"cannot split {n} points into {K} clusters")
    if isinstance(distances, DistanceMatrix):
        if params is None:
            params = distances.params
        if ids is None:
            ids = distances.ids
        distances = distances.values
    # self-affinity does not connect a point to the graph
    deg = values.sum(axis=1) - np.diag(values)
    isolated = np.flatnonzero(deg <= 0)
    active = np.flatnonzero(deg > 0)
    if active.size < K:
        raise ClusteringError(f"only {active.size} connected points for {K} clusters")

    sub = values[np.ix_(active, active)]
    L, _ = normalized_laplacian(sub)
    w, V = smallest_eigenpairs(L, K)
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    emb = V / norms

    km = KMeans(n_clusters=K, init="k-means++", n_init=n_init, tol=1e-8,
                max_iter=500, random_state=seed)
    labels_active = km.fit_predict(emb)
    if np.unique(labels_active).size < K:
        raise ClusteringError("k-means left an empty cluster in every restart")

    labels = np.empty(n, dtype=np.int64)
    labels[active] = labels_active
    embedding = np.zeros((n, K))
    embedding[active] = emb
    for i in isolated:
        if distances is not None:
            ref = np.asarray(distances)[i, active]
            nn = active[int(np.argmin(ref))]
        else:
            nn = active[int(np.argmax(values[i, active]))]
        labels[i] = labels[nn]
    labels = _canonical_labels(labels)

    return ClusterModel(
        K=K,
        assignment=labels,
        params=params if params is not None else MetricParams(),
        kernel=A.kernel,
        scale=A.scale,
        embedding=embedding,
        seed=int(seed),
        eigenvalues=w,
        ids=tuple(ids) if ids is not None else (),
        isolated=tuple(isolated.tolist()),
    )


def _canonical_labels(labels):
    """Renumber clusters by order of first appearance so ids are reproducible."""
    mapping = {}
    for lab in labels:
        if lab not in mapping:
            mapping[lab] = len(mapping)
    return np.array([mapping[lab] for lab in labels], dtype=np.int64)


def assign_new(model: ClusterModel, d_new) -> int:
    """Cluster with the smallest mean distance to its members; ties go to the lower id."""
    d_new = np.asarray(d_new, dtype=np.float64)
    if d_new.shape != (model.n,):
        raise ValueError(f"expected {model.n} distances, got shape {d_new.shape}")
    means = np.array([d_new[m].mean() for m in model.members])
    return int(np.argmin(means))


def medoids(model: ClusterModel, D: DistanceMatrix | np.ndarray) -> list[int]:
    """Per cluster, the member minimizing summed distance to the other members."""
    values = D.values if isinstance(D, DistanceMatrix) else np.asarray(D)
    out = []
    for m in model.members:
        block = values[np.ix_(m, m)]
        out.append(int(m[int(np.argmin(block.sum(axis=1)))]))
    return out


def cluster_report(model: ClusterModel, D: DistanceMatrix | np.ndarray, ids=None) -> str:
    """Plain-text table of member counts and medoid ids per cluster."""
    ids = list(ids) if ids is not None else list(model.ids) or [str(i) for i in range(model.n)]
    meds = medoids(model, D)
    lines = [
        f"# clusters={model.K} n={model.n} kernel={model.kernel} "
        f"lambda={model.params.lam!r} phi={model.params.phi!r} seed={model.seed}",
        "cluster\tcount\tmedoid",
    ]
    for k, (m, med) in enumerate(zip(model.members, meds)):
        lines.append(f"{k}\t{m.size}\t{ids[med]}")
    if model.isolated:
        lines.append("# isolated: " + ",".join(ids[i] for i in model.isolated))
    return "\n".join(lines) + "\n"
