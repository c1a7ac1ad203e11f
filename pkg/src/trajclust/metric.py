"""Sub-trajectory distances.

Four distances are provided, each building on the previous one:

* :func:`d_transition` -- endpoint distance,
  ``|U_start - V_start| + |U_end - V_end|``.
* :func:`dtw` -- classical dynamic time warping with Euclidean local cost,
  no window and no slope constraint; timestamps are ignored.
* :func:`d_path` -- ``lam * d_transition + (1 - lam) * dtw``.
* :func:`d_subtraj` -- ``phi * d_path(U - U_start, V - V_start)
  + (1 - phi) * d_path(U, V)``.

The single-pair functions and :func:`pairwise_matrix` share the same
compiled kernels, so a matrix entry is bitwise equal to the corresponding
single-pair call. Norms are accumulated component by component in float64.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numba as nb
import numpy as np

from .core import DimensionMismatchError, MetricParams, SubTrajectory

SYMMETRY_TOL = 1e-9

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the bundled TBB is too old for numba; skip probing it
    nb.config.THREADING_LAYER = "omp"


@nb.njit(cache=True, nogil=True)
def _local(X, i, Y, j, sq):
    acc = 0.0
    for k in range(X.shape[1]):
        diff = X[i, k] - Y[j, k]
        acc += diff * diff
    if sq:
        return acc
    return np.sqrt(acc)


@nb.njit(cache=True, nogil=True)
def _transition(X, Y):
    return _local(X, 0, Y, 0, False) + _local(X, X.shape[0] - 1, Y, Y.shape[0] - 1, False)


@nb.njit(cache=True, nogil=True)
def _dtw(X, Y, sq, normalize):
    n, m = X.shape[0], Y.shape[0]
    acc = np.full((n, m), np.inf)
    for i in range(n):
        for j in range(m):
            c = _local(X, i, Y, j, sq)
            if i == 0 and j == 0:
                acc[i, j] = c
                continue
            best = np.inf
            if i > 0 and acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if j > 0 and acc[i, j - 1] < best:
                best = acc[i, j - 1]
            if i > 0 and j > 0 and acc[i - 1, j - 1] < best:
                best = acc[i - 1, j - 1]
            acc[i, j] = best + c
    if normalize:
        return acc[n - 1, m - 1] / (n + m)
    return acc[n - 1, m - 1]


@nb.njit(cache=True, nogil=True)
def _path(X, Y, lam, sq, normalize):
    return lam * _transition(X, Y) + (1.0 - lam) * _dtw(X, Y, sq, normalize)


@nb.njit(cache=True, nogil=True)
def _subtraj(X, Y, Xr, Yr, lam, phi, sq, normalize):
    return phi * _path(Xr, Yr, lam, sq, normalize) + (1.0 - phi) * _path(X, Y, lam, sq, normalize)


@nb.njit(cache=True, parallel=True)
def _pairwise(P, R, offsets, lam, phi, sq, normalize):
    n = offsets.shape[0] - 1
    out = np.zeros((n, n))
    for i in nb.prange(n):
        X = P[offsets[i] : offsets[i + 1]]
        Xr = R[offsets[i] : offsets[i + 1]]
        for j in range(i + 1, n):
            Y = P[offsets[j] : offsets[j + 1]]
            Yr = R[offsets[j] : offsets[j + 1]]
            v = _subtraj(X, Y, Xr, Yr, lam, phi, sq, normalize)
            out[i, j] = v
            out[j, i] = v
    return out


@nb.njit(cache=True, parallel=True)
def _cross(P, R, offsets, Q, S, qoffsets, lam, phi, sq, normalize):
    n = offsets.shape[0] - 1
    m = qoffsets.shape[0] - 1
    out = np.zeros((m, n))
    for a in nb.prange(m):
        Y = Q[qoffsets[a] : qoffsets[a + 1]]
        Yr = S[qoffsets[a] : qoffsets[a + 1]]
        for b in range(n):
            X = P[offsets[b] : offsets[b + 1]]
            Xr = R[offsets[b] : offsets[b + 1]]
            out[a, b] = _subtraj(Y, X, Yr, Xr, lam, phi, sq, normalize)
    return out


def as_points(x) -> np.ndarray:
    """Point sequence of a sub-trajectory or array-like as a C-contiguous (n, d) array."""
    if isinstance(x, SubTrajectory):
        arr = x.vectors
    else:
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError(f"expected a non-empty (n, d) point sequence, got shape {arr.shape}")
    return np.ascontiguousarray(arr, dtype=np.float64)


def relative(x) -> np.ndarray:
    """Subtract the first point from every point."""
    pts = as_points(x)
    return np.ascontiguousarray(pts - pts[0])


def _pair(U, V):
    X, Y = as_points(U), as_points(V)
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatchError(f"feature dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    return X, Y


def d_transition(U, V) -> float:
    X, Y = _pair(U, V)
    return float(_transition(X, Y))


def dtw(U, V, local_cost: str = "euclidean", normalize: bool = False) -> float:
    """DTW cost: sum of local costs along the optimal monotone alignment.

    Parameters
    ----------
    U, V : SubTrajectory or array-like, shape (n, d) / (m, d)
    local_cost : {"euclidean", "sqeuclidean"}
    normalize : bool
        Divide the path cost by ``n + m``.
    """
    X, Y = _pair(U, V)
    return float(_dtw(X, Y, local_cost == "sqeuclidean", normalize))


def d_path(U, V, lam: float, local_cost: str = "euclidean", normalize: bool = False) -> float:
    X, Y = _pair(U, V)
    return float(_path(X, Y, float(lam), local_cost == "sqeuclidean", normalize))


def d_subtraj(U, V, params: MetricParams = MetricParams()) -> float:
    X, Y = _pair(U, V)
    return float(
        _subtraj(
            X,
            Y,
            relative(X),
            relative(Y),
            params.lam,
            params.phi,
            params.local_cost == "sqeuclidean",
            params.dtw_normalize,
        )
    )


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric matrix of :func:`d_subtraj` values with its provenance."""

    values: np.ndarray
    params: MetricParams
    ids: tuple[str, ...]

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"distance matrix must be square, got {v.shape}")
        if len(self.ids) != v.shape[0]:
            raise ValueError("ids do not match matrix size")
        if not np.all(np.isfinite(v)):
            raise ValueError("distance matrix has non-finite entries")
        if np.any(v < 0):
            raise ValueError("distance matrix has negative entries")
        if np.any(np.diag(v) != 0):
            raise ValueError("distance matrix diagonal must be exactly zero")
        if v.size and np.max(np.abs(v - v.T)) > SYMMETRY_TOL:
            raise ValueError("distance matrix is not symmetric")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def subset(self, idx) -> "DistanceMatrix":
        idx = np.asarray(idx, dtype=np.intp)
        return DistanceMatrix(
            self.values[np.ix_(idx, idx)], self.params, tuple(self.ids[i] for i in idx)
        )

    def __eq__(self, other):
        if not isinstance(other, DistanceMatrix):
            return NotImplemented
        return (
            self.params == other.params
            and self.ids == other.ids
            and np.array_equal(self.values, other.values)
        )


def _pack(subs):
    pts = [as_points(s) for s in subs]
    dims = {p.shape[1] for p in pts}
    if len(dims) > 1:
        d0 = pts[0].shape[1]
        k = next(k for k, p in enumerate(pts) if p.shape[1] != d0)
        raise DimensionMismatchError(
            f"pair (0, {k}): feature dimensions differ: {d0} vs {pts[k].shape[1]}"
        )
    offsets = np.zeros(len(pts) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([p.shape[0] for p in pts])
    P = np.ascontiguousarray(np.concatenate(pts)) if pts else np.zeros((0, 1))
    R = np.ascontiguousarray(np.concatenate([p - p[0] for p in pts])) if pts else np.zeros((0, 1))
    return P, R, offsets


def _set_threads(threads):
    if threads is not None:
        nb.set_num_threads(max(1, min(int(threads), nb.config.NUMBA_NUM_THREADS)))


def pairwise_matrix(
    subs: Sequence[SubTrajectory],
    params: MetricParams = MetricParams(),
    threads: int | None = None,
) -> DistanceMatrix:
    """All-pairs :func:`d_subtraj`; upper triangle computed then mirrored.

    Rows are distributed over numba worker threads. Each entry is computed
    independently, so the result does not depend on scheduling.
    """
    ids = tuple(s.id if isinstance(s, SubTrajectory) else str(k) for k, s in enumerate(subs))
    if len(subs) == 0:
        return DistanceMatrix(np.zeros((0, 0)), params, ids)
    P, R, offsets = _pack(subs)
    _set_threads(threads)
    values = _pairwise(
        P, R, offsets, params.lam, params.phi, params.local_cost == "sqeuclidean", params.dtw_normalize
    )
    return DistanceMatrix(values, params, ids)


def cross_distances(
    queries: Sequence[SubTrajectory],
    reference: Sequence[SubTrajectory],
    params: MetricParams = MetricParams(),
    threads: int | None = None,
) -> np.ndarray:
    """``out[a, b] = d_subtraj(queries[a], reference[b])``."""
    P, R, offsets = _pack(reference)
    Q, S, qoffsets = _pack(queries)
    if P.shape[1] != Q.shape[1]:
        raise DimensionMismatchError(f"feature dimensions differ: {Q.shape[1]} vs {P.shape[1]}")
    _set_threads(threads)
    return _cross(
        P, R, offsets, Q, S, qoffsets,
        params.lam, params.phi, params.local_cost == "sqeuclidean", params.dtw_normalize,
    )
