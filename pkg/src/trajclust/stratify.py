"""Risk stratification from cluster memberships.

Each sub-trajectory is described by a probability vector over the K
clusters: the mean affinity to every cluster's members is turned into a
pseudo-distance to the best cluster and passed through a Gaussian kernel
of bandwidth ``sigma``. A linear model on those vectors predicts the
progression targets; two baselines (demographics and the static grade)
run on identical patient-wise splits.
"""
from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cluster import AffinityMatrix, ClusterModel, build_affinity, spectral_cluster
from .core import (
    DAYS_PER_YEAR,
    GRADES,
    Demographics,
    GradeRecord,
    Label,
    MetricParams,
    SeriesTrajectory,
    SubTrajectory,
    TargetKind,
)
from .metric import pairwise_matrix
from .partition import PartitionConfig, partition_dataset

log = logging.getLogger(__name__)

LABEL_TOLERANCE_YEARS = 30 / DAYS_PER_YEAR
METHODS = ("demographic", "static_grade", "temporal_clusters")
# bandwidths used by the ablation sweep (affinity units)
SIGMA_GRID = (0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0)


# --------------------------------------------------------------------------
# memberships


def average_affinity(rows: np.ndarray, model: ClusterModel, self_index=None) -> np.ndarray:
    """Mean affinity of each row to the members of each cluster.

    ``rows`` has shape (m, n_train). When ``self_index[r]`` is a training
    index, that column is excluded from its own cluster's mean; a singleton
    cluster then falls back to the point's self-affinity.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    onehot = np.zeros((model.n, model.K))
    onehot[np.arange(model.n), model.assignment] = 1.0
    sums = rows @ onehot
    counts = np.broadcast_to(onehot.sum(axis=0), sums.shape).copy()
    if self_index is not None:
        for r, i in enumerate(np.atleast_1d(self_index)):
            if i is None or i < 0:
                continue
            k = model.assignment[i]
            if counts[r, k] > 1:
                sums[r, k] -= rows[r, i]
                counts[r, k] -= 1
    return sums / counts


def membership_from_average(avg: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian kernel over ``max(avg) - avg``, normalized per row."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    avg = np.atleast_2d(avg)
    g = avg.max(axis=1, keepdims=True) - avg
    p = np.exp(-(g * g) / (2.0 * sigma * sigma))
    return p / p.sum(axis=1, keepdims=True)


def membership(sub_index: int, A: AffinityMatrix, model: ClusterModel, sigma: float) -> np.ndarray:
    """Membership vector of training point ``sub_index`` (length K, sums to 1)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    avg = average_affinity(A.values[sub_index], model, self_index=[sub_index])
    return membership_from_average(avg, sigma)[0]


def membership_matrix(rows, model, sigma, self_index=None) -> np.ndarray:
    return membership_from_average(average_affinity(rows, model, self_index), sigma)


def auto_sigma(avg: np.ndarray) -> float:
    """Median gap between the best cluster's mean affinity and the others'."""
    g = avg.max(axis=1, keepdims=True) - avg
    g = g[g > 0]
    return float(np.median(g)) if g.size else 1.0


# --------------------------------------------------------------------------
# linear model


@dataclass(frozen=True, eq=False)
class RiskModel:
    target_kind: TargetKind
    coefficients: np.ndarray
    intercept: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=np.float64, copy=True)
        if not np.all(np.isfinite(c)) or not math.isfinite(self.intercept):
            raise ValueError("risk model coefficients must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "target_kind", TargetKind(self.target_kind))
        object.__setattr__(self, "intercept", float(self.intercept))

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X @ self.coefficients + self.intercept

    def __eq__(self, other):
        if not isinstance(other, RiskModel):
            return NotImplemented
        return (
            self.target_kind == other.target_kind
            and self.intercept == other.intercept
            and self.metadata == other.metadata
            and np.array_equal(self.coefficients, other.coefficients)
        )


def fit_linear(X, y, target_kind=TargetKind.TIME_TO_LATE_AMD, metadata=None) -> RiskModel:
    """Ordinary least squares with intercept.

    Rank-deficient designs (membership vectors always sum to one, so they
    are collinear with the intercept) get the minimum-norm solution.
    Requires at least ``n_features + 2`` rows.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError("X and y disagree in length")
    if n < p + 2:
        raise ValueError(f"need at least {p + 2} training rows, got {n}")
    design = np.hstack([np.ones((n, 1)), X])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return RiskModel(target_kind, beta[1:], beta[0], dict(metadata or {}))


# --------------------------------------------------------------------------
# labels and baseline features


class _TimeIndex:
    """Nearest-time lookup of per-series records."""

    def __init__(self, records, key):
        self._t: dict[str, list[float]] = {}
        self._v: dict[str, list] = {}
        for rec in sorted(records, key=lambda r: (r.series_id, r.t)):
            self._t.setdefault(rec.series_id, []).append(rec.t)
            self._v.setdefault(rec.series_id, []).append(key(rec))

    def nearest(self, series_id, t, tol=LABEL_TOLERANCE_YEARS):
        ts = self._t.get(series_id)
        if not ts:
            return None
        k = bisect.bisect_left(ts, t)
        best = None
        for c in (k - 1, k):
            if 0 <= c < len(ts) and abs(ts[c] - t) <= tol + 1e-12:
                if best is None or abs(ts[c] - t) < abs(ts[best] - t):
                    best = c
        return None if best is None else self._v[series_id][best]


def align_labels(subs: Sequence[SubTrajectory], labels: Iterable[Label], kind) -> np.ndarray:
    """Label of each sub-trajectory at its final visit (±30 days), NaN if none."""
    kind = TargetKind(kind)
    idx = _TimeIndex([l for l in labels if l.target_kind is kind], key=lambda l: l.value)
    out = np.full(len(subs), np.nan)
    for i, s in enumerate(subs):
        v = idx.nearest(s.series_id, s.t_end)
        if v is not None:
            out[i] = v
    return out


def baseline_features(
    kind: str,
    subs: Sequence[SubTrajectory],
    demographics: Mapping[str, Demographics] | None = None,
    grades: Iterable[GradeRecord] | None = None,
) -> np.ndarray:
    """Static feature rows for the comparison models.

    ``demographic``: ``[age at final visit, sex]``.
    ``static_grade``: one-hot over the five grading classes at the final
    visit (±30 days); an all-zero row when no grade was recorded.
    """
    if kind == "demographic":
        if demographics is None:
            raise ValueError("demographic baseline needs demographics")
        rows = []
        for s in subs:
            d = demographics[s.patient_id]
            rows.append([d.age_at_epoch + s.t_end, float(d.sex)])
        return np.array(rows, dtype=np.float64).reshape(len(subs), 2)
    if kind == "static_grade":
        idx = _TimeIndex(list(grades or ()), key=lambda g: g.grade)
        X = np.zeros((len(subs), len(GRADES)))
        for i, s in enumerate(subs):
            g = idx.nearest(s.series_id, s.t_end)
            if g is not None:
                X[i, GRADES.index(g)] = 1.0
        return X
    raise ValueError(f"unknown baseline {kind!r}")


# --------------------------------------------------------------------------
# cross-validated evaluation


def patient_folds(patient_ids: Sequence[str], n_folds: int, rng: np.random.Generator,
                  mode: str = "kfold") -> list[tuple[np.ndarray, np.ndarray]]:
    """Patient-wise (train, test) index splits.

    ``kfold`` shuffles the distinct patients and cuts them into ``n_folds``
    near-equal groups. ``holdout`` draws ``n_folds`` independent 80/20
    patient splits.
    """
    pids = np.asarray(patient_ids)
    uniq = np.array(sorted(set(pids.tolist())))
    if n_folds < 2 or uniq.size < n_folds:
        raise ValueError(f"need at least {n_folds} patients for {n_folds} folds")
    splits = []
    if mode == "kfold":
        groups = np.array_split(rng.permutation(uniq), n_folds)
        for g in groups:
            test = np.isin(pids, g)
            splits.append((np.flatnonzero(~test), np.flatnonzero(test)))
    elif mode == "holdout":
        n_test = max(1, int(round(0.2 * uniq.size)))
        for _ in range(n_folds):
            g = rng.permutation(uniq)[:n_test]
            test = np.isin(pids, g)
            splits.append((np.flatnonzero(~test), np.flatnonzero(test)))
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    return splits


@dataclass
class EvalReport:
    """Test-fold MAE for every (method, target), shaped (n_seeds, n_folds).

    Skipped folds hold NaN and are listed in ``skipped``.
    """

    seeds: tuple[int, ...]
    n_folds: int
    K: int
    sigma: float | None
    params: MetricParams
    kernel: str
    mae: dict[tuple[str, str], np.ndarray]
    skipped: list[tuple[int, int, str, str, str]] = field(default_factory=list)
    fold_patients: list[tuple[int, int, frozenset, frozenset]] = field(default_factory=list)
    sigmas_used: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def targets(self) -> list[str]:
        return sorted({t for _, t in self.mae}, key=[k.value for k in TargetKind].index)

    def summary(self, method: str, target: str) -> tuple[float, float]:
        v = self.mae[(method, target)]
        v = v[np.isfinite(v)]
        if v.size == 0:
            return math.nan, math.nan
        return float(v.mean()), float(v.std())

    def seed_means(self, method: str, target: str) -> np.ndarray:
        v = self.mae[(method, target)]
        with np.errstate(invalid="ignore"):
            return np.array([np.nanmean(r) if np.any(np.isfinite(r)) else np.nan for r in v])

    def patient_overlaps(self) -> list[int]:
        return [len(tr & te) for _, _, tr, te in self.fold_patients]

    def to_table(self) -> str:
        targets = self.targets
        head = f"{'':>20} | " + " | ".join(f"{t:>18}" for t in targets)
        lines = [
            f"# MAE mean±std over {self.n_folds} folds x {len(self.seeds)} seeds; "
            f"K={self.K} lambda={self.params.lam!r} phi={self.params.phi!r} "
            f"sigma={'auto' if self.sigma is None else repr(self.sigma)} kernel={self.kernel}",
            head,
            "-" * len(head),
        ]
        present = [m for m in METHODS if any((m, t) in self.mae for t in targets)]
        for m in present:
            cells = []
            for t in targets:
                mu, sd = self.summary(m, t)
                cells.append(f"{mu:>10.3f}±{sd:<7.3f}")
            lines.append(f"{m:>20} | " + " | ".join(cells))
        if self.skipped:
            lines.append(f"# skipped folds: {len(self.skipped)}")
        return "\n".join(lines) + "\n"

    def to_records(self) -> str:
        """CSV: method,target,seed,fold,mae (one line per fold) then summary lines."""
        out = ["method,target,seed,fold,mae"]
        for (m, t), v in sorted(self.mae.items()):
            for si, seed in enumerate(self.seeds):
                for f in range(self.n_folds):
                    out.append(f"{m},{t},{seed},{f},{v[si, f]!r}")
        for (m, t) in sorted(self.mae):
            mu, sd = self.summary(m, t)
            out.append(f"{m},{t},mean,all,{mu!r}")
            out.append(f"{m},{t},std,all,{sd!r}")
        return "\n".join(out) + "\n"


def _mae(pred, y):
    return float(np.mean(np.abs(pred - y)))


def evaluate(
    trajectories: Sequence[SeriesTrajectory],
    labels: Sequence[Label],
    params: MetricParams = MetricParams(),
    K: int = 30,
    sigma: float | None = None,
    n_folds: int = 10,
    n_seeds: int = 7,
    *,
    seeds: Sequence[int] | None = None,
    partition: PartitionConfig = PartitionConfig(),
    kernel: str = "shifted_negative",
    demographics: Mapping[str, Demographics] | None = None,
    grades: Sequence[GradeRecord] | None = None,
    targets: Sequence[str] | None = None,
    split: str = "kfold",
    threads: int | None = None,
    n_init: int = 50,
) -> EvalReport:
    """Cross-validated MAE of cluster-membership regression and baselines.

    For every seed the dataset is re-partitioned with that seed, split
    patient-wise into folds, and for every fold the training
    sub-trajectories are clustered; membership vectors for training and
    test rows come from affinities to the training members only. The same
    splits score the demographic and static-grade baselines (skipped when
    their inputs are missing). ``sigma=None`` picks the bandwidth per fold
    with :func:`auto_sigma` on the training rows.
    """
    seeds = tuple(seeds) if seeds is not None else tuple(range(n_seeds))
    if targets is None:
        targets = sorted({l.target_kind.value for l in labels}, key=[k.value for k in TargetKind].index)
    targets = [TargetKind(t).value for t in targets]
    methods = ["temporal_clusters"]
    if demographics is not None:
        methods.insert(0, "demographic")
    if grades is not None:
        methods.insert(-1, "static_grade")
    mae = {(m, t): np.full((len(seeds), n_folds), np.nan) for m in methods for t in targets}
    report = EvalReport(seeds, n_folds, K, sigma, params, kernel, mae)

    for si, seed in enumerate(seeds):
        subs = partition_dataset(trajectories, replace(partition, rng_seed=seed))
        if len(subs) <= K:
            raise ValueError(f"seed {seed}: only {len(subs)} sub-trajectories for K={K}")
        D = pairwise_matrix(subs, params, threads=threads)
        y_all = {t: align_labels(subs, labels, t) for t in targets}
        base = {}
        if demographics is not None:
            base["demographic"] = baseline_features("demographic", subs, demographics)
        if grades is not None:
            base["static_grade"] = baseline_features("static_grade", subs, grades=grades)
        pids = [s.patient_id for s in subs]
        rng = np.random.default_rng(seed)
        for f, (tr, te) in enumerate(patient_folds(pids, n_folds, rng, split)):
            tr_p = frozenset(pids[i] for i in tr)
            te_p = frozenset(pids[i] for i in te)
            report.fold_patients.append((seed, f, tr_p, te_p))
            if tr_p & te_p:
                raise RuntimeError(f"seed {seed} fold {f}: patients shared between train and test")

            Dtr = D.subset(tr)
            A = build_affinity(Dtr, kernel)
            model = spectral_cluster(A, K, seed=seed, distances=Dtr, n_init=n_init)
            avg_tr = average_affinity(A.values, model, self_index=np.arange(tr.size))
            avg_te = average_affinity(A.transform(D.values[np.ix_(te, tr)]), model)
            sig = auto_sigma(avg_tr) if sigma is None else sigma
            report.sigmas_used[(seed, f)] = sig
            feats = {
                "temporal_clusters": (
                    membership_from_average(avg_tr, sig),
                    membership_from_average(avg_te, sig),
                )
            }
            for m, X in base.items():
                feats[m] = (X[tr], X[te])

            for t in targets:
                y_tr, y_te = y_all[t][tr], y_all[t][te]
                ok_tr, ok_te = np.isfinite(y_tr), np.isfinite(y_te)
                if not ok_te.any():
                    for m in methods:
                        report.skipped.append((seed, f, m, t, "no labeled test rows"))
                    continue
                for m in methods:
                    X_tr, X_te = feats[m]
                    if ok_tr.sum() < X_tr.shape[1] + 2:
                        report.skipped.append((seed, f, m, t, "too few labeled training rows"))
                        continue
                    rm = fit_linear(X_tr[ok_tr], y_tr[ok_tr], t)
                    mae[(m, t)][si, f] = _mae(rm.predict(X_te[ok_te]), y_te[ok_te])
        log.info("seed %s done: %d sub-trajectories", seed, len(subs))
    return report
