"""Reading and writing datasets and pipeline artifacts.

Text formats are UTF-8 CSV with a one-line ``#<kind> key=value ...``
manifest header. Floats are written with ``repr`` so finite doubles
round-trip exactly. Distance matrices use a binary little-endian lower
triangle behind a small JSON header carrying ``n`` and a CRC32.
"""
from __future__ import annotations

import csv
import json
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cluster import ClusterModel
from .core import (
    DAYS_PER_YEAR,
    Demographics,
    DimensionMismatchError,
    FeatureObservation,
    GradeRecord,
    Label,
    MetricParams,
    SeriesTrajectory,
    SubTrajectory,
    TargetKind,
    trajectory_from_observations,
    validate_dataset,
)
from .metric import DistanceMatrix
from .stratify import EvalReport, RiskModel

FORMAT_VERSION = 1
DIST_MAGIC = b"TRAJCLUST-DIST\n"


class FormatError(ValueError):
    def __init__(self, msg, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {msg}" if where else msg)
        self.line = line


@dataclass(frozen=True)
class DatasetManifest:
    format_version: int = FORMAT_VERSION
    feature_dim: int = 1
    time_unit: str = "years"
    series: int | None = None
    patients: int | None = None
    observations: int | None = None

    def __post_init__(self):
        if self.format_version != FORMAT_VERSION:
            raise FormatError(f"unsupported format_version {self.format_version}")
        if self.feature_dim < 1:
            raise FormatError("feature_dim must be >= 1")
        if self.time_unit not in ("years", "days"):
            raise FormatError(f"unknown time_unit {self.time_unit!r}")

    @property
    def time_scale(self) -> float:
        return 1.0 / DAYS_PER_YEAR if self.time_unit == "days" else 1.0


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_header(fh, kind, **fields):
    fh.write(f"#{kind} " + " ".join(f"{k}={v}" for k, v in fields.items()) + "\n")


def _read_header(line, kind, path):
    if not line.startswith(f"#{kind}"):
        raise FormatError(f"missing '#{kind}' header", 1, path)
    fields = {}
    for tok in line[len(kind) + 1 :].split():
        if "=" not in tok:
            raise FormatError(f"malformed header token {tok!r}", 1, path)
        k, v = tok.split("=", 1)
        fields[k] = v
    try:
        if int(fields.get("format_version", -1)) != FORMAT_VERSION:
            raise FormatError(f"unsupported format_version {fields.get('format_version')}", 1, path)
    except ValueError:
        raise FormatError("format_version is not an integer", 1, path) from None
    return fields


def _rows(path, kind, columns):
    """Yield (line_no, row) after checking the manifest and column header."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline()
        fields = _read_header(first.rstrip("\n"), kind, path)
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise FormatError("missing column header", 2, path) from None
        if head[: len(columns)] != list(columns):
            raise FormatError(f"expected columns {','.join(columns)}", 2, path)
        rows = [(k + 3, row) for k, row in enumerate(reader) if row]
    return fields, head, rows


def _float(s, line, path, what):
    try:
        return float(s)
    except ValueError:
        raise FormatError(f"{what} {s!r} is not a number", line, path) from None


# --------------------------------------------------------------------------
# embeddings


def save_embeddings(path, trajectories: Sequence[SeriesTrajectory]) -> None:
    trajectories = sorted(trajectories, key=lambda tr: tr.series_id)
    d = trajectories[0].dim if trajectories else 1
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write_header(
            fh, "trajclust-embeddings",
            format_version=FORMAT_VERSION, feature_dim=d, time_unit="years",
            series=len(trajectories),
            patients=len({tr.patient_id for tr in trajectories}),
            observations=sum(len(tr) for tr in trajectories),
        )
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series_id", "patient_id", "t"] + [f"f_{k + 1}" for k in range(d)])
        for tr in trajectories:
            for t, v in zip(tr.times, tr.vectors):
                w.writerow([tr.series_id, tr.patient_id, _fmt(t)] + [_fmt(x) for x in v])


def load_embeddings(path) -> list[SeriesTrajectory]:
    """Records grouped by series, each time-sorted; rejects invalid datasets."""
    fields, head, rows = _rows(path, "trajclust-embeddings", ("series_id", "patient_id", "t"))
    try:
        manifest = DatasetManifest(
            int(fields.get("format_version", FORMAT_VERSION)),
            int(fields["feature_dim"]),
            fields.get("time_unit", "years"),
            *(int(fields[k]) if k in fields else None for k in ("series", "patients", "observations")),
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad manifest: {exc}", 1, path) from None
    d = manifest.feature_dim
    if len(head) != 3 + d:
        raise FormatError(f"column header has {len(head) - 3} features, manifest says {d}", 2, path)
    scale = manifest.time_scale
    groups: dict[str, list[FeatureObservation]] = {}
    for line, row in rows:
        if len(row) != 3 + d:
            raise DimensionMismatchError(
                f"{path}:{line}: series {row[0]!r} has a {len(row) - 3}-dim vector, expected {d}"
            )
        sid, pid = row[0], row[1]
        t = _float(row[2], line, path, "time") * scale
        vec = [_float(x, line, path, "feature") for x in row[3:]]
        groups.setdefault(sid, []).append(FeatureObservation(sid, pid, t, vec))
    trajs = []
    for sid in sorted(groups):
        try:
            trajs.append(trajectory_from_observations(groups[sid]))
        except ValueError as exc:
            raise FormatError(str(exc), path=path) from None
    report = validate_dataset(trajs)
    if not report.ok:
        i = report.issues[0]
        raise FormatError(f"series {i.series_id!r}: {i.kind}", path=path)
    for name, value in (
        ("series", len(trajs)),
        ("patients", len({tr.patient_id for tr in trajs})),
        ("observations", sum(len(tr) for tr in trajs)),
    ):
        declared = getattr(manifest, name)
        if declared is not None and declared != value:
            raise FormatError(f"manifest declares {declared} {name}, found {value}", 1, path)
    return trajs


# --------------------------------------------------------------------------
# labels, demographics, grades


def save_labels(path, labels: Iterable[Label]) -> None:
    labels = sorted(labels, key=lambda l: (l.series_id, l.t, l.target_kind.value))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write_header(fh, "trajclust-labels", format_version=FORMAT_VERSION, time_unit="years")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series_id", "t", "target_kind", "value"])
        for l in labels:
            w.writerow([l.series_id, _fmt(l.t), l.target_kind.value, _fmt(l.value)])


def load_labels(path) -> list[Label]:
    fields, _, rows = _rows(path, "trajclust-labels", ("series_id", "t", "target_kind", "value"))
    scale = 1.0 / DAYS_PER_YEAR if fields.get("time_unit", "years") == "days" else 1.0
    kinds = {k.value for k in TargetKind}
    out, seen = [], set()
    for line, row in rows:
        if len(row) != 4:
            raise FormatError(f"expected 4 fields, got {len(row)}", line, path)
        sid, t, kind, value = row
        if kind not in kinds:
            raise FormatError(f"unknown target_kind {kind!r}", line, path)
        t = _float(t, line, path, "time") * scale
        key = (sid, t, kind)
        if key in seen:
            raise FormatError(f"duplicate label for {key}", line, path)
        seen.add(key)
        try:
            out.append(Label(sid, t, kind, _float(value, line, path, "value")))
        except ValueError as exc:
            raise FormatError(str(exc), line, path) from None
    out.sort(key=lambda l: (l.series_id, l.t, l.target_kind.value))
    return out


def save_demographics(path, demographics) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write_header(fh, "trajclust-demographics", format_version=FORMAT_VERSION)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "age_at_epoch", "sex"])
        for pid in sorted(demographics):
            d = demographics[pid]
            w.writerow([pid, _fmt(d.age_at_epoch), d.sex])


def load_demographics(path) -> dict[str, Demographics]:
    _, _, rows = _rows(path, "trajclust-demographics", ("patient_id", "age_at_epoch", "sex"))
    out = {}
    for line, row in rows:
        if len(row) != 3:
            raise FormatError(f"expected 3 fields, got {len(row)}", line, path)
        try:
            out[row[0]] = Demographics(row[0], _float(row[1], line, path, "age"), int(row[2]))
        except ValueError as exc:
            raise FormatError(str(exc), line, path) from None
    return out


def save_grades(path, grades: Iterable[GradeRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write_header(fh, "trajclust-grades", format_version=FORMAT_VERSION, time_unit="years")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series_id", "t", "grade"])
        for g in sorted(grades, key=lambda g: (g.series_id, g.t)):
            w.writerow([g.series_id, _fmt(g.t), g.grade])


def load_grades(path) -> list[GradeRecord]:
    fields, _, rows = _rows(path, "trajclust-grades", ("series_id", "t", "grade"))
    scale = 1.0 / DAYS_PER_YEAR if fields.get("time_unit", "years") == "days" else 1.0
    out = []
    for line, row in rows:
        if len(row) != 3:
            raise FormatError(f"expected 3 fields, got {len(row)}", line, path)
        try:
            out.append(GradeRecord(row[0], _float(row[1], line, path, "time") * scale, row[2]))
        except ValueError as exc:
            raise FormatError(str(exc), line, path) from None
    return sorted(out, key=lambda g: (g.series_id, g.t))


# --------------------------------------------------------------------------
# sub-trajectory sets (JSON lines)


def _params_to_json(p: MetricParams) -> dict:
    return {"lam": p.lam, "phi": p.phi, "local_cost": p.local_cost, "dtw_normalize": p.dtw_normalize}


def _params_from_json(d: dict) -> MetricParams:
    return MetricParams(d["lam"], d["phi"], d.get("local_cost", "euclidean"), bool(d.get("dtw_normalize", False)))


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def save_subtrajectories(path, subs: Sequence[SubTrajectory]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dumps({"format": "trajclust-subtrajectories", "format_version": FORMAT_VERSION,
                         "count": len(subs)}) + "\n")
        for s in subs:
            fh.write(_dumps({
                "series_id": s.series_id,
                "patient_id": s.patient_id,
                "start_index": s.start_index,
                "span_min": s.span_min,
                "span_max": s.span_max,
                "times": s.times.tolist(),
                "vectors": s.vectors.tolist(),
            }) + "\n")


def _load_json_header(fh, fmt, path):
    first = fh.readline()
    try:
        head = json.loads(first)
    except json.JSONDecodeError:
        raise FormatError("corrupted header", 1, path) from None
    if not isinstance(head, dict) or head.get("format") != fmt:
        raise FormatError(f"not a {fmt} file", 1, path)
    if head.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {head.get('format_version')}", 1, path)
    return head


def load_subtrajectories(path) -> list[SubTrajectory]:
    with open(path, encoding="utf-8") as fh:
        head = _load_json_header(fh, "trajclust-subtrajectories", path)
        out = []
        for k, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                r = json.loads(line)
                out.append(SubTrajectory(
                    r["series_id"], r["patient_id"], r["start_index"],
                    np.array(r["times"], dtype=np.float64),
                    np.array(r["vectors"], dtype=np.float64),
                    span_min=r["span_min"], span_max=r["span_max"],
                ))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise FormatError(f"bad record: {exc}", k, path) from None
    if len(out) != head.get("count"):
        raise FormatError(f"header declares {head.get('count')} records, found {len(out)}", path=path)
    return out


# --------------------------------------------------------------------------
# distance matrices (binary)


def save_distance_matrix(path, D: DistanceMatrix) -> None:
    rows, cols = np.tril_indices(D.n, k=-1)
    payload = np.ascontiguousarray(D.values[rows, cols], dtype="<f8").tobytes()
    head = {
        "format_version": FORMAT_VERSION,
        "n": D.n,
        "crc32": f"{zlib.crc32(payload) & 0xFFFFFFFF:08x}",
        "params": _params_to_json(D.params),
        "ids": list(D.ids),
    }
    with open(path, "wb") as fh:
        fh.write(DIST_MAGIC)
        fh.write(_dumps(head).encode("utf-8") + b"\n")
        fh.write(payload)


def load_distance_matrix(path) -> DistanceMatrix:
    with open(path, "rb") as fh:
        if fh.readline() != DIST_MAGIC:
            raise FormatError("not a distance-matrix file", 1, path)
        try:
            head = json.loads(fh.readline().decode("utf-8"))
            n = int(head["n"])
            crc = head["crc32"]
            if head["format_version"] != FORMAT_VERSION:
                raise FormatError(f"unsupported format_version {head['format_version']}", 2, path)
        except (json.JSONDecodeError, UnicodeDecodeError, KeyError, TypeError, ValueError):
            raise FormatError("corrupted header", 2, path) from None
        payload = fh.read()
    expected = n * (n - 1) // 2 * 8
    if len(payload) != expected:
        raise FormatError(f"payload is {len(payload)} bytes, expected {expected}", path=path)
    if f"{zlib.crc32(payload) & 0xFFFFFFFF:08x}" != crc:
        raise FormatError("checksum mismatch", path=path)
    values = np.zeros((n, n))
    rows, cols = np.tril_indices(n, k=-1)
    tri = np.frombuffer(payload, dtype="<f8")
    values[rows, cols] = tri
    values[cols, rows] = tri
    return DistanceMatrix(values, _params_from_json(head["params"]), tuple(head["ids"]))


# --------------------------------------------------------------------------
# cluster and risk models (JSON)


def save_cluster_model(path, model: ClusterModel) -> None:
    obj = {
        "format": "trajclust-cluster-model",
        "format_version": FORMAT_VERSION,
        "K": model.K,
        "assignment": model.assignment.tolist(),
        "params": _params_to_json(model.params),
        "kernel": model.kernel,
        "scale": model.scale,
        "embedding": model.embedding.tolist(),
        "seed": model.seed,
        "eigenvalues": model.eigenvalues.tolist(),
        "ids": list(model.ids),
        "isolated": list(model.isolated),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dumps(obj) + "\n")


def _load_json(path, fmt):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        raise FormatError("corrupted file", path=path) from None
    if not isinstance(obj, dict) or obj.get("format") != fmt:
        raise FormatError(f"not a {fmt} file", path=path)
    if obj.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {obj.get('format_version')}", path=path)
    return obj


def load_cluster_model(path) -> ClusterModel:
    o = _load_json(path, "trajclust-cluster-model")
    try:
        return ClusterModel(
            K=o["K"],
            assignment=np.array(o["assignment"], dtype=np.int64),
            params=_params_from_json(o["params"]),
            kernel=o["kernel"],
            scale=o["scale"],
            embedding=np.array(o["embedding"], dtype=np.float64).reshape(len(o["assignment"]), o["K"]),
            seed=o["seed"],
            eigenvalues=np.array(o["eigenvalues"], dtype=np.float64),
            ids=tuple(o["ids"]),
            isolated=tuple(o["isolated"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad cluster model: {exc}", path=path) from None


def save_risk_model(path, model: RiskModel) -> None:
    obj = {
        "format": "trajclust-risk-model",
        "format_version": FORMAT_VERSION,
        "target_kind": model.target_kind.value,
        "coefficients": model.coefficients.tolist(),
        "intercept": model.intercept,
        "metadata": model.metadata,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dumps(obj) + "\n")


def load_risk_model(path) -> RiskModel:
    o = _load_json(path, "trajclust-risk-model")
    try:
        return RiskModel(o["target_kind"], np.array(o["coefficients"], dtype=np.float64),
                         o["intercept"], o["metadata"])
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad risk model: {exc}", path=path) from None


def save_eval_report(prefix, report: EvalReport) -> tuple[Path, Path]:
    """Write ``<prefix>.txt`` (table) and ``<prefix>.csv`` (per-fold records)."""
    prefix = Path(prefix)
    txt, rec = prefix.with_suffix(".txt"), prefix.with_suffix(".csv")
    txt.write_text(report.to_table(), encoding="utf-8")
    rec.write_text(report.to_records(), encoding="utf-8")
    return txt, rec


def save_cohort(out_dir, cohort) -> dict[str, Path]:
    """Write a synthetic cohort in the standard formats plus a truth table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "embeddings": out / "embeddings.csv",
        "labels": out / "labels.csv",
        "demographics": out / "demographics.csv",
        "grades": out / "grades.csv",
        "truth": out / "truth.csv",
    }
    save_embeddings(paths["embeddings"], cohort.trajectories)
    save_labels(paths["labels"], cohort.labels)
    save_demographics(paths["demographics"], cohort.demographics)
    save_grades(paths["grades"], cohort.grades)
    with open(paths["truth"], "w", encoding="utf-8") as fh:
        fh.write("series_id,archetype\n")
        for sid in sorted(cohort.archetype_of):
            fh.write(f"{sid},{cohort.archetype_of[sid]}\n")
    return paths


def load_truth(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "series_id,archetype":
        raise FormatError("missing truth header", 1, path)
    return dict(line.split(",", 1) for line in lines[1:] if line)
