"""Command-line pipeline: synth, partition, dist, cluster, predict, sweep, report.

Every stage reads the previous stage's artifact, so runs can be resumed.
Options may also come from a flat ``key = value`` config file
(``--config``); keys are option names without dashes (``span_center``,
``lam``, ...) and explicit flags override them.
"""
from __future__ import annotations

import argparse
import itertools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

from . import io
from .cluster import KERNELS, build_affinity, cluster_report, medoids, spectral_cluster
from .core import MetricParams, TargetKind
from .metric import pairwise_matrix
from .partition import PartitionConfig, partition_dataset
from .stratify import SIGMA_GRID, evaluate
from .synth import CohortSpec, generate

log = logging.getLogger("trajclust")


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


def _list(kind):
    def parse(s):
        return [kind(x) for x in str(s).split(",") if x.strip()]
    return parse


def _sigma(s):
    return None if str(s).strip().lower() == "auto" else float(s)


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


# --------------------------------------------------------------------------
# commands


def cmd_synth(args):
    kw = {}
    if args.spec_file:
        cfg = read_config(args.spec_file)
        types = {f.name: f.type for f in fields(CohortSpec)}
        for k, v in cfg.items():
            if k not in types:
                raise ValueError(f"unknown cohort field {k!r}")
            default = getattr(CohortSpec, k)
            if isinstance(default, bool):
                kw[k] = _bool(v)
            elif isinstance(default, int):
                kw[k] = int(v)
            elif isinstance(default, float):
                kw[k] = float(v)
            else:
                kw[k] = v
    if args.seed is not None:
        kw["seed"] = args.seed
    cohort = generate(CohortSpec(**kw))
    paths = io.save_cohort(args.out, cohort)
    log.info("wrote %d series to %s", len(cohort.trajectories), paths["embeddings"])
    return 0


def _partition_config(args, seed):
    return PartitionConfig(args.span_center, args.span_half_width, args.bin_width, seed, args.bin_key)


def _metric_params(args):
    return MetricParams(args.lam, args.phi, args.local_cost, args.dtw_normalize)


def cmd_partition(args):
    trajs = io.load_embeddings(args.embeddings)
    subs = partition_dataset(trajs, _partition_config(args, args.seed or 0))
    out = Path(args.out)
    if out.is_dir():
        out = out / "subtrajectories.jsonl"
    io.save_subtrajectories(out, subs)
    log.info("%d sub-trajectories -> %s", len(subs), out)
    return 0


def cmd_dist(args):
    subs = io.load_subtrajectories(args.subs)
    D = pairwise_matrix(subs, _metric_params(args), threads=args.threads)
    out = Path(args.out)
    if out.is_dir():
        out = out / "distances.bin"
    io.save_distance_matrix(out, D)
    log.info("%dx%d distance matrix -> %s", D.n, D.n, out)
    return 0


def cmd_cluster(args):
    D = io.load_distance_matrix(args.distances)
    A = build_affinity(D, args.kernel, args.scale)
    model = spectral_cluster(A, args.K, seed=args.seed or 0, distances=D, n_init=args.n_init)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.save_cluster_model(out / "cluster_model.json", model)
    (out / "cluster_report.txt").write_text(cluster_report(model, D), encoding="utf-8")
    log.info("K=%d clusters -> %s", args.K, out)
    return 0


def _load_inputs(args):
    trajs = io.load_embeddings(args.embeddings)
    labels = io.load_labels(args.labels)
    demo = io.load_demographics(args.demographics) if args.demographics else None
    grades = io.load_grades(args.grades) if args.grades else None
    return trajs, labels, demo, grades


def _seeds(args):
    base = args.seed or 0
    return list(range(base, base + args.seeds))


def _evaluate(args, inputs, lam, phi, K, sigma):
    trajs, labels, demo, grades = inputs
    params = MetricParams(lam, phi, args.local_cost, args.dtw_normalize)
    return evaluate(
        trajs, labels, params, K=K, sigma=sigma, n_folds=args.folds,
        seeds=_seeds(args), partition=_partition_config(args, 0), kernel=args.kernel,
        demographics=demo, grades=grades, targets=args.targets or None,
        split=args.split, threads=args.threads, n_init=args.n_init,
    )


def cmd_predict(args):
    inputs = _load_inputs(args)
    report = _evaluate(args, inputs, args.lam, args.phi, args.K, args.sigma)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    txt, _ = io.save_eval_report(out / "eval_report", report)
    sys.stdout.write(report.to_table())
    log.info("report -> %s", txt)
    return 0


def combo_name(lam, phi, K, sigma) -> str:
    s = "auto" if sigma is None else repr(sigma)
    return f"lam={lam!r}_phi={phi!r}_K={K}_sigma={s}"


def _sweep_one(args, combo):
    lam, phi, K, sigma = combo
    report = _evaluate(args, _load_inputs(args), lam, phi, K, sigma)
    io.save_eval_report(Path(args.out) / combo_name(*combo), report)
    return combo, {t: report.summary("temporal_clusters", t) for t in report.targets}


def cmd_sweep(args):
    grids = [args.lam_grid, args.phi_grid, args.K_grid, args.sigma_grid]
    if any(not g for g in grids):
        raise ValueError("sweep needs non-empty lam, phi, K and sigma grids")
    combos = sorted(
        itertools.product(*grids),
        key=lambda c: (c[0], c[1], c[2], -1.0 if c[3] is None else c[3]),
    )
    Path(args.out).mkdir(parents=True, exist_ok=True)
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_one, [args] * len(combos), combos))
    else:
        results = [_sweep_one(args, c) for c in combos]
    lines = ["lam,phi,K,sigma,target,mae_mean,mae_std"]
    for (lam, phi, K, sigma), summ in results:
        for t, (mu, sd) in summ.items():
            s = "auto" if sigma is None else repr(sigma)
            lines.append(f"{lam!r},{phi!r},{K},{s},{t},{mu!r},{sd!r}")
    (Path(args.out) / "sweep_summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    log.info("%d combinations -> %s", len(combos), args.out)
    return 0


def cmd_report(args):
    model = io.load_cluster_model(args.model)
    subs = io.load_subtrajectories(args.subs)
    D = io.load_distance_matrix(args.distances)
    if model.n != len(subs) or D.n != len(subs):
        raise ValueError("cluster model, sub-trajectories and distances disagree in size")
    meds = medoids(model, D)
    lines = [cluster_report(model, D, [s.id for s in subs]).rstrip("\n")]
    for k, (members, med) in enumerate(zip(model.members, meds)):
        lines.append(f"## cluster {k}: {members.size} members, medoid {subs[med].id}")
        ranked = sorted(members.tolist(), key=lambda i: (D.values[med, i], i))
        for i in ranked[: args.top]:
            s = subs[i]
            lines.append(
                f"{s.id}\tpatient={s.patient_id}\tt={s.t_start:.3f}-{s.t_end:.3f}\t"
                f"d_medoid={D.values[med, i]:.6g}"
            )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# --------------------------------------------------------------------------
# parser


def _add_common(p):
    p.add_argument("--config", help="flat key = value options file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=".")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_partition(p):
    p.add_argument("--span-center", type=float, default=1.0)
    p.add_argument("--span-half-width", type=float, default=0.5)
    p.add_argument("--bin-width", type=float, default=0.5)
    p.add_argument("--bin-key", choices=("start", "midpoint"), default="start")


def _add_metric(p):
    p.add_argument("--lam", type=float, default=0.75)
    p.add_argument("--phi", type=float, default=0.75)
    p.add_argument("--local-cost", choices=("euclidean", "sqeuclidean"), default="euclidean")
    p.add_argument("--dtw-normalize", type=_bool, default=False)


def _add_predict(p):
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--demographics")
    p.add_argument("--grades")
    p.add_argument("--kernel", choices=KERNELS, default="shifted_negative")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seeds", type=int, default=7)
    p.add_argument("--split", choices=("kfold", "holdout"), default="kfold")
    p.add_argument("--targets", type=_list(str), default=None,
                   help="comma-separated: " + ",".join(k.value for k in TargetKind))
    p.add_argument("--n-init", type=int, default=50)
    _add_partition(p)
    _add_metric(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajclust", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("spec_file", nargs="?", help="key = value CohortSpec fields")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("partition", help="extract sub-trajectories")
    p.add_argument("--embeddings", required=True)
    _add_partition(p)
    _add_common(p)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("dist", help="pairwise distance matrix")
    p.add_argument("--subs", required=True)
    _add_metric(p)
    _add_common(p)
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("cluster", help="spectral clustering of a distance matrix")
    p.add_argument("--distances", required=True)
    p.add_argument("-K", "--K", dest="K", type=int, default=30)
    p.add_argument("--kernel", choices=KERNELS, default="shifted_negative")
    p.add_argument("--scale", type=float, default=None)
    p.add_argument("--n-init", type=int, default=50)
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("predict", help="cross-validated risk prediction")
    _add_predict(p)
    p.add_argument("-K", "--K", dest="K", type=int, default=30)
    p.add_argument("--sigma", type=_sigma, default=None, help="kernel bandwidth or 'auto'")
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="grid over lam, phi, K and sigma")
    _add_predict(p)
    p.add_argument("--lam-grid", type=_list(float), default=[0.75])
    p.add_argument("--phi-grid", type=_list(float), default=[0.75])
    p.add_argument("--K-grid", type=_list(int), default=[30])
    p.add_argument("--sigma-grid", type=_list(_sigma), default=list(SIGMA_GRID))
    p.add_argument("--workers", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="per-cluster medoids and members")
    p.add_argument("--model", required=True)
    p.add_argument("--subs", required=True)
    p.add_argument("--distances", required=True)
    p.add_argument("--top", type=int, default=10)
    _add_common(p)
    p.set_defaults(out=None, func=cmd_report)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    subparsers = parser._subparsers._group_actions[0].choices
    # first pass only locates the config file, so nothing is required yet
    required = [a for sp in subparsers.values() for a in sp._actions if a.required]
    for a in required:
        a.required = False
    args = parser.parse_args(argv)
    for a in required:
        a.required = True
    if getattr(args, "config", None):
        cfg = read_config(args.config)
        subparser = subparsers[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = set(cfg) - known
        if unknown:
            parser.error(f"unknown config keys: {', '.join(sorted(unknown))}")
        for a in subparser._actions:
            if a.dest in cfg:
                a.required = False
        subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - report any module error as a diagnostic
        print(f"trajclust {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
