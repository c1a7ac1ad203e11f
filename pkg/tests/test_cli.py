import numpy as np
import pytest

from trajclust import io
from trajclust.cli import main, read_config


@pytest.fixture(scope="module")
def cohort_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    spec = d / "spec.cfg"
    spec.write_text("archetypes = orthogonal\nn_patients = 20\nnoise = 0.1\nfeature_dim = 8\n")
    assert main(["synth", str(spec), "--out", str(d / "data"), "--seed", "3"]) == 0
    return d


def test_config_parser(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nlam = 0.5\nspan-center=1.0  # trailing\n\n")
    assert read_config(p) == {"lam": "0.5", "span_center": "1.0"}


def test_pipeline_stages(cohort_dir):
    d = cohort_dir
    assert main(["partition", "--embeddings", str(d / "data/embeddings.csv"),
                 "--out", str(d / "subs.jsonl"), "--seed", "1"]) == 0
    subs = io.load_subtrajectories(d / "subs.jsonl")
    assert subs and all(0.5 <= s.elapsed <= 1.5 for s in subs)
    assert main(["dist", "--subs", str(d / "subs.jsonl"), "--out", str(d / "d.bin")]) == 0
    D = io.load_distance_matrix(d / "d.bin")
    assert np.max(np.abs(D.values - D.values.T)) <= 1e-9
    assert main(["cluster", "--distances", str(d / "d.bin"), "-K", "3", "--out", str(d / "cl"),
                 "--n-init", "5"]) == 0
    model = io.load_cluster_model(d / "cl/cluster_model.json")
    assert model.K == 3 and model.n == len(subs)
    assert (d / "cl/cluster_report.txt").read_text().startswith("# clusters=3")
    assert main(["report", "--model", str(d / "cl/cluster_model.json"), "--subs", str(d / "subs.jsonl"),
                 "--distances", str(d / "d.bin"), "--out", str(d / "report.txt"), "--top", "3"]) == 0
    assert (d / "report.txt").read_text().count("## cluster") == 3


def test_predict_with_config(cohort_dir, capsys):
    d = cohort_dir
    cfg = d / "pred.cfg"
    cfg.write_text(f"embeddings = {d / 'data/embeddings.csv'}\nlabels = {d / 'data/labels.csv'}\n"
                   "K = 3\nfolds = 3\nseeds = 2\nn_init = 3\nsigma = auto\n")
    assert main(["predict", "--config", str(cfg), "--grades", str(d / "data/grades.csv"),
                 "--out", str(d / "pred")]) == 0
    assert "temporal_clusters" in capsys.readouterr().out
    records = (d / "pred/eval_report.csv").read_text().splitlines()
    assert records[0] == "method,target,seed,fold,mae"


def test_sweep(cohort_dir):
    d = cohort_dir
    args = ["sweep", "--embeddings", str(d / "data/embeddings.csv"), "--labels", str(d / "data/labels.csv"),
            "--K-grid", "3", "--lam-grid", "0.75,0.5", "--phi-grid", "0.75", "--sigma-grid", "0.1,auto",
            "--folds", "3", "--seeds", "1", "--n-init", "3", "--targets", "visual_acuity",
            "--out", str(d / "sweep")]
    assert main(args) == 0
    names = sorted(p.name for p in (d / "sweep").glob("*.txt"))
    assert len(names) == 4
    summary = (d / "sweep/sweep_summary.csv").read_text().splitlines()
    assert [l.split(",")[:4] for l in summary[1:]] == [
        ["0.5", "0.75", "3", "auto"], ["0.5", "0.75", "3", "0.1"],
        ["0.75", "0.75", "3", "auto"], ["0.75", "0.75", "3", "0.1"],
    ]


def test_error_exit_code(tmp_path, capsys):
    assert main(["dist", "--subs", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path)]) != 0
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_option = 1\n")
    with pytest.raises(SystemExit):
        main(["cluster", "--config", str(bad), "--distances", "x"])
