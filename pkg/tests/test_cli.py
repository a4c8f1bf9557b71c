import numpy as np
import pytest

from csne.cli import main, read_config
from csne.graph import load_graph
from csne.synthetic import planted_factions


def _write_graph(path, g):
    with open(path, "w") as fh:
        for (i, j), s in zip(g.edges, g.signs):
            fh.write(f"{g.labels[i]}\t{g.labels[j]}\t{s}\n")
    return str(path)


@pytest.fixture
def toy(tmp_path):
    p = tmp_path / "toy.edges"
    p.write_text("1\t2\t1\n1\t3\t1\n2\t3\t-1\n")
    return str(p)


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    d = tmp_path_factory.mktemp("world")
    return _write_graph(d / "world.edges", planted_factions(200, 8, seed=4))


def read_tsv(path):
    return dict(line.split("\t", 1) for line in open(path).read().splitlines())


def test_stats_on_unbalanced_triangle(toy, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["stats", "--data", toy, "--out", str(out)]) == 0
    rows = {k: v for k, v in read_tsv(out / "stats.tsv").items()}
    assert rows["n"] == "3" and rows["m"] == "3"
    assert float(rows["positive_fraction"]) == pytest.approx(2 / 3, abs=5e-4)
    assert float(rows["balanced_triangle_fraction"]) == 0.0
    assert "positive_fraction" in capsys.readouterr().out


def test_run_meta_sorted_key_values(toy, tmp_path):
    out = tmp_path / "o"
    main(["stats", "--data", toy, "--out", str(out), "--seed", "3"])
    lines = (out / "run.meta").read_text().splitlines()
    keys = [ln.split(" = ", 1)[0] for ln in lines]
    assert keys == sorted(keys) and "seed" in keys and "command" in keys
    assert all(" = " in ln for ln in lines)


def test_usage_errors_exit_2(toy, tmp_path, capsys):
    out = str(tmp_path / "o")
    assert main(["stats", "--data", toy, "--bogus"]) == 2
    assert main(["stats", "--data", str(tmp_path / "missing.edges"), "--out", out]) == 2
    assert main(["eval", "--data", toy, "--sigma1", "2", "--sigma2", "1", "--out", out]) == 2
    assert main(["eval", "--data", toy, "--dim", "0", "--out", out]) == 2
    assert main([]) == 2
    assert "sigma1" in capsys.readouterr().err


def test_runtime_error_exit_1(toy, tmp_path, capsys):
    # a triangle cannot keep a connected train graph with one edge
    rc = main(["split", "--data", toy, "--train-frac", "0.2", "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "minimum feasible fraction" in capsys.readouterr().err


def test_pipeline_and_unknown_label(world, tmp_path, capsys):
    out = tmp_path / "run"
    o = str(out)
    assert main(["split", "--data", world, "--out", o]) == 0
    train, test = str(out / "train.edges"), str(out / "test.edges")
    g, gt = load_graph(world), load_graph(train, lcc=False)
    assert gt.m + len(open(test).read().splitlines()) == g.m

    assert main(["fit-prior", "--data", train, "--out", o]) == 0
    model = str(out / "prior.model")
    assert open(model).readline().startswith("# maxent triangles=1")

    assert main(["fit-csne", "--prior", model, "--dim", "4", "--iters", "15", "--out", o]) == 0
    emb = str(out / "embedding.tsv")
    assert open(emb).readline().startswith("# csne d=4 sigma1=1.0 sigma2=2.0")
    assert len((out / "trace.tsv").read_text().splitlines()) == 16

    assert main(["predict", "--model", model, "--pairs", test, "--embedding", emb, "--out", o]) == 0
    preds = [ln.split("\t") for ln in (out / "predictions.tsv").read_text().splitlines()]
    assert len(preds) == len(open(test).read().splitlines())
    assert all(0 < float(p) < 1 for _, _, p in preds)

    assert main(["export-viz", "--data", train, "--embedding", emb, "--out", o]) == 0
    assert (out / "nodes.tsv").read_text().splitlines()[0] == "node\tx0\tx1\tx2\tx3"

    bad = tmp_path / "bad.pairs"
    bad.write_text(f"{g.labels[0]}\tnobody\n")
    capsys.readouterr()
    assert main(["predict", "--model", model, "--pairs", str(bad), "--out", o]) == 1
    assert "nobody" in capsys.readouterr().err


def test_eval_report_layout(world, tmp_path):
    out = tmp_path / "e"
    assert main(["eval", "--data", world, "--method", "prior-pol-tri", "--repeats", "3", "--out", str(out)]) == 0
    lines = (out / "report.tsv").read_text().splitlines()
    assert lines[0].split("\t") == ["method", "dataset", "repeat", "seed", "auc", "fit_seconds", "predict_seconds"]
    assert len([ln for ln in lines[1:4] if ln.startswith("prior-pol-tri\tworld\t")]) == 3
    assert lines[5] == "method\tdataset\tauc_mean\tauc_std\tfit_seconds_mean"


def test_rerun_from_meta_reproduces_outputs(world, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["fit-prior", "--data", world, "--no-triangles", "--out", str(a)]) == 0
    prior = str(a / "prior.model")
    c1 = tmp_path / "c1"
    assert main(["fit-csne", "--prior", prior, "--dim", "3", "--iters", "10", "--seed", "7", "--out", str(c1)]) == 0
    # replay both runs from their meta files, writing elsewhere
    assert main(["--config", str(a / "run.meta"), "--out", str(b)]) == 0
    assert (a / "prior.model").read_bytes() == (b / "prior.model").read_bytes()
    c2 = tmp_path / "c2"
    assert main(["--config", str(c1 / "run.meta"), "--out", str(c2)]) == 0
    for name in ("embedding.tsv", "trace.tsv"):
        assert (c1 / name).read_bytes() == (c2 / name).read_bytes()


def test_flags_override_config(world, tmp_path):
    cfg = tmp_path / "c.conf"
    cfg.write_text(f"# comment\ncommand = split\ndata = {world}\ntrain_frac = 0.9\n")
    out = tmp_path / "s"
    assert main(["--config", str(cfg), "--train-frac", "0.7", "--out", str(out)]) == 0
    assert "train_frac = 0.7" in (out / "run.meta").read_text()
    assert read_config(cfg)["train_frac"] == "0.9"


def test_outputs_newline_terminated(world, tmp_path):
    out = tmp_path / "n"
    main(["split", "--data", world, "--out", str(out)])
    for f in out.iterdir():
        assert f.read_bytes().endswith(b"\n")
        assert b"\r" not in f.read_bytes()
