import io
import json
import sys

import numpy as np
import pytest

from config.settings import settings
from main import main

TRAIN_FLAGS = ["--dim", "16", "--layers", "1", "--hash-dim", "8", "--batch-size", "64", "--deterministic"]


@pytest.fixture(autouse=True)
def quiet_settings(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "log_dir", str(tmp_path / "logs"))
    monkeypatch.setattr(settings, "progress", False)


@pytest.fixture
def click_log(tmp_path):
    """200 pattern sessions; the last 40 end after t=16000."""
    rng = np.random.default_rng(0)
    patterns = rng.permutation(50).reshape(5, 10)
    lines = []
    for n in range(200):
        p = n % 5
        length = int(rng.integers(3, 11))
        start = int(rng.integers(0, 10 - length + 1))
        for pos, item in enumerate(patterns[p][start:start + length]):
            lines.append(f"s{n},{n * 100 + pos},i{item},c{p}")
    path = tmp_path / "clicks.csv"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def data_dir(tmp_path, click_log):
    directory = str(tmp_path / "data")
    assert main([
        "preprocess", "--input", click_log, "--data-dir", directory,
        "--split-boundary", "16000", "--min-item-freq", "1",
    ]) == 0
    return directory


@pytest.fixture
def trained(data_dir):
    assert main(["build-graph", "--data-dir", data_dir]) == 0
    assert main(["train", "--data-dir", data_dir, "--epochs", "1", *TRAIN_FLAGS]) == 0
    return data_dir


def _stdin(monkeypatch, text):
    monkeypatch.setattr(sys, "stdin", io.StringIO(text))


def test_missing_input_exits_2(tmp_path):
    assert main(["preprocess", "--input", str(tmp_path / "none.csv"), "--data-dir", str(tmp_path)]) == 2


def test_unknown_variant_exits_2(data_dir):
    assert main(["train", "--data-dir", data_dir, "--variant", "nope"]) == 2


def test_train_without_graph_exits_2(data_dir):
    assert main(["train", "--data-dir", data_dir, "--epochs", "1", *TRAIN_FLAGS]) == 2


def test_preprocess_writes_dataset(data_dir):
    meta = json.loads(open(f"{data_dir}/dataset/meta.json").read())
    assert meta["augment"] is True
    stats = json.loads(open(f"{data_dir}/dataset/stats.json").read())
    assert stats["train_sessions"] == 160
    assert stats["items"] == 50


def test_full_pipeline(trained, tmp_path, monkeypatch, capsys):
    epochs = [json.loads(line) for line in open(f"{trained}/reports/epochs.jsonl")]
    assert [e["epoch"] for e in epochs] == [0]
    assert json.loads(open(f"{trained}/reports/relations.json").read())["relations"] >= 3

    out = tmp_path / "eval.json"
    assert main(["evaluate", "--data-dir", trained, "--out", str(out), "--popularity", "--per-case"]) == 0
    report = json.loads(out.read_text())
    assert set(report) == {"n", "p_at_20", "mrr_at_20", "popularity"}
    assert 0.0 <= report["mrr_at_20"] <= report["p_at_20"] <= 1.0
    cases = open(f"{trained}/reports/cases.tsv").read().splitlines()
    assert len(cases) == report["n"] + 1

    _stdin(monkeypatch, "i0 i1\n")
    rec = tmp_path / "rec.tsv"
    assert main(["recommend", "--data-dir", trained, "--k", "3", "--out", str(rec)]) == 0
    lines = rec.read_text().splitlines()
    assert len(lines) == 3
    probs = [float(line.split("\t")[1]) for line in lines]
    assert probs == sorted(probs, reverse=True)


def test_evaluate_to_stdout_is_repeatable(trained, capsys):
    capsys.readouterr()
    assert main(["evaluate", "--data-dir", trained]) == 0
    first = capsys.readouterr().out
    assert main(["evaluate", "--data-dir", trained]) == 0
    assert capsys.readouterr().out == first
    assert "p_at_20" in json.loads(first)


def test_resume_continues_epoch_count(trained):
    assert main(["train", "--data-dir", trained, "--epochs", "2", "--resume", *TRAIN_FLAGS]) == 0
    epochs = [json.loads(line) for line in open(f"{trained}/reports/epochs.jsonl")]
    assert [e["epoch"] for e in epochs] == [0, 1]


def test_resume_with_other_dims_exits_2(trained):
    flags = [f if f != "16" else "24" for f in TRAIN_FLAGS]
    assert main(["train", "--data-dir", trained, "--epochs", "2", "--resume", *flags]) == 2


def test_inspect_graph_global_flag_before_command(trained, tmp_path, capsys):
    out = tmp_path / "graph.json"
    assert main(["--data-dir", trained, "inspect-graph", "--json", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["nodes"] == 50
    assert len(json.loads(out.read_text())["edges"]) == summary["edges"]


def test_recommend_input_errors(trained, monkeypatch):
    _stdin(monkeypatch, "")
    assert main(["recommend", "--data-dir", trained]) == 2
    _stdin(monkeypatch, "i0 nope\n")
    assert main(["recommend", "--data-dir", trained]) == 2
    _stdin(monkeypatch, "i0\n")
    assert main(["recommend", "--data-dir", trained, "--k", "0"]) == 2


def test_checkpoint_rejected_for_other_dataset(trained, tmp_path, click_log):
    other = str(tmp_path / "other")
    assert main([
        "preprocess", "--input", click_log, "--data-dir", other,
        "--split-boundary", "16000", "--min-item-freq", "1",
    ]) == 0
    # same vocabulary, different graph
    assert main(["build-graph", "--data-dir", other, "--epsilon", "1"]) == 0
    assert main([
        "evaluate", "--data-dir", other, "--checkpoint", f"{trained}/model.ckpt",
    ]) == 2


def _log_text(tmp_path):
    return "".join(p.read_text() for p in sorted((tmp_path / "logs").glob("*.log")))


def _epochs(directory):
    records = [json.loads(line) for line in open(f"{directory}/reports/epochs.jsonl")]
    return [{k: v for k, v in r.items() if k != "wall_seconds"} for r in records]


@pytest.fixture
def long_click_log(tmp_path):
    """60 sessions of 25 clicks; the last 10 end after t=5000."""
    lines = []
    for n in range(60):
        for pos in range(25):
            item = (n + pos) % 30
            lines.append(f"s{n},{n * 100 + pos},i{item},c{item % 3}")
    path = tmp_path / "long.csv"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_train_adopts_dataset_t_max(tmp_path, long_click_log):
    directory = str(tmp_path / "long")
    assert main([
        "preprocess", "--input", long_click_log, "--data-dir", directory,
        "--split-boundary", "5000", "--min-item-freq", "1", "--t-max", "30",
    ]) == 0
    assert json.loads(open(f"{directory}/dataset/meta.json").read())["t_max"] == 30
    assert main(["build-graph", "--data-dir", directory]) == 0
    assert main(["train", "--data-dir", directory, "--epochs", "1", *TRAIN_FLAGS]) == 0

    conflicting = tmp_path / "run.json"
    conflicting.write_text(json.dumps({"t_max": 20}))
    assert main([
        "--config", str(conflicting), "train", "--data-dir", directory, "--epochs", "1", *TRAIN_FLAGS,
    ]) == 2


def test_train_uses_dataset_augment_setting(tmp_path, click_log):
    directory = str(tmp_path / "plain")
    assert main([
        "preprocess", "--input", click_log, "--data-dir", directory,
        "--split-boundary", "16000", "--min-item-freq", "1", "--no-augment",
    ]) == 0
    assert main(["build-graph", "--data-dir", directory]) == 0
    assert main(["train", "--data-dir", directory, "--epochs", "1", *TRAIN_FLAGS]) == 0
    # one full-prefix sample per train session
    assert "Stage - train | samples=160," in _log_text(tmp_path)


def test_variant_without_side_info_needs_matching_graph(data_dir):
    assert main(["build-graph", "--data-dir", data_dir]) == 0
    flags = ["train", "--data-dir", data_dir, "--epochs", "1", *TRAIN_FLAGS]
    assert main([*flags, "--variant", "cares_ns"]) == 2

    assert main(["build-graph", "--data-dir", data_dir, "--no-side-info"]) == 0
    assert main([*flags, "--variant", "cares_ns"]) == 0
    assert main(["evaluate", "--data-dir", data_dir]) == 0
    assert main(flags) == 2


def test_lambda_zero_reports_no_kl(data_dir):
    assert main(["build-graph", "--data-dir", data_dir]) == 0
    assert main(["train", "--data-dir", data_dir, "--epochs", "2", "--lambda", "0", *TRAIN_FLAGS]) == 0
    assert [e["kl"] for e in _epochs(data_dir)] == [0.0, 0.0]


def test_same_seed_gives_identical_metrics(data_dir, tmp_path):
    assert main(["build-graph", "--data-dir", data_dir]) == 0
    runs = []
    for name in ("a", "b"):
        out = tmp_path / f"eval_{name}.json"
        assert main(["train", "--data-dir", data_dir, "--epochs", "2", "--seed", "5", *TRAIN_FLAGS]) == 0
        assert main(["evaluate", "--data-dir", data_dir, "--out", str(out)]) == 0
        runs.append((_epochs(data_dir), json.loads(out.read_text())))
    assert runs[0] == runs[1]


def test_top_q_zero_keeps_only_fallback_relations(data_dir):
    assert main(["build-graph", "--data-dir", data_dir, "--top-q", "0"]) == 0
    report = json.loads(open(f"{data_dir}/reports/relations.json").read())
    assert report["named"] == []
    assert report["relations"] == 3
    assert set(report["fallback_edges"]) == {"same", "drift"}


def test_wider_window_never_loses_edges(data_dir, capsys):
    counts = []
    for epsilon in ("1", "2"):
        assert main(["build-graph", "--data-dir", data_dir, "--epsilon", epsilon]) == 0
        capsys.readouterr()
        assert main(["inspect-graph", "--data-dir", data_dir, "--json"]) == 0
        counts.append(json.loads(capsys.readouterr().out)["edges"])
    assert counts[1] >= counts[0] > 0


def test_corrupt_graph_exits_2(trained, monkeypatch):
    with open(f"{trained}/graph.bin", "wb") as f:
        f.write(b"not a graph at all")
    assert main(["evaluate", "--data-dir", trained]) == 2
    assert main(["inspect-graph", "--data-dir", trained]) == 2
    _stdin(monkeypatch, "i0\n")
    assert main(["recommend", "--data-dir", trained]) == 2


def test_recommend_more_than_catalog_returns_every_item(trained, tmp_path, monkeypatch):
    _stdin(monkeypatch, "i0 i1\n")
    rec = tmp_path / "rec.tsv"
    assert main(["recommend", "--data-dir", trained, "--k", "500", "--out", str(rec)]) == 0
    keys = [line.split("\t")[0] for line in rec.read_text().splitlines()]
    assert len(keys) == 50
    assert len(set(keys)) == 50


@pytest.mark.slow
def test_pattern_continuation_is_ranked_first(data_dir, tmp_path, monkeypatch):
    # same draw as the click_log fixture
    patterns = np.random.default_rng(0).permutation(50).reshape(5, 10)
    assert main(["build-graph", "--data-dir", data_dir]) == 0
    assert main([
        "train", "--data-dir", data_dir, "--epochs", "20", "--dim", "32", "--layers", "1",
        "--hash-dim", "8", "--batch-size", "32", "--lr", "0.01", "--deterministic",
    ]) == 0

    prefix = " ".join(f"i{v}" for v in patterns[0][:6])
    _stdin(monkeypatch, prefix + "\n")
    rec = tmp_path / "rec.tsv"
    assert main(["recommend", "--data-dir", data_dir, "--k", "5", "--out", str(rec)]) == 0
    assert rec.read_text().splitlines()[0].split("\t")[0] == f"i{patterns[0][6]}"
