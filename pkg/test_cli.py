#!/usr/bin/env python3
"""
End-to-end tests of the oodkit command line through click's CliRunner
"""

import json
import logging

import pytest
from click.testing import CliRunner

from app import cli
from models.storage import load_scorer_metadata
from utils.files import read_labels, read_scores

ENV_VARS = ("OODKIT_SEED", "OODKIT_OUTPUT_DIR", "OODKIT_LOG_LEVEL", "OODKIT_JITTER_CAP")


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ENV_VARS:
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def runner():
    yield CliRunner(mix_stderr=False)
    # the cli callback points the root handler at the runner's captured stream
    logging.getLogger().handlers.clear()


def invoke(runner, *args):
    return runner.invoke(cli, ["--log-level", "ERROR"] + [str(a) for a in args])


def component(value, count):
    return {"mean": [value, 1.0 - value, value, 1.0 - value], "deviation": 0.05, "count": count}


@pytest.fixture
def workspace(tmp_path):
    """Config for a small 4-D benchmark; data files appear under out/ after synth"""
    out = tmp_path / "out"
    raw = {
        "seed": 3,
        "output_dir": str(out),
        "data": {
            "train": str(out / "train.csv"),
            "test": str(out / "test.csv"),
            "labels": str(out / "test_labels.csv"),
        },
        "autoencoder": {
            "layers": [3, 2, 3],
            "training": {"epochs": 3, "batch_size": 16, "learning_rate": 0.01},
        },
        "scorers": {"k": 5},
        "synth": {"datasets": [
            {"name": "train", "components": [component(0.3, 40), component(0.7, 40)]},
            {"name": "test", "components": [component(0.3, 10), component(0.7, 10)],
             "outliers": [{"kind": "uniform_noise", "count": 10}]},
        ]},
    }
    config = tmp_path / "config.json"
    config.write_text(json.dumps(raw))
    return config, out


def write(path, text):
    path.write_text(text)
    return path


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def test_synth_writes_datasets_and_labels(runner, workspace):
    config, out = workspace
    result = invoke(runner, "synth", "--config", config)
    assert result.exit_code == 0, result.stderr
    ids, labels = read_labels(out / "test_labels.csv")
    assert ids == [str(i) for i in range(30)]
    assert labels == [0] * 20 + [1] * 10
    lines = [l for l in (out / "train.csv").read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "f0,f1,f2,f3"
    assert len(lines) == 81


def test_synth_is_deterministic(runner, workspace):
    config, out = workspace
    invoke(runner, "synth", "--config", config)
    first = (out / "test.csv").read_bytes()
    invoke(runner, "synth", "--config", config)
    assert (out / "test.csv").read_bytes() == first
    invoke(runner, "synth", "--config", config, "--seed", 4)
    assert (out / "test.csv").read_bytes() != first


def test_synth_rejects_zero_count(runner, tmp_path):
    config = write(tmp_path / "c.json", json.dumps({"synth": {"datasets": [
        {"name": "a", "components": [component(0.5, 5)], "outliers": [{"kind": "uniform_noise", "count": 0}]}]}}))
    result = invoke(runner, "synth", "--config", config, "--out", tmp_path / "out")
    assert result.exit_code == 1
    assert "synth.datasets[0].outliers[0].count" in result.stderr
    assert not (tmp_path / "out").exists()


def test_synth_without_datasets(runner, tmp_path):
    result = invoke(runner, "synth", "--out", tmp_path)
    assert result.exit_code == 1
    assert "❌" in result.stderr


# ---------------------------------------------------------------------------
# score, eval, rank
# ---------------------------------------------------------------------------

def test_score_self_query_knn_k1_is_zero(runner, workspace):
    config, out = workspace
    invoke(runner, "synth", "--config", config)
    result = invoke(runner, "score", "--config", config, "--kind", "knn", "-k", 1, "--test", out / "train.csv")
    assert result.exit_code == 0, result.stderr
    ids, scores = read_scores(out / "scores_knn.csv")
    assert len(ids) == 80
    assert scores == [0.0] * 80
    assert (out / "scorer_knn.oodsc").exists()


def test_score_all_kinds_with_residuals(runner, workspace):
    config, out = workspace
    invoke(runner, "synth", "--config", config)
    result = invoke(runner, "score", "--config", config, "--residuals")
    assert result.exit_code == 0, result.stderr
    for kind in ("kd", "md", "knn", "lof", "lcp"):
        ids, scores = read_scores(out / f"scores_{kind}.csv")
        assert len(scores) == 30
    header = [l for l in (out / "residuals_lcp.csv").read_text().splitlines() if not l.startswith("#")][0]
    assert header == "dim,mean,std,skewness,kurtosis,normality_p"
    text = (out / "scores_lcp.csv").read_text()
    assert text.startswith("# command: score\n")
    assert '"k":5' in text
    meta = load_scorer_metadata(out / "scorer_lcp.oodsc")
    assert meta["command"] == "score"
    assert meta["kind"] == "lcp"
    assert '"k":5' in meta["config"]
    assert meta["params"]["k"] == 5


def test_score_invalid_k_for_lof(runner, workspace):
    config, out = workspace
    invoke(runner, "synth", "--config", config)
    result = invoke(runner, "score", "--config", config, "--kind", "lof", "-k", 1)
    assert result.exit_code == 2
    assert "scorers.k" in result.stderr


def test_eval_and_rank(runner, tmp_path):
    scores = write(tmp_path / "scores.csv", "id,score\n0,0.1\n1,0.9\n2,0.2\n")
    labels = write(tmp_path / "labels.csv", "id,label\n0,0\n1,1\n2,0\n")
    result = invoke(runner, "eval", "--scores", scores, "--labels", labels, "--out", tmp_path)
    assert result.exit_code == 0, result.stderr
    assert result.stdout.strip() == "auc=1.0"
    roc = (tmp_path / "roc_scores.csv").read_text().splitlines()
    assert "threshold,fpr,tpr" in roc
    assert roc[-1] == "# auc=1.0"

    result = invoke(runner, "rank", "--scores", scores, "-k", 2)
    assert result.exit_code == 0
    assert result.stdout.splitlines() == ["1", "2"]


def test_eval_reports_first_missing_id(runner, tmp_path):
    scores = write(tmp_path / "scores.csv", "id,score\n0,0.1\n1,0.9\n2,0.2\n")
    labels = write(tmp_path / "labels.csv", "id,label\n0,0\n1,1\n7,0\n")
    result = invoke(runner, "eval", "--scores", scores, "--labels", labels, "--out", tmp_path)
    assert result.exit_code == 2
    assert "'2'" in result.stderr


def test_eval_single_class_fails(runner, tmp_path):
    scores = write(tmp_path / "scores.csv", "id,score\n0,0.1\n1,0.9\n")
    labels = write(tmp_path / "labels.csv", "id,label\n0,1\n1,1\n")
    result = invoke(runner, "eval", "--scores", scores, "--labels", labels, "--out", tmp_path)
    assert result.exit_code == 2
    assert not (tmp_path / "roc_scores.csv").exists()


def test_eval_auc_ignores_row_order(runner, tmp_path):
    rows = [("0", "0.1", "0"), ("1", "0.9", "1"), ("2", "0.4", "1"), ("3", "0.5", "0"), ("4", "0.7", "1")]
    write(tmp_path / "scores.csv", "id,score\n" + "".join(f"{i},{s}\n" for i, s, _ in rows))
    write(tmp_path / "labels.csv", "id,label\n" + "".join(f"{i},{l}\n" for i, _, l in rows))
    shuffled = [rows[k] for k in (3, 0, 4, 2, 1)]
    write(tmp_path / "shuffled.csv", "id,score\n" + "".join(f"{i},{s}\n" for i, s, _ in shuffled))
    write(tmp_path / "shuffled_labels.csv", "id,label\n" + "".join(f"{i},{l}\n" for i, _, l in reversed(shuffled)))
    first = invoke(runner, "eval", "--scores", tmp_path / "scores.csv", "--labels", tmp_path / "labels.csv",
                   "--out", tmp_path)
    second = invoke(runner, "eval", "--scores", tmp_path / "shuffled.csv",
                    "--labels", tmp_path / "shuffled_labels.csv", "--out", tmp_path)
    assert first.exit_code == 0 and second.exit_code == 0
    assert first.stdout == second.stdout
    assert first.stdout.startswith("auc=0.83333333")


def test_eval_invalid_utf8_is_a_data_error(runner, tmp_path):
    scores = tmp_path / "s.csv"
    scores.write_bytes(b"id,score\n0,0.5\n1,\xff\xfe\n")
    labels = write(tmp_path / "labels.csv", "id,label\n0,0\n1,1\n")
    result = invoke(runner, "eval", "--scores", scores, "--labels", labels, "--out", tmp_path)
    assert result.exit_code == 2
    assert "❌" in result.stderr
    assert "byte offset 17" in result.stderr
    assert not (tmp_path / "roc_s.csv").exists()


def test_rank_k_out_of_range(runner, tmp_path):
    scores = write(tmp_path / "scores.csv", "id,score\n0,0.1\n1,0.9\n")
    assert invoke(runner, "rank", "--scores", scores, "-k", 3).exit_code == 2
    assert invoke(runner, "rank", "--scores", scores, "-k", 0).exit_code == 2


def test_rank_tie_at_cutoff_keeps_earlier_id(runner, tmp_path):
    scores = write(tmp_path / "scores.csv", "id,score\na,0.9\nb,0.5\nc,0.7\nd,0.5\n")
    result = invoke(runner, "rank", "--scores", scores, "-k", 3)
    assert result.exit_code == 0
    assert result.stdout.splitlines() == ["a", "c", "b"]


# ---------------------------------------------------------------------------
# train-ae, encode, compare
# ---------------------------------------------------------------------------

def test_train_encode_compare(runner, workspace):
    config, out = workspace
    assert invoke(runner, "synth", "--config", config).exit_code == 0

    result = invoke(runner, "train-ae", "--config", config)
    assert result.exit_code == 0, result.stderr
    assert any(line.startswith("final_loss=") for line in result.stdout.splitlines())
    loss_rows = [l for l in (out / "loss.csv").read_text().splitlines() if not l.startswith("#")]
    assert loss_rows[0] == "epoch,loss"
    assert len(loss_rows) == 4
    model_bytes = (out / "model.oodae").read_bytes()

    result = invoke(runner, "encode", "--config", config, "--model", out / "model.oodae")
    assert result.exit_code == 0, result.stderr
    latent = [l for l in (out / "train_latent.csv").read_text().splitlines() if not l.startswith("#")]
    assert latent[0] == "z0,z1"
    assert len(latent) == 81

    result = invoke(runner, "compare", "--config", config, "--model", out / "model.oodae", "--out", out / "latent")
    assert result.exit_code == 0, result.stderr
    assert "outliers,kd,md,knn,lof,lcp" in result.stdout.splitlines()
    table = (out / "latent" / "auc_table.csv").read_text().splitlines()
    assert table[-1].startswith("test,")
    assert (out / "latent" / "roc_test_lcp.csv").exists()

    invoke(runner, "train-ae", "--config", config)
    assert (out / "model.oodae").read_bytes() == model_bytes


def test_compare_raw_features_separates_noise(runner, workspace):
    config, out = workspace
    invoke(runner, "synth", "--config", config)
    result = invoke(runner, "compare", "--config", config, "--kind", "knn", "--kind", "lcp")
    assert result.exit_code == 0, result.stderr
    rows = [l for l in (out / "auc_table.csv").read_text().splitlines() if not l.startswith("#")]
    assert rows[0] == "outliers,knn,lcp"
    name, knn_auc, lcp_auc = rows[1].split(",")
    assert name == "test"
    assert float(knn_auc) > 0.9 and float(lcp_auc) > 0.9


def test_compare_needs_matching_labels(runner, workspace):
    config, out = workspace
    invoke(runner, "synth", "--config", config)
    result = invoke(runner, "compare", "--config", config, "--test", out / "test.csv",
                    "--test", out / "train.csv", "--labels", out / "test_labels.csv")
    assert result.exit_code == 1


def test_train_missing_dataset_leaves_no_model(runner, tmp_path):
    result = invoke(runner, "train-ae", "--data", tmp_path / "missing.csv", "--out", tmp_path / "out")
    assert result.exit_code == 2
    assert "❌" in result.stderr
    assert not (tmp_path / "out" / "model.oodae").exists()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergent_training_leaves_no_model(runner, tmp_path):
    data = write(tmp_path / "data.csv", "10,10,10\n" * 4)
    config = write(tmp_path / "c.json", json.dumps({"autoencoder": {
        "layers": [{"width": 2, "activation": "identity"}],
        "output_activation": "identity",
        "training": {"epochs": 200, "batch_size": 4, "learning_rate": 1e6, "optimizer": "sgd"},
    }}))
    out = tmp_path / "out"
    result = invoke(runner, "train-ae", "--config", config, "--data", data, "--out", out)
    assert result.exit_code == 2
    assert not (out / "model.oodae").exists()
    assert not (out / "loss.csv").exists()


def test_failed_model_write_leaves_no_loss_file(runner, workspace, monkeypatch):
    config, out = workspace
    invoke(runner, "synth", "--config", config)

    def refuse(*args, **kwargs):
        raise OSError("disk full")

    monkeypatch.setattr("commands.training.save_autoencoder", refuse)
    result = invoke(runner, "train-ae", "--config", config)
    assert result.exit_code == 2
    assert "disk full" in result.stderr
    assert not (out / "model.oodae").exists()
    assert not (out / "loss.csv").exists()


# ---------------------------------------------------------------------------
# Usage and configuration errors
# ---------------------------------------------------------------------------

def test_usage_errors_exit_1(runner, tmp_path):
    assert invoke(runner, "score", "--no-such-flag").exit_code == 1
    assert invoke(runner, "synth", "--seed", -1).exit_code == 1
    assert invoke(runner, "nonsense").exit_code == 1
    assert invoke(runner, "rank", "--scores", tmp_path / "s.csv").exit_code == 1


def test_unknown_config_key_exit_1(runner, tmp_path):
    config = write(tmp_path / "c.json", json.dumps({"scorers": {"kay": 3}}))
    result = invoke(runner, "synth", "--config", config)
    assert result.exit_code == 1
    assert "scorers.kay" in result.stderr


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "1.0.0" in result.stdout
