#!/usr/bin/env python3
"""
Reporting commands: eval and rank
"""

from pathlib import Path

import click
import numpy as np

from commands import artifact_echo, handle_errors, pipeline_options, resolve_config
from utils.errors import DataFormatError
from utils.evaluation import LabeledScores, roc_curve, top_k_outliers, write_roc
from utils.files import format_value, read_labels, read_scores, sha256_file


def _match_ids(scores_path: str, labels_path: str):
    score_ids, scores = read_scores(scores_path)
    label_ids, labels = read_labels(labels_path)
    by_id = dict(zip(label_ids, labels))
    for i in score_ids:
        if i not in by_id:
            raise DataFormatError(labels_path, f"id {i!r} from {scores_path} has no label")
    if len(label_ids) != len(score_ids):
        known = set(score_ids)
        extra = next(i for i in label_ids if i not in known)
        raise DataFormatError(scores_path, f"id {extra!r} from {labels_path} has no score")
    return LabeledScores(np.array(scores), np.array([by_id[i] for i in score_ids]))


@click.command("eval")
@pipeline_options
@click.option("--scores", "scores_path", required=True, type=click.Path(dir_okay=False), help="id,score CSV")
@click.option("--labels", "labels_path", required=True, type=click.Path(dir_okay=False), help="id,label CSV")
@click.option("--roc", "roc_path", type=click.Path(dir_okay=False),
              help="ROC CSV to write (default <out>/roc_<scores file>.csv)")
@handle_errors
def eval_cmd(config_path, seed, output_dir, scores_path, labels_path, roc_path):
    """ROC curve and AUC of a scores file against a labels file"""
    cfg = resolve_config(config_path, seed, output_dir)
    curve = roc_curve(_match_ids(scores_path, labels_path))
    roc_path = Path(roc_path) if roc_path else Path(cfg.output_dir) / f"roc_{Path(scores_path).stem}.csv"
    echo = artifact_echo(cfg, "eval", scores_sha256=sha256_file(scores_path),
                         labels_sha256=sha256_file(labels_path))
    write_roc(roc_path, curve, echo)
    click.echo(f"auc={format_value(curve.auc)}")


@click.command("rank")
@pipeline_options
@click.option("--scores", "scores_path", required=True, type=click.Path(dir_okay=False), help="id,score CSV")
@click.option("-k", "--k", "k", required=True, type=int, help="Number of ids to list")
@handle_errors
def rank(config_path, seed, output_dir, scores_path, k):
    """Print the ids of the k highest scores, one per line"""
    resolve_config(config_path, seed, output_dir)
    ids, scores = read_scores(scores_path)
    for i in top_k_outliers(scores, ids, k):
        click.echo(i)
