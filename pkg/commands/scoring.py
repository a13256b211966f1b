#!/usr/bin/env python3
"""
Scoring commands: score and compare

Rows are identified by their zero-based position in the query dataset, the
same ids the synth command writes into its labels files.
"""

import logging
from pathlib import Path
from typing import Dict, List

import click
import numpy as np

from commands import artifact_echo, handle_errors, pipeline_options, resolve_config
from commands.training import load_features, require_path
from models.scorers import SCORER_KINDS, FittedScorer, fit_scorer, lcp_residuals, residual_summary
from models.storage import save_scorer
from utils.config import PipelineConfig
from utils.errors import ConfigError, DataFormatError, ParameterError
from utils.evaluation import LabeledScores, auc_table, roc_curve, write_auc_table, write_roc
from utils.files import format_value, read_labels, sha256_file, write_scores, write_table

logger = logging.getLogger(__name__)


def row_ids(n: int) -> List[str]:
    return [str(i) for i in range(n)]


def fit_configured(cfg: PipelineConfig, kind: str, train: np.ndarray) -> FittedScorer:
    s = cfg.scorers
    try:
        return fit_scorer(kind, train, k=s.k, sigma=s.sigma, perplexity=s.perplexity, weighting=s.weighting,
                          jitter=s.jitter, jitter_cap=s.jitter_cap, kd_subsample=s.kd_subsample,
                          seed=cfg.seed, lcp_sigma=s.lcp_sigma)
    except ParameterError as e:
        raise ParameterError(f"scorers.{e.name}", f"{kind}: {e.detail}")


def scorer_overrides(kinds, k, sigma, perplexity, weighting) -> Dict[str, object]:
    return {
        "scorers.kinds": list(kinds) if kinds else None,
        "scorers.k": k,
        "scorers.sigma": sigma,
        "scorers.perplexity": perplexity,
        "scorers.weighting": weighting,
    }


def scorer_options(f):
    f = click.option("--weighting", type=click.Choice(["kernel", "literal"]), help="LCP neighbor weighting")(f)
    f = click.option("--perplexity", type=float, help="LCP target perplexity")(f)
    f = click.option("--sigma", type=float, help="KD bandwidth (default: median heuristic)")(f)
    f = click.option("-k", "--k", "k", type=click.IntRange(min=1), help="Neighbor count for knn/lof/lcp")(f)
    f = click.option("--kind", "kinds", multiple=True, type=click.Choice(SCORER_KINDS),
                     help="Scorer kind; repeat for several (default scorers.kinds)")(f)
    f = click.option("--train", "train_path", type=click.Path(), help="Training dataset (default data.train)")(f)
    f = click.option("--model", "model_path", type=click.Path(dir_okay=False),
                     help="Autoencoder model; omit to score raw features")(f)
    return f


def _write_residuals(path: Path, scorer, queries: np.ndarray, echo) -> Path:
    summary = residual_summary(lcp_residuals(scorer, queries))
    header = ["dim", "mean", "std", "skewness", "kurtosis", "normality_p"]
    rows = [[r[h] for h in header] for r in summary.rows()]
    return write_table(path, header, rows, echo)


@click.command("score")
@pipeline_options
@scorer_options
@click.option("--test", "test_path", type=click.Path(), help="Query dataset (default data.test, else data.train)")
@click.option("--residuals", is_flag=True, help="Also write the per-dimension LCP residual summary")
@handle_errors
def score(config_path, seed, output_dir, model_path, train_path, kinds, k, sigma, perplexity, weighting,
          test_path, residuals):
    """Fit each scorer kind on the training set and score the query set"""
    overrides = scorer_overrides(kinds, k, sigma, perplexity, weighting)
    overrides.update({"data.train": train_path, "data.test": test_path})
    cfg = resolve_config(config_path, seed, output_dir, overrides)
    train_path = require_path(cfg.data.train, "data.train")
    test_path = cfg.data.test or train_path
    train, (queries,), subset = load_features(cfg, model_path, train_path, [test_path])
    model_sha = sha256_file(model_path) if model_path else None

    out = Path(cfg.output_dir)
    ids = row_ids(queries.shape[0])
    for kind in cfg.scorers.kinds:
        scorer = fit_configured(cfg, kind, train)
        report = scorer.score(queries)
        echo = artifact_echo(cfg, "score", kind=kind, model_sha256=model_sha, params=report.params, subset=subset)
        path = write_scores(out / f"scores_{kind}.csv", ids, report.scores.tolist(), echo)
        save_scorer(scorer, out / f"scorer_{kind}.oodsc", metadata=echo)
        click.echo(f"✅ {kind}: scored {len(report)} rows -> {path}")
        if residuals and kind == "lcp":
            res_path = _write_residuals(out / "residuals_lcp.csv", scorer, queries, echo)
            click.echo(f"✅ lcp: residual summary -> {res_path}")
    if residuals and "lcp" not in cfg.scorers.kinds:
        click.echo("⚠️ --residuals only applies to the lcp scorer", err=True)


def _aligned_labels(labels_path: str, n: int) -> np.ndarray:
    ids, labels = read_labels(labels_path)
    expected = row_ids(n)
    by_id = dict(zip(ids, labels))
    for i in expected:
        if i not in by_id:
            raise DataFormatError(labels_path, f"no label for row id {i!r}")
    if len(ids) != n:
        extra = next(i for i in ids if i not in set(expected))
        raise DataFormatError(labels_path, f"label id {extra!r} has no query row")
    return np.array([by_id[i] for i in expected])


@click.command("compare")
@pipeline_options
@scorer_options
@click.option("--test", "test_paths", multiple=True, type=click.Path(),
              help="Query dataset; repeat for several outlier sets (default data.test)")
@click.option("--labels", "labels_paths", multiple=True, type=click.Path(),
              help="Labels for each --test, in the same order (default data.labels)")
@handle_errors
def compare(config_path, seed, output_dir, model_path, train_path, kinds, k, sigma, perplexity, weighting,
            test_paths, labels_paths):
    """AUC of every scorer kind on every labeled query set"""
    overrides = scorer_overrides(kinds, k, sigma, perplexity, weighting)
    overrides["data.train"] = train_path
    cfg = resolve_config(config_path, seed, output_dir, overrides)
    train_path = require_path(cfg.data.train, "data.train")
    test_paths = list(test_paths) or [require_path(cfg.data.test, "data.test")]
    labels_paths = list(labels_paths) or [require_path(cfg.data.labels, "data.labels")]
    if len(test_paths) != len(labels_paths):
        raise ConfigError("labels", f"{len(labels_paths)} labels files for {len(test_paths)} query sets")

    train, queries, subset = load_features(cfg, model_path, train_path, test_paths)
    scorers = {kind: fit_configured(cfg, kind, train) for kind in cfg.scorers.kinds}

    out = Path(cfg.output_dir)
    results: Dict[str, Dict[str, LabeledScores]] = {}
    for test_path, labels_path, q in zip(test_paths, labels_paths, queries):
        name = _set_name(test_path, results)
        labels = _aligned_labels(labels_path, q.shape[0])
        results[name] = {kind: LabeledScores(s.score(q).scores, labels) for kind, s in scorers.items()}
        for kind, ls in results[name].items():
            write_roc(out / f"roc_{name}_{kind}.csv", roc_curve(ls),
                      artifact_echo(cfg, "compare", kind=kind, outliers=name, params=scorers[kind].params()))

    table = auc_table(results)
    echo = artifact_echo(cfg, "compare", model_sha256=sha256_file(model_path) if model_path else None,
                         subset=subset)
    path = write_auc_table(out / "auc_table.csv", table, cfg.scorers.kinds, echo)
    click.echo(",".join(["outliers"] + list(cfg.scorers.kinds)))
    for name, row in table.items():
        click.echo(",".join([name] + [format_value(row[kind]) for kind in cfg.scorers.kinds]))
    click.echo(f"✅ AUC table -> {path}")


def _set_name(test_path: str, taken: Dict[str, object]) -> str:
    base = Path(test_path.rstrip("/\\")).stem
    name, n = base, 2
    while name in taken:
        name = f"{base}_{n}"
        n += 1
    return name
