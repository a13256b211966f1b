#!/usr/bin/env python3
"""
Synth command: writes the datasets listed under synth.datasets
"""

import logging
from pathlib import Path

import click
import numpy as np

from commands import artifact_echo, handle_errors, pipeline_options, resolve_config
from commands.scoring import row_ids
from resources.datasets import load_dataset
from resources.synthetic import MixtureComponent, OutlierSpec, synth_gaussian_mixture, synth_outliers
from utils.config import PipelineConfig, SynthDatasetConfig
from utils.errors import ConfigError
from utils.files import write_features, write_labels

logger = logging.getLogger(__name__)


def build_dataset(cfg: PipelineConfig, index: int, ds: SynthDatasetConfig):
    """(features, labels) of one configured dataset; outlier rows come last with label 1"""
    if ds.components:
        components = [MixtureComponent(c.mean, c.deviation, c.count) for c in ds.components]
        inliers = synth_gaussian_mixture(components, seed=cfg.derived_seed(index))
    else:
        inliers = load_dataset(ds.source)
        if ds.limit is not None:
            inliers = inliers[:ds.limit]

    dim = inliers.shape[1]
    target = dim
    if ds.shape is not None:
        target = tuple(ds.shape)
        if int(np.prod(target)) != dim:
            raise ConfigError(f"synth.datasets[{index}].shape", f"{ds.shape} does not match {dim} features")

    blocks = [inliers]
    for j, o in enumerate(ds.outliers):
        spec = OutlierSpec(kind=o.kind, count=o.count, seed=cfg.derived_seed(index, j + 1),
                           source=o.source, order=o.order)
        blocks.append(synth_outliers(spec, target))
    features = np.vstack(blocks)
    labels = np.concatenate([np.zeros(inliers.shape[0], dtype=np.int64),
                             np.ones(features.shape[0] - inliers.shape[0], dtype=np.int64)])
    return features, labels


@click.command("synth")
@pipeline_options
@handle_errors
def synth(config_path, seed, output_dir):
    """Generate the synthetic datasets and outlier sets of synth.datasets"""
    cfg = resolve_config(config_path, seed, output_dir)
    if not cfg.synth.datasets:
        raise ConfigError("synth.datasets", "no datasets configured")
    out = Path(cfg.output_dir)
    for index, ds in enumerate(cfg.synth.datasets):
        features, labels = build_dataset(cfg, index, ds)
        echo = artifact_echo(cfg, "synth", dataset=ds.name)
        write_features(out / f"{ds.name}.csv", features, echo)
        write_labels(out / f"{ds.name}_labels.csv", row_ids(features.shape[0]), labels.tolist(), echo)
        click.echo(f"✅ {ds.name}: {features.shape[0]} rows x {features.shape[1]} features "
                   f"({int(labels.sum())} outliers) -> {out / ds.name}.csv")
