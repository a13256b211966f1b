#!/usr/bin/env python3
"""
Autoencoder commands: train-ae and encode

Latent features are cached as CSV next to the model file, keyed by the
content hashes of the model and the dataset, so scorer sweeps skip
re-encoding.
"""

import hashlib
import logging
import os
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import click
import numpy as np

from commands import artifact_echo, handle_errors, pipeline_options, resolve_config
from models.autoencoder import encode, init_model, select_active_neurons, train
from models.storage import load_autoencoder, save_autoencoder
from resources.datasets import load_csv_features, load_dataset
from utils.config import PipelineConfig
from utils.errors import ConfigError, ParameterError
from utils.files import format_value, sha256_file, write_features, write_table

logger = logging.getLogger(__name__)

MODEL_FILE = "model.oodae"
LOSS_FILE = "loss.csv"


def require_path(value: Optional[str], key: str) -> str:
    if not value:
        raise ConfigError(key, "required; set it in the config file or pass the matching flag")
    return value


def content_key(path: str) -> str:
    """sha256 of a file, or of the sorted (name, hash) listing of a folder"""
    if not os.path.isdir(path):
        return sha256_file(path)
    digest = hashlib.sha256()
    for name in sorted(os.listdir(path)):
        full = os.path.join(path, name)
        if os.path.isfile(full):
            digest.update(name.encode("utf-8"))
            digest.update(sha256_file(full).encode("ascii"))
    return digest.hexdigest()


def latent_cache_path(model_path: str, model_sha: str, data_sha: str) -> Path:
    model_path = Path(model_path)
    return model_path.with_name(f"{model_path.stem}.{model_sha[:16]}.{data_sha[:16]}.latent.csv")


def encoded_features(model_path: str, data_path: str) -> np.ndarray:
    """Latent codes of a dataset, read from the cache when present"""
    if not os.path.exists(data_path):
        raise FileNotFoundError(f"dataset not found: {data_path}")
    model_sha = sha256_file(model_path)
    data_sha = content_key(data_path)
    cache = latent_cache_path(model_path, model_sha, data_sha)
    if cache.exists():
        logger.info("Using cached latent features %s", cache)
        return load_csv_features(cache)
    latent = encode(load_autoencoder(model_path), load_dataset(data_path))
    write_features(cache, latent, echo={"data_sha256": data_sha, "model_sha256": model_sha}, prefix="z")
    logger.info("Cached %d latent rows at %s", latent.shape[0], cache)
    return latent


def trace_subset(cfg: PipelineConfig, train_codes: np.ndarray) -> Optional[List[int]]:
    """Most active latent neurons on the training codes, or None for the full code"""
    if cfg.traces.subset_size is None:
        return None
    try:
        return select_active_neurons(train_codes, cfg.traces.subset_size)
    except ParameterError as e:
        raise ConfigError("traces.subset_size", e.detail)


def load_features(cfg: PipelineConfig, model_path: Optional[str], train_path: str,
                  query_paths: Sequence[str]) -> Tuple[np.ndarray, List[np.ndarray], Optional[List[int]]]:
    """
    Training and query matrices for the scorers: raw features without a
    model, otherwise latent codes restricted to the configured trace subset
    (picked on the training codes).
    """
    if model_path is None:
        return load_dataset(train_path), [load_dataset(p) for p in query_paths], None
    train_codes = encoded_features(model_path, train_path)
    queries = [encoded_features(model_path, p) for p in query_paths]
    subset = trace_subset(cfg, train_codes)
    if subset is not None:
        train_codes = train_codes[:, subset]
        queries = [q[:, subset] for q in queries]
    return train_codes, queries, subset


@click.command("train-ae")
@pipeline_options
@click.option("--data", "train_path", type=click.Path(), help="Training dataset (overrides data.train)")
@click.option("--epochs", type=click.IntRange(min=1), help="Training epochs")
@click.option("--model", "model_path", type=click.Path(dir_okay=False),
              help=f"Model file to write (default <out>/{MODEL_FILE})")
@handle_errors
def train_ae(config_path, seed, output_dir, train_path, epochs, model_path):
    """Train the autoencoder; writes the model file and per-epoch losses"""
    cfg = resolve_config(config_path, seed, output_dir,
                         {"data.train": train_path, "autoencoder.training.epochs": epochs})
    data = load_dataset(require_path(cfg.data.train, "data.train"))
    try:
        model = init_model(data.shape[1], cfg.autoencoder.layers, seed=cfg.seed,
                           output_activation=cfg.autoencoder.output_activation)
    except ParameterError as e:
        raise ConfigError("autoencoder.layers", str(e))
    trained, history = train(model, data, cfg.autoencoder.training)

    out = Path(cfg.output_dir)
    model_path = Path(model_path) if model_path else out / MODEL_FILE
    echo = artifact_echo(cfg, "train-ae")
    save_autoencoder(trained, model_path, metadata={"config": cfg.as_dict(), "final_loss": history[-1]})
    write_table(out / LOSS_FILE, ["epoch", "loss"], [(i + 1, float(v)) for i, v in enumerate(history)], echo)

    click.echo(f"✅ Trained {data.shape[1]}-{trained.latent_width} autoencoder on {data.shape[0]} rows "
               f"({trained.n_parameters} parameters) -> {model_path}")
    click.echo(f"final_loss={format_value(history[-1])}")


@click.command("encode")
@pipeline_options
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False), help="Trained model file")
@click.option("--data", "data_path", type=click.Path(), help="Dataset to encode (default data.train)")
@click.option("--output", "output_path", type=click.Path(dir_okay=False),
              help="Latent CSV to write (default <out>/<dataset>_latent.csv)")
@handle_errors
def encode_cmd(config_path, seed, output_dir, model_path, data_path, output_path):
    """Write the latent activation traces of a dataset"""
    cfg = resolve_config(config_path, seed, output_dir)
    data_path = data_path or require_path(cfg.data.train, "data.train")
    latent = encoded_features(model_path, data_path)
    subset = None
    if cfg.traces.subset_size is not None:
        subset = trace_subset(cfg, encoded_features(model_path, require_path(cfg.data.train, "data.train")))
        latent = latent[:, subset]

    stem = Path(data_path.rstrip("/\\")).stem
    output_path = Path(output_path) if output_path else Path(cfg.output_dir) / f"{stem}_latent.csv"
    echo = artifact_echo(cfg, "encode", model_sha256=sha256_file(model_path), subset=subset)
    write_features(output_path, latent, echo, prefix="z")
    click.echo(f"✅ Encoded {latent.shape[0]} rows into {latent.shape[1]} latent features -> {output_path}")
