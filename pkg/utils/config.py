#!/usr/bin/env python3
"""
Pipeline configuration

Values resolve in this order, later sources winning:
built-in defaults < environment (.env) < JSON config file < command-line flags.
Unknown keys and out-of-range values raise ConfigError naming the dotted key.
"""

import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from models.autoencoder import DEFAULT_HIDDEN_LAYERS, DEFAULT_OUTPUT_ACTIVATION, ACTIVATIONS, LayerSpec, TrainConfig
from models.scorers import KD_SUBSAMPLE, LCP_WEIGHTINGS, SCORER_KINDS
from resources.datasets import REFORMAT_ORDERS
from resources.synthetic import OUTLIER_KINDS
from utils.errors import ConfigError, ParameterError
from utils.linalg import JITTER_CAP
from utils.neighbors import DEFAULT_K

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    print("⚠️ python-dotenv not available. Environment variables must be set manually.")

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _positive_or_none(name: str, value) -> None:
    if value is not None and not (np.isfinite(value) and value > 0):
        raise ParameterError(name, f"must be finite and > 0, got {value}")


@dataclass
class DataConfig:
    """Dataset paths: training rows, query rows and query labels"""
    train: Optional[str] = None
    test: Optional[str] = None
    labels: Optional[str] = None


@dataclass
class AutoencoderConfig:
    layers: List[LayerSpec] = field(default_factory=lambda: list(DEFAULT_HIDDEN_LAYERS))
    output_activation: str = DEFAULT_OUTPUT_ACTIVATION
    # seed is taken from PipelineConfig.seed
    training: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not self.layers:
            raise ParameterError("layers", "need at least one hidden layer")
        if self.output_activation not in ACTIVATIONS:
            raise ParameterError("output_activation", f"must be one of {ACTIVATIONS}, got {self.output_activation!r}")


@dataclass
class TraceConfig:
    """Number of most active latent neurons to keep; None keeps the full code"""
    subset_size: Optional[int] = None

    def __post_init__(self):
        if self.subset_size is not None and int(self.subset_size) < 1:
            raise ParameterError("subset_size", f"must be >= 1, got {self.subset_size}")


@dataclass
class ScorerConfig:
    kinds: List[str] = field(default_factory=lambda: list(SCORER_KINDS))
    k: int = DEFAULT_K
    sigma: Optional[float] = None
    perplexity: Optional[float] = None
    weighting: str = "kernel"
    lcp_sigma: Optional[float] = None
    jitter: float = 0.0
    jitter_cap: float = JITTER_CAP
    kd_subsample: int = KD_SUBSAMPLE

    def __post_init__(self):
        if not self.kinds:
            raise ParameterError("kinds", "need at least one scorer kind")
        for kind in self.kinds:
            if kind not in SCORER_KINDS:
                raise ParameterError("kinds", f"unknown scorer kind {kind!r}, expected one of {SCORER_KINDS}")
        if len(set(self.kinds)) != len(self.kinds):
            raise ParameterError("kinds", "scorer kinds must be unique")
        if int(self.k) < 1:
            raise ParameterError("k", f"must be >= 1, got {self.k}")
        _positive_or_none("sigma", self.sigma)
        _positive_or_none("perplexity", self.perplexity)
        _positive_or_none("lcp_sigma", self.lcp_sigma)
        if self.weighting not in LCP_WEIGHTINGS:
            raise ParameterError("weighting", f"must be one of {LCP_WEIGHTINGS}, got {self.weighting!r}")
        if not (np.isfinite(self.jitter) and self.jitter >= 0):
            raise ParameterError("jitter", f"must be finite and >= 0, got {self.jitter}")
        _positive_or_none("jitter_cap", self.jitter_cap)
        if int(self.kd_subsample) < 1:
            raise ParameterError("kd_subsample", f"must be >= 1, got {self.kd_subsample}")


@dataclass
class OutlierConfig:
    kind: str
    count: int
    source: Optional[str] = None
    order: str = "channels_first"

    def __post_init__(self):
        if self.kind not in OUTLIER_KINDS:
            raise ParameterError("kind", f"must be one of {OUTLIER_KINDS}, got {self.kind!r}")
        if int(self.count) < 1:
            raise ParameterError("count", f"must be >= 1, got {self.count}")
        if self.kind == "external_dataset" and not self.source:
            raise ParameterError("source", "external_dataset outliers need a source path")
        if self.order not in REFORMAT_ORDERS:
            raise ParameterError("order", f"must be one of {REFORMAT_ORDERS}, got {self.order!r}")


@dataclass
class ComponentConfig:
    mean: List[float]
    deviation: Any
    count: int

    def __post_init__(self):
        if not isinstance(self.mean, list) or not self.mean or any(
                isinstance(v, bool) or not isinstance(v, (int, float)) for v in self.mean):
            raise ParameterError("mean", "must be a non-empty list of numbers")
        deviations = self.deviation if isinstance(self.deviation, list) else [self.deviation]
        if any(not (np.isfinite(d) and d > 0) for d in deviations):
            raise ParameterError("deviation", "deviations must be finite and > 0")
        if int(self.count) < 1:
            raise ParameterError("count", f"must be >= 1, got {self.count}")


@dataclass
class SynthDatasetConfig:
    """
    One named dataset: either mixture components or a source file (with an
    optional row limit), followed by any number of outlier sets. shape gives
    (channels, height, width) when image outliers have to be reformatted.
    """
    name: str
    components: List[ComponentConfig] = field(default_factory=list)
    source: Optional[str] = None
    limit: Optional[int] = None
    shape: Optional[List[int]] = None
    outliers: List[OutlierConfig] = field(default_factory=list)

    def __post_init__(self):
        if not self.name or "/" in self.name or self.name.startswith("."):
            raise ParameterError("name", f"must be a plain file stem, got {self.name!r}")
        if bool(self.components) == bool(self.source):
            raise ParameterError("components", "give either mixture components or a source, not both")
        if self.limit is not None and int(self.limit) < 1:
            raise ParameterError("limit", f"must be >= 1, got {self.limit}")
        if self.shape is not None and (len(self.shape) != 3 or self.shape[0] not in (1, 3)
                                       or min(self.shape) < 1):
            raise ParameterError("shape", f"must be [channels (1 or 3), height, width], got {self.shape}")


@dataclass
class SynthConfig:
    datasets: List[SynthDatasetConfig] = field(default_factory=list)

    def __post_init__(self):
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ParameterError("datasets", "dataset names must be unique")


@dataclass
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    autoencoder: AutoencoderConfig = field(default_factory=AutoencoderConfig)
    traces: TraceConfig = field(default_factory=TraceConfig)
    scorers: ScorerConfig = field(default_factory=ScorerConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    output_dir: str = "runs"
    seed: int = 0
    log_level: str = "INFO"

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ParameterError("seed", f"must be an unsigned integer, got {self.seed!r}")
        if self.log_level not in LOG_LEVELS:
            raise ParameterError("log_level", f"must be one of {LOG_LEVELS}, got {self.log_level!r}")
        if not self.output_dir:
            raise ParameterError("output_dir", "must not be empty")
        self.autoencoder.training.seed = self.seed

    def derived_seed(self, *path: int) -> int:
        """Independent child seed for a numbered sub-task"""
        return int(np.random.SeedSequence([self.seed, *path]).generate_state(1)[0])

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def echo(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Building from plain dictionaries
# ---------------------------------------------------------------------------

def _join(prefix: str, key: str) -> str:
    return f"{prefix}.{key}" if prefix else key


def _build(cls, raw: Any, prefix: str, nested: Optional[Dict[str, Callable]] = None):
    if not isinstance(raw, dict):
        raise ConfigError(prefix or "config", f"expected an object, got {type(raw).__name__}")
    allowed = {f.name for f in fields(cls)}
    for key in raw:
        if key not in allowed:
            raise ConfigError(_join(prefix, key), "unknown key")
    kwargs = dict(raw)
    for name, builder in (nested or {}).items():
        if name in kwargs:
            kwargs[name] = builder(kwargs[name], _join(prefix, name))
    try:
        return cls(**kwargs)
    except ParameterError as e:
        raise ConfigError(_join(prefix, e.name), e.detail)
    except (TypeError, ValueError) as e:
        raise ConfigError(prefix or "config", f"invalid or missing value: {e}")


def _build_list(builder: Callable) -> Callable:
    def build(raw: Any, prefix: str) -> list:
        if not isinstance(raw, list):
            raise ConfigError(prefix, f"expected a list, got {type(raw).__name__}")
        return [builder(item, f"{prefix}[{i}]") for i, item in enumerate(raw)]
    return build


def _build_layer(raw: Any, prefix: str) -> LayerSpec:
    if isinstance(raw, int) and not isinstance(raw, bool):
        raw = {"width": raw}
    return _build(LayerSpec, raw, prefix)


def _build_training(raw: Any, prefix: str) -> TrainConfig:
    if isinstance(raw, dict) and "seed" in raw:
        raise ConfigError(_join(prefix, "seed"), "set the global seed instead")
    return _build(TrainConfig, raw, prefix)


def _build_dataset(raw: Any, prefix: str) -> SynthDatasetConfig:
    return _build(SynthDatasetConfig, raw, prefix, {
        "components": _build_list(lambda r, p: _build(ComponentConfig, r, p)),
        "outliers": _build_list(lambda r, p: _build(OutlierConfig, r, p)),
    })


def build_config(raw: Dict[str, Any]) -> PipelineConfig:
    return _build(PipelineConfig, raw, "", {
        "data": lambda r, p: _build(DataConfig, r, p),
        "autoencoder": lambda r, p: _build(AutoencoderConfig, r, p, {
            "layers": _build_list(_build_layer),
            "training": _build_training,
        }),
        "traces": lambda r, p: _build(TraceConfig, r, p),
        "scorers": lambda r, p: _build(ScorerConfig, r, p),
        "synth": lambda r, p: _build(SynthConfig, r, p, {"datasets": _build_list(_build_dataset)}),
    })


# ---------------------------------------------------------------------------
# Sources
# ---------------------------------------------------------------------------

def _env_value(name: str, convert: Callable):
    value = os.getenv(name)
    if value is None or value == "":
        return None
    try:
        return convert(value)
    except ValueError:
        raise ConfigError(name, f"cannot parse {value!r}")


def env_overrides() -> Dict[str, Any]:
    """Dotted-key values taken from OODKIT_* environment variables"""
    values = {
        "seed": _env_value("OODKIT_SEED", int),
        "output_dir": _env_value("OODKIT_OUTPUT_DIR", str),
        "log_level": _env_value("OODKIT_LOG_LEVEL", str.upper),
        "scorers.jitter_cap": _env_value("OODKIT_JITTER_CAP", float),
    }
    return {k: v for k, v in values.items() if v is not None}


def read_config_file(path: str) -> Dict[str, Any]:
    if not os.path.isfile(path):
        raise ConfigError("config", f"{path}: no such file")
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
    except UnicodeDecodeError as e:
        raise ConfigError("config", f"{path}: invalid UTF-8 at byte offset {e.start}")
    if not isinstance(raw, dict):
        raise ConfigError("config", f"{path}: top level must be an object")
    return raw


def _set_dotted(raw: Dict[str, Any], dotted: str, value: Any) -> None:
    node = raw
    parts = dotted.split(".")
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(dotted, f"{part} is not a section")
        node = child
    node[parts[-1]] = value


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """
    Resolve a PipelineConfig. overrides maps dotted keys to flag values;
    None values mean "flag not given" and are skipped.
    """
    raw: Dict[str, Any] = {}
    for key, value in env_overrides().items():
        _set_dotted(raw, key, value)
    if path:
        file_raw = read_config_file(path)
        for key, value in _flatten(file_raw):
            _set_dotted(raw, key, value)
    for key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(raw, key, value)
    return build_config(raw)


_SECTIONS = {"data", "autoencoder", "autoencoder.training", "traces", "scorers", "synth"}


def _flatten(raw: Dict[str, Any], prefix: str = ""):
    """Yield (dotted key, value) down to leaf values; lists stay whole"""
    for key, value in raw.items():
        dotted = _join(prefix, key)
        if isinstance(value, dict) and dotted in _SECTIONS:
            yield from _flatten(value, dotted)
        else:
            yield dotted, value
