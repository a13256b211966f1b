#!/usr/bin/env python3
"""
Fully-connected autoencoder used as the feature-learning function

The encoder output (the bottleneck layer) provides the activation traces that
the scorers consume. Training is plain mini-batch gradient descent with
hand-written backpropagation so that every run is reproducible bit for bit
from its seed.
"""

import copy
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import expit

from utils.errors import DimensionMismatchError, NumericalError, ParameterError
from utils.linalg import as_feature_matrix, as_real_vector

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "sigmoid", "identity")
OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class LayerSpec:
    """Width and activation of one dense layer"""
    width: int
    activation: str = "relu"

    def __post_init__(self):
        if int(self.width) < 1:
            raise ParameterError("width", f"layer width must be >= 1, got {self.width}")
        if self.activation not in ACTIVATIONS:
            raise ParameterError("activation", f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}")


# 784-256-64-256-784 for 28x28 inputs; the output layer is appended by init_model
DEFAULT_HIDDEN_LAYERS = (
    LayerSpec(256, "relu"),
    LayerSpec(64, "relu"),
    LayerSpec(256, "relu"),
)
DEFAULT_OUTPUT_ACTIVATION = "sigmoid"


@dataclass
class TrainConfig:
    """Mini-batch training hyperparameters"""
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError("epochs", f"must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError("batch_size", f"must be >= 1, got {self.batch_size}")
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise ParameterError("learning_rate", f"must be finite and >= 0, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ParameterError("optimizer", f"unknown optimizer {self.optimizer!r}, expected one of {OPTIMIZERS}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ParameterError("beta1", "adam betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ParameterError("epsilon", f"must be > 0, got {self.epsilon}")
        if self.seed < 0:
            raise ParameterError("seed", f"must be unsigned, got {self.seed}")


@dataclass
class AutoencoderModel:
    """Layer specs plus weights (fan_in x fan_out) and biases, output layer last"""
    input_dim: int
    layers: List[LayerSpec]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    latent_index: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.layers) != len(self.weights) or len(self.layers) != len(self.biases):
            raise ParameterError("layers", "layers, weights and biases must have equal length")
        if not 0 <= self.latent_index < len(self.layers):
            raise ParameterError("latent_index", f"out of range for {len(self.layers)} layers")
        if self.layers[self.latent_index].width >= self.input_dim:
            raise ParameterError("latent_index", f"latent width {self.layers[self.latent_index].width} "
                                 f"must be smaller than input_dim {self.input_dim}")
        fan_in = self.input_dim
        for i, (spec, w, b) in enumerate(zip(self.layers, self.weights, self.biases)):
            if w.shape != (fan_in, spec.width) or b.shape != (spec.width,):
                raise DimensionMismatchError(f"layer {i}", w.shape, (fan_in, spec.width))
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericalError(f"layer {i} has non-finite parameters")
            fan_in = spec.width
        if fan_in != self.input_dim:
            raise DimensionMismatchError("output layer", (fan_in,), (self.input_dim,))

    @property
    def latent_width(self) -> int:
        return self.layers[self.latent_index].width

    @property
    def n_parameters(self) -> int:
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    def copy(self) -> "AutoencoderModel":
        return copy.deepcopy(self)


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return expit(z)
    return z


def _activation_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


def init_model(input_dim: int, layers: Sequence[LayerSpec] = DEFAULT_HIDDEN_LAYERS, seed: int = 0,
               output_activation: str = DEFAULT_OUTPUT_ACTIVATION) -> AutoencoderModel:
    """
    Build a symmetric autoencoder from its hidden layers.

    `layers` lists the hidden layers only (encoder, bottleneck, decoder); an
    output layer of width input_dim is appended. Weights are drawn from
    U(-s, s) with s = sqrt(6 / (fan_in + fan_out)), biases start at zero.
    """
    if input_dim < 1:
        raise ParameterError("input_dim", f"must be >= 1, got {input_dim}")
    hidden = [l if isinstance(l, LayerSpec) else LayerSpec(**l) for l in layers]
    if not hidden or len(hidden) % 2 == 0:
        raise ParameterError("layers", "hidden layers must be an odd-length chain around one bottleneck")
    widths = [l.width for l in hidden]
    if widths != widths[::-1]:
        raise ParameterError("layers", f"hidden widths must be symmetric, got {widths}")
    latent_index = len(hidden) // 2
    bottleneck = widths[latent_index]
    if bottleneck != min(widths):
        raise ParameterError("layers", f"the middle layer must be the narrowest, got {widths}")
    if bottleneck >= input_dim:
        raise ParameterError("layers", f"bottleneck width {bottleneck} must be smaller than input_dim {input_dim}")

    all_layers = hidden + [LayerSpec(input_dim, output_activation)]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    fan_in = input_dim
    for spec in all_layers:
        scale = np.sqrt(6.0 / (fan_in + spec.width))
        weights.append(rng.uniform(-scale, scale, size=(fan_in, spec.width)))
        biases.append(np.zeros(spec.width))
        fan_in = spec.width

    return AutoencoderModel(input_dim=input_dim, layers=all_layers, weights=weights,
                            biases=biases, latent_index=latent_index)


def _forward_batch(model: AutoencoderModel, data: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Pre-activations and post-activations of every layer"""
    pre, post = [], []
    a = data
    for spec, w, b in zip(model.layers, model.weights, model.biases):
        z = a @ w + b
        a = _activate(spec.activation, z)
        pre.append(z)
        post.append(a)
    return pre, post


def _check_input(model: AutoencoderModel, data, name: str = "data") -> np.ndarray:
    data = as_feature_matrix(data, name)
    if data.shape[1] != model.input_dim:
        raise DimensionMismatchError(name, data.shape, (data.shape[0], model.input_dim))
    return data


def forward(model: AutoencoderModel, x) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Reconstruction of one sample plus every layer's post-activation values"""
    x = as_real_vector(x, "x")
    if x.size != model.input_dim:
        raise DimensionMismatchError("forward", x.shape, (model.input_dim,))
    _, post = _forward_batch(model, x.reshape(1, -1))
    activations = [a[0] for a in post]
    return activations[-1], activations


def reconstruct(model: AutoencoderModel, data) -> np.ndarray:
    data = _check_input(model, data)
    return _forward_batch(model, data)[1][-1]


def reconstruction_loss(model: AutoencoderModel, data) -> float:
    """Mean squared reconstruction error over all entries"""
    data = _check_input(model, data)
    diff = _forward_batch(model, data)[1][-1] - data
    return float(np.mean(diff * diff))


def loss_and_gradients(model: AutoencoderModel, data) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """MSE loss and its analytic gradients with respect to every weight and bias"""
    data = _check_input(model, data)
    pre, post = _forward_batch(model, data)
    diff = post[-1] - data
    loss = float(np.mean(diff * diff))

    grad_w: List[np.ndarray] = [None] * len(model.layers)
    grad_b: List[np.ndarray] = [None] * len(model.layers)
    d_a = 2.0 * diff / diff.size
    for i in range(len(model.layers) - 1, -1, -1):
        d_z = d_a * _activation_grad(model.layers[i].activation, pre[i], post[i])
        layer_input = post[i - 1] if i > 0 else data
        grad_w[i] = layer_input.T @ d_z
        grad_b[i] = d_z.sum(axis=0)
        if i > 0:
            d_a = d_z @ model.weights[i].T
    return loss, grad_w, grad_b


class _Adam:
    def __init__(self, model: AutoencoderModel, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(p) for p in model.weights + model.biases]
        self.v = [np.zeros_like(p) for p in model.weights + model.biases]

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        cfg = self.cfg
        self.t += 1
        c1 = 1.0 - cfg.beta1 ** self.t
        c2 = 1.0 - cfg.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)


class _Sgd:
    def __init__(self, model: AutoencoderModel, cfg: TrainConfig):
        self.cfg = cfg

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            p -= self.cfg.learning_rate * g


def train(model: AutoencoderModel, data, cfg: TrainConfig) -> Tuple[AutoencoderModel, List[float]]:
    """
    Minimize the mean squared reconstruction error by mini-batch descent.

    Returns a trained copy of the model and the per-epoch loss history
    (sample-weighted mean of the batch losses seen during that epoch).
    """
    data = _check_input(model, data)
    if cfg.learning_rate == 0:
        logger.warning("⚠️ learning_rate is 0, parameters will not change")
    trained = model.copy()
    optimizer = _Adam(trained, cfg) if cfg.optimizer == "adam" else _Sgd(trained, cfg)
    rng = np.random.default_rng(cfg.seed)
    n = data.shape[0]
    history: List[float] = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
            batch = data[order[start:start + cfg.batch_size]]
            loss, grad_w, grad_b = loss_and_gradients(trained, batch)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {batch_no}")
            optimizer.step(trained.weights + trained.biases, grad_w + grad_b)
            total += loss * batch.shape[0]
        history.append(total / n)
        logger.debug("epoch %d loss %.8g", epoch + 1, history[-1])
        if (epoch + 1) % 10 == 0 or epoch + 1 == cfg.epochs:
            logger.info("Epoch %d/%d - loss %.6g", epoch + 1, cfg.epochs, history[-1])

    for i, (w, b) in enumerate(zip(trained.weights, trained.biases)):
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NumericalError(f"layer {i} parameters diverged during training")
    return trained, history


def encode(model: AutoencoderModel, data) -> np.ndarray:
    """Bottleneck-layer activations, one row per sample"""
    data = _check_input(model, data)
    _, post = _forward_batch(model, data)
    return post[model.latent_index]


def select_active_neurons(latent, m: int) -> List[int]:
    """Indices of the m columns with highest mean absolute activation, ascending"""
    latent = as_feature_matrix(latent, "latent")
    cols = latent.shape[1]
    if m < 1 or m > cols:
        raise ParameterError("m", f"must satisfy 1 <= m <= {cols}, got {m}")
    means = np.mean(np.abs(latent), axis=0)
    order = np.lexsort((np.arange(cols), -means))
    return sorted(int(i) for i in order[:m])


def extract_traces(model: AutoencoderModel, data, subset: Sequence[int]) -> np.ndarray:
    """Latent activations restricted to an ordered neuron subset"""
    subset = [int(i) for i in subset]
    if not subset:
        raise ParameterError("subset", "must name at least one neuron")
    bad = [i for i in subset if not 0 <= i < model.latent_width]
    if bad:
        raise ParameterError("subset", f"index {bad[0]} out of range for latent width {model.latent_width}")
    if len(set(subset)) != len(subset):
        raise ParameterError("subset", "indices must be unique")
    return encode(model, data)[:, subset]
