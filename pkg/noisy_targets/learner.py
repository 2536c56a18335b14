"""
Differentiable learning model, weighted multi-target joint loss and its optimization.
"""
from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from noisy_targets.dns_core import Instance
from noisy_targets.exceptions import ConfigurationError, DivergenceError, InvalidInputError

logger = logging.getLogger(__name__)

# predictions are clipped here before the logarithms of the cross-entropy
BCE_CLAMP = 1e-7
PREDICTION_EPS = np.finfo(float).eps
ALPHA_SUM_TOLERANCE = 1e-12


class Architecture(str, enum.Enum):
    LINEAR = "linear"
    ONE_HIDDEN = "one_hidden"


class BaseLoss(str, enum.Enum):
    BINARY_CROSS_ENTROPY = "binary_cross_entropy"
    SQUARED_ERROR = "squared_error"


class Optimizer(str, enum.Enum):
    GRADIENT_DESCENT = "gradient_descent"
    MOMENTUM = "momentum"


@dataclass(frozen=True, eq=False)
class Layer:
    """
    Affine map ``x -> weight @ x + bias`` with ``weight`` of shape ``(out, in)``.
    """

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        weight = np.array(self.weight, dtype=float, ndmin=2)
        bias = np.array(self.bias, dtype=float, ndmin=1)
        if bias.shape != (weight.shape[0],):
            raise InvalidInputError(f"bias shape {bias.shape} does not match weight shape {weight.shape}")
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)

    @property
    def size(self):
        return self.weight.size + self.bias.size


@dataclass(frozen=True, eq=False)
class ModelParams:
    """
    Parameters of a linear or one-hidden-layer model with sigmoid output.

    ``linear`` holds one ``(1, k)`` layer; ``one_hidden`` holds a ``(width, k)``
    tanh layer followed by a ``(1, width)`` output layer.
    """

    architecture: Architecture
    layers: Tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "architecture", Architecture(self.architecture))
        object.__setattr__(self, "layers", tuple(self.layers))
        expected = 1 if self.architecture is Architecture.LINEAR else 2
        if len(self.layers) != expected:
            raise InvalidInputError(f"{self.architecture.value} model needs {expected} layers, got {len(self.layers)}")
        if self.layers[-1].weight.shape[0] != 1:
            raise InvalidInputError("the output layer must have a single unit")
        if expected == 2 and self.layers[1].weight.shape[1] != self.layers[0].weight.shape[0]:
            raise InvalidInputError("hidden and output layer dimensions disagree")
        if not np.all(np.isfinite(self.to_vector())):
            raise InvalidInputError("model parameters must be finite")

    @property
    def feature_dim(self):
        return self.layers[0].weight.shape[1]

    @property
    def hidden_width(self) -> Optional[int]:
        if self.architecture is Architecture.LINEAR:
            return None
        return self.layers[0].weight.shape[0]

    @property
    def size(self):
        return sum(layer.size for layer in self.layers)

    def to_vector(self) -> np.ndarray:
        """
        All parameters in declared order: per layer, weights row-major then biases.
        """
        return np.concatenate([np.concatenate([layer.weight.ravel(), layer.bias]) for layer in self.layers])

    def with_vector(self, vector) -> "ModelParams":
        """
        Parameters of the same shape filled from ``vector``.
        """
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.size,):
            raise InvalidInputError(f"expected {self.size} parameter values, got {vector.shape}")
        layers = []
        offset = 0
        for layer in self.layers:
            rows, columns = layer.weight.shape
            weight = vector[offset:offset + rows * columns].reshape(rows, columns)
            offset += rows * columns
            bias = vector[offset:offset + rows]
            offset += rows
            layers.append(Layer(weight.copy(), bias.copy()))
        return ModelParams(self.architecture, tuple(layers))


@dataclass(frozen=True)
class LossConfig:
    """
    Base loss and the per-slot weights of the joint loss.
    """

    base_loss: BaseLoss = BaseLoss.BINARY_CROSS_ENTROPY
    alphas: Tuple[float, ...] = (0.5, 0.5)

    def __post_init__(self):
        object.__setattr__(self, "base_loss", BaseLoss(self.base_loss))
        object.__setattr__(self, "alphas", tuple(float(alpha) for alpha in self.alphas))
        if not self.alphas:
            raise ConfigurationError("loss alphas must not be empty")
        if any(not math.isfinite(alpha) or alpha < 0 for alpha in self.alphas):
            raise ConfigurationError("loss alphas must be finite and non-negative")
        if abs(math.fsum(self.alphas) - 1.0) > ALPHA_SUM_TOLERANCE:
            raise ConfigurationError(f"loss alphas must sum to 1, got {math.fsum(self.alphas)!r}")

    @classmethod
    def uniform(cls, p, base_loss=BaseLoss.BINARY_CROSS_ENTROPY):
        return cls(base_loss, (1.0 / p,) * p)

    @property
    def p(self):
        return len(self.alphas)


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 0.1
    epochs: int = 40
    batch_size: int = 64
    seed: int = 0
    optimizer: Optimizer = Optimizer.GRADIENT_DESCENT
    momentum: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if not math.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be finite and non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be positive")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError("momentum must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class TrainReport:
    loss_per_epoch: Tuple[float, ...]
    final_params: ModelParams
    wall_time: float


def sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def initialize_params(feature_dim, architecture=Architecture.LINEAR, hidden_width=8, seed=0) -> ModelParams:
    """
    Weights drawn from a seeded ``uniform(-0.1, 0.1)``, biases zero.
    """
    architecture = Architecture(architecture)
    rng = np.random.default_rng(seed)
    if architecture is Architecture.LINEAR:
        shapes = [(1, feature_dim)]
    else:
        if hidden_width < 1:
            raise ConfigurationError("hidden_width must be positive")
        shapes = [(hidden_width, feature_dim), (1, hidden_width)]
    layers = tuple(Layer(rng.uniform(-0.1, 0.1, size=shape), np.zeros(shape[0])) for shape in shapes)
    return ModelParams(architecture, layers)


def _check_features(params: ModelParams, features: np.ndarray):
    if features.ndim != 2 or features.shape[1] != params.feature_dim:
        raise InvalidInputError(
            f"model expects {params.feature_dim} features, got shape {features.shape}"
        )


def _forward(params: ModelParams, features: np.ndarray):
    """
    Output pre-activations and the hidden activations (``None`` for linear).
    """
    if params.architecture is Architecture.LINEAR:
        layer = params.layers[0]
        return features @ layer.weight[0] + layer.bias[0], None
    hidden_layer, output_layer = params.layers
    hidden = np.tanh(features @ hidden_layer.weight.T + hidden_layer.bias)
    return hidden @ output_layer.weight[0] + output_layer.bias[0], hidden


def predict_batch(params: ModelParams, features) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    _check_features(params, features)
    logits, _ = _forward(params, features)
    return np.clip(sigmoid(logits), PREDICTION_EPS, 1.0 - PREDICTION_EPS)


def predict(params: ModelParams, instance: Instance) -> float:
    """
    Model output for one instance, strictly inside ``(0, 1)``.

    :param params: model parameters
    :param instance: instance whose features match the model
    """
    return float(predict_batch(params, np.array([instance.features], dtype=float).reshape(1, -1))[0])


def _base_losses(predictions: np.ndarray, targets: np.ndarray, base_loss: BaseLoss) -> np.ndarray:
    if base_loss is BaseLoss.SQUARED_ERROR:
        return (predictions - targets) ** 2
    clamped = np.clip(predictions, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return -(targets * np.log(clamped) + (1.0 - targets) * np.log(1.0 - clamped))


def joint_loss(prediction: float, targets: Sequence[float], config: LossConfig) -> float:
    """
    ``sum_c alpha_c * loss(prediction, target_c)`` for one instance.

    :param prediction: model output
    :param targets: the instance's ``p`` target labels
    :param config: base loss and weights
    """
    if len(targets) != config.p:
        raise InvalidInputError(f"expected {config.p} targets, got {len(targets)}")
    if config.base_loss is BaseLoss.BINARY_CROSS_ENTROPY and not 0.0 < prediction < 1.0:
        raise InvalidInputError(f"cross-entropy needs a prediction inside (0, 1), got {prediction!r}")
    if config.base_loss is BaseLoss.SQUARED_ERROR:
        losses = [(prediction - target) ** 2 for target in targets]
    else:
        clamped = min(max(prediction, BCE_CLAMP), 1.0 - BCE_CLAMP)
        losses = [-(target * math.log(clamped) + (1.0 - target) * math.log(1.0 - clamped)) for target in targets]
    total = 0.0
    for alpha, loss in zip(config.alphas, losses):
        total += alpha * loss
    return total


def _check_targets(targets: np.ndarray, n, config: LossConfig):
    if targets.shape != (n, config.p):
        raise ConfigurationError(f"targets of shape {targets.shape} do not match {n} rows of p={config.p}")


def batch_joint_loss(params: ModelParams, features, targets, config: LossConfig) -> float:
    """
    Mean joint loss over a batch of feature rows and their target rows.
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    _check_features(params, features)
    _check_targets(targets, features.shape[0], config)
    logits, _ = _forward(params, features)
    losses = _base_losses(sigmoid(logits)[:, None], targets, config.base_loss)
    return float(np.mean(losses @ np.asarray(config.alphas)))


def _gradient_vector(params: ModelParams, features: np.ndarray, targets: np.ndarray, config: LossConfig):
    logits, hidden = _forward(params, features)
    outputs = sigmoid(logits)
    blended = targets @ np.asarray(config.alphas)
    if config.base_loss is BaseLoss.SQUARED_ERROR:
        delta = 2.0 * (outputs - blended) * outputs * (1.0 - outputs)
    else:
        delta = outputs - blended
    delta /= features.shape[0]

    if params.architecture is Architecture.LINEAR:
        return np.concatenate([delta @ features, [delta.sum()]])
    output_layer = params.layers[1]
    hidden_delta = np.outer(delta, output_layer.weight[0]) * (1.0 - hidden ** 2)
    return np.concatenate([
        (hidden_delta.T @ features).ravel(),
        hidden_delta.sum(axis=0),
        delta @ hidden,
        [delta.sum()],
    ])


def joint_loss_gradient(
    params: ModelParams, batch: Sequence[Tuple[Instance, Sequence[float]]], config: LossConfig
) -> ModelParams:
    """
    Gradient of the mean joint loss over ``batch``, shaped like ``params``.

    :param params: current model parameters
    :param batch: ``(instance, targets)`` pairs
    :param config: base loss and weights
    """
    if not batch:
        raise InvalidInputError("gradient needs a non-empty batch")
    features = np.array([instance.features for instance, _ in batch], dtype=float).reshape(len(batch), -1)
    targets = np.array([list(labels) for _, labels in batch], dtype=float).reshape(len(batch), -1)
    _check_features(params, features)
    _check_targets(targets, len(batch), config)
    return params.with_vector(_gradient_vector(params, features, targets, config))


def train(initial: ModelParams, features, targets, loss: LossConfig, optim: OptimConfig) -> TrainReport:
    """
    Mini-batch gradient descent on the mean joint loss.

    Batches follow a seeded permutation per epoch; the recorded loss of an
    epoch is the full-data mean joint loss after its last update.

    :param initial: starting parameters
    :param features: ``(n, k)`` instance features
    :param targets: ``(n, p)`` target labels
    :param loss: base loss and weights, ``p`` of them
    :param optim: optimizer settings
    :raises DivergenceError: the loss stops being finite
    """
    started = time.perf_counter()
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    _check_features(initial, features)
    _check_targets(targets, features.shape[0], loss)
    n = features.shape[0]
    if n == 0:
        raise InvalidInputError("cannot train on zero instances")

    rng = np.random.default_rng(optim.seed)
    theta = initial.to_vector()
    velocity = np.zeros_like(theta)
    params = initial
    curve: List[float] = []
    for epoch in range(1, optim.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, optim.batch_size):
            rows = order[start:start + optim.batch_size]
            gradient = _gradient_vector(params, features[rows], targets[rows], loss)
            if optim.optimizer is Optimizer.MOMENTUM:
                velocity = optim.momentum * velocity + gradient
                step = velocity
            else:
                step = gradient
            theta = theta - optim.learning_rate * step
            if not np.all(np.isfinite(theta)):
                raise DivergenceError(epoch, float("nan"))
            params = initial.with_vector(theta)
        epoch_loss = batch_joint_loss(params, features, targets, loss)
        if not math.isfinite(epoch_loss):
            raise DivergenceError(epoch, epoch_loss)
        curve.append(epoch_loss)
        logger.debug("epoch %d loss %.6f", epoch, epoch_loss)
    return TrainReport(tuple(curve), params, time.perf_counter() - started)


@dataclass(frozen=True)
class ModelConfig:
    architecture: Architecture = Architecture.LINEAR
    hidden_width: int = 8

    def __post_init__(self):
        object.__setattr__(self, "architecture", Architecture(self.architecture))
        if self.hidden_width < 1:
            raise ConfigurationError("hidden_width must be positive")

    def initialize(self, feature_dim, seed) -> ModelParams:
        return initialize_params(feature_dim, self.architecture, self.hidden_width, seed)
