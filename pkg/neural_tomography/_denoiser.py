# for internal use only
"""Feed-forward denoising network with explicit backpropagation and RMSprop.

The network maps noisy outcome frequencies to a softmax distribution over the same outcomes:
ReLU hidden layers, inverted dropout after the first hidden layer, and a mean KL loss against
the ideal probabilities.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from neural_tomography._common import child_rng
from neural_tomography._errors import DimensionMismatchError, DivergenceError, UsageError
from neural_tomography._quantum import ProbDistribution
from neural_tomography._sampler import inputs_and_targets, split_records

TYPE_CHECKING = False
if TYPE_CHECKING:
    from collections.abc import Sequence
    from typing import Literal

    from neural_tomography._common import RealArray
    from neural_tomography._sampler import TomographyRecord

    Mode = Literal["train", "infer"]
    Layer = tuple[RealArray, RealArray]

_log = logging.getLogger(__name__)


@dataclass(eq=False)
class NetworkParams:
    """Weights ``(W, b)`` per layer, ``W`` shaped ``(out, in)``."""

    layers: list[Layer]
    dropout_p: float = 0.2

    def __post_init__(self) -> None:
        if not 0 <= self.dropout_p < 1:
            raise UsageError(f"dropout probability must be in [0, 1), got {self.dropout_p}")
        if len(self.layers) < 2:
            raise UsageError("the network needs at least one hidden layer")
        for k, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionMismatchError(f"layer {k}: weights {w.shape} and biases {b.shape}")
            if k and w.shape[1] != self.layers[k - 1][0].shape[0]:
                raise DimensionMismatchError(f"layer {k} does not accept the previous layer output")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DivergenceError(f"layer {k} has non-finite parameters")

    @property
    def n_inputs(self) -> int:
        return int(self.layers[0][0].shape[1])

    @property
    def n_outputs(self) -> int:
        return int(self.layers[-1][0].shape[0])

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(int(w.shape[0]) for w, _ in self.layers[:-1])

    def copy(self) -> NetworkParams:
        return NetworkParams([(w.copy(), b.copy()) for w, b in self.layers], self.dropout_p)


def init_params(
    n_outcomes: int,
    hidden: Sequence[int] = (400, 200),
    dropout_p: float = 0.2,
    rng: np.random.Generator | None = None,
) -> NetworkParams:
    """He-uniform weights (limit ``√(6/fan_in)``) and zero biases."""
    rng = rng if rng is not None else np.random.default_rng()
    sizes = [n_outcomes, *hidden, n_outcomes]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6 / fan_in)
        layers.append((rng.uniform(-limit, limit, (fan_out, fan_in)), np.zeros(fan_out)))
    return NetworkParams(layers, dropout_p)


@dataclass(eq=False)
class _Cache:
    activations: list[RealArray]  # layer inputs, starting with the network input
    pre_activations: list[RealArray]
    mask: RealArray | None  # scaled dropout mask of the first hidden layer


def softmax(logits: RealArray) -> RealArray:
    shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def _forward(
    params: NetworkParams, inputs: RealArray, mode: Mode, rng: np.random.Generator | None
) -> tuple[RealArray, _Cache]:
    if inputs.ndim != 2 or inputs.shape[1] != params.n_inputs:
        raise DimensionMismatchError(f"expected inputs of width {params.n_inputs}, got {inputs.shape}")
    cache = _Cache([inputs], [], None)
    a = inputs
    for k, (w, b) in enumerate(params.layers[:-1]):
        z = a @ w.T + b
        a = np.maximum(z, 0)
        if k == 0 and mode == "train" and params.dropout_p > 0:
            if rng is None:
                raise UsageError("train mode needs a random generator for dropout")
            keep = rng.random(a.shape) >= params.dropout_p
            cache.mask = keep / (1 - params.dropout_p)
            a = a * cache.mask
        cache.pre_activations.append(z)
        cache.activations.append(a)
    w, b = params.layers[-1]
    return softmax(a @ w.T + b), cache


def forward_batch(
    params: NetworkParams,
    inputs: RealArray,
    mode: Mode = "infer",
    rng: np.random.Generator | None = None,
) -> RealArray:
    """Softmax outputs for a ``(B, K)`` batch of inputs."""
    return _forward(params, np.asarray(inputs, dtype=np.float64), mode, rng)[0]


def forward(
    params: NetworkParams,
    inputs: RealArray,
    mode: Mode = "infer",
    rng: np.random.Generator | None = None,
) -> ProbDistribution:
    x = np.asarray(inputs, dtype=np.float64).reshape(1, -1)
    if np.any(x < 0):
        raise UsageError("network inputs must be non-negative frequencies")
    return ProbDistribution(forward_batch(params, x, mode, rng)[0])


def _kl_rows(targets: RealArray, predicted: RealArray) -> RealArray:
    support = targets > 0
    if np.any(support & (predicted <= 0)):
        raise DivergenceError("predicted probability is zero where the target is not")
    ratio = np.where(support, targets / np.where(support, predicted, 1.0), 1.0)
    return np.sum(np.where(support, targets * np.log(ratio), 0.0), axis=-1)


def _values(dist: ProbDistribution | RealArray) -> RealArray:
    if isinstance(dist, ProbDistribution):
        return dist.values
    return np.asarray(dist, dtype=np.float64)


def kl_loss(target: ProbDistribution | RealArray, predicted: ProbDistribution | RealArray) -> float:
    """``Σ 𝕡 log(𝕡/p)`` with ``0·log(0/p) = 0``; a batch of rows gives the mean over rows."""
    t = _values(target)
    p = _values(predicted)
    if t.shape != p.shape:
        raise DimensionMismatchError(f"distribution shapes differ: {t.shape} != {p.shape}")
    return float(np.mean(_kl_rows(t, p)))


def batch_loss(
    params: NetworkParams,
    inputs: RealArray,
    targets: RealArray,
    mode: Mode = "infer",
    rng: np.random.Generator | None = None,
) -> float:
    return kl_loss(targets, forward_batch(params, inputs, mode, rng))


def backward(
    params: NetworkParams,
    inputs: RealArray,
    targets: RealArray,
    mode: Mode = "train",
    rng: np.random.Generator | None = None,
) -> tuple[float, list[Layer]]:
    """Mean batch KL loss and its exact gradient with respect to every weight and bias.

    Through softmax the output-layer error of each sample is ``p − 𝕡``. The dropout mask drawn
    in the forward pass is reused on the way back.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    predicted, cache = _forward(params, inputs, mode, rng)
    loss = kl_loss(targets, predicted)
    delta = (predicted - targets) / inputs.shape[0]
    grads: list[Layer] = []
    for k in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[k]
        grads.append((delta.T @ cache.activations[k], delta.sum(axis=0)))
        if k == 0:
            break
        upstream = delta @ w
        if k == 1 and cache.mask is not None:
            upstream = upstream * cache.mask
        delta = upstream * (cache.pre_activations[k - 1] > 0)
    grads.reverse()
    return loss, grads


# Optimiser
# =========
@dataclass(eq=False)
class OptimizerState:
    """RMSprop running averages of squared gradients.

    The update is ``v ← α·v + (1−α)·g²`` followed by ``θ ← θ − η·g/(√v + ε)``.
    """

    v: list[Layer]
    alpha: float = 0.1
    eta: float = 1e-3
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(
        cls, params: NetworkParams, alpha: float = 0.1, eta: float = 1e-3, epsilon: float = 1e-8
    ) -> OptimizerState:
        v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers]
        return cls(v, alpha, eta, epsilon)


def rmsprop_step(
    params: NetworkParams, grads: Sequence[Layer], state: OptimizerState
) -> tuple[NetworkParams, OptimizerState]:
    """Update ``params`` and ``state`` in place and return both."""
    if len(grads) != len(params.layers):
        raise DimensionMismatchError("one gradient per layer is required")
    for theta_pair, grad_pair, v_pair in zip(params.layers, grads, state.v):
        for theta, g, v in zip(theta_pair, grad_pair, v_pair):
            if theta.shape != g.shape:
                raise DimensionMismatchError(f"gradient shape {g.shape} != parameter shape {theta.shape}")
            v *= state.alpha
            v += (1 - state.alpha) * g**2
            theta -= state.eta * g / (np.sqrt(v) + state.epsilon)
    return params, state


# Training
# ========
@dataclass(frozen=True)
class TrainConfig:
    """Mini-batch RMSprop with early stopping on the validation loss.

    ``split`` counts ``(train, validation, test)`` records in dataset order. With an empty
    validation part the network trains for exactly ``max_epochs`` epochs.
    """

    batch_size: int = 40
    patience_epochs: int = 100
    max_epochs: int = 2000
    split: tuple[int, int, int] = (7000, 1500, 2000)
    seed: int = 0
    eta: float = 1e-3
    alpha: float = 0.1
    epsilon: float = 1e-8
    hidden: tuple[int, ...] = (400, 200)
    dropout_p: float = 0.2

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise UsageError("batch_size must be at least 1")
        if self.patience_epochs < 1 or self.max_epochs < 1:
            raise UsageError("patience_epochs and max_epochs must be positive")
        if len(self.split) != 3 or min(self.split) < 0 or self.split[0] < 1:
            raise UsageError(f"invalid split {self.split}")
        if self.eta <= 0 or not 0 <= self.alpha < 1 or self.epsilon <= 0:
            raise UsageError("RMSprop needs eta > 0, 0 <= alpha < 1 and epsilon > 0")
        if not self.hidden or min(self.hidden) < 1:
            raise UsageError("hidden layer sizes must be positive")
        if not 0 <= self.dropout_p < 1:
            raise UsageError("dropout_p must be in [0, 1)")


@dataclass(eq=False)
class TrainHistory:
    """Per-epoch losses (epochs count from 0); ``val_loss`` is empty without validation data."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    improved: bool = True
    """False when the validation loss never improved on the first epoch."""
    early_stopped: bool = False

    @property
    def best_val_loss(self) -> float | None:
        return self.val_loss[self.best_epoch] if self.val_loss else None


def fit(
    params: NetworkParams,
    train_inputs: RealArray,
    train_targets: RealArray,
    config: TrainConfig,
    val_inputs: RealArray | None = None,
    val_targets: RealArray | None = None,
    max_epochs: int | None = None,
) -> TrainHistory:
    """Train ``params`` in place.

    With validation data the best-validation weights are restored at the end; without it the
    final weights are kept.
    """
    epochs = max_epochs if max_epochs is not None else config.max_epochs
    n = train_inputs.shape[0]
    if n == 0:
        raise UsageError("no training records")
    validate = val_inputs is not None and val_targets is not None and val_inputs.shape[0] > 0
    state = OptimizerState.zeros_like(params, config.alpha, config.eta, config.epsilon)
    history = TrainHistory()
    best_params = params.copy()
    best_val = np.inf
    for epoch in range(epochs):
        order = child_rng(config.seed, "shuffle", epoch).permutation(n)
        dropout_rng = child_rng(config.seed, "dropout", epoch)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = backward(
                params, train_inputs[batch], train_targets[batch], "train", dropout_rng
            )
            rmsprop_step(params, grads, state)
            total += loss * batch.size
        history.train_loss.append(total / n)
        history.stopped_epoch = epoch
        if not validate:
            history.best_epoch = epoch
            _log.debug("epoch %d: train %.6g", epoch, history.train_loss[-1])
            continue
        assert val_inputs is not None and val_targets is not None
        val = batch_loss(params, val_inputs, val_targets)
        history.val_loss.append(val)
        _log.debug("epoch %d: train %.6g, validation %.6g", epoch, history.train_loss[-1], val)
        if val < best_val:
            best_val, history.best_epoch = val, epoch
            best_params = params.copy()
        elif epoch - history.best_epoch >= config.patience_epochs:
            history.early_stopped = True
            break
    if validate:
        params.layers = best_params.layers
        history.improved = history.best_epoch > 0
        if not history.improved:
            _log.warning("validation loss never improved after the first epoch")
    _log.info(
        "Training stopped at epoch %d (best epoch %d%s)",
        history.stopped_epoch, history.best_epoch, ", early stop" if history.early_stopped else "",
    )  # fmt: skip
    return history


def train(
    dataset: Sequence[TomographyRecord], config: TrainConfig
) -> tuple[NetworkParams, TrainHistory]:
    """Fit a fresh network on the train part of ``config.split`` and validate on the next part."""
    train_set, val_set, _ = split_records(dataset, config.split)
    inputs, targets = inputs_and_targets(train_set)
    rng = child_rng(config.seed, "init")
    params = init_params(inputs.shape[1], config.hidden, config.dropout_p, rng)
    if val_set:
        val_inputs, val_targets = inputs_and_targets(val_set)
        history = fit(params, inputs, targets, config, val_inputs, val_targets)
    else:
        history = fit(params, inputs, targets, config)
    return params, history


def predict_array(params: NetworkParams, inputs: RealArray) -> RealArray:
    return forward_batch(params, inputs, "infer")


def predict_batch(
    params: NetworkParams, records: Sequence[TomographyRecord] | RealArray
) -> list[ProbDistribution]:
    """Inference-mode predictions, one per record, in input order."""
    if isinstance(records, np.ndarray):
        inputs = records
    else:
        inputs = np.stack([record.noisy_freqs for record in records])
    return [ProbDistribution(row) for row in predict_array(params, inputs)]
