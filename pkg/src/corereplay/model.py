"""Feed-forward ReLU classifier trained with plain mini-batch SGD.

The penultimate layer doubles as the feature extractor used for exemplar
selection.

Checkpoint layout (all integers little-endian uint32, all reals little-endian
float64)::

    b"MLPCKPT1"                 8-byte magic
    L                           number of layer sizes
    s_0 ... s_{L-1}             layer sizes
    for each layer k = 1..L-1:
        W_k  (s_k x s_{k-1}, row-major)
        b_k  (s_k)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .task_stream import Dataset, Sample

CHECKPOINT_MAGIC = b"MLPCKPT1"


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} in epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


@dataclass(frozen=True, eq=False)
class Model:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (W.shape[0],):
                raise ValueError(f"layer {k}: bias shape {b.shape} vs weight {W.shape}")
            if k and W.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(f"layer {k}: input size {W.shape[1]} breaks the shape chain")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(W.shape[0] for W in self.weights)

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def equals(self, other: "Model") -> bool:
        a, b = self.params(), other.params()
        return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass(frozen=True, eq=False)
class TrainingMix:
    """Current-task data plus replayed exemplars, trained on as one union."""

    current_data: Dataset
    buffer_data: Dataset | None = None

    def combined(self) -> Dataset:
        if self.buffer_data is None or len(self.buffer_data) == 0:
            return self.current_data
        return Dataset.concat([self.current_data, self.buffer_data])


def init_model(layer_sizes: Sequence[int], seed: int) -> Model:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError(f"invalid layer sizes {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Model(tuple(weights), tuple(biases))


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, Dataset):
        return x.X
    if isinstance(x, Sample):
        return np.asarray(x.features, dtype=np.float64)[None, :]
    return np.atleast_2d(np.asarray(x, dtype=np.float64))


def forward(model: Model, X: np.ndarray) -> list[np.ndarray]:
    """Activations of every layer, input first and logits last."""
    acts = [X]
    last = len(model.weights) - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ W.T + b
        acts.append(z if k == last else np.maximum(z, 0.0))
    return acts


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba(model: Model, X) -> np.ndarray:
    return softmax(forward(model, _as_matrix(X))[-1])


def loss_and_grads(model: Model, X: np.ndarray, y: np.ndarray):
    """Mean softmax cross-entropy over the batch and its parameter gradients.

    Returns ``(loss, grads)`` with ``grads`` ordered like ``Model.params()``.
    """
    acts = forward(model, X)
    logits = acts[-1]
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    n = len(y)
    loss = float(np.mean(logsum - z[np.arange(n), y]))

    delta = np.exp(z - logsum[:, None])
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads: list[np.ndarray] = []
    for k in range(len(model.weights) - 1, -1, -1):
        grads = [delta.T @ acts[k], delta.sum(axis=0)] + grads
        if k:
            delta = (delta @ model.weights[k]) * (acts[k] > 0)
    return loss, grads


def train_round(model: Model, mix: TrainingMix, cfg: TrainConfig) -> Model:
    """Shuffled mini-batch SGD over the union of current and replayed data.

    The shuffle for epoch ``e`` is drawn from a generator seeded with
    ``(cfg.seed, e)``, so training is a pure function of its inputs.
    """
    data = mix.combined()
    if len(data) == 0:
        raise ValueError("training mix is empty")
    if data.dim != model.layer_sizes[0]:
        raise ValueError(f"feature dim {data.dim} does not match model input {model.layer_sizes[0]}")
    params = [p.copy() for p in model.params()]
    current = Model(tuple(params[0::2]), tuple(params[1::2]))
    n = len(data)
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(current, data.X[idx], data.y[idx])
            total += loss * len(idx)
            for p, g in zip(params, grads):
                p -= cfg.learning_rate * g
        if not np.isfinite(total):
            raise TrainingDivergedError(epoch, total / n)
    return current


def predict(model: Model, X) -> np.ndarray:
    return np.argmax(forward(model, _as_matrix(X))[-1], axis=1)


def evaluate(model: Model, test_set: Dataset) -> float:
    """Fraction of samples whose arg-max logit over all classes equals the label."""
    if len(test_set) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    return float(np.mean(predict(model, test_set.X) == test_set.y))


def extract_features(model: Model, x) -> np.ndarray:
    """Post-ReLU activations of the penultimate layer.

    Accepts a single feature vector or :class:`Sample` (returns a vector) or a
    matrix / :class:`Dataset` (returns one row per sample).
    """
    single = isinstance(x, Sample) or (not isinstance(x, Dataset) and np.ndim(x) == 1)
    feats = forward(model, _as_matrix(x))[-2]
    return feats[0] if single else feats


def save_model(model: Model, path) -> None:
    sizes = model.layer_sizes
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack(f"<I{len(sizes)}I", len(sizes), *sizes))
        for W, b in zip(model.weights, model.biases):
            fh.write(W.astype("<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    (count,) = struct.unpack_from("<I", raw, 8)
    sizes = struct.unpack_from(f"<{count}I", raw, 12)
    offset = 12 + 4 * count
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = np.frombuffer(raw, "<f8", fan_in * fan_out, offset).reshape(fan_out, fan_in)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(raw, "<f8", fan_out, offset)
        offset += 8 * fan_out
        weights.append(W.astype(np.float64))
        biases.append(b.astype(np.float64))
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    return Model(tuple(weights), tuple(biases))
