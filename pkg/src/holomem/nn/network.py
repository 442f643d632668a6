"""Network assembly, the cross-entropy loss, and the two reference models.

The CNN: conv 5x5 -> leaky ReLU -> 2x2 max pool -> dropout -> conv 3x3 ->
leaky ReLU -> 2x2 max pool -> dropout -> flatten -> dense 128 -> ReLU ->
dropout -> dense 128 -> ReLU -> dropout -> dense 16 -> softmax.

The MLP: flatten -> dense 128 -> ReLU -> dense 128 -> ReLU -> dense 16 ->
softmax.

Both take 1x20x20 fragments and emit 16 class probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Conv2D, Dense, Dropout, Flatten, Layer, LeakyReLU, MaxPool2x2, ReLU, Softmax

__all__ = [
    "TrainConfig",
    "Network",
    "cross_entropy_loss",
    "cross_entropy_grad_logits",
    "build_cnn",
    "build_mlp",
]

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run (loss is always cross-entropy)."""

    batch_size: int = 100
    learning_rate: float = 1e-3
    epochs: int = 20
    dropout_pool: float = 0.25
    dropout_fc: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0.0 <= self.dropout_pool < 1.0) or not (0.0 <= self.dropout_fc < 1.0):
            raise ValueError("dropout fractions must be in [0, 1)")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")


class Network:
    """An ordered layer stack.

    Inference-mode forward is a pure function (no RNG use, no state beyond
    the transient backward caches). Training-mode forward draws dropout
    masks from the RNG passed in.
    """

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def forward(self, x: np.ndarray, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        """Chain the gradient through every layer, including the softmax."""
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def backward_from_logits(self, grad_logits: np.ndarray) -> np.ndarray:
        """Backward pass starting below the trailing softmax.

        Used with the fused softmax + cross-entropy gradient
        (probs - onehot) / batch, which already accounts for the softmax.
        """
        if not isinstance(self.layers[-1], Softmax):
            raise ValueError("network does not end in a softmax layer")
        grad = grad_logits
        for layer in reversed(self.layers[:-1]):
            grad = layer.backward(grad)
        return grad

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads()]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward(x, training=False), axis=1)


def cross_entropy_loss(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Mean over the batch of -log p[label], with p floored at 1e-12."""
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= probabilities.shape[1]):
        raise ValueError("label out of range")
    picked = probabilities[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


def cross_entropy_grad_logits(probabilities: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Fused softmax + cross-entropy gradient on the logits: (p - onehot)/B."""
    labels = np.asarray(labels, dtype=np.int64)
    grad = probabilities.copy()
    grad[np.arange(len(labels)), labels] -= 1.0
    return grad / len(labels)


def build_cnn(
    rng: np.random.Generator | int | None = 0,
    filters1: int = 16,
    filters2: int = 32,
    dense_units: int = 128,
    dropout_pool: float = 0.25,
    dropout_fc: float = 0.5,
    fragment_px: int = 20,
) -> Network:
    """The convolutional fragment classifier for fragment_px x fragment_px input."""
    rng = np.random.default_rng(rng)
    if fragment_px % 4 != 0:
        raise ValueError(f"fragment_px must be divisible by 4 (two 2x2 pools), got {fragment_px}")
    pooled = fragment_px // 4
    return Network([
        Conv2D(1, filters1, 5, rng=rng),
        LeakyReLU(),
        MaxPool2x2(),
        Dropout(dropout_pool),
        Conv2D(filters1, filters2, 3, rng=rng),
        LeakyReLU(),
        MaxPool2x2(),
        Dropout(dropout_pool),
        Flatten(),
        Dense(pooled * pooled * filters2, dense_units, rng=rng),
        ReLU(),
        Dropout(dropout_fc),
        Dense(dense_units, dense_units, rng=rng),
        ReLU(),
        Dropout(dropout_fc),
        Dense(dense_units, 16, rng=rng),
        Softmax(),
    ])


def build_mlp(
    rng: np.random.Generator | int | None = 0,
    dense_units: int = 128,
    fragment_px: int = 20,
) -> Network:
    """The plain fully connected baseline classifier."""
    rng = np.random.default_rng(rng)
    return Network([
        Flatten(),
        Dense(fragment_px * fragment_px, dense_units, rng=rng),
        ReLU(),
        Dense(dense_units, dense_units, rng=rng),
        ReLU(),
        Dense(dense_units, 16, rng=rng),
        Softmax(),
    ])
