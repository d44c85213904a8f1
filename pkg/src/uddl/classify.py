"""One-vs-rest linear SVM trained by stochastic subgradient descent.

Each binary problem minimizes the L2-regularized hinge loss with step size
1/(lambda*t); the returned weights average the iterates of the last 10% of
steps, which damps the tail oscillation of the schedule. Training is
deterministic for a fixed seed, and prediction is a plain argmax over class
scores with ties going to the lowest class id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .features import ImageDescriptor
from .rng import generator


@dataclass
class LinearSvmModel:
    weights: np.ndarray  # C x F
    biases: np.ndarray  # C
    reg_lambda: float
    epochs: int
    seed: int

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != len(self.biases):
            raise ShapeError("weights must be C x F with one bias per class")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]


def _stack_descriptors(descriptors: list[ImageDescriptor]):
    if not descriptors:
        raise ShapeError("no descriptors given")
    x = np.stack([d.vector for d in descriptors])
    labels = [d.label for d in descriptors]
    if any(l is None for l in labels):
        raise ConfigError("training descriptors must all be labeled")
    return x, np.asarray(labels, dtype=np.int64)


def hinge_objective(x: np.ndarray, y_signed: np.ndarray, w: np.ndarray, b: float, reg_lambda: float) -> float:
    """Mean hinge loss plus (lambda/2)||w||^2 of one binary problem."""
    margins = y_signed * (x @ w + b)
    hinge = np.maximum(0.0, 1.0 - margins).mean()
    return float(hinge + 0.5 * reg_lambda * (w @ w))


def _train_binary(x: np.ndarray, y_signed: np.ndarray, reg_lambda: float, epochs: int, rng) -> tuple[np.ndarray, float]:
    # bias via constant-feature augmentation so the 1/(lambda*t) schedule and
    # shrink apply uniformly and early iterates cannot blow up the intercept
    n = x.shape[0]
    aug = np.hstack([x, np.ones((n, 1))])
    w = np.zeros(aug.shape[1])
    total = epochs * n
    tail = max(1, total // 10)
    w_sum = np.zeros_like(w)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            step = 1.0 / (reg_lambda * t)
            xi = aug[i]
            violated = y_signed[i] * (w @ xi) < 1.0
            w *= 1.0 - step * reg_lambda
            if violated:
                w += step * y_signed[i] * xi
            if t > total - tail:
                w_sum += w
    averaged = w_sum / tail
    return averaged[:-1], float(averaged[-1])


def svm_train(
    descriptors: list[ImageDescriptor],
    num_classes: int,
    reg_lambda: float = 1e-4,
    epochs: int = 100,
    seed: int = 0,
) -> LinearSvmModel:
    """Train one-vs-rest hinge classifiers over labeled descriptors."""
    if num_classes < 2:
        raise ConfigError("need at least two classes")
    if reg_lambda <= 0 or epochs < 1:
        raise ConfigError("reg_lambda must be > 0 and epochs >= 1")
    x, labels = _stack_descriptors(descriptors)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ConfigError("labels out of range")
    for c in range(num_classes):
        if not np.any(labels == c):
            raise ConfigError(f"class {c} has no training examples")
    weights = np.zeros((num_classes, x.shape[1]))
    biases = np.zeros(num_classes)
    for c in range(num_classes):
        y_signed = np.where(labels == c, 1.0, -1.0)
        rng = generator(seed, 6, c)
        weights[c], biases[c] = _train_binary(x, y_signed, reg_lambda, epochs, rng)
    return LinearSvmModel(weights, biases, reg_lambda, epochs, seed)


def svm_predict(model: LinearSvmModel, descriptors: list[ImageDescriptor]) -> list[int]:
    """Argmax class score per descriptor, ties to the lowest class id."""
    if not descriptors:
        return []
    x = np.stack([d.vector for d in descriptors])
    if x.shape[1] != model.weights.shape[1]:
        raise ShapeError(
            f"descriptor length {x.shape[1]} does not match model ({model.weights.shape[1]})"
        )
    scores = x @ model.weights.T + model.biases
    return [int(c) for c in np.argmax(scores, axis=1)]


def evaluate_accuracy(predictions: list[int], labels: list[int]) -> float:
    """Fraction of exact matches."""
    if len(predictions) != len(labels):
        raise ShapeError("predictions and labels must have equal length")
    if not predictions:
        raise ShapeError("nothing to evaluate")
    hits = sum(1 for p, l in zip(predictions, labels) if p == l)
    return hits / len(predictions)
