import numpy as np
import pytest

from uddl import (
    ConfigError,
    LinearSvmModel,
    ShapeError,
    evaluate_accuracy,
    svm_predict,
    svm_train,
)
from uddl.classify import hinge_objective
from uddl.features import ImageDescriptor


def _points(vectors, labels):
    return [ImageDescriptor(np.asarray(v, dtype=float), image_id=i, label=int(l))
            for i, (v, l) in enumerate(zip(vectors, labels))]


def _separable_toy(rng, n_per_class=20, margin=1.0):
    """Two 2-D clusters separated by at least `margin` along x."""
    offset = margin / 2.0 + 0.5
    pos = np.column_stack([offset + 0.4 * rng.random(n_per_class),
                           rng.normal(size=n_per_class)])
    neg = np.column_stack([-offset - 0.4 * rng.random(n_per_class),
                           rng.normal(size=n_per_class)])
    vectors = np.vstack([pos, neg])
    labels = np.array([1] * n_per_class + [0] * n_per_class)
    return _points(vectors, labels)


class TestSvmTrain:
    def test_separable_toy_perfect_training_accuracy(self, rng):
        descriptors = _separable_toy(rng)
        model = svm_train(descriptors, num_classes=2, reg_lambda=1e-4, epochs=100, seed=0)
        predictions = svm_predict(model, descriptors)
        labels = [d.label for d in descriptors]
        assert evaluate_accuracy(predictions, labels) == 1.0

    def test_single_repeated_points(self):
        descriptors = _points([[1.0, 0.0]] * 5 + [[-1.0, 0.0]] * 5, [1] * 5 + [0] * 5)
        model = svm_train(descriptors, num_classes=2, epochs=50, seed=1)
        assert svm_predict(model, descriptors) == [1] * 5 + [0] * 5

    def test_deterministic_bit_identical(self, rng):
        descriptors = _separable_toy(rng)
        a = svm_train(descriptors, 2, epochs=30, seed=3)
        b = svm_train(descriptors, 2, epochs=30, seed=3)
        assert a.weights.tobytes() == b.weights.tobytes()
        assert a.biases.tobytes() == b.biases.tobytes()

    def test_objective_not_worse_than_zero_model(self, rng):
        descriptors = _separable_toy(rng, n_per_class=30)
        x = np.stack([d.vector for d in descriptors])
        labels = np.array([d.label for d in descriptors])
        model = svm_train(descriptors, 2, reg_lambda=1e-4, epochs=100, seed=2)
        for c in range(2):
            y_signed = np.where(labels == c, 1.0, -1.0)
            trained = hinge_objective(x, y_signed, model.weights[c], model.biases[c], 1e-4)
            zero = hinge_objective(x, y_signed, np.zeros(2), 0.0, 1e-4)
            assert trained <= zero

    def test_missing_class_names_it(self):
        descriptors = _points([[0.0, 1.0], [1.0, 0.0]], [0, 0])
        with pytest.raises(ConfigError, match="class 1"):
            svm_train(descriptors, num_classes=2)

    def test_unlabeled_rejected(self):
        descriptors = [ImageDescriptor(np.zeros(2), label=None)]
        with pytest.raises(ConfigError):
            svm_train(descriptors, num_classes=2)


class TestSvmPredict:
    def test_one_hot_weights(self):
        model = LinearSvmModel(np.eye(3), np.zeros(3), 1e-4, 10, 0)
        descriptors = [ImageDescriptor(v) for v in (np.array([0.1, 0.9, 0.0]),
                                                    np.array([1.0, 0.0, 0.0]),
                                                    np.array([0.0, 0.2, 0.7]))]
        assert svm_predict(model, descriptors) == [1, 0, 2]

    def test_zero_model_predicts_class_zero(self):
        model = LinearSvmModel(np.zeros((4, 3)), np.zeros(4), 1e-4, 10, 0)
        descriptors = [ImageDescriptor(np.array([1.0, -2.0, 0.5]))]
        assert svm_predict(model, descriptors) == [0]

    def test_positive_scaling_invariance(self, rng):
        weights = rng.normal(size=(3, 5))
        biases = rng.normal(size=3)
        descriptors = [ImageDescriptor(rng.normal(size=5)) for _ in range(20)]
        a = svm_predict(LinearSvmModel(weights, biases, 1e-4, 1, 0), descriptors)
        b = svm_predict(LinearSvmModel(2.0 * weights, 2.0 * biases, 1e-4, 1, 0), descriptors)
        assert a == b

    def test_length_mismatch(self, rng):
        model = LinearSvmModel(rng.normal(size=(2, 4)), np.zeros(2), 1e-4, 1, 0)
        with pytest.raises(ShapeError):
            svm_predict(model, [ImageDescriptor(np.zeros(3))])


class TestEvaluateAccuracy:
    def test_identical(self):
        assert evaluate_accuracy([1, 2, 3], [1, 2, 3]) == 1.0

    def test_disjoint(self):
        assert evaluate_accuracy([0, 0, 0], [1, 2, 3]) == 0.0

    def test_three_of_five(self):
        assert evaluate_accuracy([1, 1, 0, 2, 2], [1, 1, 0, 0, 0]) == 0.6

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            evaluate_accuracy([1], [1, 2])

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            evaluate_accuracy([], [])
