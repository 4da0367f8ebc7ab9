import math

import numpy as np
import pytest

from fedsim import learner
from fedsim.errors import ConfigError, EvaluationError, TrainingError


def _dataset(rows):
    features = np.array([r[0] for r in rows], dtype=np.float64)
    labels = np.array([r[1] for r in rows], dtype=np.float64)
    return features, labels


class TestLoss:
    def test_zero_weights_give_log_two(self):
        X, y = _dataset([((1.0, 0.5), 1.0), ((0.2, -0.3), -1.0)])
        w = np.zeros(2)
        assert learner.loss(w, X, y, 0.0) == pytest.approx(math.log(2), rel=1e-12)

    def test_single_confident_example(self):
        X, y = _dataset([((1.0,), 1.0)])
        value = learner.loss(np.array([10.0]), X, y, 0.0)
        assert value == pytest.approx(math.log1p(math.exp(-10)), rel=1e-9)
        assert value == pytest.approx(4.54e-5, rel=1e-2)

    def test_regularizer_contribution(self):
        X, y = _dataset([((1.0,), 1.0), ((-1.0,), -1.0)])
        w = np.array([2.0])
        assert learner.loss(w, X, y, 1.0) - learner.loss(w, X, y, 0.0) == pytest.approx(2.0)

    def test_empty_dataset_rejected(self):
        with pytest.raises(EvaluationError):
            learner.loss(np.zeros(2), np.zeros((0, 2)), np.zeros(0), 0.0)

    def test_extreme_margins_stable(self):
        X, y = _dataset([((1.0,), 1.0), ((1.0,), -1.0)])
        value = learner.loss(np.array([500.0]), X, y, 0.0)
        assert np.isfinite(value) and value == pytest.approx(250.0)


def _finite_difference(w, X, y, alpha, h=1e-6):
    grad = np.zeros_like(w)
    for k in range(len(w)):
        up, down = w.copy(), w.copy()
        up[k] += h
        down[k] -= h
        grad[k] = (learner.loss(up, X, y, alpha) - learner.loss(down, X, y, alpha)) / (2 * h)
    return grad


class TestGradient:
    def test_single_example_at_zero(self):
        X, y = _dataset([((1.0,), 1.0)])
        grad = learner.gradient(np.zeros(1), X, y, 0.0)
        assert grad[0] == pytest.approx(-0.5, rel=1e-12)
        fd = _finite_difference(np.zeros(1), X, y, 0.0)
        assert grad[0] == pytest.approx(fd[0], rel=1e-6)

    def test_symmetric_examples_match(self):
        x = np.array([0.7, -1.1, 0.4])
        w = np.array([0.3, 0.1, -0.2])
        g_pos = learner.gradient(w, x[None, :], np.array([1.0]), 0.0)
        g_neg = learner.gradient(w, -x[None, :], np.array([-1.0]), 0.0)
        assert np.allclose(g_pos, g_neg, rtol=1e-14)

    def test_matches_finite_differences_on_random_instances(self):
        rng = np.random.default_rng(33)
        worst = 0.0
        for _ in range(100):
            m = int(rng.integers(1, 6))
            t = int(rng.integers(1, 21))
            X = rng.normal(size=(t, m))
            y = np.where(rng.random(t) < 0.5, 1.0, -1.0)
            w = rng.normal(scale=0.8, size=m)
            alpha = float(rng.choice([0.0, 0.1, 1.0]))
            grad = learner.gradient(w, X, y, alpha)
            fd = _finite_difference(w, X, y, alpha)
            denom = np.maximum(np.abs(fd), 1e-8)
            worst = max(worst, float(np.max(np.abs(grad - fd) / denom)))
        assert worst < 1e-5


class TestTrain:
    def test_zero_iterations_identity(self):
        X, y = _dataset([((1.0,), 1.0)])
        cfg = learner.TrainConfig(learning_rate=0.1, local_iterations=0, alpha_reg=0.0)
        start = np.array([0.7])
        assert np.array_equal(learner.train(start, X, y, cfg), start)

    def test_loss_decreases_on_separable_toy(self):
        X, y = _dataset([((1.0,), 1.0), ((-1.0,), -1.0)])
        cfg = learner.TrainConfig(learning_rate=0.1, local_iterations=1, alpha_reg=0.0)
        w = np.zeros(1)
        losses = [learner.loss(w, X, y, 0.0)]
        for _ in range(250):
            w = learner.train(w, X, y, cfg)
            losses.append(learner.loss(w, X, y, 0.0))
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_heavy_regularization_shrinks_weights(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(50, 3))
        y = np.where(X[:, 0] > 0, 1.0, -1.0)
        cfg = learner.TrainConfig(learning_rate=1e-3, local_iterations=250,
                                  alpha_reg=1e3)
        w = learner.train(np.zeros(3), X, y, cfg)
        assert np.linalg.norm(w) < 0.01

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(30, 4))
        y = np.where(rng.random(30) < 0.5, 1.0, -1.0)
        cfg = learner.TrainConfig(learning_rate=0.05, local_iterations=40,
                                  alpha_reg=0.5)
        a = learner.train(np.zeros(4), X, y, cfg)
        b = learner.train(np.zeros(4), X, y, cfg)
        assert np.array_equal(a, b)

    def test_divergence_reported_with_iteration(self):
        # lr * alpha_reg >> 2 makes the update |w| -> |w| * (lr*alpha - 1).
        X, y = _dataset([((1.0,), 1.0)])
        cfg = learner.TrainConfig(learning_rate=1e3, local_iterations=200,
                                  alpha_reg=1.0)
        with pytest.raises(TrainingError, match="iteration"):
            learner.train(np.array([1.0]), X, y, cfg)

    def test_bad_config_rejected(self):
        with pytest.raises(ConfigError):
            learner.TrainConfig(learning_rate=0.0)


class TestPredict:
    def test_zero_weights(self):
        assert learner.predict(np.zeros(2), np.array([3.0, -1.0])) == 0.5

    def test_log_three_margin(self):
        w = np.array([math.log(3.0)])
        assert learner.predict(w, np.array([1.0])) == pytest.approx(0.75, rel=1e-12)

    def test_large_negative_margin_stable(self):
        p = learner.predict(np.array([-1000.0]), np.array([1.0]))
        assert 0.0 <= p < 1e-12

    def test_length_mismatch_rejected(self):
        with pytest.raises(EvaluationError):
            learner.predict(np.zeros(3), np.array([1.0, 2.0]))
