import numpy as np
import pytest

from vcmsim.errors import DimensionError
from vcmsim.training.mnist import one_hot
from vcmsim.training.network import DenseWeights, Network


@pytest.fixture
def small_net():
    rng = np.random.default_rng(0)
    stores = [DenseWeights(rng.normal(0, 0.5, (8, 16))), DenseWeights(rng.normal(0, 0.5, (4, 8)))]
    biases = [rng.normal(0, 0.1, 8), rng.normal(0, 0.1, 4)]
    return Network(stores, biases)


@pytest.fixture
def batch():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, (6, 16))
    targets = np.eye(4)[rng.integers(0, 4, 6)]
    return x, targets


class TestNetwork:
    def test_layer_sizes(self, small_net):
        """Sizes chain from input to output"""
        assert small_net.layer_sizes == [16, 8, 4]

    def test_mismatched_layers_rejected(self):
        """Consecutive shapes must chain"""
        with pytest.raises(DimensionError):
            Network([DenseWeights(np.zeros((8, 16))), DenseWeights(np.zeros((4, 7)))])

    def test_gradient_matches_finite_differences(self, small_net, batch):
        """Backprop agrees with central differences"""
        x, targets = batch
        weights = [w.copy() for w in small_net.read_weights()]
        _, grads = small_net.gradients(x, targets, weights)
        eps = 1e-6
        rng = np.random.default_rng(2)
        for layer, grad in enumerate(grads.weights):
            for _ in range(10):
                i, j = rng.integers(0, grad.shape[0]), rng.integers(0, grad.shape[1])
                plus = [w.copy() for w in weights]
                minus = [w.copy() for w in weights]
                plus[layer][i, j] += eps
                minus[layer][i, j] -= eps
                numeric = (small_net.loss(x, targets, plus) - small_net.loss(x, targets, minus)) / (2 * eps)
                assert grad[i, j] == pytest.approx(numeric, rel=1e-5, abs=1e-9)

    def test_bias_gradient(self, small_net, batch):
        """Bias gradients agree with central differences too"""
        x, targets = batch
        _, grads = small_net.gradients(x, targets)
        eps = 1e-6
        small_net.biases[0][3] += eps
        up = small_net.loss(x, targets)
        small_net.biases[0][3] -= 2 * eps
        down = small_net.loss(x, targets)
        assert grads.biases[0][3] == pytest.approx((up - down) / (2 * eps), rel=1e-5, abs=1e-9)

    def test_sgd_step_lowers_loss(self, small_net, batch):
        """A small step downhill reduces the batch loss"""
        x, targets = batch
        before = small_net.loss(x, targets)
        small_net.sgd_step(x, targets, lr=0.05)
        assert small_net.loss(x, targets) < before

    def test_predict_in_batches(self, small_net):
        """Prediction is independent of the evaluation batch size"""
        x = np.random.default_rng(3).uniform(0, 1, (2500, 16))
        predicted = small_net.predict(x)
        logits = small_net.forward(x)[-1]
        np.testing.assert_array_equal(predicted, np.argmax(logits, axis=1))


class TestOneHot:
    def test_rows_sum_to_one(self):
        """Exactly one hot entry per label"""
        encoded = one_hot([3, 0, 9])
        np.testing.assert_array_equal(encoded.sum(axis=1), 1.0)
        assert encoded[0, 3] == encoded[1, 0] == encoded[2, 9] == 1.0
