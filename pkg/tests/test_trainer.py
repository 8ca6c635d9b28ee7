import math
import os

import numpy as np
import pytest
from pydantic import ValidationError

import vcmsim.training.trainer as trainer_module
from vcmsim.config import REALISTIC_CONFIG, load_run_config
from vcmsim.crossbar.tile import CrossbarTile
from vcmsim.device.noise import NoiseSpec
from vcmsim.errors import InvalidArgumentError, TrainingError
from vcmsim.training.mnist import MnistDataset, MnistSplit, load_mnist
from vcmsim.training.network import DenseWeights
from vcmsim.training.trainer import Backend, DeviceSetup, TrainConfig, build_network, train


def synthetic_dataset(n_train=60, n_test=20, features=12, seed=0):
    """Linearly separable blobs, one per class"""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0, 1, (10, features))

    def split(n):
        labels = rng.integers(0, 10, n)
        images = np.clip(centers[labels] + rng.normal(0, 0.05, (n, features)), 0, 1)
        return MnistSplit(images, labels)

    return MnistDataset(train=split(n_train), test=split(n_test))


@pytest.fixture
def setup(params, coeffs, window, pulses):
    return DeviceSetup(params, coeffs, NoiseSpec(), window, pulses)


class TestTrainConfig:
    def test_learning_rate_schedule(self):
        """The rate is multiplied by lr_decay every decay_every epochs"""
        config = TrainConfig(learning_rate=0.1, lr_decay=0.5, decay_every=10)
        assert config.learning_rate_at(0) == pytest.approx(0.1)
        assert config.learning_rate_at(9) == pytest.approx(0.1)
        assert config.learning_rate_at(10) == pytest.approx(0.05)
        assert config.learning_rate_at(25) == pytest.approx(0.025)

    def test_weight_range_scales_with_fan_in(self):
        """w_max = weight_range / sqrt(fan_in)"""
        assert TrainConfig(weight_range=2.0).w_max(16) == pytest.approx(0.5)

    def test_layer_sizes_validated(self):
        """A network needs an input and an output layer"""
        with pytest.raises(ValidationError):
            TrainConfig(layer_sizes=[784])

    def test_defaults(self):
        """784-256-128-10, 30 epochs, batch 8"""
        config = TrainConfig()
        assert config.layer_sizes == [784, 256, 128, 10]
        assert (config.epochs, config.batch_size, config.backend) == (30, 8, Backend.FP)


class TestBuildNetwork:
    def test_fp_backend_uses_dense_weights(self):
        """Floating-point layers are dense and inside +/- w_max"""
        config = TrainConfig(layer_sizes=[12, 6, 10])
        network = build_network(config)
        assert all(isinstance(s, DenseWeights) for s in network.stores)
        assert np.all(np.abs(network.stores[0].read_weights()) <= config.w_max(12))

    def test_analog_backend_needs_devices(self):
        """Tiles cannot be made without a device setup"""
        with pytest.raises(InvalidArgumentError):
            build_network(TrainConfig(layer_sizes=[4, 3], backend=Backend.ANALOG))

    def test_analog_tiles_use_disjoint_streams(self, setup):
        """Each tile's device ids continue where the previous tile stopped"""
        config = TrainConfig(layer_sizes=[4, 3, 10], backend=Backend.ANALOG, seed=7)
        network = build_network(config, setup)
        first, second = network.stores
        assert isinstance(first, CrossbarTile)
        assert first.noise.seed == 7
        assert second.first_device_id == 12
        assert first.devices.stream_id.max() < second.devices.stream_id.min()


class TestTrain:
    def test_fp_training_learns_and_is_deterministic(self):
        """Same seed, same curve; accuracy beats chance on easy data"""
        data = synthetic_dataset()
        config = TrainConfig(layer_sizes=[12, 16, 10], epochs=15, batch_size=4, learning_rate=0.5, seed=3)
        first, _ = train(config, data)
        second, _ = train(config, data)
        assert first.losses == second.losses
        assert len(first.epochs) == 15
        assert first.losses[-1] < first.losses[0]
        assert first.final_accuracy > 0.3

    def test_limits_trim_the_splits(self, mocker):
        """train_limit / test_limit cut the data"""
        data = synthetic_dataset(n_train=40, n_test=30)
        spy = mocker.spy(trainer_module, "evaluate")
        config = TrainConfig(layer_sizes=[12, 10], epochs=1, train_limit=8, test_limit=5)
        train(config, data)
        assert len(spy.call_args.args[1]) == 5

    def test_non_finite_loss_aborts(self, mocker):
        """NaN loss raises with the epoch"""
        mocker.patch("vcmsim.training.network.Network.sgd_step", return_value=math.nan)
        config = TrainConfig(layer_sizes=[12, 10], epochs=2)
        with pytest.raises(TrainingError) as exc:
            train(config, synthetic_dataset())
        assert exc.value.epoch == 0

    def test_analog_training_counts_pulses(self, setup):
        """Analog epochs record applied and skipped pulses"""
        data = synthetic_dataset(n_train=16, n_test=8, features=4)
        config = TrainConfig(layer_sizes=[4, 3, 10], epochs=2, batch_size=4, learning_rate=1.0, backend="analog")
        result, network = train(config, data, setup)
        assert len(result.dw_per_pulse) == 2
        assert all(r.pulses_applied + r.pulses_skipped > 0 for r in result.epochs)
        assert all(math.isfinite(r.loss) for r in result.epochs)
        assert network.stores[0].totals.applied == 0

    def test_realistic_noise_keeps_devices_in_window(self, setup):
        """Noisy analog training never leaves the control window"""
        noise = load_run_config(REALISTIC_CONFIG).noise
        noisy = DeviceSetup(setup.params, setup.coeffs, noise, setup.window, setup.pulses)
        config = TrainConfig(layer_sizes=[4, 3, 10], epochs=1, batch_size=4, learning_rate=1.0, backend="analog")
        _, network = train(config, synthetic_dataset(n_train=16, n_test=8, features=4), noisy)
        for tile in network.stores:
            assert tile.enforce_conductance_bounds() == []

    @pytest.mark.mnist
    @pytest.mark.slow
    def test_fp_baseline_on_mnist(self):
        """Floating-point baseline reaches 94% test accuracy"""
        data = load_mnist(os.environ["VCMSIM_MNIST"])
        result, _ = train(TrainConfig(), data)
        assert result.final_accuracy >= 0.94
