"""Mini-batch SGD on MNIST with floating-point or crossbar-tile weights."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from vcmsim.crossbar.tile import CrossbarTile, UpdateReport
from vcmsim.device.noise import NoiseSpec
from vcmsim.device.params import PhysicalParams
from vcmsim.device.pulses import ConductanceWindow, PulseScheme
from vcmsim.device.surrogate import FitCoefficients
from vcmsim.errors import InvalidArgumentError, TrainingError
from vcmsim.training.mnist import MnistDataset, MnistSplit
from vcmsim.training.network import DenseWeights, Network

logger = logging.getLogger(__name__)


class Backend(str, Enum):
    FP = "fp"
    ANALOG = "analog"


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    layer_sizes: list[int] = Field(default_factory=lambda: [784, 256, 128, 10])
    epochs: int = Field(default=30, ge=1)
    batch_size: int = Field(default=8, ge=1)
    learning_rate: float = Field(default=0.1, gt=0)
    lr_decay: float = Field(default=0.5, gt=0, le=1)
    decay_every: int = Field(default=10, ge=1)
    weight_range: float = Field(default=2.0, gt=0)
    seed: int = Field(default=0, ge=0)
    backend: Backend = Backend.FP
    train_limit: int | None = Field(default=None, ge=1)
    test_limit: int | None = Field(default=None, ge=1)

    @field_validator("layer_sizes")
    @classmethod
    def _check_layers(cls, value: list[int]) -> list[int]:
        if len(value) < 2 or any(n < 1 for n in value):
            raise ValueError("layer_sizes needs at least two positive sizes")
        return value

    def learning_rate_at(self, epoch: int) -> float:
        return self.learning_rate * self.lr_decay ** (epoch // self.decay_every)

    def w_max(self, fan_in: int) -> float:
        return self.weight_range / math.sqrt(fan_in)


@dataclass
class DeviceSetup:
    """Everything a tile needs besides its shape."""

    params: PhysicalParams
    coeffs: FitCoefficients
    noise: NoiseSpec
    window: ConductanceWindow
    pulses: PulseScheme


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    test_acc: float
    lr: float
    pulses_applied: int = 0
    pulses_skipped: int = 0


@dataclass
class RunResult:
    config: dict
    epochs: list[EpochRecord] = field(default_factory=list)
    final_accuracy: float = 0.0
    wall_time: float = 0.0
    dw_per_pulse: list[float] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.epochs]

    @property
    def accuracies(self) -> list[float]:
        return [r.test_acc for r in self.epochs]

    def to_dict(self) -> dict:
        return asdict(self)


def build_network(config: TrainConfig, setup: DeviceSetup | None = None) -> Network:
    """Random dense weights, or freshly fabricated tiles, for every layer."""
    sizes = config.layer_sizes
    shapes = list(zip(sizes[1:], sizes[:-1], strict=True))
    if config.backend is Backend.FP:
        rng = np.random.default_rng(config.seed)
        stores = [
            DenseWeights(rng.uniform(-config.w_max(cols), config.w_max(cols), size=(rows, cols)))
            for rows, cols in shapes
        ]
        return Network(stores)
    if setup is None:
        raise InvalidArgumentError("the analog backend needs a device setup")
    noise = setup.noise.model_copy(update={"seed": config.seed})
    stores = []
    first_id = 0
    for rows, cols in shapes:
        stores.append(
            CrossbarTile(
                rows, cols, setup.params, setup.coeffs, noise, setup.window, setup.pulses,
                w_max=config.w_max(cols), first_device_id=first_id,
            )
        )  # fmt: skip
        first_id += rows * cols
    return Network(stores)


def evaluate(network: Network, split: MnistSplit) -> float:
    """Top-1 accuracy."""
    if len(split) == 0:
        return 0.0
    return float(np.mean(network.predict(split.images) == split.labels))


def _pulse_totals(network: Network) -> UpdateReport:
    total = UpdateReport()
    for store in network.stores:
        if isinstance(store, CrossbarTile):
            total.merge(store.totals)
            store.totals = UpdateReport()
    return total


def train(
    config: TrainConfig,
    data: MnistDataset,
    setup: DeviceSetup | None = None,
    network: Network | None = None,
) -> tuple[RunResult, Network]:
    """Train for ``config.epochs`` epochs, halving-style LR schedule, test after each."""
    started = time.perf_counter()
    network = network or build_network(config, setup)
    train_split = data.train.head(config.train_limit)
    test_split = data.test.head(config.test_limit)
    targets = train_split.one_hot()
    rng = np.random.default_rng(config.seed)
    result = RunResult(
        config=config.model_dump(mode="json"),
        dw_per_pulse=[s.dw_per_pulse for s in network.stores if isinstance(s, CrossbarTile)],
    )
    for store in network.stores:
        if isinstance(store, CrossbarTile):
            store.totals = UpdateReport()

    for epoch in range(config.epochs):
        lr = config.learning_rate_at(epoch)
        order = rng.permutation(len(train_split))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            loss = network.sgd_step(train_split.images[batch], targets[batch], lr)
            if not math.isfinite(loss):
                raise TrainingError(f"loss became {loss!r}", epoch)
            losses.append(loss)
        pulses = _pulse_totals(network)
        record = EpochRecord(
            epoch=epoch,
            loss=float(np.mean(losses)),
            test_acc=evaluate(network, test_split),
            lr=lr,
            pulses_applied=pulses.applied,
            pulses_skipped=pulses.skipped,
        )
        result.epochs.append(record)
        logger.info(
            "epoch %d: loss %.4f, test acc %.4f, lr %.4g", epoch, record.loss, record.test_acc, lr
        )

    result.final_accuracy = result.epochs[-1].test_acc
    result.wall_time = time.perf_counter() - started
    return result, network
