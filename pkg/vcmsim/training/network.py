"""Fully connected sigmoid network whose weight matrices live in weight stores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.special import expit, log_softmax, softmax

from vcmsim.errors import DimensionError

EVAL_BATCH = 1000


class WeightStore(Protocol):
    """Where a layer's (out, in) weight matrix is read from and updates go to."""

    shape: tuple[int, int]

    def read_weights(self) -> np.ndarray: ...

    def apply_update(self, delta_w) -> object: ...


class DenseWeights:
    """Floating-point weights."""

    def __init__(self, weights):
        self.weights = np.array(weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise DimensionError("dense weights must be a matrix")

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    def read_weights(self) -> np.ndarray:
        return self.weights

    def apply_update(self, delta_w) -> None:
        delta_w = np.asarray(delta_w, dtype=np.float64)
        if delta_w.shape != self.weights.shape:
            raise DimensionError(f"update shape {delta_w.shape} != {self.weights.shape}")
        self.weights += delta_w


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


class Network:
    """Sigmoid hidden layers, softmax output, cross-entropy loss. Biases stay digital."""

    def __init__(self, stores: list[WeightStore], biases: list[np.ndarray] | None = None):
        if not stores:
            raise DimensionError("network needs at least one layer")
        for prev, nxt in zip(stores, stores[1:], strict=False):
            if prev.shape[0] != nxt.shape[1]:
                raise DimensionError(f"layer shapes {prev.shape} and {nxt.shape} do not chain")
        self.stores = stores
        self.biases = (
            [np.zeros(s.shape[0]) for s in stores]
            if biases is None
            else [np.array(b, dtype=np.float64) for b in biases]
        )

    @property
    def layer_sizes(self) -> list[int]:
        return [self.stores[0].shape[1]] + [s.shape[0] for s in self.stores]

    def read_weights(self) -> list[np.ndarray]:
        return [s.read_weights() for s in self.stores]

    def forward(self, x, weights: list[np.ndarray] | None = None) -> list[np.ndarray]:
        """Activations of every layer; the last entry is the output logits."""
        weights = self.read_weights() if weights is None else weights
        activations = [np.atleast_2d(np.asarray(x, dtype=np.float64))]
        for k, (w, b) in enumerate(zip(weights, self.biases, strict=True)):
            z = activations[-1] @ w.T + b
            activations.append(z if k == len(weights) - 1 else expit(z))
        return activations

    def loss(self, x, targets, weights: list[np.ndarray] | None = None) -> float:
        logits = self.forward(x, weights)[-1]
        return float(-np.mean(np.sum(targets * log_softmax(logits, axis=1), axis=1)))

    def gradients(self, x, targets, weights: list[np.ndarray] | None = None) -> tuple[float, Gradients]:
        """Mean cross-entropy over the batch and its exact gradients w.r.t. the given weights."""
        weights = self.read_weights() if weights is None else weights
        activations = self.forward(x, weights)
        logits = activations[-1]
        n = logits.shape[0]
        loss = float(-np.mean(np.sum(targets * log_softmax(logits, axis=1), axis=1)))
        delta = (softmax(logits, axis=1) - targets) / n
        grad_w: list[np.ndarray] = []
        grad_b: list[np.ndarray] = []
        for k in range(len(weights) - 1, -1, -1):
            grad_w.append(delta.T @ activations[k])
            grad_b.append(delta.sum(axis=0))
            if k:
                a = activations[k]
                delta = (delta @ weights[k]) * a * (1.0 - a)
        return loss, Gradients(grad_w[::-1], grad_b[::-1])

    def sgd_step(self, x, targets, lr: float) -> float:
        loss, grads = self.gradients(x, targets)
        for store, bias, gw, gb in zip(self.stores, self.biases, grads.weights, grads.biases, strict=True):
            store.apply_update(-lr * gw)
            bias -= lr * gb
        return loss

    def predict(self, x) -> np.ndarray:
        weights = self.read_weights()
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = [
            np.argmax(self.forward(x[i : i + EVAL_BATCH], weights)[-1], axis=1)
            for i in range(0, len(x), EVAL_BATCH)
        ]
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)
