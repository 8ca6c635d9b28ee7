"""MNIST in IDX format (optionally gzipped)."""

from __future__ import annotations

import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from vcmsim.errors import DatasetFormatError

logger = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
N_CLASSES = 10

SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class MnistSplit:
    images: np.ndarray  # (n, 784) float64 in [0, 1]
    labels: np.ndarray  # (n,) int64

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def one_hot(self) -> np.ndarray:
        return one_hot(self.labels)

    def head(self, n: int | None) -> MnistSplit:
        if n is None or n >= len(self):
            return self
        return MnistSplit(self.images[:n], self.labels[:n])


@dataclass
class MnistDataset:
    train: MnistSplit
    test: MnistSplit


def one_hot(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], N_CLASSES))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _read_bytes(path: Path) -> bytes:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _header(data: bytes, path: Path, fmt: str, magic: int) -> tuple[int, ...]:
    if len(data) < 4:
        raise DatasetFormatError(f"truncated magic number ({len(data)} bytes)", str(path), len(data))
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise DatasetFormatError(f"bad magic 0x{found:08x}, expected 0x{magic:08x}", str(path), 0)
    size = struct.calcsize(fmt)
    if len(data) < size:
        raise DatasetFormatError(f"truncated header ({len(data)} bytes)", str(path), len(data))
    return struct.unpack(fmt, data[:size])[1:]


def read_idx_images(path) -> np.ndarray:
    """Images as (n, rows*cols) floats scaled to [0, 1]."""
    path = Path(path)
    data = _read_bytes(path)
    count, rows, cols = _header(data, path, ">IIII", IMAGE_MAGIC)
    expected = 16 + count * rows * cols
    if len(data) != expected:
        raise DatasetFormatError(
            f"image payload is {len(data) - 16} bytes, header promises {count * rows * cols}",
            str(path),
            min(len(data), expected),
        )
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    return pixels.reshape(count, rows * cols).astype(np.float64) / 255.0


def read_idx_labels(path) -> np.ndarray:
    path = Path(path)
    data = _read_bytes(path)
    (count,) = _header(data, path, ">II", LABEL_MAGIC)
    if len(data) != 8 + count:
        raise DatasetFormatError(
            f"label payload is {len(data) - 8} bytes, header promises {count}", str(path), min(len(data), 8 + count)
        )
    labels = np.frombuffer(data, dtype=np.uint8, offset=8).astype(np.int64)
    if labels.size and labels.max() >= N_CLASSES:
        offset = 8 + int(np.argmax(labels >= N_CLASSES))
        raise DatasetFormatError(f"label {labels.max()} out of range", str(path), offset)
    return labels


def _locate(directory: Path, stem: str) -> Path:
    for candidate in (directory / stem, directory / f"{stem}.gz"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def load_split(directory, split: str) -> MnistSplit:
    directory = Path(directory)
    image_stem, label_stem = SPLIT_FILES[split]
    image_path = _locate(directory, image_stem)
    images = read_idx_images(image_path)
    labels = read_idx_labels(_locate(directory, label_stem))
    if images.shape[0] != labels.shape[0]:
        raise DatasetFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels", str(image_path), 4
        )
    return MnistSplit(images, labels)


def load_mnist(directory) -> MnistDataset:
    dataset = MnistDataset(train=load_split(directory, "train"), test=load_split(directory, "test"))
    logger.info("loaded MNIST from %s: %d train, %d test", directory, len(dataset.train), len(dataset.test))
    return dataset
