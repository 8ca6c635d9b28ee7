"""Counter-based per-device random streams (Philox4x32-10 over numpy arrays).

A draw is a pure function of (master seed, device stream id, stream position),
so results never depend on the order devices are processed in.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

from vcmsim.device.state import DeviceState

PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint64(0x9E3779B9)
PHILOX_W1 = np.uint64(0xBB67AE85)
MASK32 = np.uint64(0xFFFFFFFF)
ROUNDS = 10
UNIT_FLOOR = 2.0**-53


def philox4x32(key0, key1, c0, c1, c2, c3):
    """Philox4x32-10 block function; every argument is a uint32 value or array."""
    k0 = np.asarray(key0, dtype=np.uint64) & MASK32
    k1 = np.asarray(key1, dtype=np.uint64) & MASK32
    x0, x1, x2, x3 = (np.asarray(c, dtype=np.uint64) & MASK32 for c in (c0, c1, c2, c3))
    for _ in range(ROUNDS):
        p0 = PHILOX_M0 * x0
        p1 = PHILOX_M1 * x2
        x0, x1, x2, x3 = (
            ((p1 >> np.uint64(32)) ^ x1 ^ k0) & MASK32,
            p1 & MASK32,
            ((p0 >> np.uint64(32)) ^ x3 ^ k1) & MASK32,
            p0 & MASK32,
        )
        k0 = (k0 + PHILOX_W0) & MASK32
        k1 = (k1 + PHILOX_W1) & MASK32
    return x0, x1, x2, x3


def _to_unit(w0, w1):
    """53-bit double in [0, 1) from two 32-bit words."""
    bits = ((w0 >> np.uint64(5)) << np.uint64(26)) | (w1 >> np.uint64(6))
    return bits.astype(np.float64) * 2.0**-53


class CounterStreams:
    """Draws from the device streams recorded in a DeviceState.

    The sampler holds only the key; stream positions live on the state and
    advance by one per uniform for the selected devices.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)
        self._k0 = np.uint64(self.seed & 0xFFFFFFFF)
        self._k1 = np.uint64((self.seed >> 32) & 0xFFFFFFFF)

    @staticmethod
    def select(state: DeviceState, mask=None) -> np.ndarray:
        """Indices of the devices picked by a boolean mask or index array."""
        if mask is None:
            return np.arange(state.size)
        mask = np.asarray(mask)
        return np.flatnonzero(mask) if mask.dtype == bool else mask

    def uniform(self, state: DeviceState, mask=None) -> np.ndarray:
        idx = self.select(state, mask)
        pos = state.stream_pos[idx]
        ids = state.stream_id[idx]
        w0, w1, _, _ = philox4x32(
            self._k0, self._k1, pos & MASK32, pos >> np.uint64(32), ids & MASK32, ids >> np.uint64(32)
        )
        state.stream_pos[idx] = pos + np.uint64(1)
        return _to_unit(w0, w1)

    def symmetric(self, state: DeviceState, mask=None) -> np.ndarray:
        """Uniform on [-1, 1)."""
        return 2.0 * self.uniform(state, mask) - 1.0

    def normal(self, state: DeviceState, mask=None) -> np.ndarray:
        """Standard normal from the inverse normal CDF; one tick per device."""
        return ndtri(np.maximum(self.uniform(state, mask), UNIT_FLOOR))
