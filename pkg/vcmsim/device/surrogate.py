"""Closed-form fitted current model and the voltage partition built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from vcmsim.device.params import PhysicalParams
from vcmsim.device.physics import (
    Polarity,
    layer_resistance,
    local_temperature,
    series_resistance,
)
from vcmsim.device.state import DeviceState, VoltagePartition
from vcmsim.errors import InvalidArgumentError, PartitionError, SurrogateEvaluationError

NEGATIVE_KEYS = (
    "a0", "a1", "a2", "a3", "b0", "b1", "c0", "c1", "c2", "c3",
    "d0", "d1", "d2", "d3", "f0", "f1", "f2", "f3",
)  # fmt: skip
POSITIVE_KEYS = ("g0", "g1", "h0", "h1", "h2", "h3", "j0", "k0")

DEFAULT_READ_VOLTAGE = -0.2
CONCENTRATION_SCALE = 1e-26  # N_d enters the SET branch as N_d * 1e-26
BISECTION_STEPS = 64


def branch_keys(polarity: Polarity) -> tuple[str, ...]:
    return NEGATIVE_KEYS if Polarity(polarity) is Polarity.SET else POSITIVE_KEYS


@dataclass(frozen=True)
class FitCoefficients:
    a0: float
    a1: float
    a2: float
    a3: float
    b0: float
    b1: float
    c0: float
    c1: float
    c2: float
    c3: float
    d0: float
    d1: float
    d2: float
    d3: float
    f0: float
    f1: float
    f2: float
    f3: float
    g0: float
    g1: float
    h0: float
    h1: float
    h2: float
    h3: float
    j0: float
    k0: float

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise InvalidArgumentError(f"coefficient {f.name} must be finite")
        if self.k0 == 0:
            raise InvalidArgumentError("k0 must be non-zero")
        if self.f2 <= 0:
            raise InvalidArgumentError("f2 must be > 0")

    @classmethod
    def from_dict(cls, data: dict[str, float]) -> FitCoefficients:
        known = set(NEGATIVE_KEYS + POSITIVE_KEYS)
        unknown = sorted(set(data) - known)
        missing = sorted(known - set(data))
        if unknown or missing:
            raise InvalidArgumentError(f"coefficient keys: unknown={unknown} missing={missing}")
        return cls(**{k: float(v) for k, v in data.items()})

    def to_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def branch_vector(self, polarity: Polarity) -> np.ndarray:
        return np.array([getattr(self, k) for k in branch_keys(polarity)], dtype=np.float64)

    def with_branch(self, polarity: Polarity, vector) -> FitCoefficients:
        values = self.to_dict()
        values.update({k: float(v) for k, v in zip(branch_keys(polarity), vector, strict=True)})
        return FitCoefficients(**values)


def _negative_branch(c: dict[str, float], n_scaled, v):
    a = (c["a1"] + c["a0"]) / (1.0 + np.exp(-(v + c["a2"]) / c["a3"])) - c["a0"]
    b = c["b1"] * (1.0 - np.exp(-v)) - c["b0"] * v
    base = (c["c2"] * np.exp(-v / c["c3"]) + c["c1"] * v - c["c0"]) / n_scaled
    d = c["d2"] * np.exp(-v / c["d3"]) + c["d1"] * v - c["d0"]
    f = c["f0"] + (c["f1"] - c["f0"]) / (1.0 + (-v / c["f2"]) ** c["f3"])
    return -a - b / (1.0 + base**d) ** f


def _positive_branch(c: dict[str, float], n_ratio, v):
    shape = c["h0"] + c["h1"] * v + c["h2"] * np.exp(-c["h3"] * v)
    return -c["g0"] * (np.exp(-c["g1"] * v) - 1.0) / (
        1.0 + shape * n_ratio ** (-c["j0"])
    ) ** (1.0 / c["k0"])


def surrogate_current(coeffs: FitCoefficients, params: PhysicalParams, N_d, V_M):
    """Fitted device current for concentration N_d at applied voltage V_M.

    V_M < 0 uses the SET-branch expression, V_M > 0 the RESET one; zero bias
    returns exactly 0. Broadcasts over N_d and V_M.
    """
    scalar = np.ndim(N_d) == 0 and np.ndim(V_M) == 0
    N_d, V_M = np.broadcast_arrays(
        np.atleast_1d(np.asarray(N_d, dtype=np.float64)),
        np.atleast_1d(np.asarray(V_M, dtype=np.float64)),
    )
    if not (np.all(np.isfinite(N_d)) and np.all(np.isfinite(V_M))):
        raise InvalidArgumentError("N_d and V_M must be finite")
    if np.any(N_d <= 0):
        raise InvalidArgumentError("N_d must be > 0")
    c = coeffs.to_dict()
    current = np.zeros(N_d.shape)
    neg = V_M < 0
    pos = V_M > 0
    with np.errstate(all="ignore"):
        if np.any(neg):
            current[neg] = _negative_branch(c, N_d[neg] * CONCENTRATION_SCALE, V_M[neg])
        if np.any(pos):
            current[pos] = _positive_branch(c, N_d[pos] / params.N_d_min, V_M[pos])
    bad = ~np.isfinite(current)
    if np.any(bad):
        k = int(np.flatnonzero(bad.ravel())[0])
        raise SurrogateEvaluationError(
            "non-finite fitted current",
            {"N_d": float(N_d.ravel()[k]), "V_M": float(V_M.ravel()[k])},
        )
    return float(current[0]) if scalar else current


def voltage_partition_from_surrogate(
    coeffs: FitCoefficients, params: PhysicalParams, state: DeviceState, V_M: float
) -> VoltagePartition:
    """Assign the fitted current's drops over every layer of each device."""
    n = state.size
    if V_M == 0:
        zeros = np.zeros(n)
        return VoltagePartition(
            V_M=zeros.copy(), V_s=zeros.copy(), V_p=zeros.copy(), V_d=zeros.copy(),
            V_Sch=zeros.copy(), I_M=zeros.copy(), T=np.full(n, params.T_0),
        )  # fmt: skip
    polarity = Polarity.from_voltage(V_M)
    I_M = np.asarray(surrogate_current(coeffs, params, state.N_d, V_M), dtype=np.float64)
    V_s = I_M * series_resistance(params, I_M)
    V_p = I_M * layer_resistance(params, params.l_p, params.N_p, state.r_d)
    V_d = I_M * layer_resistance(params, state.l_d, state.N_d, state.r_d)
    V_Sch = V_M - V_s - V_p - V_d
    if np.any(np.abs(V_Sch) > abs(V_M) * (1.0 + 1e-12)):
        worst = int(np.argmax(np.abs(V_Sch)))
        raise PartitionError(
            f"fitted current over-drives the resistive stack at V_M={V_M!r} "
            f"(V_Sch={V_Sch[worst]!r}, N_d={state.N_d[worst]!r})"
        )
    T = local_temperature(params, I_M, V_M - V_s, polarity, state.r_d)
    return VoltagePartition(
        V_M=np.full(n, float(V_M)), V_s=V_s, V_p=V_p, V_d=V_d, V_Sch=V_Sch, I_M=I_M, T=T
    )


def read_conductance(coeffs: FitCoefficients, params: PhysicalParams, N_d, v_read=DEFAULT_READ_VOLTAGE):
    """Small-signal read: G = I(V_read) / V_read."""
    if v_read == 0:
        raise InvalidArgumentError("read voltage must be non-zero")
    return surrogate_current(coeffs, params, N_d, v_read) / v_read


def concentration_for_conductance(
    coeffs: FitCoefficients,
    params: PhysicalParams,
    G,
    lo=None,
    hi=None,
    v_read=DEFAULT_READ_VOLTAGE,
):
    """Invert ``read_conductance`` by bisection on log N_d within [lo, hi].

    Targets outside the reachable range land on the nearest bound.
    """
    G = np.atleast_1d(np.asarray(G, dtype=np.float64))
    lo = np.broadcast_to(np.asarray(params.N_d_min if lo is None else lo, dtype=np.float64), G.shape)
    hi = np.broadcast_to(np.asarray(params.N_d_max if hi is None else hi, dtype=np.float64), G.shape)
    log_lo, log_hi = np.log(lo), np.log(hi)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (log_lo + log_hi)
        below = read_conductance(coeffs, params, np.exp(mid), v_read) < G
        log_lo = np.where(below, mid, log_lo)
        log_hi = np.where(below, log_hi, mid)
    return np.clip(np.exp(0.5 * (log_lo + log_hi)), lo, hi)


# calibration start: the resistive stack R_TiOx + R_0 + plug (about 1.5 kOhm) in series with a
# disc of 490 Ohm / (N_d * 1e-26), the diode folded into the N_d exponent. Not a fit.
SEED_COEFFICIENTS = FitCoefficients(
    a0=0.0, a1=0.0, a2=0.0, a3=1.0, b0=6.5e-4, b1=0.0,
    c0=-0.36, c1=0.0, c2=0.0, c3=1.0, d0=-1.1, d1=0.0, d2=0.0, d3=1.0,
    f0=1.0, f1=1.0, f2=1.0, f3=1.0,
    g0=-6.5e-3, g1=-0.1, h0=45.0, h1=0.0, h2=0.0, h3=1.0, j0=1.1, k0=1.0,
)  # fmt: skip
