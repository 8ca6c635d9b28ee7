"""Full electrical model of a VCM cell.

Series line/TiOx resistance, plug and disc resistances, the Schottky diode at
the disc/electrode interface and the local filament temperature, plus the
iterative self-consistent solve used as the reference for the fitted current.
"""

from __future__ import annotations

import logging
import math
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from vcmsim.device.params import E_CHARGE, H_PLANCK, K_B, PhysicalParams
from vcmsim.device.state import DeviceState, VoltagePartition
from vcmsim.errors import (
    ConsistencyError,
    ConvergenceError,
    InvalidArgumentError,
    SaturationError,
    SchottkyDomainError,
)

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 200
VOLTAGE_TOLERANCE = 1e-9


class Polarity(str, Enum):
    SET = "set"  # V_M < 0, conductance increases
    RESET = "reset"  # V_M > 0

    @classmethod
    def from_voltage(cls, v_m: float) -> Polarity:
        if v_m < 0:
            return cls.SET
        if v_m > 0:
            return cls.RESET
        raise InvalidArgumentError("polarity is undefined at V_M = 0")


def _require_finite(name: str, value) -> None:
    if not np.all(np.isfinite(value)):
        raise InvalidArgumentError(f"{name} must be finite, got {value!r}")


def _require_positive(name: str, value) -> None:
    _require_finite(name, value)
    if np.any(np.asarray(value) <= 0):
        raise InvalidArgumentError(f"{name} must be > 0, got {value!r}")


def series_resistance(params: PhysicalParams, I_M):
    """R_s = R_TiOx + R_0 (1 + alpha_l R_0 I_M^2 R_th_line)."""
    _require_finite("I_M", I_M)
    return params.R_TiOx + params.R_0 * (1.0 + params.alpha_l * params.R_0 * I_M**2 * params.R_th_line)


def layer_resistance(params: PhysicalParams, region_length, concentration, r_d):
    """Resistance of a plug or disc region of the given length and vacancy density."""
    _require_positive("region_length", region_length)
    _require_positive("concentration", concentration)
    _require_positive("r_d", r_d)
    area = math.pi * r_d**2
    return region_length / (params.Z_VO * E_CHARGE * area * concentration * params.mu_n)


def barrier_height(params: PhysicalParams, V_Sch, N_d):
    """Image-force lowered Schottky barrier phi_Bn in joules."""
    v_bend = params.flat_band_voltage - V_Sch
    if np.any(v_bend < 0):
        offending = np.asarray(V_Sch)[np.asarray(v_bend) < 0] if np.ndim(v_bend) else V_Sch
        raise SchottkyDomainError(float(np.max(offending)))
    lowering = (
        E_CHARGE**3 * params.Z_VO * N_d * v_bend / (8.0 * math.pi**2 * params.eps_phiB**3)
    ) ** 0.25
    return params.phi_Bn0 - E_CHARGE * lowering


def tunneling_energies(params: PhysicalParams, N_d, T):
    """(W00, W0, eps') in joules."""
    w00 = (E_CHARGE * H_PLANCK / (4.0 * math.pi)) * np.sqrt(
        params.Z_VO * N_d / (params.m_star * params.eps)
    )
    x = w00 / (K_B * T)
    w0 = w00 / np.tanh(x)
    eps_prime = w00 / (x - np.tanh(x))
    return w00, w0, eps_prime


def schottky_current(params: PhysicalParams, V_Sch, N_d, T, r_d, polarity: Polarity):
    """Diode current for the voltage V_Sch across the Schottky contact.

    ``polarity`` follows the sign of the applied device voltage: SET selects
    the tunnelling-assisted reverse branch, RESET the thermionic forward one.
    """
    _require_finite("V_Sch", V_Sch)
    _require_positive("T", T)
    _require_positive("N_d", N_d)
    _require_positive("r_d", r_d)
    polarity = Polarity(polarity)
    phi_bn = barrier_height(params, V_Sch, N_d)
    area = math.pi * r_d**2
    kT = K_B * T
    with np.errstate(over="ignore", invalid="ignore"):
        if polarity is Polarity.SET:
            w00, w0, eps_prime = tunneling_energies(params, N_d, T)
            # a fully lowered barrier at vanishing reverse bias has no tunnelling window
            window = np.maximum(phi_bn / np.cosh(w00 / kT) ** 2 - E_CHARGE * V_Sch, 0.0)
            current = (
                -np.sqrt(math.pi * w00 * window)
                * np.exp(-phi_bn / w0)
                * (np.exp(-E_CHARGE * V_Sch / eps_prime) - 1.0)
                * area
                * params.A_star
                * T
                / K_B
            )
        else:
            current = (
                area
                * params.A_star
                * T**2
                * np.exp(-phi_bn / kT)
                * (np.exp(E_CHARGE * V_Sch / kT) - 1.0)
            )
    if not np.all(np.isfinite(current)):
        raise SaturationError(
            f"Schottky current overflow at V_Sch={V_Sch!r}, N_d={N_d!r}, T={T!r}"
        )
    return current


def local_temperature(params: PhysicalParams, I_M, V_internal, polarity: Polarity, r_d_noisy):
    """Filament temperature from Joule heating of the oxide stack.

    ``V_internal`` is the drop over plug, disc and diode (V_M - V_s). The
    thermal resistance scales with the nominal-to-noisy filament area ratio.
    """
    polarity = Polarity(polarity)
    _require_positive("r_d_noisy", r_d_noisy)
    r_th = params.R_th_SET if polarity is Polarity.SET else params.R_th_RESET
    ratio = params.r_d**2 / r_d_noisy**2
    T = I_M * V_internal * r_th * ratio + params.T_0
    if np.any(T < params.T_0 * (1.0 - 1e-12)):
        raise ConsistencyError(
            f"local temperature below ambient (I_M={I_M!r}, V_internal={V_internal!r}); "
            "current and internal voltage must share sign"
        )
    return np.maximum(T, params.T_0)


def _stack_current(params: PhysicalParams, v_target: float, r_fixed: float) -> float:
    """Current whose drop over R_s(I) + r_fixed equals v_target."""
    if v_target == 0.0:
        return 0.0
    i_linear = v_target / (series_resistance(params, 0.0) + r_fixed)
    lo, hi = sorted((0.0, i_linear))
    return brentq(
        lambda i: i * (series_resistance(params, i) + r_fixed) - v_target,
        lo,
        hi,
        xtol=1e-30,
        rtol=1e-15,
        maxiter=MAX_ITERATIONS,
    )


def solve_full_model(
    params: PhysicalParams,
    state: DeviceState,
    V_M: float,
    index: int = 0,
    max_iter: int = MAX_ITERATIONS,
    tol: float = VOLTAGE_TOLERANCE,
) -> VoltagePartition:
    """Self-consistent (I_M, V_s, V_p, V_d, V_Sch, T) for device ``index``.

    Brent's bracketed root search on I_M. For a trial current the resistive
    drops fix V_Sch = V_M - V_s - V_p - V_d and T; the root is where the diode
    carries exactly that current.
    """
    _require_finite("V_M", V_M)
    V_M = float(V_M)
    if V_M == 0.0:
        return VoltagePartition(
            V_M=0.0, V_s=0.0, V_p=0.0, V_d=0.0, V_Sch=0.0, I_M=0.0, T=params.T_0
        )
    polarity = Polarity.from_voltage(V_M)
    N_d = float(state.N_d[index])
    r_d = float(state.r_d[index])
    l_d = float(state.l_d[index])
    R_p = float(layer_resistance(params, params.l_p, params.N_p, r_d))
    R_d = float(layer_resistance(params, l_d, N_d, r_d))

    def partition(i_m: float) -> VoltagePartition:
        V_s = i_m * series_resistance(params, i_m)
        V_p = i_m * R_p
        V_d = i_m * R_d
        V_Sch = V_M - V_s - V_p - V_d
        T = local_temperature(params, i_m, V_M - V_s, polarity, r_d)
        return VoltagePartition(V_M=V_M, V_s=V_s, V_p=V_p, V_d=V_d, V_Sch=V_Sch, I_M=i_m, T=T)

    def mismatch(i_m: float) -> float:
        p = partition(i_m)
        return float(schottky_current(params, p.V_Sch, N_d, p.T, r_d, polarity)) - i_m

    # bracket ends: all of V_M on the resistors, or V_Sch at its admissible limit
    i_full = _stack_current(params, V_M, R_p + R_d)
    if polarity is Polarity.RESET and V_M > params.flat_band_voltage:
        v_limit = params.flat_band_voltage * (1.0 - 1e-9)
        i_edge = _stack_current(params, V_M - v_limit, R_p + R_d)
        if mismatch(i_edge) <= 0.0:
            raise SchottkyDomainError(
                partition(i_edge).V_Sch,
                f"no self-consistent solution below flat band for V_M={V_M!r} V, N_d={N_d!r}",
            )
    else:
        i_edge = 0.0

    lo, hi = sorted((i_edge, i_full))
    root, result = brentq(
        mismatch, lo, hi, xtol=1e-30, rtol=1e-15, maxiter=max_iter, full_output=True, disp=False
    )
    solved = partition(root)
    g_root = mismatch(root)
    # project the current mismatch onto the resistive stack via the local slope
    step = 1e-7 * max(abs(root), abs(hi - lo) * 1e-3)
    direction = 1.0 if root <= 0.5 * (lo + hi) else -1.0
    slope = (mismatch(root + direction * step) - g_root) / (direction * step)
    r_total = (V_M - solved.V_Sch) / root if root != 0.0 else R_p + R_d
    residual = abs(r_total * g_root / slope) if slope != 0.0 else math.inf
    if not result.converged or residual > tol * max(1.0, abs(V_M)):
        logger.warning("full-model solve did not converge: V_M=%s N_d=%s residual=%s", V_M, N_d, residual)
        raise ConvergenceError(
            f"full-model solve failed for V_M={V_M!r} V after {result.iterations} iterations",
            residual,
        )
    return solved
