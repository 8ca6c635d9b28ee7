from __future__ import annotations

import math
from dataclasses import dataclass, fields

from scipy import constants

from vcmsim.errors import ParameterFileError

E_CHARGE = constants.e
K_B = constants.k
H_PLANCK = constants.h

# Fields given in eV in parameter files; stored in joules.
EV_FIELDS = ("phi_Bn0", "phi_n", "dW_A")


@dataclass(frozen=True)
class PhysicalParams:
    """Fixed constants, geometry and material parameters of one VCM cell.

    Everything is SI. The three energies in ``EV_FIELDS`` are held in joules;
    parameter files carry them in eV and ``from_dict`` converts once.
    """

    R_TiOx: float
    R_0: float
    alpha_l: float
    R_th_line: float
    l_p: float
    l_d: float
    N_p: float
    N_d_min: float
    N_d_max: float
    r_d: float
    mu_n: float
    A_star: float
    T_0: float
    R_th_SET: float
    R_th_RESET: float
    m_star: float
    eps: float
    eps_phiB: float
    phi_Bn0: float
    phi_n: float
    dW_A: float
    alpha_hop: float
    nu_0: float
    Z_VO: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ParameterFileError(f"{f.name} must be finite, got {value!r}")
            # phi_n may legitimately be zero; everything else is a magnitude
            if f.name != "phi_n" and value <= 0:
                raise ParameterFileError(f"{f.name} must be > 0, got {value!r}")
        if self.phi_n < 0:
            raise ParameterFileError(f"phi_n must be >= 0, got {self.phi_n!r}")
        if self.N_d_min >= self.N_d_max:
            raise ParameterFileError("N_d_min must be < N_d_max")
        if self.Z_VO != 2.0:
            raise ParameterFileError(f"Z_VO is fixed at 2, got {self.Z_VO!r}")

    @property
    def l_c(self) -> float:
        return self.l_p + self.l_d

    @property
    def area(self) -> float:
        return math.pi * self.r_d**2

    @property
    def flat_band_voltage(self) -> float:
        """Largest V_Sch for which the barrier-lowering root is defined."""
        return (self.phi_Bn0 - self.phi_n) / E_CHARGE

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_dict(cls, data: dict[str, float]) -> PhysicalParams:
        """Build from file-unit values (energies in eV)."""
        known = set(cls.field_names())
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParameterFileError(f"unknown parameter keys: {', '.join(unknown)}")
        missing = sorted(k for k in known if k not in data and k != "Z_VO")
        if missing:
            raise ParameterFileError(f"missing parameter keys: {', '.join(missing)}")
        values = {k: float(v) for k, v in data.items()}
        for key in EV_FIELDS:
            values[key] = values[key] * E_CHARGE
        return cls(**values)

    def to_dict(self) -> dict[str, float]:
        """File-unit values (energies back in eV)."""
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        for key in EV_FIELDS:
            out[key] = out[key] / E_CHARGE
        return out
