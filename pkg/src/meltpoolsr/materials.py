"""Material property tables for the melt-pool solver.

Thermophysical properties are anchored at 298 K and at a hot-anchor
temperature (1923 K for both alloys shipped here) and linearly interpolated
in between, clamped outside. Quantities the source tables do not list
(saturation point, vapor gas constant, specific-heat ratio, thermal
expansion, void pressure) carry documented literature/placeholder defaults
and are plain fields, so any of them can be overridden with
``dataclasses.replace``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class MaterialParams:
    """Alloy parameter set for the reduced-order melting solver."""

    name: str
    # densities (kg/m^3) and specific heats (J/kg/K) at the two anchors
    rho_cold: float
    rho_hot: float
    cv_cold: float
    cv_hot: float
    cv_vapor: float
    # conductivities (W/m/K) at the two anchors
    k_cold: float
    k_hot: float
    viscosity: float          # kg/m/s
    surface_tension: float    # kg/s^2
    t_liquidus: float         # K
    t_solidus: float          # K
    fresnel_eps: float        # dimensionless, in (0, 1)
    accommodation: float      # dimensionless, in (0, 1]
    latent_fusion: float      # J/kg
    latent_vaporization: float  # J/kg
    # vapor-phase closure (not tabulated by the property source; defaults
    # below are literature boiling points and ideal-gas estimates)
    gamma: float = 1.67             # monatomic metal vapor cp/cv
    p_saturation: float = 101325.0  # Pa, at t_vapor
    t_vapor: float = 3500.0         # K, boiling point
    gas_constant: float = 160.0     # J/kg/K, specific to the vapor species
    alpha_thermal: float = 1.0e-5   # 1/K, placeholder expansion coefficient
    p_void: float = 101325.0        # Pa, pressure of the void phase
    anchor_cold: float = 298.0      # K
    anchor_hot: float = 1923.0      # K

    def __post_init__(self):
        positives = (
            "rho_cold rho_hot cv_cold cv_hot cv_vapor k_cold k_hot viscosity "
            "surface_tension t_liquidus t_solidus latent_fusion latent_vaporization "
            "gamma p_saturation t_vapor gas_constant alpha_thermal p_void"
        ).split()
        for field_name in positives:
            if not getattr(self, field_name) > 0:
                raise ValueError(f"{field_name} must be positive")
        if not self.t_solidus < self.t_liquidus:
            raise ValueError("t_solidus must be below t_liquidus")
        if not (0.0 < self.fresnel_eps < 1.0):
            raise ValueError("fresnel_eps must lie in (0, 1)")
        if not (0.0 < self.accommodation <= 1.0):
            raise ValueError("accommodation must lie in (0, 1]")
        if not self.anchor_cold < self.anchor_hot:
            raise ValueError("anchor_cold must be below anchor_hot")

    def with_overrides(self, **kwargs) -> "MaterialParams":
        return replace(self, **kwargs)


def _interp_anchor(t, lo_val, hi_val, lo_t, hi_t):
    t = np.asarray(t, dtype=np.float64)
    frac = np.clip((t - lo_t) / (hi_t - lo_t), 0.0, 1.0)
    return lo_val + frac * (hi_val - lo_val)


def material_props(t, m: MaterialParams):
    """Temperature-dependent (k, c_v, rho), linearly interpolated between
    the cold/hot anchors and clamped outside. Accepts scalars or arrays.
    """
    if np.any(np.asarray(t) <= 0):
        raise ValueError("temperature must be positive")
    k = _interp_anchor(t, m.k_cold, m.k_hot, m.anchor_cold, m.anchor_hot)
    cv = _interp_anchor(t, m.cv_cold, m.cv_hot, m.anchor_cold, m.anchor_hot)
    rho = _interp_anchor(t, m.rho_cold, m.rho_hot, m.anchor_cold, m.anchor_hot)
    return k, cv, rho


def boussinesq_density(t, m: MaterialParams, t_ref: float | None = None):
    """rho_ref * (1 - alpha * (T - T_ref)); the buoyancy-side density law.

    Kept for completeness: the reduced solver does not carry a momentum
    equation, so this enters no balance there.
    """
    t_ref = m.t_liquidus if t_ref is None else t_ref
    _, _, rho_ref = material_props(t_ref, m)
    return rho_ref * (1.0 - m.alpha_thermal * (np.asarray(t, dtype=np.float64) - t_ref))


# Ti-6Al-4V, property table values; vapor closure: literature boiling point
# 3315 K, R = 8.314 / 0.04788 kg/mol. The tabulated latent heat of
# vaporization (6.0e4 J/kg) is two orders below typical literature values
# (~8.9e6); both are provided, the table value is the default.
TI6AL4V = MaterialParams(
    name="Ti-6Al-4V",
    rho_cold=4420.0,
    rho_hot=3920.0,
    cv_cold=546.0,
    cv_hot=831.0,
    cv_vapor=600.0,
    k_cold=7.0,
    k_hot=33.4,
    viscosity=0.00325,
    surface_tension=1.882,
    t_liquidus=1923.0,
    t_solidus=1873.0,
    fresnel_eps=0.25,
    accommodation=0.005,
    latent_fusion=2.86e5,
    latent_vaporization=6.00e4,
    t_vapor=3315.0,
    gas_constant=8.314 / 0.04788,
)

TI6AL4V_HV_LITERATURE = 8.9e6  # J/kg, for with_overrides(latent_vaporization=...)

# SS316L, property table values; boiling point 3090 K, R = 8.314 / 0.056.
SS316L = MaterialParams(
    name="SS316L",
    rho_cold=7950.0,
    rho_hot=6765.0,
    cv_cold=470.0,
    cv_hot=1873.0,
    cv_vapor=449.0,
    k_cold=13.4,
    k_hot=30.5,
    viscosity=0.008,
    surface_tension=1.882,
    t_liquidus=1723.0,
    t_solidus=1658.0,
    fresnel_eps=0.2,
    accommodation=0.15,
    latent_fusion=2.6e5,
    latent_vaporization=7.45e6,
    t_vapor=3090.0,
    gas_constant=8.314 / 0.056,
)

MATERIALS = {m.name: m for m in (TI6AL4V, SS316L)}


def get_material(name: str) -> MaterialParams:
    try:
        return MATERIALS[name]
    except KeyError:
        raise KeyError(f"unknown material {name!r}; available: {sorted(MATERIALS)}") from None
