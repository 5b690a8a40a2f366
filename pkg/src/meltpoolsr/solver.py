"""Reduced-order 2-D (x-z vertical slice) melt-pool solver.

Generates paired coarse/fine training data for the upscaling models. The
energy balance is an explicit finite-volume enthalpy method with a latent
plateau between solidus and liquidus; convection is folded into an enhanced
liquid conductivity. The free surface is a single-valued per-column depth
(height function) driven by vapor recoil against capillary smoothing, with
a small seeded per-column perturbation so high-energy tracks develop the
fluctuating vapor cavity the metrics module measures.

Physics closures implemented here: Gaussian beam flux, incidence-angle
Fresnel absorptivity, saturation-pressure recoil, and evaporative mass
loss with its latent cooling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import erf

from .fields import AMBIENT_K, FieldSample, MeshSpec
from .materials import MaterialParams, material_props

UM = 1e-6
US = 1e-6


class SolverError(Exception):
    """Stability violation or non-finite state during time stepping."""


@dataclass(frozen=True)
class ProcessParams:
    """Laser process point for a single track."""

    power_w: float
    velocity_mm_s: float
    radius_um: float = 50.0
    duration_us: float = 500.0
    interval_us: float = 5.0

    def __post_init__(self):
        if self.power_w <= 0 or self.velocity_mm_s <= 0 or self.radius_um <= 0:
            raise ValueError("power, velocity, and radius must be positive")
        if self.duration_us <= 0 or self.interval_us <= 0:
            raise ValueError("duration and interval must be positive")
        n = self.duration_us / self.interval_us
        if abs(n - round(n)) > 1e-9:
            raise ValueError("snapshot interval must divide the track duration")

    @property
    def n_snapshots(self) -> int:
        return int(round(self.duration_us / self.interval_us))


@dataclass(frozen=True)
class SolverConfig:
    """Numerical and reduced-model knobs (all deliberate config surface)."""

    conductivity_boost: float = 2.5     # liquid k multiplier standing in for convection
    mobility: float = 1.0e-5            # interface mobility, m/(Pa s)
    noise_amplitude: float = 0.02       # multiplicative recoil perturbation, per column
    v_interface_cap: float = 5.0        # m/s, cap on the digging speed
    safety_factor: float = 0.8
    insulated: bool = False             # zero-flux borders (conservation runs)
    laser_enabled: bool = True
    evaporation: bool = True
    window_um: float = 320.0
    window_snap_um: float = 20.0        # window edges snap to this grid so
                                        # coarse/fine extractions align
    domain_depth_um: float = 400.0
    domain_min_length_um: float = 1000.0
    laser_start_um: float = 250.0
    laser_margin_um: float = 250.0
    ambient_k: float = AMBIENT_K


@dataclass
class SolverState:
    """Mutable-by-replacement snapshot of the marching solution."""

    element_size_m: float
    enthalpy: np.ndarray        # (nz, nx), J/kg
    temperature: np.ndarray     # (nz, nx), K
    surface_depth: np.ndarray   # (nx,), m, depression below the initial plane
    laser_x_m: float
    time_s: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.enthalpy.shape


# --- closed-form physics --------------------------------------------------

def laser_flux(r_um, power_w: float, radius_um: float):
    """Gaussian beam flux q(r) = P / (pi r0^2) * exp(-(sqrt(2) r / r0)^2), W/m^2."""
    if radius_um <= 0:
        raise ValueError("laser radius must be positive")
    r = np.asarray(r_um, dtype=np.float64) * UM
    r0 = radius_um * UM
    return power_w / (math.pi * r0 * r0) * np.exp(-2.0 * (r / r0) ** 2)


def fresnel_absorptivity(theta, eps: float):
    """Incidence-angle absorptivity of the multiple-reflection Fresnel model."""
    if not (0.0 < eps < 1.0):
        raise ValueError("fresnel eps must lie in (0, 1)")
    c = np.cos(np.asarray(theta, dtype=np.float64))
    term1 = (1.0 + (1.0 - eps * c) ** 2) / (1.0 + (1.0 + eps * c) ** 2)
    term2 = (eps * eps - 2.0 * eps * c + 2.0 * c * c) / (
        eps * eps + 2.0 * eps * c + 2.0 * c * c
    )
    return 1.0 - 0.5 * (term1 + term2)


def saturation_pressure(t, m: MaterialParams):
    """Clausius-Clapeyron-form liquid saturation pressure P_sat(T), Pa.

    Shares the exponent of the recoil law, so recoil_pressure(T) equals
    accommodation * saturation_pressure(T) identically.
    """
    t = np.asarray(t, dtype=np.float64)
    coef = m.latent_vaporization / ((m.gamma - 1.0) * m.cv_vapor * m.t_vapor)
    return m.p_saturation * np.exp(coef * (1.0 - m.t_vapor / t))


def recoil_pressure(t, m: MaterialParams):
    """Vapor recoil pressure on the free surface, Pa.

    P_s = a * P_V * exp{ dHv / ((gamma-1) c_v^vap T_v) * (1 - T_v/T) }.
    """
    if np.any(np.asarray(t) <= 0):
        raise ValueError("temperature must be positive")
    return m.accommodation * saturation_pressure(t, m)


def evaporative_mass_flux(t_bar, p_l_sat, m: MaterialParams):
    """Evaporative mass loss M_dot = a sqrt(1/(2 pi R T)) (P_sat - P_void), kg/m^2/s.

    Negative values (condensation below the boiling point) are returned
    as-is; the solver clamps them to zero where it applies the sink.
    """
    t_bar = np.asarray(t_bar, dtype=np.float64)
    if np.any(t_bar <= 0):
        raise ValueError("temperature must be positive")
    return (
        m.accommodation
        * np.sqrt(1.0 / (2.0 * math.pi * m.gas_constant * t_bar))
        * (np.asarray(p_l_sat, dtype=np.float64) - m.p_void)
    )


# --- enthalpy <-> temperature map ------------------------------------------

class EnthalpyMap:
    """Monotone h(T) with a linear latent plateau; inverse by table lookup.

    h(298 K) = 0 by convention. Sensible heat integrates the linearly
    interpolated c_v; the fusion latent heat ramps linearly over
    [T_S, T_L].
    """

    T_TABLE_MAX = 20000.0

    def __init__(self, m: MaterialParams):
        self.m = m
        t_tab = np.linspace(200.0, self.T_TABLE_MAX, 9901)
        h_tab = self.h_of_t(t_tab)
        if np.any(np.diff(h_tab) <= 0):
            raise ValueError("enthalpy map is not strictly increasing")
        self._t_tab = t_tab
        self._h_tab = h_tab

    def h_of_t(self, t):
        m = self.m
        t = np.asarray(t, dtype=np.float64)
        t0, t1 = m.anchor_cold, m.anchor_hot
        slope = (m.cv_hot - m.cv_cold) / (t1 - t0)
        tc = np.clip(t, t0, t1)
        sensible = m.cv_cold * (tc - t0) + 0.5 * slope * (tc - t0) ** 2
        sensible = np.where(t < t0, m.cv_cold * (t - t0), sensible)
        h_at_hot = m.cv_cold * (t1 - t0) + 0.5 * slope * (t1 - t0) ** 2
        sensible = np.where(t > t1, h_at_hot + m.cv_hot * (t - t1), sensible)
        liquid_frac = np.clip((t - m.t_solidus) / (m.t_liquidus - m.t_solidus), 0.0, 1.0)
        return sensible + m.latent_fusion * liquid_frac

    def t_of_h(self, h):
        return np.interp(np.asarray(h, dtype=np.float64), self._h_tab, self._t_tab)

    def liquid_fraction(self, t):
        m = self.m
        return np.clip(
            (np.asarray(t, dtype=np.float64) - m.t_solidus) / (m.t_liquidus - m.t_solidus),
            0.0,
            1.0,
        )


# --- stability -------------------------------------------------------------

def max_thermal_diffusivity(m: MaterialParams, config: SolverConfig) -> float:
    """max over temperature of k_eff / (rho c_v), boosted-liquid included."""
    t = np.linspace(m.anchor_cold, 8000.0, 512)
    k, cv, rho = material_props(t, m)
    liq = np.clip((t - m.t_solidus) / (m.t_liquidus - m.t_solidus), 0.0, 1.0)
    k_eff = k * (1.0 + (config.conductivity_boost - 1.0) * liq)
    return float(np.max(k_eff / (rho * cv)))


def stable_dt(element_size_m: float, m: MaterialParams, config: SolverConfig) -> float:
    """Largest stable step: the 2-D explicit diffusion bound, the capillary
    smoothing bound, and the interface-advance CFL, with a safety factor.
    """
    h2 = element_size_m * element_size_m
    dt_thermal = 0.25 * h2 / max_thermal_diffusivity(m, config)
    d_cap = config.mobility * m.surface_tension
    dt_capillary = 0.5 * h2 / d_cap if d_cap > 0 else math.inf
    dt_interface = 0.5 * element_size_m / config.v_interface_cap
    return config.safety_factor * min(dt_thermal, dt_capillary, dt_interface)


def _check_dt(dt: float, element_size_m: float, m: MaterialParams, config: SolverConfig):
    h2 = element_size_m * element_size_m
    dt_thermal = 0.25 * h2 / max_thermal_diffusivity(m, config)
    if dt > dt_thermal * (1.0 + 1e-12):
        raise SolverError(
            f"dt={dt:.3e}s violates the explicit diffusion bound {dt_thermal:.3e}s"
        )
    d_cap = config.mobility * m.surface_tension
    if d_cap > 0 and dt > 0.5 * h2 / d_cap * (1.0 + 1e-12):
        raise SolverError(f"dt={dt:.3e}s violates the capillary smoothing bound")


# --- single explicit step ---------------------------------------------------

def _cell_averaged_flux(x_edges_m: np.ndarray, laser_x_m: float, power_w: float,
                        radius_um: float) -> np.ndarray:
    """Column-averaged Gaussian flux, W/m^2 (exact erf integral per cell)."""
    r0 = radius_um * UM
    q0 = power_w / (math.pi * r0 * r0)
    u = math.sqrt(2.0) * (x_edges_m - laser_x_m) / r0
    anti = erf(u)
    h = x_edges_m[1:] - x_edges_m[:-1]
    scale = q0 * r0 * math.sqrt(math.pi / 2.0) / 2.0
    return scale * (anti[1:] - anti[:-1]) / h


def step(
    state: SolverState,
    dt: float,
    m: MaterialParams,
    p: ProcessParams,
    config: SolverConfig = SolverConfig(),
    rng: np.random.Generator | None = None,
) -> SolverState:
    """Advance the slice by one explicit step of length ``dt`` seconds.

    Order: conduction + surface sources on the enthalpy grid, temperature
    recovery through the enthalpy map, free-surface update (recoil vs
    capillary smoothing plus evaporative recession), laser advance.
    """
    _check_dt(dt, state.element_size_m, m, config)
    if rng is None:
        rng = np.random.default_rng(0)

    h_cell = state.element_size_m
    nz, nx = state.shape
    emap = _enthalpy_map_for(m)
    t_amb = config.ambient_k
    rho0 = m.rho_cold

    temp = state.temperature
    enth = state.enthalpy.copy()
    z_s = state.surface_depth

    # material mask from the height function: a cell is material when its
    # center lies below the local surface depth
    depth_centers = (np.arange(nz, dtype=np.float64) + 0.5) * h_cell
    material = depth_centers[:, None] >= z_s[None, :]

    k_t, cv_t, _ = material_props(temp, m)
    liq = emap.liquid_fraction(temp)
    k_eff = k_t * (1.0 + (config.conductivity_boost - 1.0) * liq)

    # conduction: face fluxes between material neighbors only (flux form,
    # so the insulated/no-source configuration conserves total enthalpy)
    power = np.zeros_like(enth)  # W per unit slice thickness, per cell

    kx = 0.5 * (k_eff[:, 1:] + k_eff[:, :-1])
    both_x = material[:, 1:] & material[:, :-1]
    flux_x = np.where(both_x, kx * (temp[:, 1:] - temp[:, :-1]), 0.0)
    power[:, :-1] += flux_x
    power[:, 1:] -= flux_x

    kz = 0.5 * (k_eff[1:, :] + k_eff[:-1, :])
    both_z = material[1:, :] & material[:-1, :]
    flux_z = np.where(both_z, kz * (temp[1:, :] - temp[:-1, :]), 0.0)
    power[:-1, :] += flux_z
    power[1:, :] -= flux_z

    if not config.insulated:
        # fixed-temperature far boundaries: bottom row and both sides
        power[-1, :] += np.where(material[-1, :], k_eff[-1, :] * (t_amb - temp[-1, :]), 0.0)
        power[:, 0] += np.where(material[:, 0], k_eff[:, 0] * (t_amb - temp[:, 0]), 0.0)
        power[:, -1] += np.where(material[:, -1], k_eff[:, -1] * (t_amb - temp[:, -1]), 0.0)

    # surface cells: topmost material cell per column
    surf_j = np.clip((z_s / h_cell - 0.5).astype(np.int64) + 1, 0, nz - 1)
    cols = np.arange(nx)
    t_surf = temp[surf_j, cols]

    q_laser = np.zeros(nx)
    if p.power_w > 0:
        x_edges = np.arange(nx + 1, dtype=np.float64) * h_cell
        q_bar = _cell_averaged_flux(x_edges, state.laser_x_m, p.power_w, p.radius_um)
        slope = np.gradient(z_s, h_cell)
        theta = np.arctan(np.abs(slope))
        q_laser = q_bar * fresnel_absorptivity(theta, m.fresnel_eps)

    m_dot = np.zeros(nx)
    if config.evaporation:
        p_sat = saturation_pressure(t_surf, m)
        m_dot = np.maximum(evaporative_mass_flux(t_surf, p_sat, m), 0.0)

    q_net = q_laser - m_dot * m.latent_vaporization
    np.add.at(power, (surf_j, cols), q_net * h_cell)

    enth += dt * power / (rho0 * h_cell * h_cell)
    temp_new = emap.t_of_h(enth)

    # --- free-surface update ---
    molten = temp_new[surf_j, cols] >= m.t_liquidus
    t_surf_new = temp_new[surf_j, cols]
    z_new = z_s.copy()
    if np.any(molten):
        drive = recoil_pressure(np.where(molten, t_surf_new, m.t_liquidus), m)
        if config.noise_amplitude > 0:
            noise = 1.0 + config.noise_amplitude * rng.standard_normal(nx)
            drive = drive * np.clip(noise, 0.0, None)
        v_dig = np.minimum(config.mobility * drive, config.v_interface_cap)
        _, _, rho_surf = material_props(t_surf_new, m)
        v_evap = m_dot / rho_surf
        # capillary smoothing: explicit diffusion of the depth profile over
        # contiguous molten spans (solid columns are pinned)
        lap = np.zeros(nx)
        left = np.empty(nx)
        right = np.empty(nx)
        left[1:] = z_s[:-1]
        left[0] = z_s[0]
        right[:-1] = z_s[1:]
        right[-1] = z_s[-1]
        lap = (left - 2.0 * z_s + right) / (h_cell * h_cell)
        d_cap = config.mobility * m.surface_tension
        dz = dt * np.where(molten, v_dig + v_evap + d_cap * lap, 0.0)
        z_new = np.clip(z_s + dz, 0.0, (nz - 1) * h_cell)

    # phase flips driven by surface motion
    material_new = depth_centers[:, None] >= z_new[None, :]
    became_void = material & ~material_new
    if np.any(became_void):
        enth[became_void] = 0.0
        temp_new = np.where(became_void, t_amb, temp_new)
    became_material = material_new & ~material
    if np.any(became_material):
        # refill inherits the state of the cell below (melt moving up)
        src = np.vstack([enth[1:, :], enth[-1:, :]])
        enth = np.where(became_material, src, enth)
        temp_new = np.where(became_material, emap.t_of_h(enth), temp_new)

    if not (np.all(np.isfinite(enth)) and np.all(np.isfinite(z_new))):
        raise SolverError("non-finite value in solver state")

    return SolverState(
        element_size_m=state.element_size_m,
        enthalpy=enth,
        temperature=temp_new,
        surface_depth=z_new,
        laser_x_m=state.laser_x_m + p.velocity_mm_s * 1e-3 * dt,
        time_s=state.time_s + dt,
    )


_EMAP_CACHE: dict[int, EnthalpyMap] = {}


def _enthalpy_map_for(m: MaterialParams) -> EnthalpyMap:
    key = id(m)
    emap = _EMAP_CACHE.get(key)
    if emap is None or emap.m is not m:
        emap = EnthalpyMap(m)
        _EMAP_CACHE[key] = emap
    return emap


# --- track simulation -------------------------------------------------------

@dataclass(frozen=True)
class TrackRecord:
    """One simulated single-bead track: cross-section snapshots every
    ``interval_us`` plus enough metadata to reproduce the run."""

    material_name: str
    process: ProcessParams
    element_size_um: float
    seed: int
    samples: tuple[FieldSample, ...]

    @property
    def times_us(self) -> np.ndarray:
        return np.array([s.time_us for s in self.samples])


def initial_state(m: MaterialParams, p: ProcessParams, element_size_um: float,
                  config: SolverConfig = SolverConfig()) -> SolverState:
    """Cold uniform plate with the laser parked at its start position."""
    h_cell = element_size_um * UM
    travel_m = p.velocity_mm_s * 1e-3 * p.duration_us * US
    length_m = max(
        config.domain_min_length_um * UM,
        config.laser_start_um * UM + travel_m + config.laser_margin_um * UM,
    )
    nx = int(round(length_m / h_cell))
    nz = int(round(config.domain_depth_um * UM / h_cell))
    emap = _enthalpy_map_for(m)
    h0 = float(emap.h_of_t(config.ambient_k))
    return SolverState(
        element_size_m=h_cell,
        enthalpy=np.full((nz, nx), h0, dtype=np.float64),
        temperature=np.full((nz, nx), config.ambient_k, dtype=np.float64),
        surface_depth=np.zeros(nx, dtype=np.float64),
        laser_x_m=config.laser_start_um * UM,
        time_s=0.0,
    )


def run_track(
    m: MaterialParams,
    p: ProcessParams,
    element_size_um: float,
    seed: int = 0,
    config: SolverConfig = SolverConfig(),
) -> TrackRecord:
    """Simulate one track and extract a cross-section every snapshot interval.

    Identical inputs and seed give a bit-identical record.
    """
    window_cells = config.window_um / element_size_um
    if abs(window_cells - round(window_cells)) > 1e-9:
        raise ValueError(
            f"element size {element_size_um} um does not tile the "
            f"{config.window_um} um window"
        )
    state = initial_state(m, p, element_size_um, config)
    nz, nx = state.shape
    if nx * state.element_size_m < config.domain_min_length_um * UM - 1e-12:
        raise ValueError("domain is shorter than the configured minimum length")
    if nz * state.element_size_m < config.window_um * UM - 1e-12:
        raise ValueError("domain depth does not cover the extraction window")

    rng = np.random.default_rng(seed)
    interval_s = p.interval_us * US
    n_sub = max(1, int(math.ceil(interval_s / stable_dt(state.element_size_m, m, config))))
    dt = interval_s / n_sub

    samples = []
    for _ in range(p.n_snapshots):
        for _ in range(n_sub):
            state = step(state, dt, m, p, config, rng)
        samples.append(extract_cross_section(state, state.laser_x_m, m, p, config))
    return TrackRecord(
        material_name=m.name,
        process=p,
        element_size_um=element_size_um,
        seed=seed,
        samples=tuple(samples),
    )


def extract_cross_section(
    state: SolverState,
    laser_x_m: float,
    m: MaterialParams,
    p: ProcessParams,
    config: SolverConfig = SolverConfig(),
) -> FieldSample:
    """Cut the moving window: ``window_um`` square, horizontally centered on
    the laser (edges snapped to the ``window_snap_um`` grid so coarse and
    fine runs of one track cover the identical region), top row at the
    undisturbed surface. Void cells export ambient temperature exactly.
    """
    h_cell = state.element_size_m
    nz, nx = state.shape
    n_win = int(round(config.window_um * UM / h_cell))
    snap = config.window_snap_um * UM
    x_left = round((laser_x_m - 0.5 * config.window_um * UM) / snap) * snap
    i0 = int(round(x_left / h_cell))
    if i0 < 0 or i0 + n_win > nx or n_win > nz:
        raise ValueError("extraction window falls outside the simulated domain")

    temp = state.temperature[:n_win, i0 : i0 + n_win]
    z_s = state.surface_depth[i0 : i0 + n_win]
    depth_bottom = (np.arange(n_win, dtype=np.float64)[:, None] + 1.0) * h_cell
    fill = np.clip((depth_bottom - z_s[None, :]) / h_cell, 0.0, 1.0)
    temp_out = np.where(fill >= 0.5, temp, config.ambient_k).astype(np.float32)
    mesh = MeshSpec(
        element_size_um=h_cell / UM,
        width_cells=n_win,
        height_cells=n_win,
        origin_um=((i0 + 0.5) * h_cell / UM, 0.5 * h_cell / UM),
    )
    return FieldSample(
        mesh=mesh,
        temperature=temp_out,
        fluid_fraction=fill.astype(np.float32),
        time_us=state.time_s / US,
        process=p,
    )
