"""
Two-point numerical fluxes between neighbouring cells.

Phase-potential upwinding (PPU) in pressure form and at a prescribed total
flux, its viscous/buoyancy/capillary split, and the implicit hybrid
upwinding (IHU) viscous, gravity and capillary parts. Every kernel returns
its analytic derivatives together with the value.

Sign convention: fluxes are positive from cell i to cell j, ``dz`` is
z_i - z_j (depth positive downward) and S is the wetting saturation.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from .petrophysics import FluidProperties, RockRegion

logger = logging.getLogger(__name__)

# derivative tuples are ordered (p_i, p_j, S_i, S_j)
Derivatives = Tuple[float, float, float, float]


class PhasePotentialDiff(NamedTuple):
    dphi_w: float
    dphi_n: float


@dataclass(frozen=True)
class FluxEval:
    f_w: float
    f_n: float
    df_w: Derivatives
    df_n: Derivatives
    # upwinded PPU mobilities, when the flux came from the pressure form
    lam_w: float = 0.0
    lam_n: float = 0.0

    @property
    def u_t(self) -> float:
        return self.f_w + self.f_n

    @property
    def du_t(self) -> Derivatives:
        return tuple(a + b for a, b in zip(self.df_w, self.df_n))


class FluxPart(NamedTuple):
    """
    Wetting and non-wetting value of a flux at fixed total flux, with the
    derivatives of the wetting value with respect to (u_T, S_i, S_j).
    """

    w: float
    n: float
    du: float
    dsi: float
    dsj: float


class FluxSplit(NamedTuple):
    viscous: float
    buoyancy: float
    capillary: float


def phase_potential_difference(dp: float, dz: float, dpc: float, fluids: FluidProperties) -> PhasePotentialDiff:
    """Potential differences with p = p_n and dpc = Pc_i - Pc_j."""
    g = fluids.gravity
    return PhasePotentialDiff(
        dphi_w=dp - fluids.density_w * g * dz - dpc,
        dphi_n=dp - fluids.density_n * g * dz,
    )


def ppu_flux(
    trans: float,
    dz: float,
    region_i: RockRegion,
    region_j: RockRegion,
    p_i: float,
    p_j: float,
    s_i: float,
    s_j: float,
) -> FluxEval:
    """
    Phase-potential upwinded flux. Each cell uses its own capillary curve,
    so nothing special happens at a region boundary.
    """
    fluids = region_i.fluids
    pc_i, dpc_i = region_i.capillary_pressure(s_i)
    pc_j, dpc_j = region_j.capillary_pressure(s_j)
    lw_i, dlw_i, ln_i, dln_i = region_i.mobilities(s_i)
    lw_j, dlw_j, ln_j, dln_j = region_j.mobilities(s_j)
    pot = phase_potential_difference(p_i - p_j, dz, pc_i - pc_j, fluids)

    if pot.dphi_w >= 0.0:
        lw, dlw_si, dlw_sj = lw_i, dlw_i, 0.0
    else:
        lw, dlw_si, dlw_sj = lw_j, 0.0, dlw_j
    if pot.dphi_n >= 0.0:
        ln, dln_si, dln_sj = ln_i, dln_i, 0.0
    else:
        ln, dln_si, dln_sj = ln_j, 0.0, dln_j

    f_w = trans * lw * pot.dphi_w
    f_n = trans * ln * pot.dphi_n
    df_w = (
        trans * lw,
        -trans * lw,
        trans * (dlw_si * pot.dphi_w - lw * dpc_i),
        trans * (dlw_sj * pot.dphi_w + lw * dpc_j),
    )
    df_n = (trans * ln, -trans * ln, trans * dln_si * pot.dphi_n, trans * dln_sj * pot.dphi_n)
    return FluxEval(f_w=f_w, f_n=f_n, df_w=df_w, df_n=df_n, lam_w=lw, lam_n=ln)


def total_velocity_ppu(
    trans: float,
    dz: float,
    region_i: RockRegion,
    region_j: RockRegion,
    p_i: float,
    p_j: float,
    s_i: float,
    s_j: float,
) -> Tuple[float, Derivatives]:
    flux = ppu_flux(trans, dz, region_i, region_j, p_i, p_j, s_i, s_j)
    return flux.u_t, flux.du_t


def _ppu_upwind(u_t: float, trans: float, gamma: float, mob_i, mob_j) -> Tuple[str, str]:
    """
    Upwind cells (wetting, non-wetting) consistent with the signs of the
    potential differences implied by ``u_t``.

    With Gamma = (rho_n - rho_w) g dz - dPc the potentials satisfy
    dphi_w = dphi_n + Gamma and dphi_n = (u_T - T lw Gamma) / (T lT).
    """
    lw_i, ln_i = mob_i[0], mob_i[2]
    lw_j, ln_j = mob_j[0], mob_j[2]
    if gamma >= 0.0:
        if u_t - trans * lw_i * gamma >= 0.0:
            return "i", "i"
        if u_t + trans * ln_j * gamma < 0.0:
            return "j", "j"
        return "i", "j"
    if u_t + trans * ln_i * gamma >= 0.0:
        return "i", "i"
    if u_t - trans * lw_j * gamma < 0.0:
        return "j", "j"
    return "j", "i"


def ppu_flux_at_total(
    u_t: float,
    trans: float,
    dz: float,
    s_i: float,
    s_j: float,
    region: RockRegion,
) -> FluxPart:
    """
    PPU flux of one rock region written in fractional-flow form at a fixed
    total flux: F_w = (lw/lT) u_T + T (lw ln / lT) Gamma.
    """
    fluids = region.fluids
    pc_i, dpc_i = region.capillary_pressure(s_i)
    pc_j, dpc_j = region.capillary_pressure(s_j)
    gamma = fluids.buoyancy * dz - (pc_i - pc_j)
    mob_i = region.mobilities(s_i)
    mob_j = region.mobilities(s_j)

    side_w, side_n = _ppu_upwind(u_t, trans, gamma, mob_i, mob_j)
    lw, dlw = (mob_i[0], mob_i[1]) if side_w == "i" else (mob_j[0], mob_j[1])
    ln, dln = (mob_i[2], mob_i[3]) if side_n == "i" else (mob_j[2], mob_j[3])
    lt = lw + ln
    if lt == 0.0:
        # no mobile phase on the upwind sides; carry the total flux co-currently
        side = "i" if u_t >= 0.0 else "j"
        frac, dfrac = region.fractional_flow(s_i if side == "i" else s_j)
        f_w = frac * u_t
        return FluxPart(
            w=f_w,
            n=u_t - f_w,
            du=frac,
            dsi=dfrac * u_t if side == "i" else 0.0,
            dsj=dfrac * u_t if side == "j" else 0.0,
        )

    f_w = lw / lt * u_t + trans * lw * ln / lt * gamma
    inv2 = 1.0 / (lt * lt)
    df_dlw = ln * u_t * inv2 + trans * gamma * ln * ln * inv2
    df_dln = -lw * u_t * inv2 + trans * gamma * lw * lw * inv2
    df_dgamma = trans * lw * ln / lt

    dsi = df_dgamma * (-dpc_i)
    dsj = df_dgamma * dpc_j
    if side_w == "i":
        dsi += df_dlw * dlw
    else:
        dsj += df_dlw * dlw
    if side_n == "i":
        dsi += df_dln * dln
    else:
        dsj += df_dln * dln
    return FluxPart(w=f_w, n=u_t - f_w, du=lw / lt, dsi=dsi, dsj=dsj)


def ppu_fractional_decomposition(
    flux: FluxEval,
    trans: float,
    dz: float,
    region_i: RockRegion,
    region_j: RockRegion,
    s_i: float,
    s_j: float,
) -> Tuple[FluxSplit, FluxSplit]:
    """
    Split an evaluated PPU flux into viscous, buoyancy and capillary parts
    using the mobilities PPU upwinded: V = (l/lT) u_T, G = +-T K (rho_n - rho_w) g dz,
    C = -+T K dPc with K = lw ln / lT.

    Returns:
        (wetting split, non-wetting split)
    """
    pc_i, _ = region_i.capillary_pressure(s_i)
    pc_j, _ = region_j.capillary_pressure(s_j)
    lw, ln = flux.lam_w, flux.lam_n
    lt = lw + ln
    if lt == 0.0:
        return FluxSplit(flux.f_w, 0.0, 0.0), FluxSplit(flux.f_n, 0.0, 0.0)
    u_t = flux.u_t
    k = trans * lw * ln / lt
    gravity = k * region_i.fluids.buoyancy * dz
    capillary = -k * (pc_i - pc_j)
    wetting = FluxSplit(lw / lt * u_t, gravity, capillary)
    non_wetting = FluxSplit(ln / lt * u_t, -gravity, -capillary)
    return wetting, non_wetting


def ihu_viscous(u_t: float, s_i: float, s_j: float, region: RockRegion) -> FluxPart:
    """Both phases upwinded by the direction of the total flux."""
    if u_t >= 0.0:
        frac, dfrac = region.fractional_flow(s_i)
        v_w = frac * u_t
        return FluxPart(w=v_w, n=u_t - v_w, du=frac, dsi=dfrac * u_t, dsj=0.0)
    frac, dfrac = region.fractional_flow(s_j)
    v_w = frac * u_t
    return FluxPart(w=v_w, n=u_t - v_w, du=frac, dsi=0.0, dsj=dfrac * u_t)


def ihu_gravity(trans: float, dz: float, s_i: float, s_j: float, region: RockRegion) -> FluxPart:
    """Each phase upwinded by the sign of its buoyancy drive."""
    drive = region.fluids.buoyancy * dz
    if drive == 0.0:
        return FluxPart(0.0, 0.0, 0.0, 0.0, 0.0)
    w_from_i = drive > 0.0
    n_from_i = -drive > 0.0
    mob_i = region.mobilities(s_i)
    mob_j = region.mobilities(s_j)
    lw, dlw = (mob_i[0], mob_i[1]) if w_from_i else (mob_j[0], mob_j[1])
    ln, dln = (mob_i[2], mob_i[3]) if n_from_i else (mob_j[2], mob_j[3])
    lt = lw + ln
    if lt == 0.0:
        return FluxPart(0.0, 0.0, 0.0, 0.0, 0.0)
    g_w = trans * lw * ln / lt * drive
    dg_dlw = trans * drive * ln * ln / (lt * lt)
    dg_dln = trans * drive * lw * lw / (lt * lt)
    dsi = (dg_dlw * dlw if w_from_i else 0.0) + (dg_dln * dln if n_from_i else 0.0)
    dsj = (0.0 if w_from_i else dg_dlw * dlw) + (0.0 if n_from_i else dg_dln * dln)
    return FluxPart(w=g_w, n=-g_w, du=0.0, dsi=dsi, dsj=dsj)


def ihu_capillary(trans: float, s_i: float, s_j: float, region: RockRegion) -> FluxPart:
    """C_w = T max(D on [S_i, S_j]) (S_i - S_j)."""
    d_max, dd_lo, dd_hi = region.diffusion_max_on_interval(min(s_i, s_j), max(s_i, s_j))
    dd_si, dd_sj = (dd_hi, dd_lo) if s_i >= s_j else (dd_lo, dd_hi)
    ds = s_i - s_j
    c_w = trans * d_max * ds
    return FluxPart(
        w=c_w,
        n=-c_w,
        du=0.0,
        dsi=trans * (d_max + ds * dd_si),
        dsj=trans * (-d_max + ds * dd_sj),
    )


def ihu_flux_at_total(
    u_t: float,
    trans: float,
    dz: float,
    s_i: float,
    s_j: float,
    region: RockRegion,
) -> FluxPart:
    viscous = ihu_viscous(u_t, s_i, s_j, region)
    gravity = ihu_gravity(trans, dz, s_i, s_j, region)
    capillary = ihu_capillary(trans, s_i, s_j, region)
    f_w = viscous.w + gravity.w + capillary.w
    return FluxPart(
        w=f_w,
        n=u_t - f_w,
        du=viscous.du,
        dsi=viscous.dsi + gravity.dsi + capillary.dsi,
        dsj=viscous.dsj + gravity.dsj + capillary.dsj,
    )


def ihu_flux(
    trans: float,
    dz: float,
    region: RockRegion,
    p_i: float,
    p_j: float,
    s_i: float,
    s_j: float,
) -> FluxEval:
    """IHU flux between two cells of the same region, with the total flux from PPU."""
    u_t, du = total_velocity_ppu(trans, dz, region, region, p_i, p_j, s_i, s_j)
    part = ihu_flux_at_total(u_t, trans, dz, s_i, s_j, region)
    return at_total_to_eval(part, u_t, du)


def at_total_to_eval(part: FluxPart, u_t: float, du: Derivatives) -> FluxEval:
    """Chain a fixed-total-flux evaluation through u_T(p_i, p_j, S_i, S_j)."""
    df_w = (
        part.du * du[0],
        part.du * du[1],
        part.du * du[2] + part.dsi,
        part.du * du[3] + part.dsj,
    )
    df_n = tuple(a - b for a, b in zip(du, df_w))
    return FluxEval(f_w=part.w, f_n=u_t - part.w, df_w=df_w, df_n=df_n)


@dataclass(frozen=True)
class FaceFluxes:
    """
    Fluxes over many faces of one region. ``df_w`` and ``df_n`` have one
    row per derivative in the (p_i, p_j, S_i, S_j) order.
    """

    f_w: np.ndarray
    f_n: np.ndarray
    df_w: np.ndarray
    df_n: np.ndarray

    @classmethod
    def from_eval(cls, flux: FluxEval) -> "FaceFluxes":
        return cls(
            f_w=np.array([flux.f_w]),
            f_n=np.array([flux.f_n]),
            df_w=np.array(flux.df_w, dtype=float)[:, None],
            df_n=np.array(flux.df_n, dtype=float)[:, None],
        )


def ppu_flux_faces(
    trans: np.ndarray,
    dz: np.ndarray,
    region: RockRegion,
    p_i: np.ndarray,
    p_j: np.ndarray,
    s_i: np.ndarray,
    s_j: np.ndarray,
) -> FaceFluxes:
    """:func:`ppu_flux` over faces whose two cells share ``region``."""
    fluids = region.fluids
    pc_i, dpc_i = region.capillary_pressure_array(s_i)
    pc_j, dpc_j = region.capillary_pressure_array(s_j)
    lw_i, dlw_i, ln_i, dln_i = region.mobilities_array(s_i)
    lw_j, dlw_j, ln_j, dln_j = region.mobilities_array(s_j)
    dp = p_i - p_j
    dphi_w = dp - fluids.density_w * fluids.gravity * dz - (pc_i - pc_j)
    dphi_n = dp - fluids.density_n * fluids.gravity * dz

    up_w, up_n = dphi_w >= 0.0, dphi_n >= 0.0
    lw = np.where(up_w, lw_i, lw_j)
    ln = np.where(up_n, ln_i, ln_j)
    dlw_si, dlw_sj = np.where(up_w, dlw_i, 0.0), np.where(up_w, 0.0, dlw_j)
    dln_si, dln_sj = np.where(up_n, dln_i, 0.0), np.where(up_n, 0.0, dln_j)

    df_w = np.stack(
        [trans * lw, -trans * lw, trans * (dlw_si * dphi_w - lw * dpc_i), trans * (dlw_sj * dphi_w + lw * dpc_j)]
    )
    df_n = np.stack([trans * ln, -trans * ln, trans * dln_si * dphi_n, trans * dln_sj * dphi_n])
    return FaceFluxes(f_w=trans * lw * dphi_w, f_n=trans * ln * dphi_n, df_w=df_w, df_n=df_n)


def ihu_flux_faces(
    trans: np.ndarray,
    dz: np.ndarray,
    region: RockRegion,
    p_i: np.ndarray,
    p_j: np.ndarray,
    s_i: np.ndarray,
    s_j: np.ndarray,
) -> FaceFluxes:
    """:func:`ihu_flux` over faces whose two cells share ``region``."""
    ppu = ppu_flux_faces(trans, dz, region, p_i, p_j, s_i, s_j)
    u_t = ppu.f_w + ppu.f_n
    du = ppu.df_w + ppu.df_n

    forward = u_t >= 0.0
    frac, dfrac = region.fractional_flow_array(np.where(forward, s_i, s_j))
    f_w = frac * u_t
    dsi = np.where(forward, dfrac * u_t, 0.0)
    dsj = np.where(forward, 0.0, dfrac * u_t)

    drive = region.fluids.buoyancy * dz
    w_from_i, n_from_i = drive > 0.0, drive < 0.0
    mob_i = region.mobilities_array(s_i)
    mob_j = region.mobilities_array(s_j)
    lw = np.where(w_from_i, mob_i[0], mob_j[0])
    dlw = np.where(w_from_i, mob_i[1], mob_j[1])
    ln = np.where(n_from_i, mob_i[2], mob_j[2])
    dln = np.where(n_from_i, mob_i[3], mob_j[3])
    lt = lw + ln
    active = (drive != 0.0) & (lt > 0.0)
    lt = np.where(active, lt, 1.0)
    g_w = np.where(active, trans * lw * ln / lt * drive, 0.0)
    dg_dlw = np.where(active, trans * drive * ln * ln / (lt * lt), 0.0) * dlw
    dg_dln = np.where(active, trans * drive * lw * lw / (lt * lt), 0.0) * dln
    f_w = f_w + g_w
    dsi = dsi + np.where(w_from_i, dg_dlw, 0.0) + np.where(n_from_i, dg_dln, 0.0)
    dsj = dsj + np.where(w_from_i, 0.0, dg_dlw) + np.where(n_from_i, 0.0, dg_dln)

    d_max, dd_lo, dd_hi = region.diffusion_max_on_interval_array(np.minimum(s_i, s_j), np.maximum(s_i, s_j))
    i_high = s_i >= s_j
    ds = s_i - s_j
    f_w = f_w + trans * d_max * ds
    dsi = dsi + trans * (d_max + ds * np.where(i_high, dd_hi, dd_lo))
    dsj = dsj + trans * (-d_max + ds * np.where(i_high, dd_lo, dd_hi))

    df_w = np.stack([frac * du[0], frac * du[1], frac * du[2] + dsi, frac * du[3] + dsj])
    return FaceFluxes(f_w=f_w, f_n=u_t - f_w, df_w=df_w, df_n=du - df_w)
