"""
Post-processing of simulation records: recovery curves, error norms,
leading truncation-error terms and numerical-flux surfaces.
"""
import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from ..exceptions import AnalysisError
from ..models.scenario import Scheme
from ..models.simulation import SimulationRecord
from .flux import ihu_flux_at_total, ppu_flux_at_total
from .interface import h_map
from .petrophysics import RockRegion, tabulate

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


@dataclass
class RecoverySeries:
    t_d: np.ndarray
    recovery_pct: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t_d": self.t_d, "recovery_pct": self.recovery_pct})

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "RecoverySeries":
        return cls(frame["t_d"].to_numpy(dtype=float), frame["recovery_pct"].to_numpy(dtype=float))


def dimensionless_time(t: ArrayLike, permeability: float, d_max: float, porosity: float, length: float) -> ArrayLike:
    """t_D = k D_max t / (phi L^2)."""
    return permeability * d_max * np.asarray(t, dtype=float) / (porosity * length * length)


def recovery_curve(record: SimulationRecord) -> RecoverySeries:
    """
    Percentage of the steady-state non-wetting efflux from the matrix,
    sampled at every snapshot.
    """
    if not record.metadata.get("steady_state_reached", False):
        raise AnalysisError("run did not reach steady state; extend the end time before computing recovery")
    if len(record.snapshots) < 2:
        raise AnalysisError("recovery needs at least two snapshots")
    t_char = float(record.metadata["t_char_s"])
    initial = record.matrix_nonwetting(record.snapshots[0])
    efflux = np.array([initial - record.matrix_nonwetting(s) for s in record.snapshots])
    final = efflux[-1]
    if final <= 0.0:
        raise AnalysisError("no non-wetting phase left the matrix")
    times = np.array([s.time for s in record.snapshots])
    return RecoverySeries(t_d=times / t_char, recovery_pct=100.0 * efflux / final)


def steady_state_change(record: SimulationRecord) -> float:
    """Relative change of the matrix non-wetting volume over the last reporting window."""
    if len(record.snapshots) < 2:
        return float("inf")
    initial = record.matrix_nonwetting(record.snapshots[0])
    last = record.matrix_nonwetting(record.snapshots[-1])
    previous = record.matrix_nonwetting(record.snapshots[-2])
    efflux = initial - last
    if efflux == 0.0:
        return float("inf")
    return abs(last - previous) / abs(efflux)


def error_norms(series: RecoverySeries, reference: RecoverySeries) -> Tuple[pd.DataFrame, float]:
    """
    Pointwise absolute recovery error and its maximum.

    The denser series is interpolated linearly onto the sparser one's times,
    restricted to the overlap of both ranges.
    """
    if len(series.t_d) <= len(reference.t_d):
        grid, values, other = series.t_d, series.recovery_pct, reference
    else:
        grid, values, other = reference.t_d, reference.recovery_pct, series
    mask = (grid >= other.t_d[0]) & (grid <= other.t_d[-1])
    if not mask.any():
        raise AnalysisError("recovery series do not overlap in time")
    interpolated = np.interp(grid[mask], other.t_d, other.recovery_pct)
    e1 = np.abs(values[mask] - interpolated)
    return pd.DataFrame({"t_d": grid[mask], "e1": e1}), float(np.max(e1))


def time_to_recovery(series: RecoverySeries, percent: float = 80.0) -> float:
    """First dimensionless time at which recovery reaches ``percent``, linearly interpolated."""
    above = np.nonzero(series.recovery_pct >= percent)[0]
    if not len(above):
        raise AnalysisError(f"recovery never reaches {percent}%")
    k = int(above[0])
    if k == 0:
        return float(series.t_d[0])
    r0, r1 = series.recovery_pct[k - 1], series.recovery_pct[k]
    t0, t1 = series.t_d[k - 1], series.t_d[k]
    return float(t0 + (percent - r0) * (t1 - t0) / (r1 - r0))


def equilibrium_saturations(
    matrix: RockRegion,
    fracture: RockRegion,
    pv_matrix: float,
    pv_fracture: float,
    wetting_volume: float,
) -> Tuple[float, float]:
    """
    Uniform matrix and fracture saturations in capillary equilibrium that
    hold ``wetting_volume`` in total.
    """
    total = pv_matrix + pv_fracture
    if not 0.0 <= wetting_volume <= total:
        raise AnalysisError(f"wetting volume {wetting_volume} outside [0, {total}]")

    def excess(s_m: float) -> float:
        return pv_matrix * s_m + pv_fracture * h_map(s_m, matrix, fracture)[0] - wetting_volume

    if excess(0.0) >= 0.0:
        return 0.0, h_map(0.0, matrix, fracture)[0]
    if excess(1.0) <= 0.0:
        return 1.0, 1.0
    s_m = brentq(excess, 0.0, 1.0, xtol=1.0e-14)
    return s_m, h_map(s_m, matrix, fracture)[0]


def forced_production(record: SimulationRecord, pore_volume_time: float) -> pd.DataFrame:
    """Average matrix non-wetting saturation and non-wetting production against PVI."""
    steps = record.series_frame()
    if steps.empty:
        return pd.DataFrame(columns=["time_s", "pvi", "avg_matrix_sn", "produced_n_m3", "production_rate_n_m3_s"])
    matrix_pv = float(np.sum(record.cell_pore_volume[np.array([r == "matrix" for r in record.cell_region])]))
    time = steps["time_s"].to_numpy()
    produced = steps["produced_n_m3"].to_numpy()
    rate = np.diff(np.concatenate([[0.0], produced])) / steps["dt_s"].to_numpy()
    return pd.DataFrame(
        {
            "time_s": time,
            "pvi": time / pore_volume_time,
            "avg_matrix_sn": steps["matrix_nonwetting_m3"].to_numpy() / matrix_pv,
            "produced_n_m3": produced,
            "production_rate_n_m3_s": rate,
        }
    )


def truncation_terms(
    x: np.ndarray,
    saturation: np.ndarray,
    u_t: float,
    region: RockRegion,
    dx: float,
) -> pd.DataFrame:
    """
    Leading truncation-error terms of the PPU and IHU fluxes on a monotone
    profile segment.

    E_V = -(dx/2) d2(M_w)/dx2 u_T is shared by both schemes;
    E_C(IHU) = (k dx/2) [d2(D S_x)/dx2 - d(D S_xx)/dx] and
    E_C(PPU) = -E_C(IHU) + (k dx/2) d(M_w lambda_n Pc'' S_x^2)/dx.
    Derivatives are central differences, one-sided at the segment ends.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(saturation, dtype=float)
    if len(s) < 3:
        raise AnalysisError("truncation analysis needs at least three cells")
    steps = np.diff(s)
    if not (np.all(steps >= 0.0) or np.all(steps <= 0.0)):
        raise AnalysisError("saturation profile segment is not monotone")

    frac = tabulate(region.fractional_flow, s)[:, 0]
    diffusion = tabulate(region.capillary_diffusion, s)[:, 0]
    lam_n = tabulate(region.mobilities, s)[:, 2]
    pc2 = np.array([region.capillary.second_derivative(float(v)) for v in s])
    k = region.permeability

    s_x = np.gradient(s, x)
    s_xx = np.gradient(s_x, x)
    e_v = -0.5 * dx * np.gradient(np.gradient(frac, x), x) * u_t
    e_c_ihu = 0.5 * k * dx * (np.gradient(np.gradient(diffusion * s_x, x), x) - np.gradient(diffusion * s_xx, x))
    e_c_ppu = -e_c_ihu + 0.5 * k * dx * np.gradient(frac * lam_n * pc2 * s_x ** 2, x)
    return pd.DataFrame(
        {
            "x_m": x,
            "s_w": s,
            "e_v_ihu": e_v,
            "e_v_ppu": e_v.copy(),
            "e_c_ihu": e_c_ihu,
            "e_c_ppu": e_c_ppu,
            "e_vc_ihu": e_v + e_c_ihu,
            "e_vc_ppu": e_v + e_c_ppu,
        }
    )


def _pattern(f_w: float, f_n: float) -> str:
    if f_w * f_n < 0.0:
        return "w:L>R,n:R>L" if f_w > 0.0 else "w:R>L,n:L>R"
    if f_w == 0.0 and f_n == 0.0:
        return "none"
    return "cocurrent"


def flux_surface(scheme: Scheme, u_t: float, trans: float, region: RockRegion, resolution: int = 200) -> pd.DataFrame:
    """
    Wetting flux F_w(S_L, S_R) at fixed total flux on a resolution x
    resolution grid, with the countercurrent flag F_w F_n < 0.
    """
    if resolution < 2:
        raise AnalysisError("flux surface needs a resolution of at least 2")
    kernel = ihu_flux_at_total if scheme is Scheme.IHU_C else ppu_flux_at_total
    samples = np.linspace(0.0, 1.0, resolution)
    rows = []
    for s_left in samples:
        for s_right in samples:
            part = kernel(u_t, trans, 0.0, float(s_left), float(s_right), region)
            rows.append((s_left, s_right, part.w, part.n, part.w * part.n < 0.0, _pattern(part.w, part.n)))
    logger.debug(f"Sampled {len(rows)} flux values for scheme {scheme.value}")
    return pd.DataFrame(rows, columns=["s_left", "s_right", "f_w", "f_n", "countercurrent", "pattern"])
