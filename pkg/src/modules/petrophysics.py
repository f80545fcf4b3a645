"""
Saturation functions of the rock regions.

Relative permeabilities, the bounded matrix capillary-pressure curve and the
linear fracture curve, mobilities, the capillary diffusion coefficient and
its interval maximum, the extended capillary pressure and curve inversion.
All pressures are in Pa, viscosities in Pa.s and permeabilities in m^2.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Tuple

import numpy as np
from scipy.optimize import brentq

from ..exceptions import ConfigurationError, PressureRangeError, SaturationRangeError
from ..models.scenario import RegionKind

logger = logging.getLogger(__name__)

PSI_TO_PA = 6894.757
MD_TO_M2 = 9.869233e-16
CP_TO_PA_S = 1.0e-3
GRAVITY = 9.80665

# saturation samples used to locate the critical points of D
DIFFUSION_SCAN_POINTS = 10_001
_PATCH_BRACKET = 1.0e-6


def check_saturation(s: float) -> float:
    if not 0.0 <= s <= 1.0:
        raise SaturationRangeError(f"saturation {s!r} outside [0, 1]")
    return s


def check_saturations(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.size and not (np.all(s >= 0.0) and np.all(s <= 1.0)):
        bad = s[(s < 0.0) | (s > 1.0) | np.isnan(s)]
        raise SaturationRangeError(f"saturation {bad[0]!r} outside [0, 1]")
    return s


def tabulate(func: Callable[[float], Tuple[float, ...]], saturations: Iterable[float]) -> np.ndarray:
    """Evaluate a scalar curve function on many saturations, one row per sample."""
    return np.array([func(float(s)) for s in saturations], dtype=float)


@dataclass(frozen=True)
class RelPermCurve:
    """kr(S) = S**exponent on the phase's own saturation."""

    exponent: int

    def __post_init__(self):
        if self.exponent < 1:
            raise ConfigurationError(f"relative permeability exponent must be >= 1, got {self.exponent}")

    def rel_perm(self, s: float) -> Tuple[float, float]:
        check_saturation(s)
        e = self.exponent
        return s ** e, e * s ** (e - 1)

    def rel_perm_array(self, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        s = check_saturations(s)
        e = self.exponent
        return s ** e, e * s ** (e - 1)


class CapillaryCurve(ABC):
    """Strictly decreasing capillary pressure Pc(S) = p_n - p_w."""

    @property
    @abstractmethod
    def pc_max(self) -> float:
        """Pc(0)."""

    @property
    @abstractmethod
    def pc_min(self) -> float:
        """Pc(1)."""

    @abstractmethod
    def capillary_pressure(self, s: float) -> Tuple[float, float]:
        """Return (Pc, dPc/dS)."""

    @abstractmethod
    def second_derivative(self, s: float) -> float:
        """Return d2Pc/dS2."""

    @abstractmethod
    def capillary_pressure_array(self, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Elementwise (Pc, dPc/dS)."""

    @abstractmethod
    def second_derivative_array(self, s: np.ndarray) -> np.ndarray:
        """Elementwise d2Pc/dS2."""

    @abstractmethod
    def inverse_pc(self, target: float) -> float:
        """Return the saturation where Pc equals ``target``."""

    def _check_target(self, target: float) -> None:
        slack = 1.0e-12 * max(PSI_TO_PA, abs(target))
        if not (self.pc_min - slack <= target <= self.pc_max + slack):
            raise PressureRangeError(
                f"capillary pressure {target!r} Pa outside [{self.pc_min!r}, {self.pc_max!r}]"
            )


@dataclass(frozen=True)
class FractureCapillaryCurve(CapillaryCurve):
    """Linear curve Pc = p_max (1 - S)."""

    p_max: float

    def __post_init__(self):
        if not self.p_max > 0.0:
            raise ConfigurationError(f"fracture p_max must be positive, got {self.p_max}")

    @property
    def pc_max(self) -> float:
        return self.p_max

    @property
    def pc_min(self) -> float:
        return 0.0

    def capillary_pressure(self, s: float) -> Tuple[float, float]:
        check_saturation(s)
        return self.p_max * (1.0 - s), -self.p_max

    def second_derivative(self, s: float) -> float:
        check_saturation(s)
        return 0.0

    def capillary_pressure_array(self, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        s = check_saturations(s)
        return self.p_max * (1.0 - s), np.full_like(s, -self.p_max)

    def second_derivative_array(self, s: np.ndarray) -> np.ndarray:
        return np.zeros_like(check_saturations(s))

    def inverse_pc(self, target: float) -> float:
        self._check_target(target)
        return min(1.0, max(0.0, 1.0 - target / self.p_max))


@dataclass(frozen=True)
class MatrixCapillaryCurve(CapillaryCurve):
    """
    Power-law matrix curve pe (S^(-1/theta) - (1-S)^(-1/theta)) bounded by
    quadratic patches: a S^2 + b S + pc_max below ``s_minus`` and
    c (1-S)^2 + d (1-S) + pc_min above ``s_plus``. Build with
    :func:`fit_pc_bounds`.
    """

    entry_pressure: float
    theta: float
    bound_high: float
    bound_low: float
    a: float
    b: float
    s_minus: float
    c: float
    d: float
    s_plus: float

    @property
    def pc_max(self) -> float:
        return self.bound_high

    @property
    def pc_min(self) -> float:
        return self.bound_low

    def capillary_pressure(self, s: float) -> Tuple[float, float]:
        check_saturation(s)
        if s <= self.s_minus:
            return (self.a * s + self.b) * s + self.bound_high, 2.0 * self.a * s + self.b
        if s >= self.s_plus:
            u = 1.0 - s
            return (self.c * u + self.d) * u + self.bound_low, -(2.0 * self.c * u + self.d)
        return (
            _power_law(self.entry_pressure, self.theta, s),
            _power_law_d1(self.entry_pressure, self.theta, s),
        )

    def second_derivative(self, s: float) -> float:
        check_saturation(s)
        if s <= self.s_minus:
            return 2.0 * self.a
        if s >= self.s_plus:
            return 2.0 * self.c
        return _power_law_d2(self.entry_pressure, self.theta, s)

    def capillary_pressure_array(self, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        s = check_saturations(s)
        low, high = s <= self.s_minus, s >= self.s_plus
        mid = ~(low | high)
        pc, dpc = np.empty_like(s), np.empty_like(s)
        pc[low] = (self.a * s[low] + self.b) * s[low] + self.bound_high
        dpc[low] = 2.0 * self.a * s[low] + self.b
        u = 1.0 - s[high]
        pc[high] = (self.c * u + self.d) * u + self.bound_low
        dpc[high] = -(2.0 * self.c * u + self.d)
        pc[mid] = _power_law(self.entry_pressure, self.theta, s[mid])
        dpc[mid] = _power_law_d1(self.entry_pressure, self.theta, s[mid])
        return pc, dpc

    def second_derivative_array(self, s: np.ndarray) -> np.ndarray:
        s = check_saturations(s)
        low, high = s <= self.s_minus, s >= self.s_plus
        mid = ~(low | high)
        d2 = np.empty_like(s)
        d2[low] = 2.0 * self.a
        d2[high] = 2.0 * self.c
        d2[mid] = _power_law_d2(self.entry_pressure, self.theta, s[mid])
        return d2

    def inverse_pc(self, target: float) -> float:
        self._check_target(target)
        if target >= self.bound_high:
            return 0.0
        if target <= self.bound_low:
            return 1.0
        s = brentq(lambda x: self.capillary_pressure(x)[0] - target, 0.0, 1.0, xtol=1.0e-15, rtol=4.0 * np.finfo(float).eps)
        # Newton polish, kept only while it improves the residual
        best = abs(self.capillary_pressure(s)[0] - target)
        for _ in range(3):
            pc, dpc = self.capillary_pressure(s)
            candidate = s - (pc - target) / dpc
            if not 0.0 <= candidate <= 1.0:
                break
            error = abs(self.capillary_pressure(candidate)[0] - target)
            if error >= best:
                break
            s, best = candidate, error
        return s


def _power_law(pe: float, theta: float, s: float) -> float:
    e = -1.0 / theta
    return pe * (s ** e - (1.0 - s) ** e)


def _power_law_d1(pe: float, theta: float, s: float) -> float:
    e = -1.0 / theta
    return -(pe / theta) * (s ** (e - 1.0) + (1.0 - s) ** (e - 1.0))


def _power_law_d2(pe: float, theta: float, s: float) -> float:
    e = -1.0 / theta
    return (pe / theta) * (1.0 / theta + 1.0) * (s ** (e - 2.0) - (1.0 - s) ** (e - 2.0))


def fit_pc_bounds(pe: float, theta: float, pc_max: float, pc_min: float) -> MatrixCapillaryCurve:
    """
    Bound the power-law curve with value, slope and curvature matching
    quadratic patches so that Pc(0) = pc_max and Pc(1) = pc_min.

    Args:
        pe: Entry pressure [Pa]
        theta: Pore-size exponent (> 1)
        pc_max: Upper bound [Pa]
        pc_min: Lower bound [Pa]

    Returns:
        MatrixCapillaryCurve with both patches fitted
    """
    if not pe > 0.0:
        raise ConfigurationError(f"entry pressure must be positive, got {pe}")
    if not theta > 1.0:
        raise ConfigurationError(f"theta must exceed 1, got {theta}")
    if not pc_min < 0.0 < pc_max:
        raise ConfigurationError(f"need pc_min < 0 < pc_max, got [{pc_min}, {pc_max}]")

    def left(s: float) -> float:
        d1, d2 = _power_law_d1(pe, theta, s), _power_law_d2(pe, theta, s)
        return -0.5 * d2 * s * s + d1 * s + pc_max - _power_law(pe, theta, s)

    def right(s: float) -> float:
        u = 1.0 - s
        d1, d2 = _power_law_d1(pe, theta, s), _power_law_d2(pe, theta, s)
        return -0.5 * d2 * u * u - d1 * u + pc_min - _power_law(pe, theta, s)

    lo, hi = _PATCH_BRACKET, 0.5 - _PATCH_BRACKET
    try:
        s_minus = brentq(left, lo, hi, xtol=1.0e-15)
        s_plus = brentq(right, 1.0 - hi, 1.0 - lo, xtol=1.0e-15)
    except ValueError as e:
        logger.error(f"No patch switch saturation for pe={pe}, theta={theta}, bounds=[{pc_min}, {pc_max}]: {e}")
        raise ConfigurationError(
            f"capillary bounds [{pc_min}, {pc_max}] Pa cannot be matched by the curve (pe={pe}, theta={theta})"
        ) from e

    d2_minus = _power_law_d2(pe, theta, s_minus)
    a = 0.5 * d2_minus
    b = _power_law_d1(pe, theta, s_minus) - d2_minus * s_minus

    u_plus = 1.0 - s_plus
    d2_plus = _power_law_d2(pe, theta, s_plus)
    c = 0.5 * d2_plus
    d = -_power_law_d1(pe, theta, s_plus) - d2_plus * u_plus

    logger.debug(f"Fitted capillary bounds: s_minus={s_minus:.6g}, s_plus={s_plus:.6g}")
    return MatrixCapillaryCurve(
        entry_pressure=pe,
        theta=theta,
        bound_high=pc_max,
        bound_low=pc_min,
        a=a,
        b=b,
        s_minus=s_minus,
        c=c,
        d=d,
        s_plus=s_plus,
    )


@dataclass(frozen=True)
class FluidProperties:
    viscosity_w: float
    viscosity_n: float
    density_w: float
    density_n: float
    gravity: float = GRAVITY

    def __post_init__(self):
        if self.viscosity_w <= 0.0 or self.viscosity_n <= 0.0:
            raise ConfigurationError("viscosities must be positive")

    @property
    def buoyancy(self) -> float:
        """(rho_n - rho_w) g, multiplied by a depth difference in the flux kernels."""
        return (self.density_n - self.density_w) * self.gravity


@dataclass
class RockRegion:
    """
    Saturation functions, porosity and permeability of one rock region
    together with the fluid viscosities they are combined with.

    The interior critical points of the capillary diffusion coefficient are
    located once at construction; interval maxima are then read from them.
    """

    region_id: RegionKind
    relperm_w: RelPermCurve
    relperm_n: RelPermCurve
    capillary: CapillaryCurve
    porosity: float
    permeability: float
    fluids: FluidProperties
    critical_points: List[float] = field(init=False, repr=False)
    critical_values: List[float] = field(init=False, repr=False)
    d_max: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.porosity <= 1.0:
            raise ConfigurationError(f"porosity must lie in (0, 1], got {self.porosity}")
        if not self.permeability > 0.0:
            raise ConfigurationError(f"permeability must be positive, got {self.permeability}")
        self.critical_points = self._locate_diffusion_maxima()
        self.critical_values = [self.capillary_diffusion(s)[0] for s in self.critical_points]
        self.d_max = max([0.0] + self.critical_values)
        logger.debug(
            f"{self.region_id.value} region: D_max={self.d_max:.6g} at {len(self.critical_points)} critical point(s)"
        )

    def mobilities(self, s: float) -> Tuple[float, float, float, float]:
        """Return (lambda_w, dlambda_w/dS, lambda_n, dlambda_n/dS), derivatives in S = S_w."""
        kr_w, dkr_w = self.relperm_w.rel_perm(s)
        kr_n, dkr_n = self.relperm_n.rel_perm(1.0 - s)
        mu_w, mu_n = self.fluids.viscosity_w, self.fluids.viscosity_n
        return kr_w / mu_w, dkr_w / mu_w, kr_n / mu_n, -dkr_n / mu_n

    def mobilities_array(self, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        kr_w, dkr_w = self.relperm_w.rel_perm_array(s)
        kr_n, dkr_n = self.relperm_n.rel_perm_array(1.0 - np.asarray(s, dtype=float))
        mu_w, mu_n = self.fluids.viscosity_w, self.fluids.viscosity_n
        return kr_w / mu_w, dkr_w / mu_w, kr_n / mu_n, -dkr_n / mu_n

    def fractional_flow(self, s: float) -> Tuple[float, float]:
        """Return (lambda_w / lambda_T, derivative)."""
        lw, dlw, ln, dln = self.mobilities(s)
        lt = lw + ln
        assert lt > 0.0, f"no mobile phase at S={s!r} in the {self.region_id.value} region"
        return lw / lt, (dlw * ln - lw * dln) / (lt * lt)

    def fractional_flow_array(self, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        lw, dlw, ln, dln = self.mobilities_array(s)
        lt = lw + ln
        assert np.all(lt > 0.0), f"no mobile phase somewhere in the {self.region_id.value} region"
        return lw / lt, (dlw * ln - lw * dln) / (lt * lt)

    def capillary_pressure(self, s: float) -> Tuple[float, float]:
        return self.capillary.capillary_pressure(s)

    def capillary_pressure_array(self, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.capillary.capillary_pressure_array(s)

    def inverse_pc(self, target: float) -> float:
        return self.capillary.inverse_pc(target)

    def capillary_diffusion(self, s: float) -> Tuple[float, float]:
        """Return (D, dD/dS) with D = -(lambda_w lambda_n / lambda_T) dPc/dS."""
        lw, dlw, ln, dln = self.mobilities(s)
        _, dpc = self.capillary.capillary_pressure(s)
        d2pc = self.capillary.second_derivative(s)
        lt = lw + ln
        f = lw * ln / lt
        df = (dlw * ln + lw * dln) / lt - lw * ln * (dlw + dln) / (lt * lt)
        return -f * dpc, -(df * dpc + f * d2pc)

    def capillary_diffusion_array(self, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        lw, dlw, ln, dln = self.mobilities_array(s)
        _, dpc = self.capillary.capillary_pressure_array(s)
        d2pc = self.capillary.second_derivative_array(s)
        lt = lw + ln
        f = lw * ln / lt
        df = (dlw * ln + lw * dln) / lt - lw * ln * (dlw + dln) / (lt * lt)
        return -f * dpc, -(df * dpc + f * d2pc)

    def diffusion_max_on_interval_array(
        self, lo: np.ndarray, hi: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Elementwise :meth:`diffusion_max_on_interval` with the same tie rules."""
        lo, hi = check_saturations(lo), check_saturations(hi)
        if np.any(lo > hi):
            raise ValueError("empty saturation interval")
        d_lo, dd_lo = self.capillary_diffusion_array(lo)
        d_hi, dd_hi = self.capillary_diffusion_array(hi)
        degenerate = lo == hi

        best, g_lo, g_hi = d_lo.copy(), dd_lo.copy(), np.zeros_like(lo)
        take = ~degenerate & (d_hi > best)
        best = np.where(take, d_hi, best)
        g_lo = np.where(take, 0.0, g_lo)
        g_hi = np.where(take, dd_hi, g_hi)
        for s_c, d_c in zip(self.critical_points, self.critical_values):
            take = ~degenerate & (lo < s_c) & (s_c < hi) & (d_c > best)
            best = np.where(take, d_c, best)
            g_lo = np.where(take, 0.0, g_lo)
            g_hi = np.where(take, 0.0, g_hi)

        rising = dd_lo >= 0.0
        g_lo = np.where(degenerate, np.where(rising, 0.0, dd_lo), g_lo)
        g_hi = np.where(degenerate, np.where(rising, dd_lo, 0.0), g_hi)
        return best, g_lo, g_hi

    def diffusion_max_on_interval(self, lo: float, hi: float) -> Tuple[float, float, float]:
        """
        Maximum of D over [lo, hi].

        Returns:
            (D_max, dD_max/dlo, dD_max/dhi); both derivatives vanish when the
            maximum sits at an interior critical point
        """
        check_saturation(lo)
        check_saturation(hi)
        if lo > hi:
            raise ValueError(f"empty saturation interval [{lo}, {hi}]")
        d_lo, dd_lo = self.capillary_diffusion(lo)
        if lo == hi:
            return (d_lo, 0.0, dd_lo) if dd_lo >= 0.0 else (d_lo, dd_lo, 0.0)

        best = (d_lo, dd_lo, 0.0)
        d_hi, dd_hi = self.capillary_diffusion(hi)
        if d_hi > best[0]:
            best = (d_hi, 0.0, dd_hi)
        for s, d_crit in zip(self.critical_points, self.critical_values):
            if lo < s < hi and d_crit > best[0]:
                best = (d_crit, 0.0, 0.0)
        return best

    def _locate_diffusion_maxima(self) -> List[float]:
        grid = np.linspace(0.0, 1.0, DIFFUSION_SCAN_POINTS)
        slopes = self.capillary_diffusion_array(grid)[1]
        points = []
        for k in np.nonzero((slopes[:-1] > 0.0) & (slopes[1:] <= 0.0))[0]:
            if slopes[k + 1] == 0.0:
                points.append(float(grid[k + 1]))
                continue
            points.append(brentq(lambda s: self.capillary_diffusion(s)[1], grid[k], grid[k + 1], xtol=1.0e-15))
        return points


def extended_pc(this: RockRegion, s: float, other: RockRegion) -> float:
    """Capillary pressure of ``this`` clamped to the range of ``other``."""
    pc, _ = this.capillary_pressure(s)
    return min(other.capillary.pc_max, max(pc, other.capillary.pc_min))


def matrix_region(
    relperm_exponent: int,
    pe: float,
    theta: float,
    pc_max: float,
    pc_min: float,
    porosity: float,
    permeability: float,
    fluids: FluidProperties,
) -> RockRegion:
    return RockRegion(
        region_id=RegionKind.MATRIX,
        relperm_w=RelPermCurve(relperm_exponent),
        relperm_n=RelPermCurve(relperm_exponent),
        capillary=fit_pc_bounds(pe, theta, pc_max, pc_min),
        porosity=porosity,
        permeability=permeability,
        fluids=fluids,
    )


def fracture_region(
    relperm_exponent: int, p_max: float, porosity: float, permeability: float, fluids: FluidProperties
) -> RockRegion:
    return RockRegion(
        region_id=RegionKind.FRACTURE,
        relperm_w=RelPermCurve(relperm_exponent),
        relperm_n=RelPermCurve(relperm_exponent),
        capillary=FractureCapillaryCurve(p_max),
        porosity=porosity,
        permeability=permeability,
        fluids=fluids,
    )
