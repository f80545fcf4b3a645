"""
Discrete interface conditions at matrix-fracture boundaries.

Each region-boundary face carries two interface saturations linked by the
extended capillary pressure condition, S_f = h(S_m). For a fixed total flux
and fixed cell saturations the matrix-side value solves the scalar flux
continuity residual

    R(d) = F_m(u_m, S_mcell, d) + F_f(-u_m, S_fcell, h(d)) = 0

where F_m, F_f are one-sided fluxes from each cell towards the face. R is
nonincreasing in d, so a bracketed Newton iteration on [0, 1] converges.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Tuple

from ..exceptions import ConfigurationError, InterfaceSolveError
from ..models.scenario import Scheme
from .flux import Derivatives, FluxEval, FluxPart, ihu_flux_at_total, ppu_flux_at_total
from .grid import GridInterface
from .petrophysics import RockRegion, extended_pc

logger = logging.getLogger(__name__)

OneSidedKernel = Callable[[float, float, float, float, float, RockRegion], FluxPart]

# relative floor on |dR/dd| below which the sensitivities are undefined
DEGENERATE_SLOPE = 1.0e-14
# smallest bracket the local solve keeps refining
MIN_BRACKET = 1.0e-15


@dataclass(frozen=True)
class InterfaceSolveResult:
    s_matrix: float
    s_fracture: float
    # one-sided wetting fluxes from the left and right cells towards the face
    f_w_left: float
    f_w_right: float
    residual: float
    iterations: int
    converged: bool
    clamped: bool
    # dS_m/d(u_m, S_mcell, S_fcell)
    dd_du: float = 0.0
    dd_dsm: float = 0.0
    dd_dsf: float = 0.0


@dataclass(frozen=True)
class _Residual:
    value: float
    slope: float
    matrix_side: FluxPart
    fracture_side: FluxPart
    s_fracture: float
    dh: float


def h_map(s_m: float, matrix: RockRegion, fracture: RockRegion) -> Tuple[float, float]:
    """
    Fracture interface saturation satisfying the extended capillary pressure
    condition with the matrix one, and its slope (zero on the clamped branches).
    """
    pc_m, dpc_m = matrix.capillary_pressure(s_m)
    s_f = fracture.inverse_pc(extended_pc(matrix, s_m, fracture))
    if fracture.capillary.pc_min < pc_m < fracture.capillary.pc_max:
        _, dpc_f = fracture.capillary_pressure(s_f)
        return s_f, dpc_m / dpc_f
    return s_f, 0.0


def one_sided_kernel(scheme: Scheme) -> OneSidedKernel:
    if scheme is Scheme.PPU_C:
        return ppu_flux_at_total
    if scheme is Scheme.IHU_C:
        return ihu_flux_at_total
    raise ConfigurationError(f"scheme {scheme.value} has no interface conditions")


class InterfaceSolver:
    """
    Local solver for the interface saturations of one scheme.

    Args:
        matrix: Region whose interface saturation is the unknown
        fracture: Region on the other side of the boundary
        scheme: PPU-C or IHU-C
        tolerance: Bound on |R| dt / (PV_i + PV_j)
        max_iterations: Newton/bisection iterations per solve
    """

    def __init__(
        self,
        matrix: RockRegion,
        fracture: RockRegion,
        scheme: Scheme,
        tolerance: float = 1.0e-12,
        max_iterations: int = 50,
    ):
        if not (
            matrix.capillary.pc_max > fracture.capillary.pc_max
            and matrix.capillary.pc_min < fracture.capillary.pc_min
        ):
            raise ConfigurationError(
                "matrix capillary range must strictly contain the fracture range "
                f"([{matrix.capillary.pc_min}, {matrix.capillary.pc_max}] vs "
                f"[{fracture.capillary.pc_min}, {fracture.capillary.pc_max}])"
            )
        self.matrix = matrix
        self.fracture = fracture
        self.scheme = scheme
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self._kernel = one_sided_kernel(scheme)

    def h_map(self, s_m: float) -> Tuple[float, float]:
        return h_map(s_m, self.matrix, self.fracture)

    def _residual(self, d: float, u_m: float, s_mc: float, s_fc: float, face: GridInterface, matrix_left: bool) -> _Residual:
        if matrix_left:
            t_m, dz_m, t_f, dz_f = face.half_trans_left, face.dz_left, face.half_trans_right, face.dz_right
        else:
            t_m, dz_m, t_f, dz_f = face.half_trans_right, face.dz_right, face.half_trans_left, face.dz_left
        s_f, dh = self.h_map(d)
        matrix_side = self._kernel(u_m, t_m, dz_m, s_mc, d, self.matrix)
        fracture_side = self._kernel(-u_m, t_f, dz_f, s_fc, s_f, self.fracture)
        return _Residual(
            value=matrix_side.w + fracture_side.w,
            slope=matrix_side.dsj + fracture_side.dsj * dh,
            matrix_side=matrix_side,
            fracture_side=fracture_side,
            s_fracture=s_f,
            dh=dh,
        )

    def solve(self, u_t: float, s_i: float, s_j: float, face: GridInterface, time_scale: float = 1.0) -> InterfaceSolveResult:
        """
        Solve for the interface saturations at a fixed total flux ``u_t``
        (positive from the left cell to the right cell).

        ``time_scale`` multiplies the residual before the tolerance check so
        that the criterion is expressed in saturation units.
        """
        matrix_left = face.left_region is self.matrix.region_id
        u_m = u_t if matrix_left else -u_t
        s_mc, s_fc = (s_i, s_j) if matrix_left else (s_j, s_i)
        scale = time_scale / face.pore_volume

        def evaluate(d: float) -> _Residual:
            return self._residual(d, u_m, s_mc, s_fc, face, matrix_left)

        lo, hi = 0.0, 1.0
        r_lo, r_hi = evaluate(lo), evaluate(hi)
        if r_lo.value < 0.0 or r_hi.value > 0.0:
            # no sign change; take the endpoint with the smaller residual
            d, r = (lo, r_lo) if abs(r_lo.value) <= abs(r_hi.value) else (hi, r_hi)
            logger.debug(
                f"Interface {face.index}: residual keeps its sign on [0, 1], clamped to S_m={d} "
                f"(R={r.value:.3e})"
            )
            return self._result(d, r, 0, converged=True, clamped=True, matrix_left=matrix_left)

        d = min(1.0, max(0.0, 0.5 * (s_i + s_j)))
        for iteration in range(1, self.max_iterations + 1):
            r = evaluate(d)
            if abs(r.value) * scale < self.tolerance:
                return self._result(d, r, iteration, converged=True, clamped=False, matrix_left=matrix_left)
            if r.value > 0.0:
                lo = d
            else:
                hi = d
            if hi - lo < MIN_BRACKET:
                return self._result(d, r, iteration, converged=True, clamped=False, matrix_left=matrix_left)
            step = d - r.value / r.slope if r.slope < 0.0 else None
            d = step if step is not None and lo < step < hi else 0.5 * (lo + hi)

        r = evaluate(d)
        logger.warning(
            f"Interface {face.index}: no convergence after {self.max_iterations} iterations "
            f"(scaled residual {abs(r.value) * scale:.3e})"
        )
        return self._result(d, r, self.max_iterations, converged=False, clamped=False, matrix_left=matrix_left)

    def _result(self, d: float, r: _Residual, iterations: int, converged: bool, clamped: bool, matrix_left: bool) -> InterfaceSolveResult:
        left, right = (r.matrix_side, r.fracture_side) if matrix_left else (r.fracture_side, r.matrix_side)
        dd_du = dd_dsm = dd_dsf = 0.0
        if not clamped:
            dd_du, dd_dsm, dd_dsf = interface_sensitivities(r)
        return InterfaceSolveResult(
            s_matrix=d,
            s_fracture=r.s_fracture,
            f_w_left=left.w,
            f_w_right=right.w,
            residual=r.value,
            iterations=iterations,
            converged=converged,
            clamped=clamped,
            dd_du=dd_du,
            dd_dsm=dd_dsm,
            dd_dsf=dd_dsf,
        )

    def flux(
        self,
        u_t: float,
        du: Derivatives,
        s_i: float,
        s_j: float,
        face: GridInterface,
        time_scale: float = 1.0,
    ) -> Tuple[FluxEval, InterfaceSolveResult]:
        """
        Interface flux with derivatives for the global Jacobian.

        The flux value is the matrix-side one. Derivatives with respect to the
        left cell come from the left one-sided flux and those with respect to
        the right cell from the right one, each chained through the interface
        saturation sensitivities.
        """
        result = self.solve(u_t, s_i, s_j, face, time_scale)
        if not result.converged:
            raise InterfaceSolveError(f"interface {face.index} did not converge")

        matrix_left = face.left_region is self.matrix.region_id
        sigma = 1.0 if matrix_left else -1.0
        u_m = sigma * u_t
        s_mc, s_fc = (s_i, s_j) if matrix_left else (s_j, s_i)
        r = self._residual(result.s_matrix, u_m, s_mc, s_fc, face, matrix_left)

        # dd/d(p_i, p_j, S_i, S_j)
        dd = [result.dd_du * sigma * du[k] for k in range(4)]
        dd[2] += result.dd_dsm if matrix_left else result.dd_dsf
        dd[3] += result.dd_dsf if matrix_left else result.dd_dsm

        if matrix_left:
            left, right, dface_left, dface_right = r.matrix_side, r.fracture_side, 1.0, r.dh
        else:
            left, right, dface_left, dface_right = r.fracture_side, r.matrix_side, r.dh, 1.0

        f_w = r.matrix_side.w * sigma
        # left flux: F_ij = L(u, S_i, face_L)
        df_p_i = left.du * du[0] + left.dsj * dface_left * dd[0]
        df_s_i = left.du * du[2] + left.dsi + left.dsj * dface_left * dd[2]
        # right flux: F_ij = -R(-u, S_j, face_R)
        df_p_j = right.du * du[1] - right.dsj * dface_right * dd[1]
        df_s_j = right.du * du[3] - right.dsi - right.dsj * dface_right * dd[3]

        df_w = (df_p_i, df_p_j, df_s_i, df_s_j)
        df_n = tuple(a - b for a, b in zip(du, df_w))
        return FluxEval(f_w=f_w, f_n=u_t - f_w, df_w=df_w, df_n=df_n), result


def interface_sensitivities(r: _Residual) -> Tuple[float, float, float]:
    """
    Implicit-function derivatives of the matrix interface saturation with
    respect to (u_m, S_mcell, S_fcell).
    """
    scale = max(
        abs(r.matrix_side.dsi),
        abs(r.fracture_side.dsi),
        abs(r.matrix_side.du),
        abs(r.fracture_side.du),
        abs(r.slope),
    )
    if abs(r.slope) <= DEGENERATE_SLOPE * scale or r.slope == 0.0:
        raise InterfaceSolveError(f"degenerate interface residual slope {r.slope!r}")
    dr_du = r.matrix_side.du - r.fracture_side.du
    return -dr_du / r.slope, -r.matrix_side.dsi / r.slope, -r.fracture_side.dsi / r.slope
