"""
Fully implicit time stepping.

Two mass balances per cell, unknowns interleaved as [p_0, S_0, p_1, S_1, ...]
with equations [wetting, non-wetting] per cell:

    R_w,i = PV_i (S_i - S_i^old) + dt (sum of F_w leaving i - q_w,i)
    R_n,i = -PV_i (S_i - S_i^old) + dt (sum of F_n leaving i - q_n,i)

The Jacobian couples neighbouring cells only, so it is banded with three
sub- and super-diagonals and is factorised with LAPACK's banded LU.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import tqdm
from scipy.linalg import LinAlgError, solve_banded
from tenacity import RetryCallState, Retrying, retry_if_exception_type, stop_after_attempt
from tqdm.contrib.logging import logging_redirect_tqdm

from ..exceptions import (
    LinearSolveError,
    NewtonConvergenceError,
    SimulationAborted,
    SolverError,
)
from ..models.scenario import RegionKind, Scheme
from ..models.simulation import (
    InterfaceSnapshot,
    NewtonConfig,
    SimulationRecord,
    Snapshot,
    State,
    StepStats,
    WellKind,
    WellSpec,
)
from .flux import FaceFluxes, FluxEval, ihu_flux_faces, ppu_flux, ppu_flux_faces, total_velocity_ppu
from .grid import Grid1D
from .interface import InterfaceSolver, InterfaceSolveResult
from .petrophysics import PSI_TO_PA, RockRegion

logger = logging.getLogger(__name__)

BANDWIDTH = 3


class BandedMatrix:
    """Square matrix stored in LAPACK banded layout: data[upper + r - c, c] = A[r, c]."""

    def __init__(self, n: int, lower: int = BANDWIDTH, upper: int = BANDWIDTH):
        self.n = n
        self.lower = lower
        self.upper = upper
        self.data = np.zeros((lower + upper + 1, n))

    def add(self, row: int, col: int, value: float) -> None:
        self.data[self.upper + row - col, col] += value

    def add_many(self, rows: np.ndarray, cols: np.ndarray, values: np.ndarray) -> None:
        """Accumulate entries; repeated (row, col) pairs add up."""
        np.add.at(self.data, (self.upper + rows - cols, cols), values)

    def clear_row(self, row: int) -> None:
        for col in range(max(0, row - self.lower), min(self.n, row + self.upper + 1)):
            self.data[self.upper + row - col, col] = 0.0

    def _row_index(self) -> np.ndarray:
        return np.arange(-self.upper, self.lower + 1)[:, None] + np.arange(self.n)[None, :]

    def scale_rows(self, factors: np.ndarray) -> None:
        rows = self._row_index()
        valid = (rows >= 0) & (rows < self.n)
        self.data[valid] *= factors[rows[valid]]

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n, self.n))
        rows = self._row_index()
        cols = np.broadcast_to(np.arange(self.n)[None, :], rows.shape)
        valid = (rows >= 0) & (rows < self.n)
        dense[rows[valid], cols[valid]] = self.data[valid]
        return dense

    @classmethod
    def from_dense(cls, dense: np.ndarray, lower: int = BANDWIDTH, upper: int = BANDWIDTH) -> "BandedMatrix":
        n = dense.shape[0]
        matrix = cls(n, lower, upper)
        for r in range(n):
            for c in range(max(0, r - lower), min(n, r + upper + 1)):
                matrix.data[upper + r - c, c] = dense[r, c]
        return matrix


def linear_solve(jacobian: BandedMatrix, rhs: np.ndarray) -> np.ndarray:
    """Banded LU solve of J x = rhs."""
    try:
        solution = solve_banded((jacobian.lower, jacobian.upper), jacobian.data, rhs)
    except (LinAlgError, ValueError) as e:
        logger.error(f"Banded solve failed: {e}")
        raise LinearSolveError(str(e)) from e
    if not np.all(np.isfinite(solution)):
        raise LinearSolveError("non-finite entries in the Newton update")
    return solution


@dataclass
class WellTerms:
    q_w: np.ndarray
    q_n: np.ndarray
    dq_w_dp: np.ndarray
    dq_w_ds: np.ndarray
    dq_n_dp: np.ndarray
    dq_n_ds: np.ndarray


def apply_wells(
    state: State, wells: Sequence[WellSpec], cell_regions: Sequence[RockRegion], datum: float = 0.0
) -> WellTerms:
    """Source terms per cell, positive for injection. State pressures are measured from ``datum``."""
    n = state.n_cells
    terms = WellTerms(*(np.zeros(n) for _ in range(6)))
    for well in wells:
        c = well.cell
        if well.kind is WellKind.RATE_INJECTOR:
            terms.q_w[c] += well.rate
            continue
        lw, dlw, ln, dln = cell_regions[c].mobilities(float(state.saturation[c]))
        drawdown = state.pressure[c] - (well.bottomhole_pressure - datum)
        wi = well.well_index
        terms.q_w[c] -= wi * lw * drawdown
        terms.q_n[c] -= wi * ln * drawdown
        terms.dq_w_dp[c] -= wi * lw
        terms.dq_n_dp[c] -= wi * ln
        terms.dq_w_ds[c] -= wi * dlw * drawdown
        terms.dq_n_ds[c] -= wi * dln * drawdown
    return terms


@dataclass
class Assembly:
    residual: np.ndarray
    jacobian: BandedMatrix
    interfaces: Dict[int, InterfaceSolveResult]
    wells: WellTerms


@dataclass(frozen=True)
class FaceGroup:
    """Interior faces of one region, evaluated together."""

    region: RockRegion
    left: np.ndarray
    right: np.ndarray
    trans: np.ndarray
    dz: np.ndarray


class Simulator:
    """
    Assembles and solves the discrete mass balances on one grid with one
    flux scheme.

    Args:
        grid: Grid with region assignment and transmissibilities
        regions: Saturation functions per region kind
        scheme: Flux scheme
        wells: Sources and sinks
        newton: Newton and time-step controls
        reference_pressure: Level pinned in the last cell when no producer fixes it
    """

    def __init__(
        self,
        grid: Grid1D,
        regions: Dict[RegionKind, RockRegion],
        scheme: Scheme,
        wells: Optional[List[WellSpec]] = None,
        newton: Optional[NewtonConfig] = None,
        reference_pressure: float = 3000.0 * PSI_TO_PA,
    ):
        self.grid = grid
        self.regions = regions
        self.scheme = scheme
        self.wells = list(wells or [])
        self.newton = newton or NewtonConfig()
        self.reference_pressure = reference_pressure
        self.cell_regions = [regions[r] for r in grid.cell_region]
        producers = [w for w in self.wells if w.kind is WellKind.PRESSURE_PRODUCER]
        self.pinned = not producers
        # Newton works on pressures measured from this level so that well
        # drawdowns keep their precision next to absolute reservoir pressures
        self.datum = producers[0].bottomhole_pressure if producers else reference_pressure
        self.face_groups = self._group_faces()
        self.boundary_faces = [f for f in grid.interfaces if f.is_region_boundary]
        self.interface_solver: Optional[InterfaceSolver] = None
        if scheme.uses_interface_conditions and grid.region_boundaries:
            self.interface_solver = InterfaceSolver(
                regions[RegionKind.MATRIX],
                regions[RegionKind.FRACTURE],
                scheme,
                tolerance=self.newton.interface_tolerance,
                max_iterations=self.newton.interface_max_iterations,
            )
        for well in self.wells:
            if not 0 <= well.cell < grid.n_cells:
                raise ValueError(f"well cell {well.cell} outside the grid")

    def _group_faces(self) -> List[FaceGroup]:
        groups = []
        for kind, region in self.regions.items():
            faces = [f for f in self.grid.interfaces if not f.is_region_boundary and f.left_region is kind]
            if not faces:
                continue
            groups.append(
                FaceGroup(
                    region=region,
                    left=np.array([f.left for f in faces]),
                    right=np.array([f.right for f in faces]),
                    trans=np.array([f.transmissibility for f in faces]),
                    dz=np.array([f.dz for f in faces]),
                )
            )
        return groups

    def interface_flux(self, face, state: State, dt: float) -> Tuple[FluxEval, Optional[InterfaceSolveResult]]:
        """Flux over a region boundary: interface conditions, or plain PPU with each side's curves."""
        i, j = face.left, face.right
        p_i, p_j = float(state.pressure[i]), float(state.pressure[j])
        s_i, s_j = float(state.saturation[i]), float(state.saturation[j])
        region_i, region_j = self.cell_regions[i], self.cell_regions[j]
        if self.interface_solver is not None:
            u_t, du = total_velocity_ppu(face.transmissibility, face.dz, region_i, region_j, p_i, p_j, s_i, s_j)
            return self.interface_solver.flux(u_t, du, s_i, s_j, face, time_scale=dt)
        return ppu_flux(face.transmissibility, face.dz, region_i, region_j, p_i, p_j, s_i, s_j), None

    def _bulk_fluxes(self, group: FaceGroup, state: State) -> FaceFluxes:
        kernel = ihu_flux_faces if self.scheme is Scheme.IHU_C else ppu_flux_faces
        return kernel(
            group.trans,
            group.dz,
            group.region,
            state.pressure[group.left],
            state.pressure[group.right],
            state.saturation[group.left],
            state.saturation[group.right],
        )

    @staticmethod
    def _scatter(
        residual: np.ndarray, jac: BandedMatrix, left: np.ndarray, right: np.ndarray, fluxes: FaceFluxes, dt: float
    ) -> None:
        cols = (2 * left, 2 * right, 2 * left + 1, 2 * right + 1)
        for phase, value, derivs in ((0, fluxes.f_w, fluxes.df_w), (1, fluxes.f_n, fluxes.df_n)):
            np.add.at(residual, 2 * left + phase, dt * value)
            np.add.at(residual, 2 * right + phase, -dt * value)
            for col, d in zip(cols, derivs):
                jac.add_many(2 * left + phase, col, dt * d)
                jac.add_many(2 * right + phase, col, -dt * d)

    def assemble(self, state: State, state_old: State, dt: float, datum: float = 0.0) -> Assembly:
        """
        Residual and Jacobian of both mass balances of every cell.
        Pressures in ``state`` are measured from ``datum``.
        """
        n = self.grid.n_cells
        pv = self.grid.pore_volume
        residual = np.zeros(2 * n)
        jac = BandedMatrix(2 * n)

        ds = state.saturation - state_old.saturation
        residual[0::2] = pv * ds
        residual[1::2] = -pv * ds
        cells = np.arange(n)
        jac.add_many(2 * cells, 2 * cells + 1, pv)
        jac.add_many(2 * cells + 1, 2 * cells + 1, -pv)

        for group in self.face_groups:
            self._scatter(residual, jac, group.left, group.right, self._bulk_fluxes(group, state), dt)

        interfaces = {}
        for face in self.boundary_faces:
            flux, result = self.interface_flux(face, state, dt)
            if result is not None:
                interfaces[face.index] = result
            self._scatter(
                residual, jac, np.array([face.left]), np.array([face.right]), FaceFluxes.from_eval(flux), dt
            )

        wells = apply_wells(state, self.wells, self.cell_regions, datum)
        residual[0::2] -= dt * wells.q_w
        residual[1::2] -= dt * wells.q_n
        for c in np.nonzero(wells.dq_w_dp + wells.dq_w_ds + wells.dq_n_dp + wells.dq_n_ds)[0]:
            jac.add(2 * c, 2 * c, -dt * wells.dq_w_dp[c])
            jac.add(2 * c, 2 * c + 1, -dt * wells.dq_w_ds[c])
            jac.add(2 * c + 1, 2 * c, -dt * wells.dq_n_dp[c])
            jac.add(2 * c + 1, 2 * c + 1, -dt * wells.dq_n_ds[c])

        if self.pinned:
            # the phase equations sum to zero without a pressure boundary;
            # the last non-wetting balance becomes a pressure level
            last = n - 1
            row = 2 * last + 1
            residual[row] = pv[last] * (state.pressure[last] - (self.reference_pressure - datum)) / PSI_TO_PA
            jac.clear_row(row)
            jac.add(row, 2 * last, pv[last] / PSI_TO_PA)

        return Assembly(residual=residual, jacobian=jac, interfaces=interfaces, wells=wells)

    def residual_norm(self, residual: np.ndarray) -> float:
        return float(np.max(np.abs(residual) / np.repeat(self.grid.pore_volume, 2)))

    def newton_solve(self, state_old: State, dt: float, initial_guess: Optional[State] = None) -> Tuple[State, StepStats, Assembly]:
        """
        Newton iteration for one time step.

        Returns:
            Converged state, iteration statistics and the assembly at the
            converged state
        """
        cfg = self.newton
        state = (initial_guess or state_old).copy()
        state.pressure = state.pressure - self.datum
        row_scale = 1.0 / np.repeat(self.grid.pore_volume, 2)
        assembly = self.assemble(state, state_old, dt, self.datum)
        norm = self.residual_norm(assembly.residual)
        history = [norm]
        for iteration in range(cfg.max_iterations + 1):
            if not np.isfinite(norm):
                raise NewtonConvergenceError(f"non-finite residual at iteration {iteration}")
            imbalance = self.phase_imbalance(state_old, state, assembly, dt)
            if norm < cfg.tolerance and max(map(abs, imbalance)) <= cfg.balance_tolerance:
                stats = StepStats(
                    newton_iterations=iteration,
                    residual_history=history,
                    interface_iterations=max((r.iterations for r in assembly.interfaces.values()), default=0),
                    interface_clamps=sum(r.clamped for r in assembly.interfaces.values()),
                    imbalance_w=imbalance[0],
                    imbalance_n=imbalance[1],
                )
                state.pressure = state.pressure + self.datum
                return state, stats, assembly
            if iteration == cfg.max_iterations:
                break

            assembly.jacobian.scale_rows(row_scale)
            delta = linear_solve(assembly.jacobian, -assembly.residual * row_scale)
            dp, ds = delta[0::2], delta[1::2]
            largest = float(np.max(np.abs(ds)))
            if largest > cfg.max_saturation_change:
                factor = cfg.max_saturation_change / largest
                dp, ds = dp * factor, ds * factor
            state, assembly, norm = self._line_search(state, state_old, dt, dp, ds, norm)
            history.append(norm)
            logger.debug(f"Newton iteration {iteration}: scaled residual {history[-2]:.3e} -> {norm:.3e}")

        raise NewtonConvergenceError(
            f"no convergence in {cfg.max_iterations} iterations (last scaled residual {history[-1]:.3e})"
        )

    def _line_search(
        self, state: State, state_old: State, dt: float, dp: np.ndarray, ds: np.ndarray, norm: float
    ) -> Tuple[State, Assembly, float]:
        """
        Take the Newton update, halving it while it fails to lower the scaled
        residual. Upwind switches can make the full update cycle between two
        states; a shorter step lands between them. When no fraction helps the
        full update is kept.
        """
        full = None
        fraction = 1.0
        for _ in range(self.newton.line_search_cuts + 1):
            trial = State(state.pressure + fraction * dp, np.clip(state.saturation + fraction * ds, 0.0, 1.0))
            assembly = self.assemble(trial, state_old, dt, self.datum)
            trial_norm = self.residual_norm(assembly.residual)
            if full is None:
                full = (trial, assembly, trial_norm)
            if trial_norm < norm:
                if fraction < 1.0:
                    logger.debug(f"Line search accepted {fraction:g} of the Newton update")
                return trial, assembly, trial_norm
            fraction *= 0.5
        return full

    def phase_imbalance(self, state_old: State, state: State, assembly: Assembly, dt: float) -> Tuple[float, float]:
        """
        Accumulation minus well inflow of each phase over the step, relative
        to the total pore volume. Interface fluxes cancel in the sum.
        """
        pv = self.grid.pore_volume
        accumulated = float(np.sum(pv * (state.saturation - state_old.saturation)))
        total = float(np.sum(pv))
        return (
            (accumulated - dt * float(np.sum(assembly.wells.q_w))) / total,
            (-accumulated - dt * float(np.sum(assembly.wells.q_n))) / total,
        )

    def step(self, state: State, dt: float) -> Tuple[State, float, StepStats, Assembly]:
        """
        Advance one step, halving dt after every failed attempt.

        Returns:
            (new state, dt actually used, statistics, final assembly)
        """
        cfg = self.newton

        def log_cut(retry_state: RetryCallState) -> None:
            failed_dt = dt * cfg.dt_cut ** (retry_state.attempt_number - 1)
            logger.info(
                f"Time step {failed_dt:.4g} s failed ({retry_state.outcome.exception()}); "
                f"retrying with {failed_dt * cfg.dt_cut:.4g} s"
            )

        retrying = Retrying(
            stop=stop_after_attempt(cfg.max_cuts + 1),
            retry=retry_if_exception_type(SolverError),
            before_sleep=log_cut,
            sleep=lambda _: None,
            reraise=True,
        )
        for attempt in retrying:
            with attempt:
                cuts = attempt.retry_state.attempt_number - 1
                dt_try = dt * cfg.dt_cut ** cuts
                new_state, stats, assembly = self.newton_solve(state, dt_try)
        stats.cuts = cuts
        return new_state, dt_try, stats, assembly

    def initial_snapshot(self, state: State, time: float = 0.0) -> Snapshot:
        interfaces = []
        if self.interface_solver is not None:
            for face in self.grid.region_boundaries:
                _, result = self.interface_flux(face, state, self.newton.dt_init)
                interfaces.append(InterfaceSnapshot(face.index, result.s_matrix, result.s_fracture))
        return Snapshot(time=time, state=state.copy(), interfaces=interfaces)

    def run(
        self,
        state: State,
        t_start: float,
        t_end: float,
        report_times: Sequence[float],
        record: SimulationRecord,
        dt: Optional[float] = None,
        progress: bool = False,
        profile_times: Sequence[float] = (),
    ) -> Tuple[State, float]:
        """
        Advance from ``t_start`` to ``t_end``, landing exactly on every
        report time and appending snapshots and step rows to ``record``.
        Snapshots at ``profile_times`` are flagged as profiles.

        Returns:
            (final state, suggested next dt)
        """
        cfg = self.newton
        dt = dt or cfg.dt_init
        if not record.snapshots:
            record.snapshots.append(self.initial_snapshot(state, t_start))
        if t_end <= t_start:
            record.status = "completed"
            return state, dt
        reports = sorted(t for t in report_times if t_start < t <= t_end)
        if not reports or reports[-1] < t_end:
            reports.append(t_end)
        t = t_start
        latest = {}
        last = dict(record.steps[-1]) if record.steps else {}
        injected = last.get("injected_w_m3", 0.0)
        produced_w = last.get("produced_w_m3", 0.0)
        produced_n = last.get("produced_n_m3", 0.0)

        bar = tqdm.tqdm(total=t_end - t_start, desc="Simulating", unit="s", leave=False, disable=not progress)
        with logging_redirect_tqdm([logger]):
            for target in reports:
                while t < target * (1.0 - 1.0e-12):
                    dt_step = min(dt, target - t)
                    try:
                        new_state, dt_used, stats, assembly = self.step(state, dt_step)
                    except SolverError as e:
                        record.status = "aborted"
                        record.failure = f"t={t:.6g} s: {e}"
                        logger.error(f"Run aborted at t={t:.6g} s after {cfg.max_cuts} cuts: {e}")
                        bar.close()
                        raise SimulationAborted(record.failure, record=record) from e

                    t = target if abs(target - (t + dt_used)) <= 1.0e-12 * target else t + dt_used
                    injected += dt_used * float(np.sum(np.clip(assembly.wells.q_w, 0.0, None)))
                    produced_w += dt_used * float(-np.sum(np.clip(assembly.wells.q_w, None, 0.0)))
                    produced_n += dt_used * float(-np.sum(np.clip(assembly.wells.q_n, None, 0.0)))
                    record.steps.append(
                        self._step_row(t, dt_used, stats, new_state, injected, produced_w, produced_n)
                    )
                    state = new_state
                    bar.update(dt_used)
                    latest = assembly.interfaces
                    # the nominal dt grows even when a report time shortened the step
                    dt = dt_used if stats.cuts else min(dt * cfg.dt_growth, cfg.dt_max)

                record.snapshots.append(
                    Snapshot(
                        time=t,
                        state=state.copy(),
                        interfaces=[
                            InterfaceSnapshot(k, r.s_matrix, r.s_fracture)
                            for k, r in sorted(latest.items())
                        ],
                        profile=any(abs(t - p) <= 1.0e-9 * p for p in profile_times),
                    )
                )
        bar.close()
        record.status = "completed"
        return state, dt

    def _step_row(
        self,
        t: float,
        dt: float,
        stats: StepStats,
        state: State,
        injected: float,
        produced_w: float,
        produced_n: float,
    ) -> Dict[str, float]:
        pv = self.grid.pore_volume
        matrix = self.grid.cells_in(RegionKind.MATRIX)
        return {
            "time_s": t,
            "dt_s": dt,
            "newton_iterations": stats.newton_iterations,
            "cuts": stats.cuts,
            "interface_iterations": stats.interface_iterations,
            "interface_clamps": stats.interface_clamps,
            "imbalance_w": stats.imbalance_w,
            "imbalance_n": stats.imbalance_n,
            "matrix_nonwetting_m3": float(np.sum(pv[matrix] * (1.0 - state.saturation[matrix]))),
            "matrix_wetting_m3": float(np.sum(pv[matrix] * state.saturation[matrix])),
            "total_wetting_m3": float(np.sum(pv * state.saturation)),
            "injected_w_m3": injected,
            "produced_w_m3": produced_w,
            "produced_n_m3": produced_n,
        }
