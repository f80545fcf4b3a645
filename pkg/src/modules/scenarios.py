"""
Scenario drivers: configuration loading, unit conversion into simulator
objects, the spontaneous and forced imbibition runs, custom layered runs and
grid-refinement sweeps.
"""
import logging
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import yaml
from pydantic import ValidationError

from ..exceptions import AnalysisError, CapfluxError, ConfigurationError
from ..models.scenario import RegionKind, RelPermSet, ScenarioConfig, ScenarioKind, Scheme
from ..models.simulation import NewtonConfig, SimulationRecord, State, WellKind, WellSpec
from .analysis import (
    RecoverySeries,
    equilibrium_saturations,
    error_norms,
    forced_production,
    recovery_curve,
    steady_state_change,
    time_to_recovery,
)
from .grid import Grid1D, Layer, build_forced_grid, build_layered_grid, build_spontaneous_grid
from .petrophysics import (
    CP_TO_PA_S,
    GRAVITY,
    MD_TO_M2,
    PSI_TO_PA,
    FluidProperties,
    RockRegion,
    fracture_region,
    matrix_region,
)
from .reporting import write_run_outputs
from .solver import Simulator

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400.0
# extension windows past the nominal end grow the time by this factor
STEADY_STATE_WINDOW = 1.25


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    """
    Read a YAML scenario file, expanding ${ENV} references.

    Raises:
        ConfigurationError: missing file, YAML syntax or validation failure
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(os.path.expandvars(path.read_text())) or {}
    except yaml.YAMLError as e:
        logger.error(f"Error parsing {path}: {e}")
        raise ConfigurationError(f"cannot parse {path}: {e}") from e
    return parse_config(data, source=str(path))


def parse_config(data: dict, source: str = "<config>") -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        logger.error(f"Invalid configuration in {source}: {e}")
        raise ConfigurationError(f"invalid configuration in {source}:\n{e}") from e


def override_config(base: ScenarioConfig, source: str, **sections: dict) -> ScenarioConfig:
    """``base`` with partial section overrides, failing as a configuration error."""
    try:
        return base.with_overrides(**sections)
    except ValidationError as e:
        logger.error(f"Invalid configuration from {source}: {e}")
        raise ConfigurationError(f"invalid configuration from {source}:\n{e}") from e


def build_fluids(config: ScenarioConfig) -> FluidProperties:
    fluids = config.fluids
    return FluidProperties(
        viscosity_w=fluids.viscosity_w_cp * CP_TO_PA_S,
        viscosity_n=fluids.viscosity_n_cp * CP_TO_PA_S,
        density_w=fluids.density_w_kg_m3,
        density_n=fluids.density_n_kg_m3,
        gravity=GRAVITY if fluids.gravity else 0.0,
    )


def build_regions(config: ScenarioConfig) -> Dict[RegionKind, RockRegion]:
    """Matrix and fracture saturation functions in SI units."""
    fluids = build_fluids(config)
    m, f = config.rock.matrix, config.rock.fracture
    return {
        RegionKind.MATRIX: matrix_region(
            m.relperm.exponent,
            pe=m.entry_pressure_psi * PSI_TO_PA,
            theta=m.theta,
            pc_max=m.pc_max_psi * PSI_TO_PA,
            pc_min=m.pc_min_psi * PSI_TO_PA,
            porosity=m.porosity,
            permeability=m.permeability_md * MD_TO_M2,
            fluids=fluids,
        ),
        RegionKind.FRACTURE: fracture_region(
            f.relperm.exponent,
            p_max=f.pc_max_psi * PSI_TO_PA,
            porosity=f.porosity,
            permeability=f.permeability_md * MD_TO_M2,
            fluids=fluids,
        ),
    }


def build_plot_region(config: ScenarioConfig, kind: RegionKind = RegionKind.MATRIX) -> RockRegion:
    """Region with pressures in psi and viscosities in cP taken as plain numbers."""
    fluids = FluidProperties(
        viscosity_w=config.fluids.viscosity_w_cp,
        viscosity_n=config.fluids.viscosity_n_cp,
        density_w=config.fluids.density_w_kg_m3,
        density_n=config.fluids.density_n_kg_m3,
        gravity=0.0,
    )
    m, f = config.rock.matrix, config.rock.fracture
    if kind is RegionKind.MATRIX:
        return matrix_region(
            m.relperm.exponent, m.entry_pressure_psi, m.theta, m.pc_max_psi, m.pc_min_psi, m.porosity, 1.0, fluids
        )
    return fracture_region(f.relperm.exponent, f.pc_max_psi, f.porosity, 1.0, fluids)


def build_grid(config: ScenarioConfig) -> Grid1D:
    g, m, f = config.grid, config.rock.matrix, config.rock.fracture
    k_m, k_f = m.permeability_md * MD_TO_M2, f.permeability_md * MD_TO_M2
    kind = config.scenario.kind
    if kind is ScenarioKind.SPONTANEOUS:
        return build_spontaneous_grid(
            g.n_matrix,
            g.n_fracture or g.n_matrix,
            g.length_m,
            k_m,
            k_f,
            m.porosity,
            f.porosity,
            fracture_pv_multiplier=g.fracture_pv_multiplier,
            area=g.area_m2,
        )
    if kind is ScenarioKind.FORCED:
        return build_forced_grid(g.n_matrix, g.length_m, k_m, k_f, m.porosity, f.porosity, g.tilt_deg, g.area_m2)
    rock = {RegionKind.MATRIX: (k_m, m.porosity), RegionKind.FRACTURE: (k_f, f.porosity)}
    layers = [
        Layer(seg.region, seg.length_m, seg.cells, *rock[seg.region], pv_multiplier=seg.pore_volume_multiplier)
        for seg in g.segments
    ]
    return build_layered_grid(layers, area=g.area_m2, tilt_deg=g.tilt_deg)


def initial_state(config: ScenarioConfig, grid: Grid1D) -> State:
    kind = config.scenario.kind
    if kind is ScenarioKind.SPONTANEOUS:
        by_region = {RegionKind.MATRIX: 0.0, RegionKind.FRACTURE: 1.0}
        saturation = np.array([by_region[r] for r in grid.cell_region])
    elif kind is ScenarioKind.FORCED:
        by_region = {RegionKind.MATRIX: 0.5, RegionKind.FRACTURE: 0.97}
        saturation = np.array([by_region[r] for r in grid.cell_region])
    else:
        saturation = np.concatenate([[seg.initial_saturation] * seg.cells for seg in config.grid.segments])
    pressure = np.full(grid.n_cells, config.wells.producer_bhp_psi * PSI_TO_PA)
    return State(pressure=pressure, saturation=saturation.astype(float))


def build_wells(config: ScenarioConfig, grid: Grid1D) -> List[WellSpec]:
    """Injector in the leftmost cell and producer in the rightmost one (forced runs only)."""
    if config.scenario.kind is not ScenarioKind.FORCED:
        return []
    last = grid.n_cells - 1
    well_index = config.wells.well_index_multiplier * grid.cell_perm[last] * grid.area / grid.cell_width[last]
    return [
        WellSpec(WellKind.RATE_INJECTOR, 0, rate=config.wells.injection_rate_m3_day / SECONDS_PER_DAY),
        WellSpec(
            WellKind.PRESSURE_PRODUCER,
            last,
            bottomhole_pressure=config.wells.producer_bhp_psi * PSI_TO_PA,
            well_index=well_index,
        ),
    ]


def newton_config(config: ScenarioConfig, time_unit: float) -> NewtonConfig:
    t, n = config.time, config.newton
    return NewtonConfig(
        tolerance=n.tolerance,
        max_iterations=n.max_iterations,
        max_saturation_change=n.max_saturation_change,
        max_cuts=n.max_cuts,
        line_search_cuts=n.line_search_cuts,
        balance_tolerance=n.balance_tolerance,
        dt_init=t.dt_init * time_unit,
        dt_max=t.dt_max * time_unit,
        dt_growth=t.dt_growth,
        dt_cut=t.dt_cut,
        interface_tolerance=config.interface.tolerance,
        interface_max_iterations=config.interface.max_iterations,
    )


def sample_times(config: ScenarioConfig) -> np.ndarray:
    """Log-spaced sampling times plus the profile report times, in run units."""
    t = config.time
    samples = np.logspace(math.log10(t.first_sample), math.log10(t.end), t.n_samples)
    return np.unique(np.concatenate([samples, [r for r in t.report if r <= t.end]]))


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    grid: Grid1D
    regions: Dict[RegionKind, RockRegion]
    record: SimulationRecord
    time_unit: float
    recovery: Optional[RecoverySeries] = None
    production: Optional[pd.DataFrame] = None
    wall_time_s: float = 0.0

    @property
    def t80(self) -> Optional[float]:
        if self.recovery is None:
            return None
        return time_to_recovery(self.recovery, 80.0)


def _new_record(grid: Grid1D, config: ScenarioConfig, time_unit: float) -> SimulationRecord:
    record = SimulationRecord(
        cell_center=grid.cell_center,
        cell_region=[r.value for r in grid.cell_region],
        cell_pore_volume=grid.pore_volume,
    )
    record.metadata.update(
        {
            "scenario": config.scenario.name,
            "kind": config.scenario.kind.value,
            "scheme": config.scenario.scheme.value,
            "n_cells": grid.n_cells,
            "time_unit_s": time_unit,
        }
    )
    return record


def _setup(config: ScenarioConfig, time_unit_of: Callable[[Grid1D, Dict[RegionKind, RockRegion]], float]):
    regions = build_regions(config)
    grid = build_grid(config)
    time_unit = time_unit_of(grid, regions)
    simulator = Simulator(
        grid,
        regions,
        config.scenario.scheme,
        wells=build_wells(config, grid),
        newton=newton_config(config, time_unit),
        reference_pressure=config.wells.producer_bhp_psi * PSI_TO_PA,
    )
    return regions, grid, time_unit, simulator


def _characteristic_time(grid: Grid1D, regions: Dict[RegionKind, RockRegion]) -> float:
    matrix = regions[RegionKind.MATRIX]
    return matrix.porosity * grid.length ** 2 / (matrix.permeability * matrix.d_max)


def spontaneous_imbibition(config: ScenarioConfig) -> ScenarioResult:
    """
    Counter-current imbibition from a water-filled fracture into an oil-filled
    matrix. Runs to the configured end time, then keeps going in growing
    windows until the matrix non-wetting volume stops changing.
    """
    started = time.perf_counter()
    regions, grid, t_char, simulator = _setup(config, _characteristic_time)
    record = _new_record(grid, config, t_char)
    record.metadata["t_char_s"] = t_char
    record.metadata["d_max_matrix"] = regions[RegionKind.MATRIX].d_max
    tcfg = config.time

    logger.info(
        f"Spontaneous imbibition: scheme={config.scenario.scheme.value}, "
        f"cells={grid.n_cells}, t_char={t_char:.4g} s"
    )
    state = initial_state(config, grid)
    profile = [r * t_char for r in tcfg.report]
    state, dt = simulator.run(
        state,
        0.0,
        tcfg.end * t_char,
        sample_times(config) * t_char,
        record,
        progress=config.output.progress,
        profile_times=profile,
    )

    t = tcfg.end * t_char
    change = _window_change(record, STEADY_STATE_WINDOW)
    while change >= tcfg.steady_state_tolerance and t < tcfg.steady_state_max * t_char:
        t_next = min(t * STEADY_STATE_WINDOW, tcfg.steady_state_max * t_char)
        state, dt = simulator.run(state, t, t_next, [t_next], record, dt=dt)
        t = t_next
        change = _window_change(record, STEADY_STATE_WINDOW)
        logger.debug(f"Steady-state check at t_D={t / t_char:.4g}: relative change {change:.3e}")

    reached = change < tcfg.steady_state_tolerance
    record.metadata["steady_state_reached"] = reached
    record.metadata["steady_state_change"] = change
    record.metadata["final_t_d"] = t / t_char
    if reached:
        _log_equilibrium(grid, regions, state)
    else:
        logger.warning(f"Steady state not reached by t_D={t / t_char:.4g} (relative change {change:.3e})")

    recovery = None
    try:
        recovery = recovery_curve(record)
    except AnalysisError as e:
        logger.warning(f"No recovery curve: {e}")
    result = ScenarioResult(config, grid, regions, record, t_char, recovery=recovery)
    result.wall_time_s = time.perf_counter() - started
    if recovery is not None:
        logger.info(f"80% recovery at t_D={result.t80:.4g} ({result.wall_time_s:.1f} s wall)")
    return result


def _window_change(record: SimulationRecord, window: float) -> float:
    """Relative change of the matrix non-wetting volume since time t_last / window."""
    t_last = record.snapshots[-1].time
    earlier = [s for s in record.snapshots[:-1] if s.time <= t_last / window]
    if not earlier:
        return float("inf")
    trimmed = SimulationRecord(
        cell_center=record.cell_center,
        cell_region=record.cell_region,
        cell_pore_volume=record.cell_pore_volume,
        snapshots=[record.snapshots[0], earlier[-1], record.snapshots[-1]],
    )
    return steady_state_change(trimmed)


def _log_equilibrium(grid: Grid1D, regions: Dict[RegionKind, RockRegion], state: State) -> None:
    matrix, fracture = grid.cells_in(RegionKind.MATRIX), grid.cells_in(RegionKind.FRACTURE)
    if not len(matrix) or not len(fracture):
        return
    pv = grid.pore_volume
    s_m, s_f = equilibrium_saturations(
        regions[RegionKind.MATRIX],
        regions[RegionKind.FRACTURE],
        float(np.sum(pv[matrix])),
        float(np.sum(pv[fracture])),
        float(np.sum(pv * state.saturation)),
    )
    logger.info(
        f"Capillary equilibrium S_m={s_m:.6f}, S_f={s_f:.6f}; "
        f"simulated matrix mean {float(np.mean(state.saturation[matrix])):.6f}"
    )


def forced_imbibition(config: ScenarioConfig) -> ScenarioResult:
    """
    Water injected at a fixed rate into the left fracture, displacing oil
    through the matrix to a fixed-pressure producer in the right fracture.
    Times are measured in pore volumes injected.
    """
    started = time.perf_counter()
    rate = config.wells.injection_rate_m3_day / SECONDS_PER_DAY

    def pore_volume_time(grid: Grid1D, regions) -> float:
        return float(np.sum(grid.pore_volume)) / rate

    regions, grid, t_pvi, simulator = _setup(config, pore_volume_time)
    record = _new_record(grid, config, t_pvi)
    record.metadata["pvi_time_s"] = t_pvi
    record.metadata["injection_rate_m3_s"] = rate
    tcfg = config.time
    logger.info(
        f"Forced imbibition: scheme={config.scenario.scheme.value}, cells={grid.n_cells}, "
        f"rate={rate:.4g} m3/s, 1 PVI={t_pvi:.4g} s"
    )
    simulator.run(
        initial_state(config, grid),
        0.0,
        tcfg.end * t_pvi,
        sample_times(config) * t_pvi,
        record,
        progress=config.output.progress,
        profile_times=[r * t_pvi for r in tcfg.report],
    )
    result = ScenarioResult(config, grid, regions, record, t_pvi, production=forced_production(record, t_pvi))
    result.wall_time_s = time.perf_counter() - started
    return result


def custom_scenario(config: ScenarioConfig) -> ScenarioResult:
    """Layered grid from the config segments, times in matrix diffusion units."""
    started = time.perf_counter()
    regions, grid, t_char, simulator = _setup(config, _characteristic_time)
    record = _new_record(grid, config, t_char)
    record.metadata["t_char_s"] = t_char
    tcfg = config.time
    simulator.run(
        initial_state(config, grid),
        0.0,
        tcfg.end * t_char,
        sample_times(config) * t_char,
        record,
        progress=config.output.progress,
        profile_times=[r * t_char for r in tcfg.report],
    )
    result = ScenarioResult(config, grid, regions, record, t_char)
    result.wall_time_s = time.perf_counter() - started
    return result


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    runners = {
        ScenarioKind.SPONTANEOUS: spontaneous_imbibition,
        ScenarioKind.FORCED: forced_imbibition,
        ScenarioKind.CUSTOM: custom_scenario,
    }
    return runners[config.scenario.kind](config)


def aborted_result(config: ScenarioConfig, record: SimulationRecord) -> ScenarioResult:
    """Partial result around the record of an aborted run, so its outputs can still be written."""
    return ScenarioResult(
        config,
        build_grid(config),
        build_regions(config),
        record,
        float(record.metadata.get("time_unit_s", 1.0)),
    )


def sweep_member(base: ScenarioConfig, n_matrix: int, scheme: Scheme, relperm: RelPermSet) -> ScenarioConfig:
    """Copy of ``base`` refined to ``n_matrix`` cells per region with the given scheme and relperms."""
    name = f"{base.scenario.name}-{relperm.value}-{scheme.value}-n{n_matrix}"
    output: Dict = {"progress": False}
    if base.output.directory:
        output["directory"] = str(Path(base.output.directory) / name)
    return base.with_overrides(
        scenario={"scheme": scheme.value, "name": name},
        grid={"n_matrix": n_matrix, "n_fracture": None},
        rock={"matrix": {"relperm": relperm.value}},
        output=output,
    )


def run_members_locally(configs: Sequence[ScenarioConfig]) -> List[Union[RecoverySeries, str]]:
    """Run sweep members in-process; failures come back as their message."""
    results = []
    for config in configs:
        try:
            result = run_scenario(config)
            if config.output.directory:
                write_run_outputs(result, config.output.directory, config.output.gnuplot)
            results.append(result.recovery if result.recovery is not None else "steady state not reached")
        except CapfluxError as e:
            logger.error(f"Sweep member {config.scenario.name} failed: {e}")
            results.append(str(e))
    return results


def refinement_sweep(
    base: ScenarioConfig,
    n_list: Sequence[int],
    schemes: Sequence[Scheme],
    relperms: Optional[Sequence[RelPermSet]] = None,
    reference_n: int = 128,
    reference_scheme: Scheme = Scheme.IHU_C,
    runner: Callable[[Sequence[ScenarioConfig]], List[Union[RecoverySeries, str]]] = run_members_locally,
) -> pd.DataFrame:
    """
    Error table of every (relperm, scheme, N) member against the reference
    run of its relperm set. Failed members are kept with their error message.
    """
    relperms = list(relperms or [base.rock.matrix.relperm])
    rows = []
    for relperm in relperms:
        reference_config = sweep_member(base, reference_n, reference_scheme, relperm)
        members = [
            sweep_member(base, n, scheme, relperm)
            for scheme in schemes
            for n in n_list
            if not (n == reference_n and scheme is reference_scheme)
        ]
        outcomes = runner([reference_config] + members)
        reference = outcomes[0]
        if not isinstance(reference, RecoverySeries):
            raise AnalysisError(f"reference run for {relperm.value} relperms failed: {reference}")

        for config, outcome in zip(members, outcomes[1:]):
            row = {
                "relperm": relperm.value,
                "scheme": config.scenario.scheme.value,
                "n_matrix": config.grid.n_matrix,
                "e2": np.nan,
                "t80": np.nan,
                "status": "completed",
                "error": "",
            }
            if isinstance(outcome, RecoverySeries):
                _, row["e2"] = error_norms(outcome, reference)
                row["t80"] = time_to_recovery(outcome)
            else:
                row["status"] = "failed"
                row["error"] = outcome
            rows.append(row)
        logger.info(f"Sweep for {relperm.value} relperms: reference t80={time_to_recovery(reference):.4g}")
    return pd.DataFrame(rows)
