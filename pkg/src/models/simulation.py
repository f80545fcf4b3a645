"""
Run-time data: cell state, wells, Newton controls and the record a run
leaves behind.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
import pandas as pd


@dataclass
class State:
    """Non-wetting pressure [Pa] and wetting saturation per cell."""

    pressure: np.ndarray
    saturation: np.ndarray

    def copy(self) -> "State":
        return State(self.pressure.copy(), self.saturation.copy())

    @property
    def n_cells(self) -> int:
        return len(self.saturation)


class WellKind(str, Enum):
    RATE_INJECTOR = "rate_injector"
    PRESSURE_PRODUCER = "pressure_producer"


@dataclass(frozen=True)
class WellSpec:
    """
    Rate injectors add wetting phase at ``rate`` [m^3/s]; pressure producers
    remove q_l = WI lambda_l(S) (p - bhp) of each phase.
    """

    kind: WellKind
    cell: int
    rate: float = 0.0
    bottomhole_pressure: float = 0.0
    well_index: float = 0.0


@dataclass(frozen=True)
class NewtonConfig:
    tolerance: float = 1.0e-8
    max_iterations: int = 25
    max_saturation_change: float = 0.2
    max_cuts: int = 10
    dt_init: float = 1.0
    dt_max: float = 1.0
    dt_growth: float = 1.5
    dt_cut: float = 0.5
    interface_tolerance: float = 1.0e-12
    interface_max_iterations: int = 50
    line_search_cuts: int = 4
    # accumulation minus well inflow per phase, relative to the total pore volume
    balance_tolerance: float = 1.0e-10


@dataclass
class StepStats:
    newton_iterations: int
    residual_history: List[float]
    cuts: int = 0
    interface_iterations: int = 0
    interface_clamps: int = 0
    imbalance_w: float = 0.0
    imbalance_n: float = 0.0


@dataclass
class InterfaceSnapshot:
    interface: int
    s_matrix: float
    s_fracture: float


@dataclass
class Snapshot:
    time: float
    state: State
    interfaces: List[InterfaceSnapshot] = field(default_factory=list)
    # profile snapshots are written out; the others only sample recovery
    profile: bool = True


@dataclass
class SimulationRecord:
    """
    Everything a run produces: state snapshots at report times, one series
    row per accepted step and run metadata.
    """

    cell_center: np.ndarray
    cell_region: List[str]
    cell_pore_volume: np.ndarray
    snapshots: List[Snapshot] = field(default_factory=list)
    steps: List[Dict[str, float]] = field(default_factory=list)
    metadata: Dict[str, object] = field(default_factory=dict)
    status: str = "running"
    failure: Optional[str] = None

    @property
    def total_newton_iterations(self) -> int:
        return int(sum(row["newton_iterations"] for row in self.steps))

    @property
    def total_cuts(self) -> int:
        return int(sum(row["cuts"] for row in self.steps))

    @property
    def final_state(self) -> State:
        return self.snapshots[-1].state

    def matrix_nonwetting(self, snapshot: Snapshot) -> float:
        matrix = np.array([r == "matrix" for r in self.cell_region])
        return float(np.sum(self.cell_pore_volume[matrix] * (1.0 - snapshot.state.saturation[matrix])))

    def series_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.steps)

    def profiles_frame(self, profiles_only: bool = True) -> pd.DataFrame:
        frames = []
        for snap in self.snapshots:
            if profiles_only and not snap.profile:
                continue
            frames.append(
                pd.DataFrame(
                    {
                        "time_s": snap.time,
                        "cell": np.arange(len(self.cell_region)),
                        "x_m": self.cell_center,
                        "region": self.cell_region,
                        "pressure_pa": snap.state.pressure,
                        "s_w": snap.state.saturation,
                        "s_n": 1.0 - snap.state.saturation,
                    }
                )
            )
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()

    def interfaces_frame(self) -> pd.DataFrame:
        rows = [
            {"time_s": snap.time, "interface": item.interface, "s_matrix": item.s_matrix, "s_fracture": item.s_fracture}
            for snap in self.snapshots
            for item in snap.interfaces
        ]
        return pd.DataFrame(rows, columns=["time_s", "interface", "s_matrix", "s_fracture"])
