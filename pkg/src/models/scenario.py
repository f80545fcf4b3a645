"""
Scenario configuration models.

Keys carry their field units (psi, mD, cP, m, degrees); conversion to SI
happens in the builders of :mod:`src.modules.scenarios`.
"""
from enum import Enum
from typing import Dict, List, Optional

from pydantic import Field, PositiveFloat, PositiveInt, field_validator, model_validator

from .base import ConfigModel


class ScenarioKind(str, Enum):
    SPONTANEOUS = "spontaneous"
    FORCED = "forced"
    CUSTOM = "custom"


class Scheme(str, Enum):
    PPU = "ppu"
    PPU_C = "ppu-c"
    IHU_C = "ihu-c"

    @property
    def uses_interface_conditions(self) -> bool:
        return self is not Scheme.PPU


class RelPermSet(str, Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    CUBIC = "cubic"

    @property
    def exponent(self) -> int:
        return {"linear": 1, "quadratic": 2, "cubic": 3}[self.value]


class RegionKind(str, Enum):
    MATRIX = "matrix"
    FRACTURE = "fracture"


class ScenarioSection(ConfigModel):
    name: str = "spontaneous-imbibition"
    kind: ScenarioKind = ScenarioKind.SPONTANEOUS
    scheme: Scheme = Scheme.IHU_C


class SegmentConfig(ConfigModel):
    """One layer of a custom grid."""

    region: RegionKind
    length_m: PositiveFloat
    cells: PositiveInt
    pore_volume_multiplier: PositiveFloat = 1.0
    initial_saturation: float = Field(0.0, ge=0.0, le=1.0)


class GridSection(ConfigModel):
    n_matrix: PositiveInt = 1
    n_fracture: Optional[PositiveInt] = None
    length_m: PositiveFloat = 20.0
    area_m2: PositiveFloat = 1.0
    tilt_deg: float = Field(0.0, ge=-90.0, le=90.0)
    fracture_pv_multiplier: PositiveFloat = 100.0
    segments: List[SegmentConfig] = Field(default_factory=list)


class MatrixRockConfig(ConfigModel):
    porosity: float = Field(0.2, gt=0.0, le=1.0)
    permeability_md: PositiveFloat = 1.0
    relperm: RelPermSet = RelPermSet.QUADRATIC
    entry_pressure_psi: PositiveFloat = 3.0
    theta: float = Field(4.0, gt=1.0)
    pc_max_psi: PositiveFloat = 15.0
    pc_min_psi: float = Field(-15.0, lt=0.0)


class FractureRockConfig(ConfigModel):
    porosity: float = Field(0.2, gt=0.0, le=1.0)
    permeability_md: PositiveFloat = 1.0e5
    relperm: RelPermSet = RelPermSet.LINEAR
    pc_max_psi: PositiveFloat = 0.1


class RockSection(ConfigModel):
    matrix: MatrixRockConfig = Field(default_factory=MatrixRockConfig)
    fracture: FractureRockConfig = Field(default_factory=FractureRockConfig)


class FluidsSection(ConfigModel):
    viscosity_w_cp: PositiveFloat = 1.0
    viscosity_n_cp: PositiveFloat = 1.0
    density_w_kg_m3: PositiveFloat = 1000.0
    density_n_kg_m3: PositiveFloat = 800.0
    gravity: bool = True


class WellsSection(ConfigModel):
    injection_rate_m3_day: PositiveFloat = 8.64e-4
    producer_bhp_psi: PositiveFloat = 3000.0
    well_index_multiplier: PositiveFloat = 1.0e3


class TimeSection(ConfigModel):
    # spontaneous runs are measured in dimensionless diffusion time,
    # forced runs in pore volumes injected
    end: PositiveFloat = 1.0
    report: List[float] = Field(default_factory=lambda: [0.0008, 0.008, 0.08, 0.8])
    n_samples: PositiveInt = 200
    first_sample: PositiveFloat = 1.0e-4
    dt_init: PositiveFloat = 1.0e-4
    dt_max: PositiveFloat = 1.0e-2
    dt_growth: float = Field(1.5, ge=1.0)
    dt_cut: float = Field(0.5, gt=0.0, lt=1.0)
    steady_state_tolerance: PositiveFloat = 1.0e-6
    steady_state_max: PositiveFloat = 5.0

    @field_validator("report")
    @classmethod
    def _sorted_report(cls, value: List[float]) -> List[float]:
        if any(t <= 0.0 for t in value):
            raise ValueError("report times must be positive")
        return sorted(set(value))


class NewtonSection(ConfigModel):
    tolerance: PositiveFloat = 1.0e-8
    max_iterations: PositiveInt = 25
    max_saturation_change: PositiveFloat = 0.2
    max_cuts: PositiveInt = 10
    line_search_cuts: int = Field(4, ge=0)
    balance_tolerance: PositiveFloat = 1.0e-10


class InterfaceSection(ConfigModel):
    tolerance: PositiveFloat = 1.0e-12
    max_iterations: PositiveInt = 50


class OutputSection(ConfigModel):
    directory: Optional[str] = None
    gnuplot: bool = False
    progress: bool = True


class ScenarioConfig(ConfigModel):
    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    grid: GridSection = Field(default_factory=GridSection)
    rock: RockSection = Field(default_factory=RockSection)
    fluids: FluidsSection = Field(default_factory=FluidsSection)
    wells: WellsSection = Field(default_factory=WellsSection)
    time: TimeSection = Field(default_factory=TimeSection)
    newton: NewtonSection = Field(default_factory=NewtonSection)
    interface: InterfaceSection = Field(default_factory=InterfaceSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _check_layout(self) -> "ScenarioConfig":
        kind = self.scenario.kind
        if kind is ScenarioKind.FORCED and self.grid.n_matrix % 2:
            raise ValueError("forced imbibition needs an even n_matrix")
        if kind is ScenarioKind.CUSTOM and not self.grid.segments:
            raise ValueError("custom scenarios need grid.segments")
        if self.rock.matrix.pc_max_psi <= self.rock.fracture.pc_max_psi:
            raise ValueError("matrix pc_max_psi must exceed the fracture pc_max_psi")
        return self

    def with_overrides(self, **sections: Dict) -> "ScenarioConfig":
        """Return a copy with the given sections partially replaced; nested mappings merge key by key."""
        return ScenarioConfig.model_validate(_merge(self.model_dump(mode="json"), sections))


def _merge(base: Dict, overrides: Dict) -> Dict:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged
