from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class NewtonSummary(BaseModel):
    steps: int = 0
    total_iterations: int = 0
    total_cuts: int = 0
    max_interface_iterations: int = 0
    interface_clamps: int = 0


class GridSummary(BaseModel):
    n_cells: int
    length_m: float
    regions: Dict[str, int]
    region_boundaries: List[int]


class RunManifest(BaseModel):
    """Run description written next to the data files. Wall-clock fields live only here."""

    app: str
    version: str
    status: str
    failure: Optional[str] = None
    scheme: str
    config: Dict[str, Any]
    grid: GridSummary
    newton: NewtonSummary
    metadata: Dict[str, Any] = Field(default_factory=dict)
    wall_time_s: float = 0.0
    outputs: List[str] = Field(default_factory=list)
