"""
One-dimensional layered grids with region assignment, depth and static
two-point transmissibilities.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
import pandas as pd

from ..exceptions import ConfigurationError
from ..models.scenario import RegionKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Layer:
    """A uniformly gridded segment of one rock region."""

    region: RegionKind
    length: float
    cells: int
    permeability: float
    porosity: float
    pv_multiplier: float = 1.0


@dataclass(frozen=True)
class GridInterface:
    """
    Connection between cells ``left`` and ``left + 1``.

    ``half_trans_left``/``half_trans_right`` are the one-sided
    transmissibilities k A / (dx/2) of each side and ``transmissibility``
    their harmonic combination. Depth differences are taken towards the
    right cell (``dz``) and towards the face from each side.
    """

    index: int
    left: int
    right: int
    transmissibility: float
    half_trans_left: float
    half_trans_right: float
    dz: float
    dz_left: float
    dz_right: float
    left_region: RegionKind
    right_region: RegionKind
    pore_volume: float

    @property
    def is_region_boundary(self) -> bool:
        return self.left_region is not self.right_region


@dataclass(frozen=True)
class Grid1D:
    length: float
    area: float
    tilt_deg: float
    cell_width: np.ndarray
    cell_center: np.ndarray
    cell_region: List[RegionKind]
    cell_depth: np.ndarray
    cell_perm: np.ndarray
    cell_porosity: np.ndarray
    pore_volume: np.ndarray
    interfaces: List[GridInterface]

    @property
    def n_cells(self) -> int:
        return len(self.cell_region)

    @property
    def dx(self) -> float:
        """Cell size of a uniform grid."""
        if not np.allclose(self.cell_width, self.cell_width[0], rtol=1e-12, atol=0.0):
            raise ValueError("grid is not uniform; use cell_width")
        return float(self.cell_width[0])

    def cells_in(self, region: RegionKind) -> np.ndarray:
        return np.array([i for i, r in enumerate(self.cell_region) if r is region], dtype=int)

    @property
    def region_boundaries(self) -> List[GridInterface]:
        return [face for face in self.interfaces if face.is_region_boundary]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "cell": np.arange(self.n_cells),
                "x_m": self.cell_center,
                "x_d": self.cell_center / self.length,
                "dx_m": self.cell_width,
                "region": [r.value for r in self.cell_region],
                "depth_m": self.cell_depth,
                "permeability_m2": self.cell_perm,
                "pore_volume_m3": self.pore_volume,
                "trans_right_m3": [f.transmissibility for f in self.interfaces] + [np.nan],
            }
        )


def build_layered_grid(layers: Sequence[Layer], area: float = 1.0, tilt_deg: float = 0.0) -> Grid1D:
    """
    Lay the segments out left to right.

    Depth is positive downward and z = (L - x) sin(tilt), so a positive tilt
    makes the right end shallower.
    """
    if not layers:
        raise ConfigurationError("a grid needs at least one layer")
    for layer in layers:
        if layer.cells < 1 or layer.length <= 0.0:
            raise ConfigurationError(f"invalid layer {layer}")
        if layer.permeability <= 0.0 or not 0.0 < layer.porosity <= 1.0 or layer.pv_multiplier <= 0.0:
            raise ConfigurationError(f"invalid rock properties in layer {layer}")

    widths, regions, perms, poros, multipliers = [], [], [], [], []
    for layer in layers:
        dx = layer.length / layer.cells
        widths += [dx] * layer.cells
        regions += [layer.region] * layer.cells
        perms += [layer.permeability] * layer.cells
        poros += [layer.porosity] * layer.cells
        multipliers += [layer.pv_multiplier] * layer.cells

    width = np.array(widths)
    edges = np.concatenate([[0.0], np.cumsum(width)])
    center = 0.5 * (edges[:-1] + edges[1:])
    length = float(edges[-1])
    depth = (length - center) * math.sin(math.radians(tilt_deg))
    perm = np.array(perms)
    porosity = np.array(poros)
    pore_volume = porosity * area * width * np.array(multipliers)

    interfaces = []
    for i in range(len(regions) - 1):
        j = i + 1
        h_i, h_j = 0.5 * width[i], 0.5 * width[j]
        t_i = perm[i] * area / h_i
        t_j = perm[j] * area / h_j
        z_face = depth[i] + (depth[j] - depth[i]) * h_i / (h_i + h_j)
        interfaces.append(
            GridInterface(
                index=i,
                left=i,
                right=j,
                transmissibility=t_i * t_j / (t_i + t_j),
                half_trans_left=t_i,
                half_trans_right=t_j,
                dz=float(depth[i] - depth[j]),
                dz_left=float(depth[i] - z_face),
                dz_right=float(depth[j] - z_face),
                left_region=regions[i],
                right_region=regions[j],
                pore_volume=float(pore_volume[i] + pore_volume[j]),
            )
        )

    grid = Grid1D(
        length=length,
        area=area,
        tilt_deg=tilt_deg,
        cell_width=width,
        cell_center=center,
        cell_region=regions,
        cell_depth=depth,
        cell_perm=perm,
        cell_porosity=porosity,
        pore_volume=pore_volume,
        interfaces=interfaces,
    )
    logger.debug(
        f"Built grid: {grid.n_cells} cells, {len(grid.region_boundaries)} region boundaries, L={length} m"
    )
    return grid


def build_spontaneous_grid(
    n_matrix: int,
    n_fracture: int,
    length: float,
    k_matrix: float,
    k_fracture: float,
    phi_matrix: float,
    phi_fracture: float,
    fracture_pv_multiplier: float = 100.0,
    area: float = 1.0,
) -> Grid1D:
    """Matrix on [0, L/2], fracture on [L/2, L], horizontal."""
    if n_matrix < 1 or n_fracture < 1:
        raise ConfigurationError("spontaneous grid needs at least one cell per region")
    return build_layered_grid(
        [
            Layer(RegionKind.MATRIX, 0.5 * length, n_matrix, k_matrix, phi_matrix),
            Layer(RegionKind.FRACTURE, 0.5 * length, n_fracture, k_fracture, phi_fracture, fracture_pv_multiplier),
        ],
        area=area,
    )


def build_forced_grid(
    n_matrix: int,
    length: float,
    k_matrix: float,
    k_fracture: float,
    phi_matrix: float,
    phi_fracture: float,
    tilt_deg: float = 15.0,
    area: float = 1.0,
) -> Grid1D:
    """Fracture quarters on both ends of a matrix half, one uniform cell size."""
    if n_matrix < 2 or n_matrix % 2:
        raise ConfigurationError(f"forced grid needs an even n_matrix >= 2, got {n_matrix}")
    quarter = n_matrix // 2
    return build_layered_grid(
        [
            Layer(RegionKind.FRACTURE, 0.25 * length, quarter, k_fracture, phi_fracture),
            Layer(RegionKind.MATRIX, 0.5 * length, n_matrix, k_matrix, phi_matrix),
            Layer(RegionKind.FRACTURE, 0.25 * length, quarter, k_fracture, phi_fracture),
        ],
        area=area,
        tilt_deg=tilt_deg,
    )
