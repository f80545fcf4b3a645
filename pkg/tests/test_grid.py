import math

import numpy as np
import pytest

from src.exceptions import ConfigurationError
from src.models.scenario import RegionKind
from src.modules.grid import Layer, build_forced_grid, build_layered_grid, build_spontaneous_grid
from src.modules.petrophysics import MD_TO_M2

K_M = 1.0 * MD_TO_M2
K_F = 1.0e5 * MD_TO_M2


class TestSpontaneousGrid:
    def test_single_cell_per_region(self):
        grid = build_spontaneous_grid(1, 1, 20.0, K_M, K_F, 0.2, 0.2)
        assert grid.n_cells == 2
        np.testing.assert_allclose(grid.cell_width, [10.0, 10.0])
        assert len(grid.region_boundaries) == 1
        assert grid.cell_region == [RegionKind.MATRIX, RegionKind.FRACTURE]

    def test_boundary_transmissibility(self):
        grid = build_spontaneous_grid(1, 1, 20.0, K_M, K_F, 0.2, 0.2)
        face = grid.interfaces[0]
        expected = 2.0 * K_M * 1.0 / 10.0 / (1.0 + 1.0e-5)
        assert face.transmissibility == pytest.approx(expected, rel=1e-12)
        assert face.half_trans_left == pytest.approx(2.0 * K_M / 10.0)
        assert face.half_trans_right == pytest.approx(2.0 * K_F / 10.0)

    def test_interior_transmissibility(self):
        grid = build_spontaneous_grid(4, 4, 20.0, K_M, K_F, 0.2, 0.2)
        face = grid.interfaces[0]
        assert not face.is_region_boundary
        assert face.transmissibility == pytest.approx(K_M / 2.5, rel=1e-12)

    def test_pore_volumes(self):
        grid = build_spontaneous_grid(4, 2, 20.0, K_M, K_F, 0.2, 0.2, fracture_pv_multiplier=100.0)
        matrix = grid.cells_in(RegionKind.MATRIX)
        fracture = grid.cells_in(RegionKind.FRACTURE)
        assert grid.pore_volume[matrix].sum() == pytest.approx(0.2 * 1.0 * 10.0)
        assert grid.pore_volume[fracture].sum() == pytest.approx(100.0 * 0.2 * 1.0 * 10.0)

    def test_unequal_region_resolution(self):
        grid = build_spontaneous_grid(4, 2, 20.0, K_M, K_F, 0.2, 0.2)
        np.testing.assert_allclose(grid.cell_width, [2.5] * 4 + [5.0] * 2)
        with pytest.raises(ValueError):
            grid.dx

    def test_horizontal(self):
        grid = build_spontaneous_grid(3, 3, 20.0, K_M, K_F, 0.2, 0.2)
        assert all(face.dz == 0.0 for face in grid.interfaces)


class TestForcedGrid:
    def test_layout(self):
        grid = build_forced_grid(10, 20.0, K_M, K_F, 0.2, 0.2)
        assert grid.n_cells == 20
        assert grid.dx == pytest.approx(1.0)
        np.testing.assert_array_equal(grid.cells_in(RegionKind.FRACTURE), list(range(5)) + list(range(15, 20)))
        assert [face.index for face in grid.region_boundaries] == [4, 14]

    def test_tilt_makes_the_right_end_shallower(self):
        grid = build_forced_grid(10, 20.0, K_M, K_F, 0.2, 0.2, tilt_deg=15.0)
        dz = np.array([face.dz for face in grid.interfaces])
        np.testing.assert_allclose(dz, math.sin(math.radians(15.0)), rtol=1e-12)
        assert dz[0] == pytest.approx(0.2588, abs=1e-4)
        assert np.all(np.diff(grid.cell_depth) < 0.0)

    def test_half_depth_differences(self):
        grid = build_forced_grid(4, 20.0, K_M, K_F, 0.2, 0.2, tilt_deg=15.0)
        for face in grid.interfaces:
            assert face.dz_left - face.dz_right == pytest.approx(face.dz, rel=1e-12)
            assert face.dz_left == pytest.approx(0.5 * face.dz, rel=1e-12)

    def test_no_tilt(self):
        grid = build_forced_grid(10, 20.0, K_M, K_F, 0.2, 0.2, tilt_deg=0.0)
        assert all(face.dz == 0.0 for face in grid.interfaces)

    def test_odd_matrix_cells(self):
        with pytest.raises(ConfigurationError):
            build_forced_grid(5, 20.0, K_M, K_F, 0.2, 0.2)


class TestLayeredGrid:
    def test_requires_layers(self):
        with pytest.raises(ConfigurationError):
            build_layered_grid([])

    def test_rejects_bad_layer(self):
        with pytest.raises(ConfigurationError):
            build_layered_grid([Layer(RegionKind.MATRIX, 1.0, 2, -K_M, 0.2)])

    def test_frame(self):
        grid = build_layered_grid(
            [
                Layer(RegionKind.MATRIX, 2.0, 2, K_M, 0.2),
                Layer(RegionKind.FRACTURE, 1.0, 1, K_F, 0.2, pv_multiplier=10.0),
            ]
        )
        frame = grid.to_frame()
        assert list(frame["region"]) == ["matrix", "matrix", "fracture"]
        assert frame["pore_volume_m3"].iloc[-1] == pytest.approx(10.0 * 0.2 * 1.0)
        assert np.isnan(frame["trans_right_m3"].iloc[-1])
        assert frame["x_d"].iloc[-1] == pytest.approx(2.5 / 3.0)
