import numpy as np
import pytest

from src.exceptions import ConfigurationError
from src.models.scenario import RegionKind, Scheme
from src.modules.flux import ihu_flux_at_total
from src.modules.grid import Layer, build_layered_grid
from src.modules.interface import InterfaceSolver, h_map, one_sided_kernel
from src.modules.petrophysics import fracture_region


def unit_face(matrix_left: bool = True):
    """Matrix | fracture face with half transmissibilities 2 and no depth difference."""
    layers = [Layer(RegionKind.MATRIX, 1.0, 1, 1.0, 0.2), Layer(RegionKind.FRACTURE, 1.0, 1, 1.0, 0.2)]
    if not matrix_left:
        layers.reverse()
    return build_layered_grid(layers).interfaces[0]


@pytest.fixture
def ihu_solver(plot_matrix, plot_fracture):
    return InterfaceSolver(plot_matrix, plot_fracture, Scheme.IHU_C)


class TestHMap:
    def test_equilibrium_point(self, plot_matrix, plot_fracture):
        assert h_map(0.5, plot_matrix, plot_fracture)[0] == pytest.approx(1.0, abs=1e-10)

    def test_linear_branch(self, plot_matrix, plot_fracture):
        s_m = plot_matrix.inverse_pc(0.05)
        s_f, dh = h_map(s_m, plot_matrix, plot_fracture)
        assert s_f == pytest.approx(0.5, abs=1e-10)
        assert dh > 0.0

    def test_upper_clamp(self, plot_matrix, plot_fracture):
        assert h_map(0.01, plot_matrix, plot_fracture) == (0.0, 0.0)

    def test_lower_clamp(self, plot_matrix, plot_fracture):
        assert h_map(0.9, plot_matrix, plot_fracture) == (1.0, 0.0)


class TestSetup:
    def test_fracture_range_must_sit_inside_matrix_range(self, plot_matrix, plot_fluids):
        wide = fracture_region(1, 20.0, 0.2, 1.0, plot_fluids)
        with pytest.raises(ConfigurationError):
            InterfaceSolver(plot_matrix, wide, Scheme.IHU_C)

    def test_plain_ppu_has_no_interface_kernel(self):
        with pytest.raises(ConfigurationError):
            one_sided_kernel(Scheme.PPU)


class TestSolve:
    def test_capillary_equilibrium_is_a_fixed_point(self, ihu_solver):
        result = ihu_solver.solve(0.0, 0.5, 1.0, unit_face())
        assert result.converged
        assert not result.clamped
        assert result.s_matrix == pytest.approx(0.5, abs=1e-10)
        assert result.s_fracture == pytest.approx(1.0, abs=1e-10)
        assert result.f_w_left == pytest.approx(0.0, abs=1e-11)

    def test_imbibition_matches_bisection(self, ihu_solver, plot_matrix, plot_fracture):
        face = unit_face()

        def residual(d):
            s_f = h_map(d, plot_matrix, plot_fracture)[0]
            return (
                ihu_flux_at_total(0.0, face.half_trans_left, 0.0, 0.0, d, plot_matrix).w
                + ihu_flux_at_total(0.0, face.half_trans_right, 0.0, 1.0, s_f, plot_fracture).w
            )

        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if residual(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        result = ihu_solver.solve(0.0, 0.0, 1.0, face)
        assert result.converged
        assert result.s_matrix == pytest.approx(0.5 * (lo + hi), abs=1e-8)
        # wetting phase enters the matrix cell on the left
        assert result.f_w_left < 0.0
        assert result.f_w_left == pytest.approx(-result.f_w_right, rel=1e-9)

    def test_residual_is_nonincreasing(self, ihu_solver):
        face = unit_face()
        values = [
            ihu_solver._residual(d, 0.3, 0.2, 0.9, face, True).value for d in np.linspace(0.0, 1.0, 401)
        ]
        assert np.all(np.diff(values) <= 1e-14)

    def test_mirrored_face(self, ihu_solver):
        left = ihu_solver.solve(0.3, 0.2, 0.9, unit_face(matrix_left=True))
        right = ihu_solver.solve(-0.3, 0.9, 0.2, unit_face(matrix_left=False))
        assert right.s_matrix == pytest.approx(left.s_matrix, abs=1e-10)
        # both are the matrix-side flux towards the face
        assert right.f_w_right == pytest.approx(left.f_w_left, rel=1e-9)

    @pytest.mark.parametrize("scheme", [Scheme.PPU_C, Scheme.IHU_C])
    def test_counter_current_imbibition(self, plot_matrix, plot_fracture, scheme):
        solver = InterfaceSolver(plot_matrix, plot_fracture, scheme)
        result = solver.solve(0.0, 0.1, 1.0, unit_face())
        assert result.converged
        assert 0.1 < result.s_matrix < 1.0
        assert result.f_w_left < 0.0


class TestSensitivities:
    def test_unit_slope_at_equilibrium(self, ihu_solver):
        face = unit_face()
        result = ihu_solver.solve(0.0, 0.5, 1.0, face)
        assert result.dd_dsm == pytest.approx(1.0, rel=1e-8)
        shifted = ihu_solver.solve(0.0, 0.5 + 1e-6, 1.0, face)
        assert (shifted.s_matrix - result.s_matrix) / 1e-6 == pytest.approx(1.0, rel=1e-4)

    def test_match_finite_differences(self, ihu_solver):
        face = unit_face()
        u, s_m, s_f, h = 0.3, 0.2, 0.9, 1e-6
        result = ihu_solver.solve(u, s_m, s_f, face)
        assert not result.clamped

        def d(*args):
            return ihu_solver.solve(*args, face).s_matrix

        fd = (
            (d(u + h, s_m, s_f) - d(u - h, s_m, s_f)) / (2 * h),
            (d(u, s_m + h, s_f) - d(u, s_m - h, s_f)) / (2 * h),
            (d(u, s_m, s_f + h) - d(u, s_m, s_f - h)) / (2 * h),
        )
        assert (result.dd_du, result.dd_dsm, result.dd_dsf) == pytest.approx(fd, rel=1e-4, abs=1e-6)

    def test_flux_derivatives_match_finite_differences(self, ihu_solver):
        face = unit_face()
        zero = (0.0, 0.0, 0.0, 0.0)
        u, s_i, s_j, h = 0.3, 0.2, 0.9, 1e-6
        flux, _ = ihu_solver.flux(u, zero, s_i, s_j, face)

        def f(a, b):
            return ihu_solver.flux(u, zero, a, b, face)[0].f_w

        fd_i = (f(s_i + h, s_j) - f(s_i - h, s_j)) / (2 * h)
        fd_j = (f(s_i, s_j + h) - f(s_i, s_j - h)) / (2 * h)
        assert flux.df_w[2] == pytest.approx(fd_i, rel=1e-4, abs=1e-6)
        assert flux.df_w[3] == pytest.approx(fd_j, rel=1e-4, abs=1e-6)


class TestRandomSolves:
    """Seeded random local problems checked against a bisection on the scalar residual."""

    @staticmethod
    def bisect(solver, u, s_m, s_f, face):
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if solver._residual(mid, u, s_m, s_f, face, True).value > 0.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    @pytest.mark.parametrize("scheme", [Scheme.PPU_C, Scheme.IHU_C])
    def test_unique_root_and_bisection_agreement(self, plot_matrix, plot_fracture, scheme):
        solver = InterfaceSolver(plot_matrix, plot_fracture, scheme)
        face = unit_face()
        kernel = one_sided_kernel(scheme)
        rng = np.random.default_rng(41)
        scan = np.linspace(0.0, 1.0, 51)
        for u, s_m, s_f in zip(rng.uniform(-1.0, 1.0, 500), rng.uniform(0.0, 1.0, 500), rng.uniform(0.0, 1.0, 500)):
            values = np.array([solver._residual(d, u, s_m, s_f, face, True).value for d in scan])
            signs = np.sign(values[np.abs(values) > 1e-14])
            assert np.count_nonzero(np.diff(signs)) <= 1

            result = solver.solve(u, s_m, s_f, face)
            assert result.converged
            if result.clamped:
                assert values[0] < 0.0 or values[-1] > 0.0
                continue
            assert abs(result.residual) / face.pore_volume < 1e-9
            d = self.bisect(solver, u, s_m, s_f, face)
            expected = kernel(u, face.half_trans_left, face.dz_left, s_m, d, plot_matrix).w
            assert result.f_w_left == pytest.approx(expected, abs=1e-8)
