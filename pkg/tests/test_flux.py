import numpy as np
import pytest

from src.modules.flux import (
    ihu_capillary,
    ihu_flux,
    ihu_flux_at_total,
    ihu_flux_faces,
    ihu_gravity,
    ihu_viscous,
    ppu_flux,
    ppu_flux_at_total,
    ppu_flux_faces,
    ppu_fractional_decomposition,
    total_velocity_ppu,
)


def fd_flux_derivatives(func, args, h=(1e-7, 1e-7, 1e-7, 1e-7)):
    """Central differences of (f_w, f_n) with respect to (p_i, p_j, S_i, S_j)."""
    dw, dn = [], []
    for k in range(4):
        plus, minus = list(args), list(args)
        plus[k] += h[k]
        minus[k] -= h[k]
        fp, fm = func(*plus), func(*minus)
        dw.append((fp.f_w - fm.f_w) / (2 * h[k]))
        dn.append((fp.f_n - fm.f_n) / (2 * h[k]))
    return np.array(dw), np.array(dn)


class TestPPU:
    def test_no_potential_difference(self, plot_matrix):
        flux = ppu_flux(1.0, 0.0, plot_matrix, plot_matrix, 1.0, 1.0, 0.4, 0.4)
        assert flux.f_w == 0.0
        assert flux.f_n == 0.0

    def test_pure_viscous(self, plot_matrix):
        flux = ppu_flux(2.0, 0.0, plot_matrix, plot_matrix, 1.5, 1.0, 0.4, 0.4)
        assert flux.f_w == pytest.approx(2.0 * 0.16 * 0.5)
        assert flux.f_n == pytest.approx(2.0 * 0.36 * 0.5)

    def test_capillary_flux_grows_towards_the_extremes(self, plot_matrix):
        wide = ppu_flux(1.0, 0.0, plot_matrix, plot_matrix, 0.0, 0.0, 0.99, 0.01)
        narrow = ppu_flux(1.0, 0.0, plot_matrix, plot_matrix, 0.0, 0.0, 0.7, 0.3)
        assert abs(wide.f_w) > 10.0 * abs(narrow.f_w)

    @pytest.mark.parametrize(
        "state",
        [(1.0, 0.5, 0.3, 0.6), (0.05, 0.0, 0.7, 0.3), (0.2, 0.0, 0.9, 0.2), (-0.4, 0.1, 0.45, 0.55)],
    )
    def test_derivatives(self, plot_matrix, state):
        flux = ppu_flux(1.3, 0.0, plot_matrix, plot_matrix, *state)
        dw, dn = fd_flux_derivatives(lambda *a: ppu_flux(1.3, 0.0, plot_matrix, plot_matrix, *a), state)
        np.testing.assert_allclose(flux.df_w, dw, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(flux.df_n, dn, rtol=1e-5, atol=1e-8)

    def test_hydrostatic_wetting_column(self, si_matrix, si_fluids):
        dz = 0.3
        dp = si_fluids.density_w * si_fluids.gravity * dz
        u, _ = total_velocity_ppu(1.0e-15, dz, si_matrix, si_matrix, 2.0e7 + dp, 2.0e7, 1.0, 1.0)
        assert u == pytest.approx(0.0, abs=1e-20)

    def test_total_velocity_follows_pressure_drop(self, plot_matrix):
        assert total_velocity_ppu(1.0, 0.0, plot_matrix, plot_matrix, 50.0, 0.0, 0.3, 0.6)[0] > 0.0
        assert total_velocity_ppu(1.0, 0.0, plot_matrix, plot_matrix, -50.0, 0.0, 0.3, 0.6)[0] < 0.0

    def test_capillary_only_total_velocity_is_nonzero(self, plot_matrix):
        u, _ = total_velocity_ppu(1.0, 0.0, plot_matrix, plot_matrix, 0.0, 0.0, 0.7, 0.3)
        assert u != 0.0


class TestPPUDecomposition:
    def test_parts_sum_to_flux(self, si_matrix):
        states = [(2.0e7 + 3.0e3, 2.0e7, 0.35, 0.6), (2.0e7, 2.0e7 + 1.0e3, 0.8, 0.2), (2.0e7, 2.0e7, 0.5, 0.45)]
        for p_i, p_j, s_i, s_j in states:
            flux = ppu_flux(1.0e-15, 0.3, si_matrix, si_matrix, p_i, p_j, s_i, s_j)
            w, n = ppu_fractional_decomposition(flux, 1.0e-15, 0.3, si_matrix, si_matrix, s_i, s_j)
            for split, value in ((w, flux.f_w), (n, flux.f_n)):
                scale = max(abs(value), *(abs(v) for v in split))
                assert abs(sum(split) - value) <= 1e-12 * scale

    def test_pure_viscous_split(self, plot_matrix):
        flux = ppu_flux(1.0, 0.0, plot_matrix, plot_matrix, 1.0, 0.0, 0.4, 0.4)
        w, _ = ppu_fractional_decomposition(flux, 1.0, 0.0, plot_matrix, plot_matrix, 0.4, 0.4)
        assert w.buoyancy == 0.0
        assert w.capillary == 0.0
        assert w.viscous == pytest.approx(flux.f_w)

    def test_counter_current_split(self, plot_matrix):
        # choose dp so that the non-wetting flux cancels the wetting one
        s_i, s_j = 0.7, 0.3
        dpc = plot_matrix.capillary_pressure(s_i)[0] - plot_matrix.capillary_pressure(s_j)[0]
        lw = plot_matrix.mobilities(s_i)[0]
        ln = plot_matrix.mobilities(s_j)[2]
        dp = lw * dpc / (lw + ln)
        flux = ppu_flux(1.0, 0.0, plot_matrix, plot_matrix, dp, 0.0, s_i, s_j)
        assert flux.u_t == pytest.approx(0.0, abs=1e-14)
        w, _ = ppu_fractional_decomposition(flux, 1.0, 0.0, plot_matrix, plot_matrix, s_i, s_j)
        assert w.viscous == pytest.approx(0.0, abs=1e-14)
        assert w.capillary == pytest.approx(flux.f_w, rel=1e-12)


class TestPPUAtTotal:
    @pytest.mark.parametrize(
        "state",
        [(1.0, 0.5, 0.3, 0.6), (0.0, 0.0, 0.7, 0.3), (0.2, 0.0, 0.9, 0.2), (-0.4, 0.1, 0.45, 0.55), (3.0, 0.0, 0.2, 0.8)],
    )
    def test_matches_pressure_form(self, plot_matrix, state):
        flux = ppu_flux(1.0, 0.0, plot_matrix, plot_matrix, *state)
        part = ppu_flux_at_total(flux.u_t, 1.0, 0.0, state[2], state[3], plot_matrix)
        assert part.w == pytest.approx(flux.f_w, rel=1e-10, abs=1e-14)
        assert part.n == pytest.approx(flux.f_n, rel=1e-10, abs=1e-14)

    def test_derivatives(self, plot_matrix):
        u, s_i, s_j, h = 0.5, 0.65, 0.35, 1e-7
        part = ppu_flux_at_total(u, 1.0, 0.0, s_i, s_j, plot_matrix)
        du = (ppu_flux_at_total(u + h, 1.0, 0.0, s_i, s_j, plot_matrix).w - ppu_flux_at_total(u - h, 1.0, 0.0, s_i, s_j, plot_matrix).w) / (2 * h)
        dsi = (ppu_flux_at_total(u, 1.0, 0.0, s_i + h, s_j, plot_matrix).w - ppu_flux_at_total(u, 1.0, 0.0, s_i - h, s_j, plot_matrix).w) / (2 * h)
        dsj = (ppu_flux_at_total(u, 1.0, 0.0, s_i, s_j + h, plot_matrix).w - ppu_flux_at_total(u, 1.0, 0.0, s_i, s_j - h, plot_matrix).w) / (2 * h)
        assert (part.du, part.dsi, part.dsj) == pytest.approx((du, dsi, dsj), rel=1e-5, abs=1e-8)


class TestIHU:
    def test_viscous(self, plot_matrix):
        assert ihu_viscous(1.0, 0.5, 0.9, plot_matrix).w == pytest.approx(0.5)
        zero = ihu_viscous(0.0, 0.2, 0.9, plot_matrix)
        assert (zero.w, zero.n) == (0.0, 0.0)

    def test_viscous_upwinds_by_total_flux(self, plot_matrix):
        assert ihu_viscous(-1.0, 0.2, 0.5, plot_matrix).w == pytest.approx(-0.5)

    def test_gravity_vanishes_without_depth_difference(self, si_matrix):
        assert ihu_gravity(1.0e-15, 0.0, 0.3, 0.6, si_matrix).w == 0.0

    def test_gravity_vanishes_for_single_phase(self, si_matrix):
        assert ihu_gravity(1.0e-15, 0.3, 1.0, 1.0, si_matrix).w == 0.0

    def test_heavier_wetting_phase_sinks_towards_the_deeper_cell(self, si_matrix):
        # dz = z_i - z_j > 0: cell i is deeper, so water flows from j to i
        g = ihu_gravity(1.0e-15, 0.3, 0.4, 0.6, si_matrix)
        assert g.w < 0.0
        assert g.n == -g.w
        assert ihu_gravity(1.0e-15, -0.3, 0.4, 0.6, si_matrix).w > 0.0

    def test_capillary_equal_saturations(self, plot_matrix):
        assert ihu_capillary(1.0, 0.4, 0.4, plot_matrix).w == 0.0

    def test_capillary_stays_bounded(self, plot_matrix):
        assert ihu_capillary(2.0, 1.0, 0.0, plot_matrix).w == pytest.approx(2.0 * plot_matrix.d_max)
        for s_i, s_j in ((0.99, 0.01), (0.7, 0.3), (0.1, 0.95)):
            c = ihu_capillary(1.0, s_i, s_j, plot_matrix)
            assert abs(c.w) <= plot_matrix.d_max * abs(s_i - s_j) * (1 + 1e-12)

    @pytest.mark.parametrize("state", [(0.5, 0.3, 0.6), (-0.2, 0.2, 0.4), (0.1, 0.8, 0.6)])
    def test_at_total_derivatives(self, si_matrix, state):
        trans, dz, h = 1.0e-15, 0.3, 1e-7
        u_scale = 1.0e-10
        u, s_i, s_j = state[0] * u_scale, state[1], state[2]

        def w(u_, a, b):
            return ihu_flux_at_total(u_, trans, dz, a, b, si_matrix).w

        part = ihu_flux_at_total(u, trans, dz, s_i, s_j, si_matrix)
        du = (w(u + h * u_scale, s_i, s_j) - w(u - h * u_scale, s_i, s_j)) / (2 * h * u_scale)
        dsi = (w(u, s_i + h, s_j) - w(u, s_i - h, s_j)) / (2 * h)
        dsj = (w(u, s_i, s_j + h) - w(u, s_i, s_j - h)) / (2 * h)
        scale = max(abs(dsi), abs(dsj))
        assert part.du == pytest.approx(du, rel=1e-6)
        assert part.dsi == pytest.approx(dsi, rel=1e-5, abs=1e-6 * scale)
        assert part.dsj == pytest.approx(dsj, rel=1e-5, abs=1e-6 * scale)

    def test_pressure_form_derivatives(self, plot_matrix):
        state = (1.0, 0.4, 0.3, 0.6)
        flux = ihu_flux(1.0, 0.0, plot_matrix, *state)
        dw, dn = fd_flux_derivatives(lambda *a: ihu_flux(1.0, 0.0, plot_matrix, *a), state)
        np.testing.assert_allclose(flux.df_w, dw, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(flux.df_n, dn, rtol=1e-5, atol=1e-8)


def test_counter_current_regions_differ(plot_matrix):
    # at u_T = 0.5, T = 1: PPU keeps both phases moving forward, IHU reverses the non-wetting one
    ppu = ppu_flux_at_total(0.5, 1.0, 0.0, 0.65, 0.35, plot_matrix)
    ihu = ihu_flux_at_total(0.5, 1.0, 0.0, 0.65, 0.35, plot_matrix)
    assert ppu.w * ppu.n > 0.0
    assert ihu.w * ihu.n < 0.0


class TestMonotoneFlux:
    """Wetting flux nondecreasing in S_i and nonincreasing in S_j, on seeded random states."""

    @staticmethod
    def assert_monotone(w, s_i, s_j, h=1.0e-6):
        base = w(s_i, s_j)
        scale = 1.0e-12 * max(1.0, abs(base))
        if s_i + h <= 1.0:
            assert w(s_i + h, s_j) - base >= -scale
        if s_j + h <= 1.0:
            assert w(s_i, s_j + h) - base <= scale

    @pytest.mark.parametrize("kernel", [ppu_flux_at_total, ihu_flux_at_total])
    def test_at_fixed_total_flux(self, plot_matrix, kernel):
        rng = np.random.default_rng(11)
        for u, s_i, s_j in zip(rng.uniform(-2.0, 2.0, 1000), rng.uniform(0.0, 1.0, 1000), rng.uniform(0.0, 1.0, 1000)):
            self.assert_monotone(lambda a, b: kernel(u, 1.0, 0.0, a, b, plot_matrix).w, s_i, s_j)

    def test_ppu_at_fixed_pressures_with_gravity(self, si_matrix):
        rng = np.random.default_rng(12)
        for dp, dz, s_i, s_j in zip(
            rng.uniform(-2.0e5, 2.0e5, 1000),
            rng.uniform(-0.5, 0.5, 1000),
            rng.uniform(0.0, 1.0, 1000),
            rng.uniform(0.0, 1.0, 1000),
        ):
            self.assert_monotone(
                lambda a, b: ppu_flux(1.0e-15, dz, si_matrix, si_matrix, 2.0e7 + dp, 2.0e7, a, b).f_w, s_i, s_j
            )

    def test_ihu_capillary_bound(self, plot_matrix):
        rng = np.random.default_rng(13)
        for trans, s_i, s_j in zip(rng.uniform(0.1, 5.0, 500), rng.uniform(0.0, 1.0, 500), rng.uniform(0.0, 1.0, 500)):
            c = ihu_capillary(trans, s_i, s_j, plot_matrix)
            assert abs(c.w) <= trans * plot_matrix.d_max * abs(s_i - s_j) + 1e-12
            assert c.n == -c.w


class TestFaceKernels:
    """Vectorised kernels agree with the per-face ones."""

    @staticmethod
    def random_faces(rng, m=200):
        return (
            rng.uniform(0.5e-15, 2.0e-15, m),
            rng.uniform(-0.5, 0.5, m),
            2.0e7 + rng.uniform(-5.0e4, 5.0e4, m),
            2.0e7 + rng.uniform(-5.0e4, 5.0e4, m),
            rng.uniform(0.0, 1.0, m),
            rng.uniform(0.0, 1.0, m),
        )

    @staticmethod
    def assert_faces_match(faces, expected):
        for k, flux in enumerate(expected):
            scale = max(abs(flux.f_w), abs(flux.f_n), 1e-30)
            assert faces.f_w[k] == pytest.approx(flux.f_w, rel=1e-10, abs=1e-12 * scale)
            assert faces.f_n[k] == pytest.approx(flux.f_n, rel=1e-10, abs=1e-12 * scale)
            for got, want in ((faces.df_w[:, k], flux.df_w), (faces.df_n[:, k], flux.df_n)):
                want = np.asarray(want)
                np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12 * np.abs(want).max() + 1e-300)

    def test_ppu(self, si_matrix):
        trans, dz, p_i, p_j, s_i, s_j = self.random_faces(np.random.default_rng(21))
        faces = ppu_flux_faces(trans, dz, si_matrix, p_i, p_j, s_i, s_j)
        expected = [
            ppu_flux(trans[k], dz[k], si_matrix, si_matrix, p_i[k], p_j[k], s_i[k], s_j[k]) for k in range(len(trans))
        ]
        self.assert_faces_match(faces, expected)

    def test_ihu(self, si_matrix):
        trans, dz, p_i, p_j, s_i, s_j = self.random_faces(np.random.default_rng(22))
        faces = ihu_flux_faces(trans, dz, si_matrix, p_i, p_j, s_i, s_j)
        expected = [ihu_flux(trans[k], dz[k], si_matrix, p_i[k], p_j[k], s_i[k], s_j[k]) for k in range(len(trans))]
        self.assert_faces_match(faces, expected)

    def test_ihu_on_equal_saturations_and_flat_faces(self, si_matrix):
        s = np.array([0.0, 0.3, 1.0])
        p = np.full(3, 2.0e7)
        faces = ihu_flux_faces(np.full(3, 1.0e-15), np.zeros(3), si_matrix, p, p, s, s)
        expected = [ihu_flux(1.0e-15, 0.0, si_matrix, 2.0e7, 2.0e7, v, v) for v in s]
        self.assert_faces_match(faces, expected)
