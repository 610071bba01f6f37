"""
Tests for the dyadic, anisotropic and angular projectors
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.config import config
from src.exceptions import ConfigurationError, ResolutionError
from src.fields import field_from_spectrum, make_grid, wavenumbers
from src.localization import (
    BUMP,
    angular_band_support,
    angular_weights,
    band_degrees,
    bernstein_ratio,
    capped_angular_weights,
    cartesian_to_spherical,
    commutator_ratio,
    dump_kernel,
    gauss_legendre,
    horizontal_cutoff,
    k_range,
    kernel_l1_mass,
    legendre_table,
    load_kernel,
    project_angular,
    project_k,
    project_kpq,
    sample_spherical,
    shell_multiplier,
    shell_point_count,
    spherical_grid,
    spherical_to_cartesian,
    square_function_ratio,
    vertical_cutoff,
    zonal_harmonic,
    zonal_kernel,
)
from src.models import ShellIndex
from src.utils.field_io import write_array
from tests.conftest import gaussian_spectrum, swirl_spectrum


def _random_degrees(rng, top: int, count: int = 64, rho=(1.0, 2.0)):
    grid = spherical_grid(*rho, points_per_shell=8, n_lam=count)
    coefficients = np.zeros((grid.rho.size, count))
    coefficients[:, :top + 1] = rng.standard_normal((grid.rho.size, top + 1)) / (1.0 + np.arange(top + 1))
    return grid.from_coefficients(coefficients)


class TestBump:
    def test_plateau_and_support(self):
        assert BUMP.psi(0.8) == 1.0
        assert BUMP.psi(0.0) == 1.0
        assert BUMP.psi(1.6) == 0.0
        assert BUMP.phi(0.4) == 0.0
        assert BUMP.phi(1.6) == 0.0

    def test_psi_is_monotone(self):
        x = np.linspace(0, 2, 2001)
        assert np.all(np.diff(BUMP.psi(x)) <= 1e-15)

    @given(st.floats(min_value=1e-3, max_value=1e3))
    @settings(max_examples=200, deadline=None)
    def test_dyadic_partition(self, x):
        total = sum(BUMP.phi(2.0 ** (-b) * x) for b in range(-40, 41))
        assert abs(total - 1.0) < 1e-12

    @given(st.floats(min_value=1e-3, max_value=1.0))
    @settings(max_examples=200, deadline=None)
    def test_horizontal_partition(self, s):
        lam = np.sqrt(1.0 - s ** 2)
        total = sum(horizontal_cutoff(p, lam) for p in range(-12, 1))
        assert abs(total - 1.0) < 1e-12

    def test_vertical_top_shell(self):
        assert vertical_cutoff(0, 0.9) == 1.0
        assert vertical_cutoff(0, 0.2) == 0.0

    def test_derivative_matches_difference(self):
        x = np.linspace(0.5, 1.8, 50)
        h = 1e-6
        numeric = (BUMP.phi(x + h) - BUMP.phi(x - h)) / (2 * h)
        np.testing.assert_allclose(BUMP.phi_derivative(x), numeric, atol=1e-6)


class TestAnisotropicShells:
    def test_radial_partition_on_grid(self, medium_grid):
        f = field_from_spectrum(swirl_spectrum(), medium_grid)
        total = sum(project_k(f, k).coeffs for k in k_range(medium_grid))
        np.testing.assert_allclose(total, f.coeffs, atol=1e-12 * np.max(np.abs(f.coeffs)))

    def test_horizontal_partition_on_grid(self, small_grid):
        w = wavenumbers(small_grid)
        total = sum(shell_multiplier(small_grid, ShellIndex(k=0, p=p)) for p in range(-12, 1))
        radial = shell_multiplier(small_grid, ShellIndex(k=0))
        off_axis = np.broadcast_to(w.kh > 0, small_grid.shape)
        np.testing.assert_allclose(total[off_axis], radial[off_axis], atol=1e-12)

    def test_incompatible_shell_is_empty(self, medium_grid, captured_warnings):
        f = field_from_spectrum(gaussian_spectrum(), medium_grid)
        assert shell_point_count(medium_grid, ShellIndex(k=0, p=-3, q=-3)) == 0
        assert np.all(project_kpq(f, 0, -3, -3).coeffs == 0)
        assert any("Empty shell" in m for m in captured_warnings)

    def test_polar_data_misses_flat_vertical_shells(self, medium_grid):
        def polar(k1, k2, k3):
            kmod = np.sqrt(k1 ** 2 + k2 ** 2 + k3 ** 2)
            lam = np.where(kmod > 0, np.abs(k3) / np.where(kmod > 0, kmod, 1.0), 0.0)
            return np.clip(lam - 0.9, 0.0, None) ** 2 * gaussian_spectrum()(k1, k2, k3)

        f = field_from_spectrum(polar, medium_grid)
        low = f.apply(shell_multiplier(medium_grid, ShellIndex(k=0, q=-3)))
        top = f.apply(shell_multiplier(medium_grid, ShellIndex(k=0, q=0)))
        radial = f.apply(shell_multiplier(medium_grid, ShellIndex(k=0)))
        assert np.all(low.coeffs == 0)
        np.testing.assert_allclose(top.coeffs, radial.coeffs)
        assert top.l2_norm() > 0

    def test_k_range_covers_grid(self, desk_grid):
        ks = k_range(desk_grid)
        assert 2.0 ** ks.start * BUMP.outer <= desk_grid.k_min
        assert 2.0 ** ks.stop * BUMP.inner / 2 >= np.sqrt(3) * desk_grid.k_max


class TestLegendre:
    def test_recurrence(self):
        np.testing.assert_allclose(legendre_table(2, 0.5), [1.0, 0.5, -0.125])

    @pytest.mark.parametrize("n", [0, 1, 2, 7, 20])
    def test_zonal_harmonic_mean(self, n):
        nodes, weights = gauss_legendre(64)
        integral = 2 * np.pi * np.sum(weights * zonal_harmonic(n, nodes))
        assert integral == pytest.approx(1.0 if n == 0 else 0.0, abs=1e-13)

    def test_angular_partition(self):
        degrees = np.arange(0, int(0.8 * 2 ** 12) + 1)
        total = sum(angular_weights(ell, degrees) for ell in range(13))
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    def test_capped_weights(self):
        degrees = np.arange(20)
        assert np.all(capped_angular_weights(1, -2, degrees) == 0)
        np.testing.assert_array_equal(capped_angular_weights(2, -2, degrees), angular_weights(2, degrees, low=True))
        np.testing.assert_array_equal(capped_angular_weights(3, -2, degrees), angular_weights(3, degrees))

    def test_band_degrees(self):
        assert band_degrees(3, 64) == {"lowest": 4, "highest": 12}
        assert angular_band_support(3, range(20)) == list(range(4, 13))


class TestAngularProjectors:
    def test_degree_seven_lands_in_two_bands(self):
        s = sample_spherical(lambda r, l: np.exp(-r ** 2) * legendre_table(7, l)[7], 1.0, 2.0, n_lam=64)
        scale = np.max(np.abs(s.values))
        for ell in range(5):
            expected = angular_weights(ell, np.array([7.0]))[0] * s.values
            np.testing.assert_allclose(project_angular(s, ell).values, expected, atol=1e-12 * scale)
        assert angular_weights(3, np.array([7.0]))[0] > 0
        assert angular_weights(4, np.array([7.0]))[0] > 0

    def test_orthogonality(self, rng):
        s = _random_degrees(rng, top=40)
        both = project_angular(project_angular(s, 4), 0)
        assert both.l2_norm() <= 1e-12 * s.l2_norm()

    def test_bands_reassemble(self, rng):
        s = _random_degrees(rng, top=12)
        total = sum((project_angular(s, ell) for ell in range(1, 5)), project_angular(s, 0))
        assert (total - s).l2_norm() <= 1e-10 * s.l2_norm()

    def test_kernel_resolution_guard(self):
        with pytest.raises(ResolutionError, match="cap"):
            zonal_kernel(12, 64)
        with pytest.raises(ResolutionError, match="at least"):
            zonal_kernel(5, 64)
        with pytest.raises(ConfigurationError):
            zonal_kernel(-1, 64)

    @pytest.mark.parametrize("ell", [1, 2, 3, 4])
    def test_bernstein(self, rng, ell):
        s = _random_degrees(rng, top=40)
        ratio = bernstein_ratio(s, ell)
        assert 0.25 * 0.8 ** 2 <= ratio <= 4 * 1.6 ** 2

    def test_square_function(self, rng):
        s = _random_degrees(rng, top=12)
        ratio = square_function_ratio(s, 4)
        assert config.SQUARE_FUNCTION_LOW <= ratio <= config.SQUARE_FUNCTION_HIGH

    @pytest.mark.parametrize("ell", range(7))
    def test_kernel_mass_is_bounded(self, ell):
        assert kernel_l1_mass(ell) <= config.C_LEMMA

    def test_kernel_dump(self, tmp_path):
        path = tmp_path / "kernel.bin"
        dump_kernel(path, 2, 32)
        np.testing.assert_array_equal(load_kernel(path), zonal_kernel(2, 32))

    def test_load_rejects_other_arrays(self, tmp_path):
        path = tmp_path / "other.bin"
        write_array(path, np.zeros((2, 2), dtype=complex), {"kind": "scalar"})
        with pytest.raises(ConfigurationError):
            load_kernel(path)


class TestSphericalRepresentation:
    def test_measure(self):
        s = sample_spherical(lambda r, l: np.ones(np.broadcast(r, l).shape), 1.0, 2.0)
        assert s.l2_norm() ** 2 == pytest.approx(2 * (7.0 / 3.0) / (2 * np.pi) ** 2, rel=1e-12)

    def test_radial_field_resamples_to_constant_in_lambda(self):
        spec = make_grid(64, 32.0)
        f = field_from_spectrum(gaussian_spectrum(), spec)
        s = cartesian_to_spherical(f)
        expected = np.exp(-s.rho ** 2 / 2)[:, None]
        np.testing.assert_allclose(s.values.real, np.broadcast_to(expected, s.values.shape), atol=1e-3)

    def test_roundtrip(self):
        spec = make_grid(64, 32.0)
        f = field_from_spectrum(swirl_spectrum(), spec)
        back = spherical_to_cartesian(cartesian_to_spherical(f), spec)
        assert (back - f).l2_norm() <= 1e-3 * f.l2_norm()

    def test_unresolved_range(self, small_grid):
        f = field_from_spectrum(gaussian_spectrum(), small_grid)
        with pytest.raises(ResolutionError):
            cartesian_to_spherical(f, rho_max=40 * small_grid.k_min)

    def test_commutators(self):
        s = sample_spherical(lambda r, l: np.exp(-r ** 2), 0.5, 2.0)
        assert commutator_ratio(s, ShellIndex(k=0)) == 0.0
        ratio = commutator_ratio(s, ShellIndex(k=0, p=-1))
        assert 0 < ratio <= config.COMMUTATOR_CONSTANT * 2
