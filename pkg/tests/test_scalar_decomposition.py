"""
Tests for the (A, C) and (U+, U-) changes of variables and the pressure solve
"""

import numpy as np
import pytest

from src.exceptions import AdmissibilityError, ConfigurationError
from src.fields import (
    SpectralField,
    VectorFieldSpectral,
    apply_rotation,
    apply_scaling,
    dealias_mask,
    divergence_residual,
    field_from_spectrum,
    rotation_spectrum,
    scaling_spectrum,
    scaling_vector,
    wavenumbers,
)
from src.scalar_decomposition import (
    ScalarPair,
    axis_energy_fraction,
    certify_band_limit,
    decompose,
    from_dispersive,
    from_profiles,
    isometry_defect,
    pressure_direct,
    pressure_solve,
    reconstruct,
    reconstruct_spectrum,
    to_dispersive,
    to_profiles,
    velocity_from_a,
    velocity_from_c,
)
from tests.conftest import flat_spectrum, swirl_spectrum, turning_defect


def _zero(k1, k2, k3):
    return np.zeros(np.broadcast(k1, k2, k3).shape)


def _velocity(spec, a_hat, c_hat) -> VectorFieldSpectral:
    components = tuple(field_from_spectrum(u_hat, spec) for u_hat in reconstruct_spectrum(a_hat, c_hat))
    return VectorFieldSpectral(components, divergence_free=True)


def _assert_close(actual, expected, rel=1e-12):
    scale = np.max(np.abs(expected))
    np.testing.assert_allclose(actual, expected, atol=rel * scale)


@pytest.fixture
def swirl_pair(medium_grid):
    a_hat = swirl_spectrum(1.0, 1.0, 0.5)
    c_hat = swirl_spectrum(0.8, -0.3, 1.2)
    u = _velocity(medium_grid, a_hat, c_hat)
    return u, field_from_spectrum(a_hat, medium_grid), field_from_spectrum(c_hat, medium_grid)


class TestDecomposition:
    def test_closed_form_velocity_is_divergence_free(self, swirl_pair):
        u, _, _ = swirl_pair
        assert divergence_residual(u) < 1e-12

    def test_a_only(self, medium_grid):
        a_hat = swirl_spectrum()
        pair = decompose(_velocity(medium_grid, a_hat, _zero))
        _assert_close(pair.A.coeffs, field_from_spectrum(a_hat, medium_grid).coeffs)
        assert np.max(np.abs(pair.C.coeffs)) <= 1e-12 * np.max(np.abs(pair.A.coeffs))

    def test_c_only(self, medium_grid):
        c_hat = swirl_spectrum(1.0, 0.0, 1.0)
        pair = decompose(_velocity(medium_grid, _zero, c_hat))
        _assert_close(pair.C.coeffs, field_from_spectrum(c_hat, medium_grid).coeffs)
        assert np.max(np.abs(pair.A.coeffs)) <= 1e-12 * np.max(np.abs(pair.C.coeffs))

    def test_roundtrip(self, swirl_pair):
        u, a, c = swirl_pair
        pair = decompose(u)
        _assert_close(pair.A.coeffs, a.coeffs)
        _assert_close(pair.C.coeffs, c.coeffs)
        _assert_close(reconstruct(pair).coeffs(), u.coeffs())

    def test_isometry(self, swirl_pair):
        u, _, _ = swirl_pair
        pair = decompose(u)
        assert isometry_defect(u, pair) < 1e-12
        w = wavenumbers(u.spec)
        assert isometry_defect(u, pair, symbol=np.exp(-w.kmod)) < 1e-12

    def test_pieces_add_up(self, swirl_pair):
        u, a, c = swirl_pair
        total = velocity_from_a(a) + velocity_from_c(c)
        _assert_close(total.coeffs(), u.coeffs())

    def test_real_fields_stay_real(self, swirl_pair):
        pair = decompose(swirl_pair[0])
        assert pair.A.real and pair.C.real


def _turned_spectrum(u_hat, h: float = 1e-2):
    """Central difference of R_-h u_hat(R_h xi): the Fourier side of Omega v - e3 x v"""
    c, s = np.cos(h), np.sin(h)

    def component(j: int):
        def fhat(k1, k2, k3):
            ahead = [u(c * k1 - s * k2, s * k1 + c * k2, k3) for u in u_hat]
            behind = [u(c * k1 + s * k2, -s * k1 + c * k2, k3) for u in u_hat]
            if j == 0:
                return (c * ahead[0] + s * ahead[1] - c * behind[0] + s * behind[1]) / (2 * h)
            if j == 1:
                return (-s * ahead[0] + c * ahead[1] - s * behind[0] - c * behind[1]) / (2 * h)
            return (ahead[2] - behind[2]) / (2 * h)
        return fhat

    return tuple(component(j) for j in range(3))


def _tilted(symbol, tilt: float):
    def fhat(k1, k2, k3):
        return (1 + 1j * tilt * k1) * symbol(k1, k2, k3)
    return fhat


@pytest.fixture
def tilted_pair(wide_grid):
    a_hat = flat_spectrum(10, tilt=0.4, horizontal=True, shape=lambda lam: 1 + 0.5j * lam)
    c_hat = flat_spectrum(10, tilt=-0.3, horizontal=True, shape=lambda lam: 0.6 - 1.1j * lam)
    pair = ScalarPair(field_from_spectrum(a_hat, wide_grid), field_from_spectrum(c_hat, wide_grid))
    return _velocity(wide_grid, a_hat, c_hat), pair


class TestCommutation:
    def test_scaling_commutes_with_decompose(self, tilted_pair):
        u, pair = tilted_pair
        scaled = decompose(scaling_vector(u))
        _assert_close(scaled.A.coeffs, apply_scaling(pair.A).coeffs, rel=1e-7)
        _assert_close(scaled.C.coeffs, apply_scaling(pair.C).coeffs, rel=1e-7)

    def test_scaling_commutes_with_reconstruct(self, tilted_pair):
        u, pair = tilted_pair
        rebuilt = reconstruct(ScalarPair(apply_scaling(pair.A), apply_scaling(pair.C)))
        _assert_close(rebuilt.coeffs(), scaling_vector(u).coeffs(), rel=1e-7)

    def test_rotation_commutes_with_decompose(self, tilted_pair):
        u, pair = tilted_pair
        rotated = decompose(turning_defect(u))
        _assert_close(rotated.A.coeffs, apply_rotation(pair.A).coeffs, rel=1e-7)
        _assert_close(rotated.C.coeffs, apply_rotation(pair.C).coeffs, rel=1e-7)

    def test_axisymmetric_scalars_give_an_axisymmetric_velocity(self, wide_grid):
        a_hat = flat_spectrum(10, horizontal=True, shape=lambda lam: 1 + 0.5j * lam)
        u = _velocity(wide_grid, a_hat, flat_spectrum(10, horizontal=True))
        assert turning_defect(u).l2_norm() <= 1e-7 * u.l2_norm()

    def test_scaling_symbol_commutes_exactly(self, medium_grid):
        a_hat, c_hat = swirl_spectrum(1.0, 1.0, 0.5), swirl_spectrum(0.8, -0.3, 1.2)
        scaled = tuple(scaling_spectrum(s, h=1e-2) for s in reconstruct_spectrum(a_hat, c_hat))
        pair = decompose(VectorFieldSpectral(tuple(field_from_spectrum(s, medium_grid) for s in scaled)))
        _assert_close(pair.A.coeffs, field_from_spectrum(scaling_spectrum(a_hat, h=1e-2), medium_grid).coeffs,
                      rel=1e-10)
        _assert_close(pair.C.coeffs, field_from_spectrum(scaling_spectrum(c_hat, h=1e-2), medium_grid).coeffs,
                      rel=1e-10)

    def test_rotation_symbol_commutes_exactly(self, medium_grid):
        a_hat = _tilted(swirl_spectrum(1.0, 1.0, 0.5), 0.4)
        c_hat = _tilted(swirl_spectrum(0.8, -0.3, 1.2), -0.3)
        turned = _turned_spectrum(reconstruct_spectrum(a_hat, c_hat))
        pair = decompose(VectorFieldSpectral(tuple(field_from_spectrum(s, medium_grid) for s in turned)))
        _assert_close(pair.A.coeffs, field_from_spectrum(rotation_spectrum(a_hat, h=1e-2), medium_grid).coeffs,
                      rel=1e-10)
        _assert_close(pair.C.coeffs, field_from_spectrum(rotation_spectrum(c_hat, h=1e-2), medium_grid).coeffs,
                      rel=1e-10)


class TestAdmissibility:
    def test_axis_energy_rejected(self, small_grid):
        coeffs = np.zeros((3,) + small_grid.shape, dtype=complex)
        coeffs[0, 0, 0, 1] = 1.0
        coeffs[0, 0, 0, -1] = 1.0
        u = VectorFieldSpectral.from_coeffs(coeffs, small_grid)
        assert axis_energy_fraction(u) == 1.0
        with pytest.raises(AdmissibilityError, match="vertical axis"):
            decompose(u)

    def test_angular_floor(self, swirl_pair):
        u, _, _ = swirl_pair
        certify_band_limit(u.components)
        with pytest.raises(AdmissibilityError, match="angular floor"):
            certify_band_limit(u.components, p_floor=-1)

    def test_mismatched_grids(self, small_grid, medium_grid):
        with pytest.raises(ConfigurationError):
            ScalarPair(SpectralField.zeros(small_grid), SpectralField.zeros(medium_grid))


class TestDispersiveUnknowns:
    def test_dispersive_roundtrip(self, swirl_pair):
        _, a, c = swirl_pair
        back = from_dispersive(to_dispersive(ScalarPair(a, c)))
        _assert_close(back.A.coeffs, a.coeffs, rel=1e-15)
        _assert_close(back.C.coeffs, c.coeffs, rel=1e-15)

    def test_profile_roundtrip(self, swirl_pair):
        _, a, c = swirl_pair
        d = to_dispersive(ScalarPair(a, c))
        profiles = to_profiles(d, 3.5)
        assert profiles.t == 3.5
        back = from_profiles(profiles)
        _assert_close(back.Uplus.coeffs, d.Uplus.coeffs, rel=1e-14)
        _assert_close(back.Uminus.coeffs, d.Uminus.coeffs, rel=1e-14)

    def test_profile_phases(self, swirl_pair):
        _, a, c = swirl_pair
        d = to_dispersive(ScalarPair(a, c))
        lam = wavenumbers(d.spec).lam
        profiles = to_profiles(d, 2.0)
        _assert_close(profiles.Uplus.coeffs, np.exp(-2j * lam) * d.Uplus.coeffs)
        _assert_close(profiles.Uminus.coeffs, np.exp(2j * lam) * d.Uminus.coeffs)

    def test_profiles_need_a_time(self, swirl_pair):
        _, a, c = swirl_pair
        with pytest.raises(ConfigurationError):
            from_profiles(to_dispersive(ScalarPair(a, c)))


class TestPressure:
    def test_linear_pressure(self, swirl_pair):
        u, a, _ = swirl_pair
        w = wavenumbers(u.spec)
        k2 = np.where(w.kmod > 0, w.kmod ** 2, 1.0)
        expected = np.where(w.kmod > 0, -w.kh * a.coeffs / k2, 0.0)
        p = pressure_solve(u, include_quadratic=False)
        _assert_close(p.coeffs, expected)

    def test_solve_matches_direct(self, small_grid):
        u = _velocity(small_grid, swirl_spectrum(1.0, 1.0, 0.5), swirl_spectrum(1.0, 0.5, -1.0))
        mask = dealias_mask(small_grid)
        truncated = u.apply(mask)
        spectral = pressure_solve(truncated, mask=mask)
        direct = pressure_direct(truncated, mask=mask)
        _assert_close(spectral.coeffs, direct.coeffs, rel=1e-9)

    def test_zero_mean(self, swirl_pair):
        p = pressure_solve(swirl_pair[0])
        assert p.coeffs[0, 0, 0] == 0.0
