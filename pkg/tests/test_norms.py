"""
Tests for the B, X and D norms and the Sobolev diagnostics
"""

import json

import numpy as np
import pytest

from src.config import config
from src.fields import SpectralField, field_from_spectrum, forward_transform, make_grid, plane_wave
from src.localization import horizontal_cutoff, radial_cutoff, sample_spherical
from src.norms import (
    angular_truncation,
    b_norm,
    b_table,
    b_weight,
    d_norm,
    fourier_linf_check,
    hminus1_proxy,
    interpolation_check,
    interpolation_sides,
    norm_report,
    sobolev_norm,
    top_angular_index,
    vector_field_sobolev,
    write_norm_report,
    x_norm,
    x_table_spherical,
    x_weight,
)
from tests.conftest import gaussian_spectrum, swirl_spectrum


@pytest.fixture
def swirl(medium_grid):
    return field_from_spectrum(swirl_spectrum(), medium_grid)


class TestWeights:
    @pytest.mark.parametrize("k,p,q,expected", [
        (0, 0, 0, 1.0),
        (1, -1, -2, 32.0),
        (-2, 0, 0, 2.0),
    ])
    def test_b_weight(self, k, p, q, expected):
        assert b_weight(k, p, q) == pytest.approx(expected)

    def test_x_weight(self):
        assert x_weight(0, 0, 0, 0.01) == 1.0
        assert x_weight(1, 2, -2, 0.0) == pytest.approx(32.0)

    @pytest.mark.parametrize("n_lam,expected", [(256, 6), (64, 4), (16, 2)])
    def test_top_angular_index(self, n_lam, expected):
        assert top_angular_index(n_lam, ell_max=12) == expected
        assert top_angular_index(n_lam, ell_max=1) == 1


class TestHierarchy:
    def test_homogeneity(self, swirl):
        assert b_norm(swirl * 2.0) == pytest.approx(2.0 * b_norm(swirl), rel=1e-12)
        assert x_norm(swirl * 3.0) == pytest.approx(3.0 * x_norm(swirl), rel=1e-10)

    def test_zero_field(self, medium_grid):
        zero = SpectralField.zeros(medium_grid)
        assert b_norm(zero) == 0.0
        assert x_norm(zero) == 0.0
        assert fourier_linf_check(zero) == 0.0

    def test_sparse_shells_are_excluded(self, swirl):
        rows, excluded = b_table(swirl, min_points=10 ** 9)
        assert rows == []
        assert excluded

    def test_b_rows_are_weighted(self, swirl):
        rows, _ = b_table(swirl)
        assert rows
        for row in rows:
            assert row.weighted == pytest.approx(row.weight * row.l2)
            assert row.points >= config.MIN_SHELL_POINTS

    def test_fourier_linf_control(self, swirl):
        assert 0 < fourier_linf_check(swirl) <= config.C_LEMMA

    def test_angular_truncation_of_low_degrees(self):
        s = sample_spherical(lambda r, l: np.exp(-r) * l ** 2, 1.0, 2.0, n_lam=64)
        assert angular_truncation(s, 4) <= 1e-12


def _random_swirl(rng, spec):
    sigma = rng.uniform(0.7, 1.3)
    a, b = rng.standard_normal(2)
    return field_from_spectrum(swirl_spectrum(sigma, a, b), spec)


class TestNormProperties:
    def test_triangle_inequality(self, rng, small_grid):
        for _ in range(3):
            f, g = _random_swirl(rng, small_grid), _random_swirl(rng, small_grid)
            assert b_norm(f + g) <= (b_norm(f) + b_norm(g)) * (1 + 1e-10)
            assert x_norm(f + g) <= (x_norm(f) + x_norm(g)) * (1 + 1e-10)
        assert d_norm(f + g) <= (d_norm(f) + d_norm(g)) * (1 + 1e-10)

    def test_d_dominates_b_and_x(self, swirl):
        b, x = b_norm(swirl), x_norm(swirl)
        assert b > 0 and x > 0
        assert d_norm(swirl) >= (b + x) * (1 - 1e-12)
        assert d_norm(swirl) >= max(b, x)

    def test_x_is_monotone_in_beta(self, swirl):
        values = [x_norm(swirl, beta) for beta in (0.0, 0.025, 0.05, 0.1)]
        assert all(lo <= hi * (1 + 1e-12) for lo, hi in zip(values, values[1:]))

    def test_single_mode_b_value(self):
        """|xi| = 4/5 with sqrt(1 - Lambda^2) = 3/5: only shells (0, 0, 0) and (0, -1, 0) see it, each at 1/2"""
        spec = make_grid(16, 5 * 2 * np.pi / 0.8)
        f = forward_transform(plane_wave(spec, (0, 3, 4)).real, spec)
        rows, _ = b_table(f)
        live = {(row.k, row.p, row.q): row for row in rows if row.l2 > 1e-12 * f.l2_norm()}
        assert set(live) == {(0, 0, 0), (0, -1, 0)}
        assert live[(0, 0, 0)].l2 == pytest.approx(0.5 * f.l2_norm(), rel=1e-12)
        assert b_norm(f) == pytest.approx(f.l2_norm(), rel=1e-12)

    def test_bottom_angular_row_uses_the_low_pass_projection(self):
        """Lambda-independent data has only degree 0: R_l kills it for l >= 1 but R_{<=l} keeps it"""
        s = sample_spherical(lambda r, l: np.exp(-r ** 2 / 2) * (1 + 0 * l), 0.5, 4.0, n_lam=64)
        rows, _ = x_table_spherical(s, beta=0.0, p_floor=-4, k_values=[0])
        by_index = {(row.ell, row.p): row for row in rows}
        symbol = radial_cutoff(0, s.rho)[:, None] * horizontal_cutoff(-2, s.lam)[None, :]
        expected = np.sqrt(np.sum(symbol ** 2 * np.abs(s.values) ** 2 * s.measure()))
        assert expected > 0
        assert by_index[(2, -2)].l2 == pytest.approx(expected, rel=1e-10)
        assert by_index[(2, -1)].l2 <= 1e-10 * expected
        assert (1, -2) not in by_index


class TestFrozenConstants:
    def test_fourier_linf_constant_covers_poles_and_equator(self, medium_grid):
        pole = field_from_spectrum(lambda k1, k2, k3: k3 ** 8 * gaussian_spectrum()(k1, k2, k3), medium_grid)
        equator = field_from_spectrum(lambda k1, k2, k3: (k1 ** 2 + k2 ** 2) ** 4 * gaussian_spectrum()(k1, k2, k3),
                                      medium_grid)
        ratios = [fourier_linf_check(pole), fourier_linf_check(equator)]
        assert all(r > 0 for r in ratios)
        assert max(ratios) <= config.C_LEMMA


class TestSobolev:
    def test_order_zero_is_l2(self, swirl):
        assert sobolev_norm(swirl, 0) == pytest.approx(swirl.l2_norm(), rel=1e-14)
        assert vector_field_sobolev(swirl, 0) == pytest.approx(swirl.l2_norm(), rel=1e-14)

    def test_monotone_in_order(self, swirl):
        values = [sobolev_norm(swirl, N) for N in range(5)]
        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_cap(self, swirl):
        with pytest.raises(ValueError, match="cap"):
            sobolev_norm(swirl, config.SOBOLEV_CAP + 1)
        with pytest.raises(ValueError, match="cap"):
            vector_field_sobolev(swirl, config.SOBOLEV_CAP + 1)

    def test_hminus1_flags_lowest_modes(self, medium_grid, swirl):
        wave = forward_transform(plane_wave(medium_grid, (1, 0, 0)), medium_grid)
        value, flagged = hminus1_proxy(wave)
        assert value > 0 and flagged
        _, flagged = hminus1_proxy(swirl)
        assert not flagged

    def test_interpolation(self, gaussian_field):
        lhs, rhs = interpolation_sides(gaussian_field, 0, 1)
        assert 0 < lhs <= rhs
        assert interpolation_check(gaussian_field, 0, 1)
        with pytest.raises(ValueError):
            interpolation_check(gaussian_field, 0, 3)


class TestReport:
    def test_report_and_files(self, small_grid, tmp_path):
        f = field_from_spectrum(gaussian_spectrum(shape=lambda lam: 1 - lam ** 2), small_grid)
        report = norm_report(f, include_d=False, sobolev_n=2)
        assert report.d_norm is None
        assert set(report.sobolev) == {"0", "1", "2"}
        assert report.b_norm > 0
        assert "Lambda nodes" in report.truncation_note

        files = write_norm_report(report, tmp_path, "gaussian")
        assert files["csv"].exists()
        summary = json.loads(files["json"].read_text())
        assert "rows" not in summary
        assert summary["b_norm"] == pytest.approx(report.b_norm)
        assert set(report.to_frame()["kind"]) == {"B", "X"}
