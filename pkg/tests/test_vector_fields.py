"""
Tests for the phase functions, vector-field identities and shell sampling
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.config import config
from src.exceptions import ConfigurationError, DomainError
from src.localization import sample_spherical, spherical_grid
from src.models import ShellIndex
from src.vector_fields import (
    FrequencyPair,
    chain_rule_residual,
    d3_apply,
    d3_closed_forms,
    d3_finite_difference,
    fd_phase_derivative,
    gamma_coefficients,
    identity_suite,
    in_shell,
    lambda_of,
    multiplier_bound_sample,
    phase,
    phase_vs_sigma_sample,
    sample_localized_pairs,
    sample_shell,
    scaling_apply_spherical,
    sigma_bar,
    sigma_from_cross,
    upsilon_apply,
    vf_magnitude_ratio,
    vf_phase_derivative,
)

UNIT_SHELLS = [ShellIndex(k=0, p=0, q=0)] * 3

vectors = st.tuples(*(st.floats(min_value=-4, max_value=4) for _ in range(3))).filter(
    lambda v: np.hypot(v[0], v[1]) > 1e-2
)


@pytest.fixture
def unit_pairs(rng):
    return sample_localized_pairs(rng, UNIT_SHELLS, 500)


class TestFrequencyPairs:
    def test_lambda_at_zero(self):
        with pytest.raises(DomainError):
            lambda_of([0.0, 0.0, 0.0])

    def test_vanishing_difference(self):
        xi = np.array([[1.0, 2.0, 3.0]])
        with pytest.raises(DomainError, match="xi - eta"):
            FrequencyPair(xi, xi.copy())

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            FrequencyPair(np.ones((2, 3)), np.ones((3, 3)))

    def test_phase_is_antisymmetric_under_reflection(self, unit_pairs):
        flipped = FrequencyPair(-unit_pairs.xi, -unit_pairs.eta)
        np.testing.assert_allclose(phase(1, -1, flipped), -phase(1, -1, unit_pairs), atol=1e-14)

    @given(vectors, vectors)
    @settings(max_examples=200, deadline=None)
    def test_sigma_is_a_cross_product(self, xi, eta):
        xi, eta = np.array(xi), np.array(eta)
        if np.linalg.norm(xi - eta) < 1e-6 or np.linalg.norm(eta) < 1e-6:
            return
        pair = FrequencyPair(xi, eta)
        np.testing.assert_allclose(sigma_bar(pair), sigma_from_cross(pair), atol=1e-12)


class TestIdentities:
    def test_suite_passes_on_unit_shells(self, unit_pairs):
        suite = identity_suite(unit_pairs)
        failed = {name: stats.max_residual for name, stats in suite.items() if not stats.passed}
        assert not failed
        assert all(stats.samples == 500 for stats in suite.values())

    def test_first_derivative_against_oracle(self, unit_pairs):
        closed = vf_phase_derivative("Omega", "zeta", unit_pairs, 1, -1)
        oracle = fd_phase_derivative("Omega", "zeta", unit_pairs, 1, -1)
        np.testing.assert_allclose(closed, oracle, atol=1e-7)

    def test_d3_closed_forms(self, unit_pairs):
        closed = d3_closed_forms(unit_pairs)
        oracle = d3_finite_difference(unit_pairs)
        assert closed.keys() == oracle.keys()
        for name in closed:
            np.testing.assert_allclose(closed[name], oracle[name], atol=1e-7)

    @pytest.mark.parametrize("V", ["S", "Omega"])
    @pytest.mark.parametrize("slot", ["eta", "zeta"])
    def test_chain_rule(self, unit_pairs, V, slot):
        assert np.max(chain_rule_residual(V, slot, unit_pairs)) <= 1e-8

    def test_unknown_vector_field(self, unit_pairs):
        with pytest.raises(ConfigurationError):
            gamma_coefficients("Upsilon", "eta", unit_pairs)

    def test_magnitude_ratio_bracket(self, unit_pairs):
        ratio = vf_magnitude_ratio(unit_pairs)
        ratio = ratio[np.isfinite(ratio)]
        assert ratio.size > 0
        assert np.all(ratio >= 1 - 1e-12)
        assert np.all(ratio <= np.sqrt(2) + 1e-12)

    def test_magnitude_ratio_needs_horizontal_parts(self):
        pair = FrequencyPair(np.array([[0.0, 0.0, 1.0]]), np.array([[1.0, 0.0, 0.0]]))
        with pytest.raises(DomainError, match="horizontal"):
            vf_magnitude_ratio(pair)


class TestSampling:
    @pytest.mark.parametrize("index", [
        ShellIndex(k=0, p=0, q=0),
        ShellIndex(k=2, p=-3, q=0),
        ShellIndex(k=-1, p=0, q=-2),
        ShellIndex(k=1),
    ])
    def test_samples_land_in_their_shell(self, rng, index):
        samples = sample_shell(rng, index, 2000)
        assert samples.shape == (2000, 3)
        assert np.all(in_shell(samples, index))

    def test_hemisphere(self, rng):
        samples = sample_shell(rng, ShellIndex(k=0, p=-1, q=0), 200, hemisphere=-1)
        assert np.all(samples[:, 2] < 0)

    def test_incompatible_shell_is_empty(self, rng):
        assert sample_shell(rng, ShellIndex(k=0, p=-4, q=-4), 10).shape == (0, 3)
        with pytest.raises(DomainError):
            sample_localized_pairs(rng, [ShellIndex(k=0, p=-4, q=-4)] * 3, 10)

    def test_pairs_are_localized(self, unit_pairs):
        for v in (unit_pairs.xi, unit_pairs.zeta, unit_pairs.eta):
            assert np.all(in_shell(v, UNIT_SHELLS[0]))

    def test_multiplier_bound(self):
        stats = multiplier_bound_sample(UNIT_SHELLS, 2000, seed=3)
        assert stats.passed
        assert stats.budget == pytest.approx(1.6 ** 3)


class TestPhaseVersusSigma:
    def test_same_hemisphere_never_resonates(self):
        """Lambda(xi) + Lambda(xi - eta) + Lambda(eta) stays away from zero in one hemisphere"""
        stats = phase_vs_sigma_sample(UNIT_SHELLS, 10, (1, 1), seed=0, hemispheres=(1, 1, 1), batch=1000)
        assert stats.inconclusive
        assert stats.conditioned == 0
        assert stats.passed

    def test_threshold(self):
        stats = phase_vs_sigma_sample(UNIT_SHELLS, 10, (1, 1), seed=0, hemispheres=(1, 1, 1), batch=1000)
        assert stats.phase_threshold == 2.0 ** -10

    def test_records_are_reproducible(self):
        first = phase_vs_sigma_sample(UNIT_SHELLS, 200, (1, -1), seed=5, batch=2000)
        second = phase_vs_sigma_sample(UNIT_SHELLS, 200, (1, -1), seed=5, batch=2000)
        assert first.model_dump() == second.model_dump()

    @pytest.mark.parametrize("signs", [(1, 1), (1, -1)])
    def test_frozen_lower_constant_holds(self, signs):
        """Parallel xi, eta give |Phi| >= 0.4 on unit shells, so a small phase keeps sigma away from 0"""
        stats = phase_vs_sigma_sample(UNIT_SHELLS, 5000, signs, seed=7, batch=20_000)
        assert not stats.inconclusive
        assert stats.min_ratio >= config.C_STAR
        assert stats.counterexamples == 0
        assert stats.min_pmax >= 1 / 8
        assert stats.passed

    @pytest.mark.slow
    def test_frozen_lower_constant_on_a_full_sweep(self):
        stats = phase_vs_sigma_sample(UNIT_SHELLS, 10 ** 6, (1, 1), seed=0)
        assert not stats.inconclusive
        assert stats.min_ratio >= config.C_STAR
        assert stats.counterexamples == 0
        assert stats.passed


class TestSphericalOperators:
    def test_scaling_of_rho_squared(self):
        s = sample_spherical(lambda r, l: r ** 2 + 0 * l, 1.0, 4.0, points_per_shell=16, n_lam=16)
        out = scaling_apply_spherical(s)
        expected = 2 * s.rho[:, None] ** 2 * np.ones_like(s.lam)[None, :]
        np.testing.assert_allclose(out.values.real, expected, atol=1e-9 * np.max(expected))

    def test_upsilon_of_lambda(self):
        s = sample_spherical(lambda r, l: np.exp(-r) * l, 1.0, 2.0, points_per_shell=8, n_lam=64)
        out = upsilon_apply(s)
        expected = -np.exp(-s.rho)[:, None] * np.sqrt(1 - s.lam ** 2)[None, :]
        np.testing.assert_allclose(out.values.real, expected, atol=1e-10)

    def test_d3_of_basic_functions(self):
        rho = sample_spherical(lambda r, l: r + 0 * l, 1.0, 2.0, points_per_shell=16, n_lam=64)
        np.testing.assert_allclose(d3_apply(rho).values.real, rho.rho[:, None] * rho.lam[None, :], atol=1e-9)
        lam = sample_spherical(lambda r, l: 0 * r + l, 1.0, 2.0, points_per_shell=16, n_lam=64)
        expected = np.broadcast_to(1 - lam.lam[None, :] ** 2, lam.values.shape)
        np.testing.assert_allclose(d3_apply(lam).values.real, expected, atol=1e-9)

    def test_under_resolved_warning(self, rng, captured_warnings):
        grid = spherical_grid(1.0, 2.0, points_per_shell=4, n_lam=32)
        s = grid.from_coefficients(rng.standard_normal((grid.rho.size, 32)))
        upsilon_apply(s)
        assert any("Under-resolved" in m for m in captured_warnings)
