"""
Shared fixtures for the Euler-Coriolis toolkit tests
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from loguru import logger

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.fields import VectorFieldSpectral, apply_rotation, coriolis_apply, field_from_spectrum, make_grid  # noqa: E402
from src.models import GridSpec  # noqa: E402


def gaussian_spectrum(sigma: float = 1.0, shape=None):
    """f_hat = shape(Lambda) exp(-|xi|^2 / (2 sigma^2))"""
    def fhat(k1, k2, k3):
        k2_total = k1 ** 2 + k2 ** 2 + k3 ** 2
        envelope = np.exp(-k2_total / (2 * sigma ** 2))
        if shape is None:
            return envelope
        kmod = np.sqrt(k2_total)
        lam = np.where(kmod > 0, k3 / np.where(kmod > 0, kmod, 1.0), 0.0)
        return shape(lam) * envelope
    return fhat


def swirl_spectrum(sigma: float = 1.0, a: float = 1.0, b: float = 0.5):
    """Admissible scalar spectrum |xi_h|^2 (a + i b Lambda) exp(-|xi|^2 / (2 sigma^2))"""
    def fhat(k1, k2, k3):
        kh2 = k1 ** 2 + k2 ** 2
        k2_total = kh2 + k3 ** 2
        kmod = np.sqrt(k2_total)
        lam = np.where(kmod > 0, k3 / np.where(kmod > 0, kmod, 1.0), 0.0)
        return kh2 * (a + 1j * b * lam) * np.exp(-k2_total / (2 * sigma ** 2))
    return fhat


def flat_spectrum(power: int = 12, sigma: float = 0.7, tilt: float = 0.0, horizontal: bool = False, shape=None):
    """
    |xi|^power (|xi_h|^power when horizontal) (1 + i tilt xi1) shape(Lambda) exp(-|xi|^2 / (2 sigma^2)).

    Even powers vanish to high order where the degree-0 symbols are singular, so images of these fields
    under those symbols stay negligible at the edge of the wide grid; sigma = 0.7 keeps the Nyquist
    faces of that grid below 1e-10 of the peak.
    """
    def fhat(k1, k2, k3):
        kh2 = k1 ** 2 + k2 ** 2
        k2_total = kh2 + k3 ** 2
        base = kh2 if horizontal else k2_total
        value = base ** (power // 2) * (1 + 1j * tilt * k1) * np.exp(-k2_total / (2 * sigma ** 2))
        if shape is None:
            return value
        kmod = np.sqrt(k2_total)
        lam = np.where(kmod > 0, k3 / np.where(kmod > 0, kmod, 1.0), 0.0)
        return shape(lam) * value
    return fhat


def turning_defect(v: VectorFieldSpectral) -> VectorFieldSpectral:
    """Omega on each component minus e3 x v; zero exactly when v is axisymmetric"""
    return VectorFieldSpectral(tuple(apply_rotation(c) - t for c, t in zip(v, coriolis_apply(v))))


@pytest.fixture(scope="session")
def small_grid() -> GridSpec:
    return make_grid(16, 8.0)


@pytest.fixture(scope="session")
def medium_grid() -> GridSpec:
    return make_grid(32, 16.0)


@pytest.fixture(scope="session")
def wide_grid() -> GridSpec:
    return make_grid(64, 32.0)


@pytest.fixture(scope="session")
def desk_grid() -> GridSpec:
    return make_grid(128, 64.0)


@pytest.fixture
def gaussian_field(medium_grid):
    return field_from_spectrum(gaussian_spectrum(), medium_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def captured_warnings():
    """WARNING-or-above loguru messages emitted during a test"""
    messages = []
    handler = logger.add(lambda m: messages.append(m.record["message"]), level="WARNING", format="{message}")
    yield messages
    logger.remove(handler)
