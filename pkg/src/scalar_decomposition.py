"""
Change of variables u <-> (A, C) <-> (U+, U-) for divergence-free axisymmetric velocity fields.

    A = |grad_h|^{-1} curl_h u            A_hat = i (xi1 u2_hat - xi2 u1_hat) / |xi_h|
    C = |grad| |grad_h|^{-1} u3           C_hat = |xi| u3_hat / |xi_h|

with inverse u = u_A + u_C,

    u_A = -grad_h^perp |grad_h|^{-1} A    u_A_hat = (i xi2, -i xi1, 0) A_hat / |xi_h|
    u_C = i Lambda grad_h |grad_h|^{-1} C + sqrt(1 - Lambda^2) C e3.

Both maps are mode-wise isometries on divergence-free fields without energy on xi_h = 0.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from loguru import logger

from src.config import config
from src.exceptions import AdmissibilityError, ConfigurationError
from src.fields import (
    SpectralField,
    VectorFieldSpectral,
    coriolis_apply,
    dealias_mask,
    divergence,
    inverse_transform,
    forward_transform,
    spectral_derivative,
    wavenumbers,
)
from src.models import GridSpec


@dataclass(frozen=True, eq=False)
class ScalarPair:
    A: SpectralField
    C: SpectralField

    def __post_init__(self):
        if self.A.spec != self.C.spec:
            raise ConfigurationError("A and C live on different grids")

    @property
    def spec(self) -> GridSpec:
        return self.A.spec

    def apply(self, symbol) -> "ScalarPair":
        return ScalarPair(self.A.apply(symbol), self.C.apply(symbol))

    def __add__(self, other: "ScalarPair") -> "ScalarPair":
        return ScalarPair(self.A + other.A, self.C + other.C)

    def __mul__(self, scalar) -> "ScalarPair":
        return ScalarPair(self.A * scalar, self.C * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class DispersiveUnknowns:
    """U+ = A + C and U- = A - C; profiles when ``t`` is set"""
    Uplus: SpectralField
    Uminus: SpectralField
    t: Optional[float] = None

    @property
    def spec(self) -> GridSpec:
        return self.Uplus.spec


@dataclass(frozen=True, eq=False)
class _Symbols:
    axis: np.ndarray        # xi_h == 0
    inv_kh: np.ndarray      # 1/|xi_h|, 0 on the axis
    kmod: np.ndarray
    kh: np.ndarray
    lam: np.ndarray


def _symbols(spec: GridSpec) -> _Symbols:
    w = wavenumbers(spec)
    axis = w.kh == 0
    inv_kh = np.where(axis, 0.0, 1.0 / np.where(axis, 1.0, w.kh))
    return _Symbols(axis=axis, inv_kh=inv_kh, kmod=w.kmod, kh=w.kh, lam=w.lam)


def axis_energy_fraction(u: VectorFieldSpectral) -> float:
    """Share of ||u||^2 carried by modes with xi_h = 0"""
    axis = _symbols(u.spec).axis
    total = sum(np.sum(np.abs(c.coeffs) ** 2) for c in u)
    if total == 0:
        return 0.0
    on_axis = sum(np.sum(np.abs(c.coeffs * axis) ** 2) for c in u)
    return float(on_axis / total)


def certify_band_limit(fields, p_floor: Optional[int] = None, tol: Optional[float] = None):
    """Reject data with energy where |xi_h|/|xi| < 2^p_floor (outside the axis itself)"""
    p_floor = config.P_FLOOR if p_floor is None else p_floor
    tol = config.TOL_ADMISSIBLE if tol is None else tol
    sym = _symbols(fields[0].spec)
    ratio = np.where(sym.kmod > 0, sym.kh / np.where(sym.kmod > 0, sym.kmod, 1.0), 1.0)
    cone = (ratio < 2.0 ** p_floor) & ~sym.axis
    if not np.any(cone):
        return
    total = sum(np.sum(np.abs(f.coeffs) ** 2) for f in fields)
    inside = sum(np.sum(np.abs(f.coeffs * cone) ** 2) for f in fields)
    if total > 0 and inside > tol * total:
        raise AdmissibilityError(
            f"energy fraction {inside / total:.3e} below the angular floor 2^{p_floor}; "
            f"the C multiplier is not certified there"
        )


def decompose(u: VectorFieldSpectral, tol: Optional[float] = None) -> ScalarPair:
    tol = config.TOL_ADMISSIBLE if tol is None else tol
    fraction = axis_energy_fraction(u)
    if fraction > tol:
        logger.error(f"❌ Rejected input: {fraction:.3e} of the energy sits on the vertical axis")
        raise AdmissibilityError(f"energy fraction {fraction:.3e} on xi_h = 0 exceeds {tol:.1e}")
    certify_band_limit(u.components)
    w = wavenumbers(u.spec)
    sym = _symbols(u.spec)
    real = all(c.real for c in u)
    a_hat = 1j * (w.kx * u[1].coeffs - w.ky * u[0].coeffs) * sym.inv_kh
    c_hat = sym.kmod * u[2].coeffs * sym.inv_kh
    return ScalarPair(SpectralField(u.spec, a_hat, real), SpectralField(u.spec, c_hat, real))


def reconstruct(pair: ScalarPair) -> VectorFieldSpectral:
    w = wavenumbers(pair.spec)
    sym = _symbols(pair.spec)
    a_hat = pair.A.coeffs * ~sym.axis
    c_hat = pair.C.coeffs * ~sym.axis
    horizontal = np.sqrt(np.clip(1.0 - sym.lam ** 2, 0.0, None))
    u1 = 1j * w.ky * sym.inv_kh * a_hat - sym.lam * w.kx * sym.inv_kh * c_hat
    u2 = -1j * w.kx * sym.inv_kh * a_hat - sym.lam * w.ky * sym.inv_kh * c_hat
    u3 = horizontal * c_hat
    real = pair.A.real and pair.C.real
    return VectorFieldSpectral.from_coeffs((u1, u2, u3), pair.spec, real=real, divergence_free=True)


def velocity_from_a(a: SpectralField) -> VectorFieldSpectral:
    return reconstruct(ScalarPair(a, SpectralField.zeros(a.spec)))


def velocity_from_c(c: SpectralField) -> VectorFieldSpectral:
    return reconstruct(ScalarPair(SpectralField.zeros(c.spec), c))


def to_dispersive(pair: ScalarPair) -> DispersiveUnknowns:
    return DispersiveUnknowns(pair.A + pair.C, pair.A - pair.C)


def from_dispersive(d: DispersiveUnknowns) -> ScalarPair:
    return ScalarPair(0.5 * (d.Uplus + d.Uminus), 0.5 * (d.Uplus - d.Uminus))


def to_profiles(d: DispersiveUnknowns, t: float) -> DispersiveUnknowns:
    """Profiles e^{-it Lambda} U+ and e^{it Lambda} U-"""
    lam = wavenumbers(d.spec).lam
    phase = np.exp(-1j * t * lam)
    return DispersiveUnknowns(d.Uplus.apply(phase), d.Uminus.apply(np.conj(phase)), t=t)


def from_profiles(profiles: DispersiveUnknowns, t: Optional[float] = None) -> DispersiveUnknowns:
    t = profiles.t if t is None else t
    if t is None:
        raise ConfigurationError("profiles need a time")
    lam = wavenumbers(profiles.spec).lam
    phase = np.exp(1j * t * lam)
    return DispersiveUnknowns(profiles.Uplus.apply(phase), profiles.Uminus.apply(np.conj(phase)))


def quadratic_products(u: VectorFieldSpectral, mask: Optional[np.ndarray] = None) -> dict:
    """Fourier transforms Q[a, b] of the six distinct products u^a u^b of the truncated field"""
    spec = u.spec
    mask = dealias_mask(spec, config.DEALIAS) if mask is None else mask
    physical = [inverse_transform(c.apply(mask)) for c in u]
    products = {}
    for a in range(3):
        for b in range(a, 3):
            q = forward_transform(physical[a] * physical[b], spec).coeffs * mask
            products[(a, b)] = products[(b, a)] = q
    return products


def pressure_rhs(u: VectorFieldSpectral, include_quadratic: bool = True,
                 mask: Optional[np.ndarray] = None) -> SpectralField:
    """Fourier transform of |grad_h| A - d_a d_b (u^a u^b)"""
    w = wavenumbers(u.spec)
    mask = dealias_mask(u.spec, config.DEALIAS) if mask is None else mask
    # |xi_h| A_hat = i (xi1 u2_hat - xi2 u1_hat)
    rhs = 1j * (w.kx * u[1].coeffs - w.ky * u[0].coeffs)
    if include_quadratic:
        q = quadratic_products(u, mask)
        k = (w.kx, w.ky, w.kz)
        rhs = rhs + sum(k[a] * k[b] * q[(a, b)] for a in range(3) for b in range(3))
        rhs = rhs * mask
    return SpectralField(u.spec, rhs, all(c.real for c in u))


def _inverse_laplacian(rhs: SpectralField) -> SpectralField:
    k2 = wavenumbers(rhs.spec).kmod ** 2
    return rhs.apply(np.where(k2 > 0, -1.0 / np.where(k2 > 0, k2, 1.0), 0.0))


def pressure_solve(u: VectorFieldSpectral, include_quadratic: bool = True,
                   mask: Optional[np.ndarray] = None) -> SpectralField:
    """Solve Delta p = |grad_h| A - d_a d_b (u^a u^b) with zero mean"""
    return _inverse_laplacian(pressure_rhs(u, include_quadratic, mask))


def pressure_direct(u: VectorFieldSpectral, mask: Optional[np.ndarray] = None) -> SpectralField:
    """Solve Delta p = -div(e3 x u) - div(u . grad u), advective form in physical space"""
    spec = u.spec
    mask = dealias_mask(spec, config.DEALIAS) if mask is None else mask
    truncated = u.apply(mask)
    velocity = truncated.physical()
    advection = []
    for a in range(3):
        grads = [inverse_transform(spectral_derivative(truncated[a], b)) for b in range(3)]
        advection.append(sum(velocity[b] * grads[b] for b in range(3)))
    advective = VectorFieldSpectral.from_physical(np.stack(advection), spec)
    rhs = -divergence(coriolis_apply(truncated)) - divergence(advective).apply(mask)
    return _inverse_laplacian(rhs)


def isometry_defect(u: VectorFieldSpectral, pair: ScalarPair, symbol=1.0) -> float:
    """| ||m u||^2 - ||m A||^2 - ||m C||^2 | / ||m u||^2"""
    lhs = u.apply(symbol).l2_norm() ** 2
    rhs = pair.A.apply(symbol).l2_norm() ** 2 + pair.C.apply(symbol).l2_norm() ** 2
    return abs(lhs - rhs) / lhs if lhs > 0 else abs(rhs)


SpectrumFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def reconstruct_spectrum(a_hat: SpectrumFn, c_hat: SpectrumFn):
    """Closed-form velocity spectrum (three callables) of the pair with spectra a_hat, c_hat"""

    def component(j: int) -> SpectrumFn:
        def u_hat(k1, k2, k3):
            kh = np.sqrt(k1 ** 2 + k2 ** 2)
            kmod = np.sqrt(kh ** 2 + k3 ** 2)
            inv_kh = np.where(kh > 0, 1.0 / np.where(kh > 0, kh, 1.0), 0.0)
            lam = np.where(kmod > 0, k3 / np.where(kmod > 0, kmod, 1.0), 0.0)
            a = a_hat(k1, k2, k3) * (kh > 0)
            c = c_hat(k1, k2, k3) * (kh > 0)
            if j == 0:
                return 1j * k2 * inv_kh * a - lam * k1 * inv_kh * c
            if j == 1:
                return -1j * k1 * inv_kh * a - lam * k2 * inv_kh * c
            return np.sqrt(np.clip(1.0 - lam ** 2, 0.0, None)) * c
        return u_hat

    return tuple(component(j) for j in range(3))
