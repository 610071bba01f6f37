"""
Periodic-box grids, spectral transforms and vector fields.

Fourier convention used by every module of the toolkit:

    f_hat(xi) = sum_x e^{-i x.xi} f(x) dx^3,       xi = (2 pi / L) m,
    f(x)      = L^{-3} sum_m e^{i x.xi} f_hat(xi),

so that ||f||_{L2}^2 = L^{-3} sum |f_hat|^2, the discrete form of (2 pi)^{-3} ||f_hat||^2.
Physical coordinates cover the centred box [-L/2, L/2)^3.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterator, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import fft

from src.config import config
from src.exceptions import ConfigurationError
from src.models import AxisymmetryResult, GridSpec

_FFT_WORKERS = max(1, config.THREADS)

# S and Omega multiply by the non-periodic coordinate; gradients above this share of their peak at x = -L/2
# mean the result carries a jump at the box edge
EDGE_TOLERANCE = 1e-3


def set_fft_workers(workers: int):
    """Number of threads scipy.fft may use; results do not depend on it"""
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(workers))


def make_grid(n: Optional[int] = None, L: Optional[float] = None) -> GridSpec:
    try:
        return GridSpec(n=n or config.GRID_N, L=L or config.BOX_L)
    except ValueError as e:
        raise ConfigurationError(str(e)) from e


@dataclass(frozen=True, eq=False)
class Wavenumbers:
    """Broadcastable frequency arrays of a grid"""
    spec: GridSpec
    m: np.ndarray          # integer wavevector along one axis, FFT order
    kx: np.ndarray         # shape (n, 1, 1)
    ky: np.ndarray         # shape (1, n, 1)
    kz: np.ndarray         # shape (1, 1, n)
    dkx: np.ndarray        # derivative wavenumbers, Nyquist entry zeroed
    dky: np.ndarray
    dkz: np.ndarray
    kh: np.ndarray         # |xi_h|, shape (n, n, 1)
    kmod: np.ndarray       # |xi|, full shape
    lam: np.ndarray        # Lambda = xi_3/|xi| with Lambda(0) = 0

    def axis(self, j: int) -> np.ndarray:
        return (self.kx, self.ky, self.kz)[j]

    def derivative_axis(self, j: int) -> np.ndarray:
        return (self.dkx, self.dky, self.dkz)[j]


@lru_cache(maxsize=8)
def wavenumbers(spec: GridSpec) -> Wavenumbers:
    n = spec.n
    m = np.fft.fftfreq(n, d=1.0 / n)
    xi = spec.k_min * m
    dxi = xi.copy()
    dxi[n // 2] = 0.0
    kx, ky, kz = xi[:, None, None], xi[None, :, None], xi[None, None, :]
    kh = np.sqrt(kx ** 2 + ky ** 2)
    kmod = np.sqrt(kh ** 2 + kz ** 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.where(kmod > 0, kz / np.where(kmod > 0, kmod, 1.0), 0.0)
    for array in (kh, kmod, lam):
        array.setflags(write=False)
    return Wavenumbers(
        spec=spec, m=m, kx=kx, ky=ky, kz=kz,
        dkx=dxi[:, None, None], dky=dxi[None, :, None], dkz=dxi[None, None, :],
        kh=kh, kmod=kmod, lam=lam,
    )


@lru_cache(maxsize=8)
def coordinates(spec: GridSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = -spec.L / 2 + spec.dx * np.arange(spec.n)
    return x[:, None, None], x[None, :, None], x[None, None, :]


@dataclass(frozen=True, eq=False)
class CylindricalIndex:
    """Map from grid modes to distinct (|xi_h|, xi_3) pairs

    Every multiplier of the toolkit depends on (|xi_h|, xi_3) only, so shell tables and
    axisymmetric resampling can run on the distinct pairs and scatter back.
    """
    spec: GridSpec
    kh: np.ndarray         # |xi_h| of each pair, flat
    kz: np.ndarray         # xi_3 of each pair, flat
    index: np.ndarray      # pair id of each grid mode, grid shape
    counts: np.ndarray     # number of grid modes per pair

    @property
    def size(self) -> int:
        return self.kh.size

    @property
    def kmod(self) -> np.ndarray:
        return np.hypot(self.kh, self.kz)

    def reduce_sum(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(self.index.ravel(), weights=np.asarray(values).ravel(), minlength=self.size)

    def reduce_max(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.size)
        np.maximum.at(out, self.index.ravel(), np.asarray(values).ravel())
        return out

    def scatter(self, pair_values: np.ndarray) -> np.ndarray:
        return np.asarray(pair_values)[self.index]


@lru_cache(maxsize=4)
def cylindrical_index(spec: GridSpec) -> CylindricalIndex:
    n = spec.n
    m = np.fft.fftfreq(n, d=1.0 / n)
    h2 = (m[:, None] ** 2 + m[None, :] ** 2).ravel()
    unique_h2, inverse = np.unique(h2, return_inverse=True)
    index = inverse.reshape(n, n, 1) * n + np.arange(n)[None, None, :]
    kh = np.repeat(spec.k_min * np.sqrt(unique_h2), n)
    kz = np.tile(spec.k_min * m, unique_h2.size)
    counts = np.bincount(index.ravel(), minlength=kh.size)
    return CylindricalIndex(spec=spec, kh=kh, kz=kz, index=index, counts=counts)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a scalar field on a periodic grid (FFT ordering)"""
    spec: GridSpec
    coeffs: np.ndarray
    real: bool = True

    def __post_init__(self):
        if self.coeffs.shape != self.spec.shape:
            raise ConfigurationError(
                f"coefficient shape {self.coeffs.shape} does not match grid {self.spec.shape}"
            )
        self.coeffs.setflags(write=False)

    @classmethod
    def zeros(cls, spec: GridSpec) -> "SpectralField":
        return cls(spec, np.zeros(spec.shape, dtype=complex))

    def with_coeffs(self, coeffs: np.ndarray, real: Optional[bool] = None) -> "SpectralField":
        return SpectralField(self.spec, np.asarray(coeffs, dtype=complex), self.real if real is None else real)

    def apply(self, symbol, real: Optional[bool] = None) -> "SpectralField":
        """Mode-wise multiplication by a symbol"""
        return self.with_coeffs(self.coeffs * symbol, real)

    def physical(self) -> np.ndarray:
        return inverse_transform(self)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)) / self.spec.L ** 1.5)

    def inner(self, other: "SpectralField") -> complex:
        return complex(np.vdot(other.coeffs, self.coeffs) / self.spec.L ** 3)

    def hermitian_residual(self) -> float:
        """max |c(-m) - conj c(m)| relative to max |c|"""
        c = self.coeffs
        flipped = np.roll(c[::-1, ::-1, ::-1], 1, axis=(0, 1, 2))
        scale = np.max(np.abs(c))
        return float(np.max(np.abs(flipped - np.conj(c))) / scale) if scale > 0 else 0.0

    def _check(self, other: "SpectralField"):
        if other.spec != self.spec:
            raise ConfigurationError("fields live on different grids")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.spec, self.coeffs + other.coeffs, self.real and other.real)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.spec, self.coeffs - other.coeffs, self.real and other.real)

    def __mul__(self, scalar) -> "SpectralField":
        real = self.real and np.isrealobj(scalar)
        return SpectralField(self.spec, self.coeffs * scalar, real)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.spec, -self.coeffs, self.real)


def forward_transform(samples: np.ndarray, spec: GridSpec, real: Optional[bool] = None) -> SpectralField:
    samples = np.asarray(samples)
    if samples.shape != spec.shape:
        raise ConfigurationError(f"sample shape {samples.shape} does not match grid {spec.shape}")
    if real is None:
        real = not np.iscomplexobj(samples)
    coeffs = spec.dx ** 3 * fft.fftn(fft.ifftshift(samples), workers=_FFT_WORKERS)
    return SpectralField(spec, coeffs, real)


def inverse_transform(f: SpectralField) -> np.ndarray:
    samples = fft.fftshift(fft.ifftn(f.coeffs, workers=_FFT_WORKERS)) / f.spec.dx ** 3
    return samples.real if f.real else samples


def plane_wave(spec: GridSpec, m: Sequence[int]) -> np.ndarray:
    """Samples of e^{i x.xi} for integer wavevector m"""
    X, Y, Z = coordinates(spec)
    xi = spec.k_min * np.asarray(m, dtype=float)
    return np.exp(1j * (xi[0] * X + xi[1] * Y + xi[2] * Z))


def make_axisymmetric_field(g: Callable[[np.ndarray, np.ndarray], np.ndarray], spec: GridSpec) -> SpectralField:
    """Sample g(sqrt(x1^2 + x2^2), x3) and transform"""
    X, Y, Z = coordinates(spec)
    values = np.broadcast_to(g(np.hypot(X, Y), Z), spec.shape)
    peak = np.max(np.abs(values))
    boundary = _edge_value(values)
    if peak > 0 and boundary > 1e-8 * peak:
        logger.warning(f"⚠️ Wrap-around: boundary value {boundary:.3e} exceeds 1e-8 of peak {peak:.3e}")
    return forward_transform(values, spec)


def field_from_spectrum(symbol: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
                        spec: GridSpec, real: bool = True) -> SpectralField:
    """Build a field from a closed-form Fourier transform f_hat(xi1, xi2, xi3)"""
    w = wavenumbers(spec)
    coeffs = np.broadcast_to(symbol(w.kx, w.ky, w.kz), spec.shape).astype(complex)
    return SpectralField(spec, coeffs, real)


def scaling_spectrum(symbol: Callable, h: float = 1e-5) -> Callable:
    """Fourier side of S: -3 f_hat - xi . grad f_hat, ray derivative by central differences"""
    def scaled(k1, k2, k3):
        ray = (symbol((1 + h) * k1, (1 + h) * k2, (1 + h) * k3)
               - symbol((1 - h) * k1, (1 - h) * k2, (1 - h) * k3)) / (2 * h)
        return -3.0 * symbol(k1, k2, k3) - ray
    return scaled


def rotation_spectrum(symbol: Callable, h: float = 1e-5) -> Callable:
    """Fourier side of Omega: (xi1 d2 - xi2 d1) f_hat, rotation derivative by central differences"""
    c, s = np.cos(h), np.sin(h)

    def rotated(k1, k2, k3):
        forward = symbol(c * k1 - s * k2, s * k1 + c * k2, k3)
        backward = symbol(c * k1 + s * k2, -s * k1 + c * k2, k3)
        return (forward - backward) / (2 * h)
    return rotated


def spectral_derivative(f: SpectralField, j: int) -> SpectralField:
    return f.apply(1j * wavenumbers(f.spec).derivative_axis(j))


def gradient_physical(f: SpectralField) -> np.ndarray:
    return np.stack([inverse_transform(spectral_derivative(f, j)) for j in range(3)])


def _edge_value(values: np.ndarray) -> float:
    """Largest magnitude on the faces x_j = -L/2, where the centred coordinates jump"""
    magnitude = np.abs(values)
    if magnitude.ndim == 4:
        magnitude = np.max(magnitude, axis=0)
    return float(max(np.max(magnitude[0]), np.max(magnitude[:, 0]), np.max(magnitude[:, :, 0])))


def _warn_on_edge(grad: np.ndarray, operator: str) -> float:
    peak = float(np.max(np.abs(grad)))
    ratio = _edge_value(grad) / peak if peak > 0 else 0.0
    if ratio > EDGE_TOLERANCE:
        logger.warning(f"⚠️ Wrap-around: {operator} sees a box-edge gradient at {ratio:.2e} of its peak; "
                       f"the result is only meaningful for data decayed at the edge")
    return ratio


def apply_rotation(f: SpectralField) -> SpectralField:
    """
    Omega f = x1 d2 f - x2 d1 f.

    The coordinate factor is the centred, non-periodic x, so the result is only the periodic-box
    image of Omega f when f has decayed at the box edge; larger edge gradients log a wrap-around warning.
    """
    X, Y, _ = coordinates(f.spec)
    d1 = inverse_transform(spectral_derivative(f, 0))
    d2 = inverse_transform(spectral_derivative(f, 1))
    _warn_on_edge(np.stack([d1, d2]), "Omega")
    return forward_transform(X * d2 - Y * d1, f.spec, real=f.real)


def apply_scaling(f: SpectralField) -> SpectralField:
    """S f = x . grad f, with the same edge caveat as `apply_rotation`"""
    X, Y, Z = coordinates(f.spec)
    grad = gradient_physical(f)
    _warn_on_edge(grad, "S")
    return forward_transform(X * grad[0] + Y * grad[1] + Z * grad[2], f.spec, real=f.real)


def check_axisymmetry(f: SpectralField) -> AxisymmetryResult:
    norm = f.l2_norm()
    if norm == 0:
        logger.warning("⚠️ Axisymmetry check on a zero field, residual set to 0")
        return AxisymmetryResult(residual=0.0, zero_field=True, axisymmetric=True)
    residual = apply_rotation(f).l2_norm() / norm
    return AxisymmetryResult(residual=residual, axisymmetric=residual <= config.TOL_AXISYMMETRY)


def dealias_mask(spec: GridSpec, fraction: float = 2.0 / 3.0) -> np.ndarray:
    """Cube of modes |m_j| < fraction * n / 2 kept by the truncation rule"""
    w = wavenumbers(spec)
    keep = np.abs(w.m) < fraction * spec.n / 2
    return keep[:, None, None] & keep[None, :, None] & keep[None, None, :]


@dataclass(frozen=True, eq=False)
class VectorFieldSpectral:
    components: Tuple[SpectralField, SpectralField, SpectralField]
    divergence_free: bool = False

    def __post_init__(self):
        if len(self.components) != 3:
            raise ConfigurationError("vector fields have three components")
        specs = {c.spec for c in self.components}
        if len(specs) != 1:
            raise ConfigurationError("vector components live on different grids")

    @property
    def spec(self) -> GridSpec:
        return self.components[0].spec

    def __getitem__(self, j: int) -> SpectralField:
        return self.components[j]

    def __iter__(self) -> Iterator[SpectralField]:
        return iter(self.components)

    @classmethod
    def from_physical(cls, samples: np.ndarray, spec: GridSpec, divergence_free: bool = False) -> "VectorFieldSpectral":
        return cls(tuple(forward_transform(samples[j], spec) for j in range(3)), divergence_free)

    @classmethod
    def from_coeffs(cls, coeffs: Sequence[np.ndarray], spec: GridSpec, real: bool = True,
                    divergence_free: bool = False) -> "VectorFieldSpectral":
        return cls(tuple(SpectralField(spec, np.asarray(c, dtype=complex), real) for c in coeffs), divergence_free)

    def coeffs(self) -> np.ndarray:
        return np.stack([c.coeffs for c in self.components])

    def physical(self) -> np.ndarray:
        return np.stack([inverse_transform(c) for c in self.components])

    def apply(self, symbol) -> "VectorFieldSpectral":
        return VectorFieldSpectral(tuple(c.apply(symbol) for c in self.components), self.divergence_free)

    def l2_norm(self) -> float:
        return float(np.sqrt(sum(c.l2_norm() ** 2 for c in self.components)))

    def inner(self, other: "VectorFieldSpectral") -> complex:
        return sum(a.inner(b) for a, b in zip(self.components, other.components))

    def __add__(self, other: "VectorFieldSpectral") -> "VectorFieldSpectral":
        return VectorFieldSpectral(tuple(a + b for a, b in zip(self, other)),
                                   self.divergence_free and other.divergence_free)

    def __sub__(self, other: "VectorFieldSpectral") -> "VectorFieldSpectral":
        return VectorFieldSpectral(tuple(a - b for a, b in zip(self, other)),
                                   self.divergence_free and other.divergence_free)

    def __mul__(self, scalar) -> "VectorFieldSpectral":
        return VectorFieldSpectral(tuple(c * scalar for c in self.components), self.divergence_free)

    __rmul__ = __mul__


def divergence(v: VectorFieldSpectral) -> SpectralField:
    w = wavenumbers(v.spec)
    coeffs = sum(1j * w.axis(j) * v[j].coeffs for j in range(3))
    return SpectralField(v.spec, coeffs, all(c.real for c in v))


def divergence_residual(v: VectorFieldSpectral) -> float:
    """max over modes of |xi . u_hat| / (|xi| |u_hat| + eps)"""
    w = wavenumbers(v.spec)
    dot = np.abs(sum(w.axis(j) * v[j].coeffs for j in range(3)))
    size = w.kmod * np.sqrt(sum(np.abs(v[j].coeffs) ** 2 for j in range(3)))
    eps = 1e-300 + 1e-14 * np.max(size)
    return float(np.max(dot / (size + eps)))


def curl_h(v: VectorFieldSpectral) -> SpectralField:
    """d1 u2 - d2 u1"""
    return spectral_derivative(v[1], 0) - spectral_derivative(v[0], 1)


def leray_project(v: VectorFieldSpectral) -> VectorFieldSpectral:
    w = wavenumbers(v.spec)
    k2 = w.kmod ** 2
    safe = np.where(k2 > 0, k2, 1.0)
    dot = sum(w.axis(j) * v[j].coeffs for j in range(3))
    factor = np.where(k2 > 0, dot / safe, 0.0)
    projected = tuple(v[j].with_coeffs(v[j].coeffs - w.axis(j) * factor) for j in range(3))
    return VectorFieldSpectral(projected, divergence_free=True)


def coriolis_apply(v: VectorFieldSpectral) -> VectorFieldSpectral:
    """e3 x u = (-u2, u1, 0)"""
    zero = SpectralField(v.spec, np.zeros(v.spec.shape, dtype=complex), v[2].real)
    return VectorFieldSpectral((-v[1], v[0], zero))


def scaling_vector(v: VectorFieldSpectral) -> VectorFieldSpectral:
    return VectorFieldSpectral(tuple(apply_scaling(c) for c in v), v.divergence_free)
