"""
Dyadic, anisotropic and angular Littlewood-Paley projectors.

Shell multipliers
    P_k     : phi(2^-k |xi|)
    P_{k,p} : phi(2^-k |xi|) phi(2^-p sqrt(1 - Lambda^2))
    P_{k,p,q}: ... * phi(2^-q |Lambda|)
with the top shells p = 0 and q = 0 defined as 1 - psi(2x), so the horizontal and vertical
families are exact partitions of unity on (0, 1].

Angular projectors act on zonal Legendre expansions f(rho, Lambda) = sum_n c_n(rho) L_n(Lambda):
R_l multiplies c_n by phi(2^-l n) for l >= 1 and by psi(n) for l = 0, R_{<=l} by psi(2^-l n).
"""

from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from numpy.polynomial import legendre as npleg
from scipy import fft
from scipy.interpolate import RectBivariateSpline
from scipy.special import roots_legendre

from src.config import config
from src.exceptions import ConfigurationError, ResolutionError
from src.fields import SpectralField, cylindrical_index
from src.models import GridSpec, ShellIndex
from src.utils.field_io import read_array, write_array


class BumpFunction:
    """psi = 1 on |x| <= 4/5, 0 on |x| >= 8/5, 9th-degree smoothstep in between; phi(x) = psi(x) - psi(2x)"""

    inner = 4.0 / 5.0
    outer = 8.0 / 5.0

    @staticmethod
    def _smoothstep(t: np.ndarray) -> np.ndarray:
        return t ** 5 * (126 - 420 * t + 540 * t ** 2 - 315 * t ** 3 + 70 * t ** 4)

    @staticmethod
    def _smoothstep_derivative(t: np.ndarray) -> np.ndarray:
        return 630 * t ** 4 * (1 - t) ** 4

    def _t(self, x):
        return np.clip((np.abs(x) - self.inner) / (self.outer - self.inner), 0.0, 1.0)

    def psi(self, x):
        return 1.0 - self._smoothstep(self._t(x))

    def psi_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return -np.sign(x) * self._smoothstep_derivative(self._t(x)) / (self.outer - self.inner)

    def phi(self, x):
        return self.psi(x) - self.psi(2 * np.asarray(x, dtype=float))

    def phi_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return self.psi_derivative(x) - 2 * self.psi_derivative(2 * x)


BUMP = BumpFunction()


# --- anisotropic shells ---------------------------------------------------------------------

def radial_cutoff(k: int, rho):
    return BUMP.phi(2.0 ** (-k) * np.asarray(rho))


def _top_or_band(index: int, x):
    x = np.asarray(x, dtype=float)
    if index == 0:
        return 1.0 - BUMP.psi(2 * x)
    return BUMP.phi(2.0 ** (-index) * x)


def _top_or_band_derivative(index: int, x):
    x = np.asarray(x, dtype=float)
    if index == 0:
        return -2 * BUMP.psi_derivative(2 * x)
    return 2.0 ** (-index) * BUMP.phi_derivative(2.0 ** (-index) * x)


def horizontal_cutoff(p: int, lam):
    """Cutoff in sqrt(1 - Lambda^2) ~ 2^p"""
    return _top_or_band(p, np.sqrt(np.clip(1.0 - np.asarray(lam) ** 2, 0.0, None)))


def vertical_cutoff(q: int, lam):
    """Cutoff in |Lambda| ~ 2^q"""
    return _top_or_band(q, np.abs(lam))


def shell_symbol(index: ShellIndex, rho, lam):
    """Multiplier of P_k, P_{k,p} or P_{k,p,q} at points given by (|xi|, Lambda)"""
    symbol = radial_cutoff(index.k, rho)
    if index.p is not None:
        symbol = symbol * horizontal_cutoff(index.p, lam)
    if index.q is not None:
        symbol = symbol * vertical_cutoff(index.q, lam)
    return symbol


def shell_upsilon(index: ShellIndex, rho, lam):
    """Upsilon = -sqrt(1 - Lambda^2) d/dLambda applied to the shell multiplier"""
    lam = np.asarray(lam, dtype=float)
    s = np.sqrt(np.clip(1.0 - lam ** 2, 0.0, None))
    radial = radial_cutoff(index.k, rho)
    m_p = horizontal_cutoff(index.p, lam) if index.p is not None else 1.0
    m_q = vertical_cutoff(index.q, lam) if index.q is not None else 1.0
    ups_p = lam * _top_or_band_derivative(index.p, s) if index.p is not None else 0.0
    ups_q = -s * np.sign(lam) * _top_or_band_derivative(index.q, np.abs(lam)) if index.q is not None else 0.0
    return radial * (ups_p * m_q + m_p * ups_q)


def _pair_coordinates(spec: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    cyl = cylindrical_index(spec)
    rho = cyl.kmod
    lam = np.where(rho > 0, cyl.kz / np.where(rho > 0, rho, 1.0), 0.0)
    return rho, lam


def shell_multiplier(spec: GridSpec, index: ShellIndex) -> np.ndarray:
    rho, lam = _pair_coordinates(spec)
    return cylindrical_index(spec).scatter(shell_symbol(index, rho, lam))


def shell_point_count(spec: GridSpec, index: ShellIndex) -> int:
    rho, lam = _pair_coordinates(spec)
    support = shell_symbol(index, rho, lam) > 0
    return int(np.sum(cylindrical_index(spec).counts[support]))


def _project(f: SpectralField, index: ShellIndex) -> SpectralField:
    if shell_point_count(f.spec, index) == 0:
        logger.warning(f"⚠️ Empty shell {index.label()}: no grid modes in its support")
    return f.apply(shell_multiplier(f.spec, index))


def project_k(f: SpectralField, k: int) -> SpectralField:
    return _project(f, ShellIndex(k=k))


def project_kp(f: SpectralField, k: int, p: int) -> SpectralField:
    return _project(f, ShellIndex(k=k, p=p))


def project_kpq(f: SpectralField, k: int, p: int, q: int) -> SpectralField:
    return _project(f, ShellIndex(k=k, p=p, q=q))


def k_range(spec: GridSpec) -> range:
    """Radial indices whose shells meet the nonzero grid modes"""
    lo = int(np.floor(np.log2(spec.k_min / BUMP.outer)))
    hi = int(np.ceil(np.log2(np.sqrt(3.0) * spec.k_max / (BUMP.outer / 4))))
    return range(lo, hi + 1)


def angular_index_range(floor: int) -> range:
    """Anisotropic indices floor..0"""
    return range(floor, 1)


# --- Legendre machinery ------------------------------------------------------------------

@lru_cache(maxsize=32)
def gauss_legendre(count: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_legendre(count)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def legendre_table(nmax: int, x) -> np.ndarray:
    """L_0..L_nmax at x by the ascending three-term recurrence; shape (nmax + 1,) + x.shape"""
    x = np.asarray(x, dtype=float)
    table = np.empty((nmax + 1,) + x.shape)
    table[0] = 1.0
    if nmax >= 1:
        table[1] = x
    for n in range(1, nmax):
        table[n + 1] = ((2 * n + 1) * x * table[n] - n * table[n - 1]) / (n + 1)
    return table


def angular_weights(ell: int, degrees: np.ndarray, low: bool = False) -> np.ndarray:
    """Multipliers of R_{<=l} (low) or R_l on Legendre degrees"""
    degrees = np.asarray(degrees, dtype=float)
    if low:
        return BUMP.psi(2.0 ** (-ell) * degrees)
    if ell == 0:
        return BUMP.psi(degrees)
    return BUMP.phi(2.0 ** (-ell) * degrees)


def capped_angular_weights(ell: int, p: int, degrees: np.ndarray) -> np.ndarray:
    """R_l^{(p)}: zero if l + p < 0, R_{<=l} if l + p = 0, R_l otherwise"""
    if ell + p < 0:
        return np.zeros(np.shape(degrees))
    return angular_weights(ell, degrees, low=(ell + p == 0))


def required_nodes(ell: int) -> int:
    return 2 ** (ell + 2)


def _check_nodes(ell: int, count: int):
    need = required_nodes(ell)
    if need > config.LAMBDA_NODES_MAX:
        raise ResolutionError(
            f"angular index {ell} needs {need} Lambda nodes, above the cap {config.LAMBDA_NODES_MAX}"
        )
    if count < need:
        raise ResolutionError(f"angular index {ell} needs at least {need} Lambda nodes, got {count}")


@lru_cache(maxsize=16)
def legendre_operators(count: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(analysis, synthesis, degrees) on `count` Gauss nodes

    analysis[n, j] = (2n + 1)/2 L_n(x_j) w_j, synthesis[i, n] = L_n(x_i).
    """
    nodes, weights = gauss_legendre(count)
    nmax = min(count - 1, config.DEGREE_CAP)
    table = legendre_table(nmax, nodes)
    degrees = np.arange(nmax + 1)
    analysis = (2 * degrees[:, None] + 1) / 2.0 * table * weights[None, :]
    synthesis = table.T.copy()
    for array in (analysis, synthesis, degrees):
        array.setflags(write=False)
    return analysis, synthesis, degrees


@lru_cache(maxsize=64)
def _cached_kernel(ell: int, count: int, low: bool) -> np.ndarray:
    analysis, synthesis, degrees = legendre_operators(count)
    kernel = synthesis @ (angular_weights(ell, degrees, low)[:, None] * analysis)
    kernel.setflags(write=False)
    return kernel


def zonal_kernel(ell: int, count: int, low: bool = False) -> np.ndarray:
    """Quadrature matrix K[i, j] = sum_n c_n (2n+1)/2 L_n(x_i) L_n(x_j) w_j of R_l (or R_{<=l})"""
    if ell < 0:
        raise ConfigurationError("angular index must be nonnegative")
    _check_nodes(ell, count)
    return _cached_kernel(ell, count, low)


def zonal_harmonic(n: int, z) -> np.ndarray:
    """(2n + 1)/(4 pi) L_n(z)"""
    return (2 * n + 1) / (4 * np.pi) * legendre_table(n, z)[n]


def kernel_l1_mass(ell: int, count: int = 2048) -> float:
    """Proxy of the L1 mass of the R_l kernel on the sphere"""
    nodes, weights = gauss_legendre(count)
    nmax = min(2 ** (ell + 1), count - 1)
    degrees = np.arange(nmax + 1)
    table = legendre_table(nmax, nodes)
    kernel = np.sum((angular_weights(ell, degrees) * (2 * degrees + 1) / (4 * np.pi))[:, None] * table, axis=0)
    return float(2 * np.pi * np.sum(np.abs(kernel) * weights))


def dump_kernel(path: Union[str, Path], ell: int, count: int, low: bool = False):
    write_array(path, zonal_kernel(ell, count, low).astype(complex),
                {"kind": "zonal_kernel", "ell": ell, "nodes": count, "low": low})


def load_kernel(path: Union[str, Path]) -> np.ndarray:
    data, meta = read_array(path)
    if meta.get("kind") != "zonal_kernel":
        raise ConfigurationError(f"{path} does not hold a zonal kernel")
    return data.real


# --- spherical representation ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SphericalSpectralField:
    """Samples of an axisymmetric f_hat on a (rho, Lambda) product grid

    rho nodes are Gauss points in log(rho) on each dyadic shell between `edges`.
    """
    edges: Tuple[float, ...]
    reference: np.ndarray       # Gauss nodes on [-1, 1] used inside every radial shell
    rho: np.ndarray
    rho_weights: np.ndarray     # quadrature weights for d rho
    shell_of: np.ndarray        # radial shell of each rho node
    lam: np.ndarray
    lam_weights: np.ndarray
    values: np.ndarray          # shape (len(rho), len(lam))
    real: bool = True

    @property
    def n_lam(self) -> int:
        return self.lam.size

    def with_values(self, values: np.ndarray, real: Optional[bool] = None) -> "SphericalSpectralField":
        return replace(self, values=np.asarray(values, dtype=complex), real=self.real if real is None else real)

    def apply(self, symbol) -> "SphericalSpectralField":
        return self.with_values(self.values * symbol)

    def __add__(self, other: "SphericalSpectralField") -> "SphericalSpectralField":
        return self.with_values(self.values + other.values, self.real and other.real)

    def __sub__(self, other: "SphericalSpectralField") -> "SphericalSpectralField":
        return self.with_values(self.values - other.values, self.real and other.real)

    def __mul__(self, scalar) -> "SphericalSpectralField":
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def measure(self) -> np.ndarray:
        """(2 pi)^-2 rho^2 d rho d Lambda, the theta integral already done"""
        return (self.rho ** 2 * self.rho_weights)[:, None] * self.lam_weights[None, :] / (2 * np.pi) ** 2

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2 * self.measure())))

    def coefficients(self) -> np.ndarray:
        analysis, _, _ = legendre_operators(self.n_lam)
        return self.values @ analysis.T

    def degree_mass(self) -> np.ndarray:
        """L2 mass of f at each Legendre degree"""
        _, _, degrees = legendre_operators(self.n_lam)
        c = self.coefficients()
        radial = (self.rho ** 2 * self.rho_weights) / (2 * np.pi) ** 2
        return np.sum(np.abs(c) ** 2 * radial[:, None], axis=0) * 2.0 / (2 * degrees + 1)

    def from_coefficients(self, coefficients: np.ndarray) -> "SphericalSpectralField":
        _, synthesis, _ = legendre_operators(self.n_lam)
        return self.with_values(coefficients @ synthesis.T)

    def radial_interpolation(self, rho_q: np.ndarray) -> np.ndarray:
        """Matrix mapping node values to values at rho_q (zero outside the covered range)"""
        rho_q = np.asarray(rho_q, dtype=float)
        matrix = np.zeros((rho_q.size, self.rho.size))
        m = self.reference.size
        vander_inv = np.linalg.inv(npleg.legvander(self.reference, m - 1))
        for shell in range(len(self.edges) - 1):
            a, b = self.edges[shell], self.edges[shell + 1]
            inside = (rho_q >= a) & (rho_q <= b) if shell == len(self.edges) - 2 else (rho_q >= a) & (rho_q < b)
            if not np.any(inside):
                continue
            x = 2 * (np.log(rho_q[inside]) - np.log(a)) / (np.log(b) - np.log(a)) - 1
            columns = np.flatnonzero(self.shell_of == shell)
            matrix[np.ix_(np.flatnonzero(inside), columns)] = npleg.legvander(x, m - 1) @ vander_inv
        return matrix

    def evaluate(self, rho_q, lam_q, chunk: int = 32768) -> np.ndarray:
        """Interpolate f_hat at arbitrary (rho, Lambda): log-rho polynomials per shell, Legendre in Lambda"""
        rho_q = np.asarray(rho_q, dtype=float).ravel()
        lam_q = np.asarray(lam_q, dtype=float).ravel()
        analysis, _, degrees = legendre_operators(self.n_lam)
        coefficients = self.values @ analysis.T
        out = np.zeros(rho_q.size, dtype=complex)
        for start in range(0, rho_q.size, chunk):
            sl = slice(start, start + chunk)
            radial = self.radial_interpolation(rho_q[sl]) @ coefficients
            angular = legendre_table(degrees[-1], lam_q[sl])
            out[sl] = np.sum(radial * angular.T, axis=1)
        return out


def radial_nodes(rho_min: float, rho_max: float, points_per_shell: int):
    """Gauss nodes in log(rho) on each dyadic piece of [rho_min, rho_max]"""
    if not 0 < rho_min < rho_max:
        raise ConfigurationError(f"bad radial range [{rho_min}, {rho_max}]")
    lo = int(np.floor(np.log2(rho_min)))
    hi = int(np.ceil(np.log2(rho_max)))
    cuts = [2.0 ** j for j in range(lo + 1, hi) if rho_min < 2.0 ** j < rho_max]
    edges = tuple([rho_min] + cuts + [rho_max])
    reference, ref_weights = gauss_legendre(points_per_shell)
    rho, weights, shell_of = [], [], []
    for shell in range(len(edges) - 1):
        sa, sb = np.log(edges[shell]), np.log(edges[shell + 1])
        s = 0.5 * (sa + sb) + 0.5 * (sb - sa) * reference
        r = np.exp(s)
        rho.append(r)
        weights.append(0.5 * (sb - sa) * ref_weights * r)
        shell_of.append(np.full(points_per_shell, shell))
    return edges, np.asarray(reference), np.concatenate(rho), np.concatenate(weights), np.concatenate(shell_of)


def spherical_grid(rho_min: float, rho_max: float, points_per_shell: Optional[int] = None,
                   n_lam: Optional[int] = None) -> SphericalSpectralField:
    points_per_shell = points_per_shell or config.RHO_POINTS_PER_SHELL
    n_lam = n_lam or config.LAMBDA_NODES
    if n_lam > config.LAMBDA_NODES_MAX:
        raise ResolutionError(f"{n_lam} Lambda nodes exceed the cap {config.LAMBDA_NODES_MAX}")
    edges, reference, rho, rho_weights, shell_of = radial_nodes(rho_min, rho_max, points_per_shell)
    lam, lam_weights = gauss_legendre(n_lam)
    return SphericalSpectralField(
        edges=edges, reference=reference, rho=rho, rho_weights=rho_weights, shell_of=shell_of,
        lam=np.asarray(lam), lam_weights=np.asarray(lam_weights),
        values=np.zeros((rho.size, n_lam), dtype=complex),
    )


def sample_spherical(fhat: Callable[[np.ndarray, np.ndarray], np.ndarray], rho_min: float, rho_max: float,
                     points_per_shell: Optional[int] = None, n_lam: Optional[int] = None,
                     real: bool = True) -> SphericalSpectralField:
    """Spherical samples of a closed-form axisymmetric spectrum f_hat(rho, Lambda)"""
    grid = spherical_grid(rho_min, rho_max, points_per_shell, n_lam)
    values = fhat(grid.rho[:, None], grid.lam[None, :])
    return grid.with_values(np.broadcast_to(values, grid.values.shape), real=real)


def default_radial_range(spec: GridSpec) -> Tuple[float, float]:
    return 0.5 * spec.k_min, (spec.n / 2 - 1) * spec.k_min


def cartesian_to_spherical(f: SpectralField, rho_min: Optional[float] = None, rho_max: Optional[float] = None,
                           points_per_shell: Optional[int] = None, n_lam: Optional[int] = None,
                           order: int = 3) -> SphericalSpectralField:
    """Resample the m2 = 0 slice of an axisymmetric field with a tensor spline of degree `order`"""
    spec = f.spec
    lo, hi = default_radial_range(spec)
    rho_min = lo if rho_min is None else rho_min
    rho_max = hi if rho_max is None else rho_max
    if rho_max > hi + 1e-12 or rho_min < lo - 1e-12:
        raise ResolutionError(
            f"radial range [{rho_min:.4g}, {rho_max:.4g}] not resolved by the grid, which covers [{lo:.4g}, {hi:.4g}]"
        )
    grid = spherical_grid(rho_min, rho_max, points_per_shell, n_lam)
    axis = spec.k_min * np.arange(-spec.n // 2, spec.n // 2)
    plane = fft.fftshift(f.coeffs[:, 0, :])
    xi_h = grid.rho[:, None] * np.sqrt(1.0 - grid.lam[None, :] ** 2)
    xi_3 = grid.rho[:, None] * grid.lam[None, :]
    values = np.zeros(grid.values.shape, dtype=complex)
    for part, unit in ((plane.real, 1.0), (plane.imag, 1j)):
        if not np.any(part):
            continue
        spline = RectBivariateSpline(axis, axis, part, kx=order, ky=order)
        values = values + unit * spline.ev(xi_h.ravel(), xi_3.ravel()).reshape(values.shape)
    return grid.with_values(values, real=f.real)


def spherical_to_cartesian(s: SphericalSpectralField, spec: GridSpec) -> SpectralField:
    """Evaluate spherical samples at every grid mode; modes outside the radial range are zero"""
    cyl = cylindrical_index(spec)
    rho, lam = _pair_coordinates(spec)
    inside = (rho >= s.edges[0]) & (rho <= s.edges[-1])
    pair_values = np.zeros(cyl.size, dtype=complex)
    pair_values[inside] = s.evaluate(rho[inside], lam[inside])
    return SpectralField(spec, cyl.scatter(pair_values), s.real)


def project_angular(s: SphericalSpectralField, ell: int, low: bool = False,
                    p: Optional[int] = None) -> SphericalSpectralField:
    """R_l, R_{<=l} or (with p) the capped R_l^{(p)} applied through the zonal kernel"""
    if p is not None and ell + p < 0:
        return s.with_values(np.zeros_like(s.values))
    if p is not None:
        low = ell + p == 0
    kernel = zonal_kernel(ell, s.n_lam, low)
    return s.with_values(s.values @ kernel.T)


def angular_band_support(ell: int, degrees: Sequence[int]) -> List[int]:
    weights = angular_weights(ell, np.asarray(degrees))
    return [int(n) for n, w in zip(degrees, weights) if w != 0]


def square_function_ratio(s: SphericalSpectralField, ell_max: int) -> float:
    """sum_l ||R_l f||^2 / ||f||^2"""
    total = s.l2_norm() ** 2
    if total == 0:
        return 0.0
    return sum(project_angular(s, ell).l2_norm() ** 2 for ell in range(ell_max + 1)) / total


def angular_derivative_energy(s: SphericalSpectralField) -> float:
    """sum_{a<b} ||Omega_ab f||^2 = sum_n n(n+1) (mass at degree n)"""
    _, _, degrees = legendre_operators(s.n_lam)
    return float(np.sum(degrees * (degrees + 1) * s.degree_mass()))


def bernstein_ratio(s: SphericalSpectralField, ell: int) -> float:
    band = project_angular(s, ell)
    mass = band.l2_norm() ** 2
    if mass == 0:
        return float("nan")
    return angular_derivative_energy(band) / (4.0 ** ell * mass)


def commutator_ratio(s: SphericalSpectralField, index: ShellIndex) -> float:
    """||[Omega_j3, P] f|| / ||f|| for axisymmetric f, either j

    For axisymmetric f, [Omega_j3, m] f = -(xi_j/|xi_h|) f Upsilon(m); the azimuthal average of
    (xi_j/|xi_h|)^2 is 1/2.
    """
    norm = s.l2_norm()
    if norm == 0:
        return 0.0
    ups = shell_upsilon(index, s.rho[:, None], s.lam[None, :])
    energy = 0.5 * np.sum(np.abs(ups * s.values) ** 2 * s.measure())
    return float(np.sqrt(energy) / norm)


def shell_table_spherical(s: SphericalSpectralField, k: int, p: int) -> np.ndarray:
    return shell_symbol(ShellIndex(k=k, p=p), s.rho[:, None], s.lam[None, :])


def kernel_corruption_hook(kernel: np.ndarray, amount: float = 1e-3, seed: int = 0) -> np.ndarray:
    """Return a perturbed copy of a kernel, used to check that the orthogonality check detects faults"""
    rng = np.random.default_rng(seed)
    return kernel + amount * rng.standard_normal(kernel.shape)


def band_degrees(ell: int, count: int) -> Dict[str, int]:
    _, _, degrees = legendre_operators(count)
    support = np.flatnonzero(angular_weights(ell, degrees))
    return {"lowest": int(support.min()) if support.size else -1, "highest": int(support.max()) if support.size else -1}
