"""
Linear semigroup e^{+-it Lambda}: grid multiplier, Bessel-quadrature oracle and decay measurements.

For axisymmetric f the theta integral of the inversion formula gives

    (e^{i s t Lambda} f)(x_h, z) = (2 pi)^-2 int int e^{i s t Lambda} e^{i rho Lambda z} J0(rho sqrt(1-Lambda^2) |x_h|)
                                                  f_hat(rho, Lambda) rho^2 d rho d Lambda

which `oscillatory_eval` evaluates by panelled Gauss-Legendre quadrature.
"""

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field, field_validator
from scipy import special
from sklearn.linear_model import LinearRegression

from src.config import config
from src.exceptions import ConfigurationError, QuadratureBudgetError, ResolutionError
from src.fields import SpectralField, inverse_transform, wavenumbers
from src.localization import (
    SphericalSpectralField,
    angular_weights,
    cartesian_to_spherical,
    gauss_legendre,
    legendre_operators,
    project_k,
    project_kpq,
    required_nodes,
    shell_symbol,
    spherical_to_cartesian,
)
from src.models import FitRecord, ShellIndex, SplitRecord

Spectrum = Callable[[np.ndarray, np.ndarray], np.ndarray]


def semigroup_apply(f: SpectralField, t: float, sign: int = 1) -> SpectralField:
    """Mode-wise e^{i sign t Lambda}; Lambda(0) = 0"""
    if sign not in (1, -1):
        raise ConfigurationError("sign must be +1 or -1")
    return f.apply(np.exp(1j * sign * t * wavenumbers(f.spec).lam))


def bessel_j0(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ConfigurationError("bessel_j0 is defined here for x >= 0")
    return special.j0(x)


def origin_value(f: SpectralField) -> complex:
    """Value of f at x = 0, the centre of the box"""
    return complex(np.sum(f.coeffs) / f.spec.L ** 3)


def sup_norm(f: SpectralField) -> float:
    return float(np.max(np.abs(inverse_transform(f))))


class OscillatorySetup(BaseModel):
    """Target point and quadrature layout of one oracle evaluation"""
    x: float = Field(..., ge=0, description="Horizontal distance |x_h|")
    z: float = Field(..., description="Height")
    t: float = Field(..., description="Time")
    sign: int = Field(1, description="+1 for e^{it Lambda}, -1 for e^{-it Lambda}")
    rho_min: float = Field(0.0, ge=0, description="Lower end of the radial integration range")
    rho_max: float = Field(..., gt=0, description="Upper end of the radial integration range")
    points_per_panel: int = Field(default_factory=lambda: config.POINTS_PER_PANEL, ge=2)

    @field_validator("sign")
    @classmethod
    def _sign(cls, v: int) -> int:
        if v not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        return v

    def required_panels(self) -> int:
        """Panels per variable so that the phase moves by at most pi/4 per panel"""
        return int(math.ceil(4 * (2 + abs(self.t) + self.rho_max * (self.x + abs(self.z)))))

    def check_budget(self, budget: Optional[int] = None) -> int:
        budget = config.PANEL_BUDGET if budget is None else budget
        panels = self.required_panels()
        if panels > budget:
            raise QuadratureBudgetError(panels, budget)
        return panels


def _panel_nodes(a: float, b: float, panels: int, points: int):
    nodes, weights = gauss_legendre(points)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    return (mid[:, None] + half[:, None] * nodes[None, :]).ravel(), (half[:, None] * weights[None, :]).ravel()


def _spherical_spectrum(s: SphericalSpectralField) -> Spectrum:
    def fhat(rho, lam):
        rho_b, lam_b = np.broadcast_arrays(rho, lam)
        return s.evaluate(rho_b, lam_b).reshape(rho_b.shape)
    return fhat


def oscillatory_eval(fhat: Union[Spectrum, SphericalSpectralField], setup: OscillatorySetup,
                     chunk: int = 256) -> complex:
    panels = setup.check_budget()
    if isinstance(fhat, SphericalSpectralField):
        if setup.rho_min < fhat.edges[0] - 1e-12 or setup.rho_max > fhat.edges[-1] + 1e-12:
            raise ResolutionError("oracle radial range exceeds the spherical samples")
        fhat = _spherical_spectrum(fhat)
    rho, w_rho = _panel_nodes(setup.rho_min, setup.rho_max, panels, setup.points_per_panel)
    lam, w_lam = _panel_nodes(-1.0, 1.0, panels, setup.points_per_panel)
    horizontal = np.sqrt(1.0 - lam ** 2)
    time_phase = np.exp(1j * setup.sign * setup.t * lam) * w_lam
    total = 0.0 + 0.0j
    for start in range(0, rho.size, chunk):
        r = rho[start:start + chunk, None]
        integrand = (np.exp(1j * r * lam[None, :] * setup.z) * bessel_j0(r * horizontal[None, :] * setup.x)
                     * fhat(r, lam[None, :]))
        total += np.sum((integrand @ time_phase) * (r[:, 0] ** 2 * w_rho[start:start + chunk]))
    return complex(total / (2 * np.pi) ** 2)


def oracle_cross_check(f: SpectralField, fhat: Spectrum, t: float, points: int, rho_max: float,
                       seed: int = 0, radius: Optional[float] = None, sign: int = 1) -> pd.DataFrame:
    """Grid semigroup vs Bessel quadrature at random grid points within `radius` of the axis origin"""
    spec = f.spec
    rng = np.random.default_rng(seed)
    radius = spec.L / 8 if radius is None else radius
    span = max(1, int(radius / spec.dx))
    evolved = inverse_transform(semigroup_apply(f, t, sign))
    centre = spec.n // 2
    rows = []
    for _ in range(points):
        i, j, l = centre + rng.integers(-span, span + 1, size=3)
        x1, x2, x3 = ((np.array([i, j, l]) - centre) * spec.dx)
        setup = OscillatorySetup(x=float(np.hypot(x1, x2)), z=float(x3), t=t, sign=sign, rho_max=rho_max)
        oracle = oscillatory_eval(fhat, setup)
        rows.append({"i": int(i), "j": int(j), "l": int(l), "x": setup.x, "z": setup.z,
                     "grid": complex(evolved[i, j, l]), "oracle": oracle})
    frame = pd.DataFrame(rows)
    scale = max(float(np.max(np.abs(frame["oracle"].to_numpy()))), 1e-300)
    frame["deviation"] = np.abs(frame["grid"].to_numpy() - frame["oracle"].to_numpy()) / scale
    logger.info(f"📊 Oracle cross-check at t={t}: max relative deviation {frame['deviation'].max():.3e}")
    return frame


# --- decay measurements ---------------------------------------------------------------------

def fit_exponent(quantity: str, times: Sequence[float], values: Sequence[float],
                 bracket: Optional[Sequence[float]] = None, t_min: Optional[float] = None,
                 t_max: Optional[float] = None) -> FitRecord:
    """Least-squares slope of log(value) against log(t) over t_min <= t <= t_max"""
    t_min = config.FIT_T_MIN if t_min is None else t_min
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = times >= t_min
    if t_max is not None:
        keep &= times <= t_max + 1e-12
    times, values = times[keep], values[keep]
    underflow = bool(np.any(values < config.UNDERFLOW))
    record = dict(quantity=quantity, times=times.tolist(), values=values.tolist(), underflow=underflow,
                  bracket=list(bracket) if bracket is not None else None)
    if underflow:
        logger.warning(f"⚠️ {quantity}: values below the underflow floor {config.UNDERFLOW:.0e}")
        return FitRecord(**record)
    if times.size < 2:
        logger.warning(f"⚠️ {quantity}: fewer than two times inside the fit window")
        return FitRecord(**record)
    X = np.log(times)[:, None]
    y = np.log(values)
    model = LinearRegression().fit(X, y)
    residual = y - model.predict(X)
    return FitRecord(slope=float(model.coef_[0]), intercept=float(model.intercept_),
                     residual_rms=float(np.sqrt(np.mean(residual ** 2))), **record)


def decay_profile(f: SpectralField, times: Sequence[float], shell: Optional[ShellIndex] = None,
                  bracket: Optional[Sequence[float]] = None, sign: int = 1) -> FitRecord:
    """Slope of log ||P_shell e^{itLambda} f||_Linf against log t"""
    if len(times) == 0:
        raise ConfigurationError("decay_profile needs at least one time")
    localized = f
    if shell is not None:
        localized = project_k(f, shell.k) if shell.p is None else project_kpq(f, shell.k, shell.p, shell.q or 0)
    values = [sup_norm(semigroup_apply(localized, t, sign)) for t in times]
    label = "Linf" if shell is None else f"Linf[{shell.label()}]"
    return fit_exponent(label, times, values, bracket, t_max=f.spec.t_wrap)


def origin_decay(f: SpectralField, times: Sequence[float]) -> pd.DataFrame:
    """|e^{itLambda} f (0)| against the radial sharpness value |sin t / t| |f(0)|"""
    f0 = origin_value(f)
    rows = []
    for t in times:
        value = origin_value(semigroup_apply(f, t))
        expected = f0 * np.sinc(t / np.pi)
        rows.append({"t": t, "value": abs(value), "expected": abs(expected),
                     "relative_error": abs(value - expected) / abs(f0) if f0 != 0 else 0.0})
    return pd.DataFrame(rows)


def origin_sharpness_oracle(times: Sequence[float], sigma: float = 1.0) -> pd.DataFrame:
    """
    Quadrature value of e^{itLambda} f(0) for f_hat = exp(-|xi|^2 / (2 sigma^2)) against (sin t / t) f(0),
    with f(0) = (2 pi)^-1.5 sigma^3. Unlike `origin_decay` this carries no grid or box error.
    """
    if sigma <= 0:
        raise ConfigurationError("sigma must be positive")
    f0 = (2 * np.pi) ** -1.5 * sigma ** 3
    rows = []
    for t in times:
        setup = OscillatorySetup(x=0.0, z=0.0, t=t, rho_max=10.0 * sigma)
        value = oscillatory_eval(lambda rho, lam: np.exp(-rho ** 2 / (2 * sigma ** 2)), setup)
        expected = f0 * np.sinc(t / np.pi)
        scale = abs(expected) if expected != 0 else f0
        rows.append({"t": t, "value": value.real, "expected": expected,
                     "relative_error": abs(value - expected) / scale})
    return pd.DataFrame(rows)


@dataclass(frozen=True, eq=False)
class SplitResult:
    I: SpectralField
    II: SpectralField
    record: SplitRecord


def angular_threshold(p: int, q: int, t: float, kappa: Optional[float] = None) -> Optional[int]:
    """floor log2 of 2^p t (2^(2p+q) t)^-kappa; None in the crude regime 2^(2p+q) t < 1"""
    kappa = config.KAPPA if kappa is None else kappa
    scale = 2.0 ** (2 * p + q) * t
    if scale < 1:
        return None
    return int(np.floor(np.log2(2.0 ** p * t * scale ** (-kappa))))


def split_I_II(f: SpectralField, k: int, p: int, q: int, t: float, norm_value: float,
               kappa: Optional[float] = None, beta_prime: Optional[float] = None,
               spherical: Optional[SphericalSpectralField] = None) -> SplitResult:
    """I = P_{k,p,q} e^{it Lambda} R_{<=l0} f and II = P_{k,p,q} e^{it Lambda} (1 - R_{<=l0}) f

    The angular split is done on Legendre coefficients of the spherical samples of f (resampled
    from f unless given), so data of degree below the threshold has II = 0 exactly.
    """
    beta_prime = config.BETA_PRIME if beta_prime is None else beta_prime
    spec = f.spec
    ell0 = angular_threshold(p, q, t, kappa)
    shell = ShellIndex(k=k, p=p, q=q)
    k_factor = 2.0 ** (1.5 * k - 3 * max(k, 0))
    zero = SpectralField.zeros(spec)

    def localized(g: SpectralField) -> SpectralField:
        return semigroup_apply(project_kpq(g, k, p, q), t)

    if ell0 is None:
        I = localized(f)
        i_linf = sup_norm(I)
        i_bound = k_factor * 2.0 ** (2 * p + q) * norm_value
        record = SplitRecord(t=t, k=k, p=p, q=q, regime="crude", i_linf=i_linf, ii_l2=0.0, ii_linf=0.0,
                             i_bound=i_bound, ii_bound=0.0, i_ratio=_ratio(i_linf, i_bound), ii_ratio=0.0)
        return SplitResult(I, zero, record)

    ii_bound = 2.0 ** (-3 * max(k, 0)) * t ** (-1 - beta_prime) * 2.0 ** ((-1 - 2 * beta_prime) * p) * norm_value
    ii_linf_bound = k_factor * t ** (-1 - beta_prime) * 2.0 ** (-2 * beta_prime * p) * norm_value
    i_bound = k_factor * min(2.0 ** (2 * p + q), 2.0 ** (-p - q / 2) * t ** -1.5) * norm_value

    if ell0 < 0:
        II = localized(f)
        ii_l2, ii_linf = II.l2_norm(), sup_norm(II)
        record = SplitRecord(t=t, k=k, p=p, q=q, ell0=ell0, regime="dispersive", all_in_ii=True, i_linf=0.0,
                             ii_l2=ii_l2, ii_linf=ii_linf, i_bound=i_bound, ii_bound=ii_bound,
                             ii_linf_bound=ii_linf_bound, i_ratio=0.0, ii_ratio=_ratio(ii_l2, ii_bound),
                             ii_linf_ratio=_ratio(ii_linf, ii_linf_bound))
        logger.info(f"ℹ️ Angular threshold {ell0} < 0 at t={t}: everything in II")
        return SplitResult(zero, II, record)

    nodes = max(config.LAMBDA_NODES, required_nodes(ell0))
    if nodes > config.LAMBDA_NODES_MAX:
        raise ResolutionError(f"angular threshold {ell0} needs {nodes} Lambda nodes")
    s = spherical if spherical is not None else cartesian_to_spherical(f, n_lam=nodes)
    if s.n_lam < required_nodes(ell0):
        raise ResolutionError(f"angular threshold {ell0} needs {required_nodes(ell0)} Lambda nodes, got {s.n_lam}")
    _, _, degrees = legendre_operators(s.n_lam)
    low_weights = angular_weights(ell0, degrees, low=True)
    coefficients = s.coefficients()
    low = s.from_coefficients(coefficients * low_weights[None, :])
    high = s.from_coefficients(coefficients * (1 - low_weights)[None, :])

    symbol = shell_symbol(shell, s.rho[:, None], s.lam[None, :])
    ii_l2 = float(np.sqrt(np.sum(np.abs(symbol * high.values) ** 2 * s.measure())))
    I = localized(spherical_to_cartesian(low, spec))
    II = localized(spherical_to_cartesian(high, spec)) if ii_l2 > 0 else zero
    i_linf, ii_linf = sup_norm(I), sup_norm(II)
    record = SplitRecord(t=t, k=k, p=p, q=q, ell0=ell0, regime="dispersive", i_linf=i_linf, ii_l2=ii_l2,
                         ii_linf=ii_linf, i_bound=i_bound, ii_bound=ii_bound, ii_linf_bound=ii_linf_bound,
                         i_ratio=_ratio(i_linf, i_bound), ii_ratio=_ratio(ii_l2, ii_bound),
                         ii_linf_ratio=_ratio(ii_linf, ii_linf_bound))
    return SplitResult(I, II, record)


def _ratio(value: float, bound: float) -> float:
    return value / bound if bound > 0 else (0.0 if value == 0 else float("inf"))


def decay_table(f: SpectralField, times: Sequence[float], shells: Sequence[ShellIndex],
                norm_value: Optional[float] = None) -> pd.DataFrame:
    """Rows (t, shell, sup_norm, l2_norm, i_norm, ii_norm, bound_ratio) for plotting"""
    rows: List[dict] = []
    for shell in shells:
        localized = project_k(f, shell.k) if shell.p is None else project_kpq(f, shell.k, shell.p, shell.q or 0)
        for t in times:
            evolved = semigroup_apply(localized, t)
            row = {"t": t, "shell": shell.label(), "sup_norm": sup_norm(evolved), "l2_norm": evolved.l2_norm(),
                   "i_norm": np.nan, "ii_norm": np.nan, "bound_ratio": np.nan}
            if shell.p is not None and norm_value:
                split = split_I_II(f, shell.k, shell.p, shell.q or 0, t, norm_value)
                row.update(i_norm=split.record.i_linf, ii_norm=split.record.ii_l2,
                           bound_ratio=split.record.i_ratio)
            rows.append(row)
    return pd.DataFrame(rows)
