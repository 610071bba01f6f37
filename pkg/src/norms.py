"""
Norm hierarchy of axisymmetric fields.

    B = sup_{k,p,q} 2^(3k+ - k-/2) 2^(-p - q/2) ||P_{k,p,q} f||
    X = sup_{k,l,p: l+p>=0} 2^(3k+) 2^((1+beta) l) 2^(beta p) ||P_{k,p} R_l f||
    D = sup_{a<=3} ( ||S^a f||_B + ||S^a f||_X )

with k+ = max(k, 0), k- = min(k, 0). Sups run over the indices the grid resolves; shells holding fewer
than MIN_SHELL_POINTS grid modes are left out and listed in the report.
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from loguru import logger

from src.config import config
from src.fields import SpectralField, apply_scaling, cylindrical_index, inverse_transform, wavenumbers
from src.localization import (
    SphericalSpectralField,
    angular_weights,
    cartesian_to_spherical,
    horizontal_cutoff,
    k_range,
    legendre_operators,
    project_angular,
    radial_cutoff,
    vertical_cutoff,
)
from src.models import NormReport, NormRow, ShellIndex

D_NORM_POWERS = 3
X_NORM_NODES = 256


def b_weight(k: int, p: int, q: int) -> float:
    return 2.0 ** (3 * max(k, 0) - 0.5 * min(k, 0)) * 2.0 ** (-p - 0.5 * q)


def x_weight(k: int, ell: int, p: int, beta: float) -> float:
    return 2.0 ** (3 * max(k, 0)) * 2.0 ** ((1 + beta) * ell) * 2.0 ** (beta * p)


def _pair_data(f: SpectralField) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(rho, Lambda, energy, mode counts) per distinct (|xi_h|, xi_3) pair"""
    cyl = cylindrical_index(f.spec)
    rho = cyl.kmod
    lam = np.where(rho > 0, cyl.kz / np.where(rho > 0, rho, 1.0), 0.0)
    energy = cyl.reduce_sum(np.abs(f.coeffs) ** 2) / f.spec.L ** 3
    return rho, lam, energy, cyl.counts


def b_table(f: SpectralField, p_floor: Optional[int] = None,
            min_points: Optional[int] = None) -> Tuple[List[NormRow], List[str]]:
    """||P_{k,p,q} f|| for k in the grid range, p >= p_floor, q >= 2 p_floor"""
    p_floor = config.P_FLOOR if p_floor is None else p_floor
    min_points = config.MIN_SHELL_POINTS if min_points is None else min_points
    rho, lam, energy, counts = _pair_data(f)
    ps = list(range(p_floor, 1))
    qs = list(range(2 * p_floor, 1))
    rows, excluded = [], []
    for k in k_range(f.spec):
        radial = radial_cutoff(k, rho)
        sel = radial > 0
        if not np.any(sel):
            continue
        horizontal = np.stack([horizontal_cutoff(p, lam[sel]) for p in ps])
        vertical = np.stack([vertical_cutoff(q, lam[sel]) for q in qs])
        weighted_energy = radial[sel] ** 2 * energy[sel]
        table = (horizontal ** 2 * weighted_energy) @ (vertical ** 2).T
        points = ((horizontal > 0) * counts[sel]) @ (vertical > 0).T.astype(float)
        for i, p in enumerate(ps):
            for j, q in enumerate(qs):
                n_points = int(points[i, j])
                if n_points == 0:
                    continue
                if n_points < min_points:
                    excluded.append(ShellIndex(k=k, p=p, q=q).label())
                    continue
                l2 = float(np.sqrt(max(table[i, j], 0.0)))
                weight = b_weight(k, p, q)
                rows.append(NormRow(kind="B", k=k, p=p, q=q, points=n_points, l2=l2,
                                    weight=weight, weighted=weight * l2))
    return rows, excluded


def b_norm(f: SpectralField, p_floor: Optional[int] = None) -> float:
    rows, _ = b_table(f, p_floor)
    return max((row.weighted for row in rows), default=0.0)


def _spherical_k_values(s: SphericalSpectralField) -> range:
    lo = int(np.ceil(np.log2(s.edges[0] / 1.6)))
    hi = int(np.floor(np.log2(s.edges[-1] / 0.4)))
    return range(lo, hi + 1)


def top_angular_index(n_lam: int, ell_max: Optional[int] = None) -> int:
    """Largest angular index whose kernel the Lambda nodes resolve"""
    ell_max = config.ELL_MAX if ell_max is None else ell_max
    return min(ell_max, int(np.log2(n_lam)) - 2)


def angular_truncation(s: SphericalSpectralField, ell_top: int) -> float:
    """Relative L2 mass outside the reach of R_{<=ell_top}"""
    _, _, degrees = legendre_operators(s.n_lam)
    mass = s.degree_mass()
    total = mass.sum()
    if total == 0:
        return 0.0
    outside = np.sum(mass * (1 - angular_weights(ell_top, degrees, low=True)) ** 2)
    return float(np.sqrt(outside / total))


def x_table_spherical(s: SphericalSpectralField, beta: Optional[float] = None, p_floor: Optional[int] = None,
                      ell_max: Optional[int] = None, k_values=None,
                      min_points: Optional[int] = None) -> Tuple[List[NormRow], List[str]]:
    """
    ||P_{k,p} R_l^(p) f|| rows of the X norm. The capped projection R_l^(p) is R_{<=l} on the row
    p = -l and R_l above it; rows with l + p < 0 vanish and are not listed.
    """
    beta = config.BETA if beta is None else beta
    p_floor = config.P_FLOOR if p_floor is None else p_floor
    min_points = config.MIN_SHELL_POINTS if min_points is None else min_points
    ell_top = top_angular_index(s.n_lam, ell_max)
    k_values = _spherical_k_values(s) if k_values is None else k_values
    measure = s.measure()
    rows, excluded = [], []
    for ell in range(ell_top + 1):
        p_low = max(p_floor, -ell)
        energy = {}
        for p in {p_low, 0}:
            band = project_angular(s, ell, p=p)
            energy[ell + p == 0] = np.abs(band.values) ** 2 * measure
        if not any(np.any(e) for e in energy.values()):
            continue
        for k in k_values:
            radial = radial_cutoff(k, s.rho)
            if not np.any(radial):
                continue
            for p in range(p_low, 1):
                band_energy = energy[ell + p == 0]
                if not np.any(band_energy):
                    continue
                symbol = radial[:, None] * horizontal_cutoff(p, s.lam)[None, :]
                n_points = int(np.count_nonzero(symbol))
                if n_points == 0:
                    continue
                if n_points < min_points:
                    excluded.append(ShellIndex(k=k, p=p, ell=ell).label())
                    continue
                l2 = float(np.sqrt(np.sum(symbol ** 2 * band_energy)))
                weight = x_weight(k, ell, p, beta)
                rows.append(NormRow(kind="X", k=k, p=p, ell=ell, points=n_points, l2=l2,
                                    weight=weight, weighted=weight * l2))
    return rows, excluded


def x_table(f: SpectralField, beta: Optional[float] = None, p_floor: Optional[int] = None,
            n_lam: Optional[int] = None) -> Tuple[List[NormRow], List[str], str]:
    s = cartesian_to_spherical(f, n_lam=n_lam or X_NORM_NODES)
    ell_top = top_angular_index(s.n_lam)
    rows, excluded = x_table_spherical(s, beta, p_floor, k_values=k_range(f.spec))
    note = (f"angular indices 0..{ell_top} from {s.n_lam} Lambda nodes; relative mass beyond "
            f"R_<={ell_top}: {angular_truncation(s, ell_top):.2e}; radial range "
            f"[{s.edges[0]:.4g}, {s.edges[-1]:.4g}]")
    return rows, excluded, note


def x_norm(f: SpectralField, beta: Optional[float] = None, p_floor: Optional[int] = None) -> float:
    rows, _, _ = x_table(f, beta, p_floor)
    return max((row.weighted for row in rows), default=0.0)


def x_norm_spherical(s: SphericalSpectralField, beta: Optional[float] = None) -> float:
    rows, _ = x_table_spherical(s, beta)
    return max((row.weighted for row in rows), default=0.0)


def scaling_powers(f: SpectralField, count: int = D_NORM_POWERS) -> List[SpectralField]:
    """[f, S f, ..., S^count f]"""
    powers = [f]
    for _ in range(count):
        powers.append(apply_scaling(powers[-1]))
    return powers


def d_norm(f: SpectralField, beta: Optional[float] = None) -> float:
    return max(b_norm(g) + x_norm(g, beta) for g in scaling_powers(f))


def sobolev_norm(f: SpectralField, N: int) -> float:
    """||<xi>^N f_hat||, N capped at SOBOLEV_CAP"""
    if N > config.SOBOLEV_CAP:
        raise ValueError(f"Sobolev index {N} above the cap {config.SOBOLEV_CAP}")
    k2 = wavenumbers(f.spec).kmod ** 2
    return f.apply((1 + k2) ** (N / 2)).l2_norm()


def vector_field_sobolev(f: SpectralField, N: int) -> float:
    """sum_{a<=N} ||S^a f||"""
    if N > config.SOBOLEV_CAP:
        raise ValueError(f"vector-field Sobolev index {N} above the cap {config.SOBOLEV_CAP}")
    return float(sum(g.l2_norm() for g in scaling_powers(f, N)))


def hminus1_proxy(f: SpectralField, low_modes: int = 2) -> Tuple[float, bool]:
    """||f_hat/|xi| || over nonzero modes; flagged when |m| <= low_modes carries most of it"""
    w = wavenumbers(f.spec)
    k2 = w.kmod ** 2
    density = np.where(k2 > 0, np.abs(f.coeffs) ** 2 / np.where(k2 > 0, k2, 1.0), 0.0)
    total = density.sum()
    if total == 0:
        return 0.0, False
    low = density[w.kmod <= low_modes * f.spec.k_min].sum()
    return float(np.sqrt(total) / f.spec.L ** 1.5), bool(low > 0.5 * total)


def fourier_linf_check(f: SpectralField, beta: Optional[float] = None, p_floor: Optional[int] = None,
                       d_value: Optional[float] = None) -> float:
    """max_{k,p,q} 2^(3k/2) ||P_{k,p,q} f_hat||_Linf / ||f||_D"""
    p_floor = config.P_FLOOR if p_floor is None else p_floor
    d_value = d_norm(f, beta) if d_value is None else d_value
    if d_value == 0:
        return 0.0
    cyl = cylindrical_index(f.spec)
    rho, lam, _, _ = _pair_data(f)
    peak = cyl.reduce_max(np.abs(f.coeffs))
    worst = 0.0
    for k in k_range(f.spec):
        radial = radial_cutoff(k, rho) * peak
        sel = radial > 0
        if not np.any(sel):
            continue
        for p in range(p_floor, 1):
            h = radial[sel] * horizontal_cutoff(p, lam[sel])
            live = h > 0
            if not np.any(live):
                continue
            for q in range(2 * p_floor, 1):
                value = float(np.max(h[live] * vertical_cutoff(q, lam[sel][live])))
                worst = max(worst, 2.0 ** (1.5 * k) * value)
    return worst / d_value


def lebesgue_norm(samples: np.ndarray, exponent: float, dx: float) -> float:
    """Trapezoid (periodic) rule for ||g||_{L^exponent}"""
    return float((np.sum(np.abs(samples) ** exponent) * dx ** 3) ** (1.0 / exponent))


def interpolation_sides(f: SpectralField, n: int, r: int) -> Tuple[float, float]:
    """(||S^{<=n+1} f||^2, 2(r+1) ||S^{<=n} f|| ||S^{<=n+2} f||) in L^{2r}"""
    powers = [lebesgue_norm(inverse_transform(g), 2 * r, f.spec.dx) for g in scaling_powers(f, n + 2)]
    upto = np.cumsum(powers)
    return float(upto[n + 1] ** 2), float(2 * (r + 1) * upto[n] * upto[n + 2])


def interpolation_check(f: SpectralField, n: int, r: int, slack: float = 1e-9) -> bool:
    if r not in (1, 2):
        raise ValueError("interpolation check supports r in {1, 2}")
    lhs, rhs = interpolation_sides(f, n, r)
    return lhs <= rhs + slack


def norm_report(f: SpectralField, beta: Optional[float] = None, include_d: bool = True,
                sobolev_n: Optional[int] = None) -> NormReport:
    beta = config.BETA if beta is None else beta
    sobolev_n = config.SOBOLEV_N if sobolev_n is None else sobolev_n
    b_rows, b_excluded = b_table(f)
    x_rows, x_excluded, note = x_table(f, beta)
    b_value = max((row.weighted for row in b_rows), default=0.0)
    x_value = max((row.weighted for row in x_rows), default=0.0)
    proxy, kmin_dependent = hminus1_proxy(f)
    if kmin_dependent:
        logger.warning("⚠️ H^-1 proxy dominated by the lowest box modes, it depends on the box size")
    d_value = d_norm(f, beta) if include_d else None
    excluded = b_excluded + x_excluded
    if excluded:
        logger.info(f"ℹ️ {len(excluded)} shells excluded for lack of grid points")
    return NormReport(
        beta=beta, b_norm=b_value, x_norm=x_value, d_norm=d_value,
        sobolev={str(N): sobolev_norm(f, N) for N in range(sobolev_n + 1)},
        hminus1_proxy=proxy, hminus1_kmin_dependent=kmin_dependent,
        rows=b_rows + x_rows, excluded=excluded, truncation_note=note,
    )


def write_norm_report(report: NormReport, out_dir: Union[str, Path], stem: str = "norms") -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    report.to_frame().to_csv(csv_path, index=False)
    summary = report.model_dump(exclude={"rows"})
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2)
    logger.info(f"✅ Norm report written to {csv_path} and {json_path}")
    return {"csv": csv_path, "json": json_path}
