"""
Vector fields S, Omega, Upsilon, D3 and the phase functions of bilinear interactions.

Frequency pairs are arrays of shape (..., 3). For a pair (xi, eta) we write zeta = xi - eta and

    Phi_{mu nu}(xi, eta) = Lambda(xi) + mu Lambda(zeta) + nu Lambda(eta)
    sigma(xi, eta)       = xi_3 eta_h - eta_3 xi_h

Derivatives in the eta slot hold xi fixed; derivatives in the zeta slot hold xi fixed and move zeta.
"""

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from numpy.polynomial import legendre as npleg

from src.config import config
from src.exceptions import ConfigurationError, DomainError
from src.localization import BUMP, SphericalSpectralField, gauss_legendre, legendre_operators
from src.models import IdentityStatistics, PhaseSigmaStatistics, ShellIndex

SLOTS = ("eta", "zeta")
FIELDS = ("S", "Omega")


def _norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v ** 2, axis=-1))


def _h(v: np.ndarray) -> np.ndarray:
    return v[..., :2]


def _perp(a: np.ndarray) -> np.ndarray:
    """a^perp = (-a2, a1) for horizontal 2-vectors"""
    return np.stack([-a[..., 1], a[..., 0]], axis=-1)


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


def lambda_of(zeta) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=float)
    modulus = _norm(zeta)
    if np.any(modulus == 0):
        raise DomainError("Lambda is undefined at the zero vector")
    return zeta[..., 2] / modulus


@dataclass(frozen=True, eq=False)
class FrequencyPair:
    xi: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        if xi.shape != eta.shape or xi.shape[-1] != 3:
            raise ConfigurationError("xi and eta must be arrays of 3-vectors with equal shapes")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "eta", eta)
        for name, v in (("xi", xi), ("eta", eta), ("xi - eta", xi - eta)):
            if np.any(_norm(v) == 0):
                raise DomainError(f"{name} vanishes")

    @cached_property
    def zeta(self) -> np.ndarray:
        return self.xi - self.eta

    def require_horizontal(self):
        for name, v in (("xi", self.xi), ("eta", self.eta), ("xi - eta", self.zeta)):
            if np.any(_norm(_h(v)) == 0):
                raise DomainError(f"horizontal part of {name} vanishes")

    def slot(self, slot: str) -> Tuple[np.ndarray, np.ndarray]:
        """(moving vector, the other vector xi - moving)"""
        if slot == "eta":
            return self.eta, self.zeta
        if slot == "zeta":
            return self.zeta, self.eta
        raise ConfigurationError(f"unknown slot {slot!r}")

    def moved(self, slot: str, vector: np.ndarray) -> "FrequencyPair":
        """Pair with the slot vector replaced, xi fixed"""
        if slot == "eta":
            return FrequencyPair(self.xi, vector)
        return FrequencyPair(self.xi, self.xi - vector)


def phase(mu: int, nu: int, pair: FrequencyPair) -> np.ndarray:
    return lambda_of(pair.xi) + mu * lambda_of(pair.zeta) + nu * lambda_of(pair.eta)


def sigma_bar(pair: FrequencyPair) -> np.ndarray:
    return pair.xi[..., 2:3] * _h(pair.eta) - pair.eta[..., 2:3] * _h(pair.xi)


def sigma_from_cross(pair: FrequencyPair) -> np.ndarray:
    """-(xi x eta)_h^perp"""
    return -_perp(_h(np.cross(pair.xi, pair.eta)))


def _sigma(xi: np.ndarray, a: np.ndarray) -> np.ndarray:
    return xi[..., 2:3] * _h(a) - a[..., 2:3] * _h(xi)


def _slot_weight(slot: str, mu: int, nu: int) -> int:
    # the moving vector's own Lambda is killed by S and Omega; only Lambda(xi - moving) varies
    return mu if slot == "eta" else nu


def _first(V: str, xi: np.ndarray, a: np.ndarray) -> np.ndarray:
    """V_a Lambda(xi - a) with xi fixed"""
    b = xi - a
    rb = _norm(b)
    if V == "S":
        return _dot(_sigma(xi, a), _h(b)) / rb ** 3
    if V == "Omega":
        return b[..., 2] * _dot(_h(b), _perp(_h(a))) / rb ** 3
    raise ConfigurationError(f"unknown vector field {V!r}")


def vf_phase_derivative(V: str, slot: str, pair: FrequencyPair, mu: int = 1, nu: int = 1) -> np.ndarray:
    """S or Omega derivative of Phi_{mu nu} in the eta or zeta slot"""
    pair.require_horizontal()
    a, _ = pair.slot(slot)
    return _slot_weight(slot, mu, nu) * _first(V, pair.xi, a)


def vf_phase_second_derivative(V1: str, V2: str, slot: str, pair: FrequencyPair,
                               mu: int = 1, nu: int = 1) -> np.ndarray:
    """V1 (V2 Phi) in one slot"""
    pair.require_horizontal()
    xi = pair.xi
    a, b = pair.slot(slot)
    rb2 = _dot(b, b)
    rb3 = rb2 ** 1.5
    f_s = _first("S", xi, a)
    f_o = _first("Omega", xi, a)
    w = _dot(_h(b), _perp(_h(a)))
    if (V1, V2) == ("S", "S"):
        value = f_s * (3 * _dot(a, b) / rb2 + 2) - _dot(_sigma(xi, a), _h(xi)) / rb3
    elif (V1, V2) == ("Omega", "Omega"):
        value = 3 * f_o * w / rb2 - b[..., 2] * _dot(_h(a), _h(xi)) / rb3
    elif (V1, V2) == ("S", "Omega"):
        value = f_o * (1 + 3 * _dot(b, a) / rb2) - a[..., 2] * w / rb3
    elif (V1, V2) == ("Omega", "S"):
        value = w * (b[..., 2] + 2 * a[..., 2]) / rb3 + 3 * f_s * w / rb2
    else:
        raise ConfigurationError(f"unknown vector fields {(V1, V2)!r}")
    return _slot_weight(slot, mu, nu) * value


@dataclass(frozen=True, eq=False)
class PhaseEvaluation:
    phases: Dict[Tuple[int, int], np.ndarray]
    sigma: np.ndarray
    first: Dict[Tuple[str, str], np.ndarray]       # (V, slot) -> V_slot Phi_{++}
    second: Dict[Tuple[str, str, str], np.ndarray]  # (V1, V2, slot) -> V1 V2 Phi_{++}


def evaluate_phase(pair: FrequencyPair) -> PhaseEvaluation:
    signs = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    return PhaseEvaluation(
        phases={s: phase(s[0], s[1], pair) for s in signs},
        sigma=sigma_bar(pair),
        first={(V, slot): vf_phase_derivative(V, slot, pair) for V in FIELDS for slot in SLOTS},
        second={(V1, V2, slot): vf_phase_second_derivative(V1, V2, slot, pair)
                for V1 in FIELDS for V2 in FIELDS for slot in SLOTS},
    )


def vf_magnitude_ratio(pair: FrequencyPair) -> np.ndarray:
    """(|S_eta Phi| + |Omega_eta Phi|) / ((|zeta_h|/|zeta|) |zeta|^-2 |sigma|), in [1, sqrt 2] where sigma != 0"""
    pair.require_horizontal()
    zeta = pair.zeta
    total = np.abs(_first("S", pair.xi, pair.eta)) + np.abs(_first("Omega", pair.xi, pair.eta))
    reference = _norm(_h(zeta)) / _norm(zeta) ** 3 * _norm(sigma_bar(pair))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(reference > 0, total / np.where(reference > 0, reference, 1.0), np.nan)


# --- finite-difference oracles ------------------------------------------------------------

def _flow(V: str, vector: np.ndarray, eps: float) -> np.ndarray:
    if V == "S":
        return np.exp(eps) * vector
    c, s = np.cos(eps), np.sin(eps)
    x, y = vector[..., 0], vector[..., 1]
    return np.stack([c * x - s * y, s * x + c * y, vector[..., 2]], axis=-1)


def fd_phase_derivative(V: str, slot: str, pair: FrequencyPair, mu: int = 1, nu: int = 1,
                        h: float = 1e-6) -> np.ndarray:
    a, _ = pair.slot(slot)
    plus = phase(mu, nu, pair.moved(slot, _flow(V, a, h)))
    minus = phase(mu, nu, pair.moved(slot, _flow(V, a, -h)))
    return (plus - minus) / (2 * h)


def fd_phase_second_derivative(V1: str, V2: str, slot: str, pair: FrequencyPair, mu: int = 1, nu: int = 1,
                               h: float = 1e-4) -> np.ndarray:
    a, _ = pair.slot(slot)
    total = 0.0
    for s1 in (1, -1):
        for s2 in (1, -1):
            moved = _flow(V2, _flow(V1, a, s1 * h), s2 * h)
            total = total + s1 * s2 * phase(mu, nu, pair.moved(slot, moved))
    return total / (4 * h * h)


# --- cross-term coefficients --------------------------------------------------------------

def horizontal_angle(pair: FrequencyPair, slot: str = "eta") -> Tuple[np.ndarray, np.ndarray]:
    """(omega_c, omega_s): cosine and sine of the angle from b_h to a_h"""
    pair.require_horizontal()
    a, b = pair.slot(slot)
    scale = _norm(_h(a)) * _norm(_h(b))
    return _dot(_h(a), _h(b)) / scale, _dot(_h(a), _perp(_h(b))) / scale


def polar_direction(b: np.ndarray) -> np.ndarray:
    """e_phi(b) = (Lambda b_h/|b_h|, -sqrt(1 - Lambda^2))"""
    lam = lambda_of(b)
    unit_h = _h(b) / _norm(_h(b))[..., None]
    return np.concatenate([lam[..., None] * unit_h, -np.sqrt(1 - lam ** 2)[..., None]], axis=-1)


def gamma_coefficients(V: str, slot: str, pair: FrequencyPair) -> Tuple[np.ndarray, np.ndarray]:
    """(Gamma^S, Gamma^Upsilon) with V_a = Gamma^S S_b + Gamma^Upsilon Upsilon_b on functions of b = xi - a"""
    pair.require_horizontal()
    a, b = pair.slot(slot)
    rb = _norm(b)
    if V == "S":
        return -_dot(b, a) / rb ** 2, -_dot(polar_direction(b), a) / rb
    if V == "Omega":
        _, omega_s = horizontal_angle(pair, slot)
        gamma_s = -_dot(_h(b), _perp(_h(a))) / rb ** 2
        gamma_u = lambda_of(b) * _norm(_h(a)) * omega_s / rb
        return gamma_s, gamma_u
    raise ConfigurationError(f"unknown vector field {V!r}")


def chain_rule_test_function(b: np.ndarray) -> Dict[str, np.ndarray]:
    """g = Lambda e^{-rho} with S g, Upsilon g and its Cartesian gradient"""
    rho = _norm(b)
    lam = lambda_of(b)
    decay = np.exp(-rho)
    e3 = np.zeros_like(b)
    e3[..., 2] = 1.0
    grad = (e3 / rho[..., None] - (b[..., 2] / rho ** 3)[..., None] * b) * decay[..., None] \
        - (lam / rho * decay)[..., None] * b
    return {
        "g": lam * decay,
        "S": -rho * lam * decay,
        "Upsilon": -np.sqrt(1 - lam ** 2) * decay,
        "grad": grad,
    }


def chain_rule_residual(V: str, slot: str, pair: FrequencyPair) -> np.ndarray:
    """|V_a[g(xi - a)] - Gamma^S (S g) - Gamma^Upsilon (Upsilon g)| for the test function g"""
    a, b = pair.slot(slot)
    g = chain_rule_test_function(b)
    direction = a if V == "S" else np.concatenate([_perp(_h(a)), np.zeros_like(a[..., :1])], axis=-1)
    direct = -_dot(direction, g["grad"])
    gamma_s, gamma_u = gamma_coefficients(V, slot, pair)
    return np.abs(direct - gamma_s * g["S"] - gamma_u * g["Upsilon"])


# --- D3 calculus ----------------------------------------------------------------------------

def d3_closed_forms(pair: FrequencyPair) -> Dict[str, np.ndarray]:
    """D3^eta = |eta| d/d eta_3 applied to basic functions"""
    eta, zeta = pair.eta, pair.zeta
    r_eta, r_zeta = _norm(eta), _norm(zeta)
    lam_eta, lam_zeta = lambda_of(eta), lambda_of(zeta)
    return {
        "Lambda(eta)": 1 - lam_eta ** 2,
        "sqrt(1-Lambda^2)(eta)": -lam_eta * np.sqrt(1 - lam_eta ** 2),
        "|eta|": r_eta * lam_eta,
        "Lambda(xi-eta)": -(r_eta / r_zeta) * (1 - lam_zeta ** 2),
        "|xi-eta|": -r_eta * lam_zeta,
    }


_D3_FUNCTIONS: Dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "Lambda(eta)": lambda xi, eta: lambda_of(eta),
    "sqrt(1-Lambda^2)(eta)": lambda xi, eta: np.sqrt(1 - lambda_of(eta) ** 2),
    "|eta|": lambda xi, eta: _norm(eta),
    "Lambda(xi-eta)": lambda xi, eta: lambda_of(xi - eta),
    "|xi-eta|": lambda xi, eta: _norm(xi - eta),
}


def d3_finite_difference(pair: FrequencyPair, h: float = 1e-6) -> Dict[str, np.ndarray]:
    step = np.zeros_like(pair.eta)
    step[..., 2] = h
    r_eta = _norm(pair.eta)
    return {
        name: r_eta * (fn(pair.xi, pair.eta + step) - fn(pair.xi, pair.eta - step)) / (2 * h)
        for name, fn in _D3_FUNCTIONS.items()
    }


# --- vector fields on spherical samples -----------------------------------------------------

@lru_cache(maxsize=16)
def _lambda_differentiation(count: int) -> np.ndarray:
    analysis, _, degrees = legendre_operators(count)
    nodes, _ = gauss_legendre(count)
    derivative_basis = npleg.legval(nodes, npleg.legder(np.eye(degrees.size))).T
    matrix = derivative_basis @ analysis
    matrix.setflags(write=False)
    return matrix


def _log_rho_differentiation(reference: np.ndarray) -> np.ndarray:
    m = reference.size
    vander = npleg.legvander(reference, m - 1)
    derivative_basis = npleg.legval(reference, npleg.legder(np.eye(m))).T
    return derivative_basis @ np.linalg.inv(vander)


def angular_resolution_defect(s: SphericalSpectralField) -> float:
    """Share of mass in the top quarter of representable degrees"""
    mass = s.degree_mass()
    total = mass.sum()
    if total == 0:
        return 0.0
    return float(mass[-max(1, mass.size // 4):].sum() / total)


def _flag_resolution(s: SphericalSpectralField):
    defect = angular_resolution_defect(s)
    if defect > 1e-8:
        logger.warning(f"⚠️ Under-resolved angular spectrum: {defect:.2e} of the mass in the top degrees")


def scaling_apply_spherical(s: SphericalSpectralField) -> SphericalSpectralField:
    """S = rho d/d rho = d/d log(rho), spectral differentiation within each dyadic shell"""
    reference_matrix = _log_rho_differentiation(s.reference)
    out = np.zeros_like(s.values)
    for shell in range(len(s.edges) - 1):
        rows = np.flatnonzero(s.shell_of == shell)
        width = np.log(s.edges[shell + 1]) - np.log(s.edges[shell])
        out[rows] = (2.0 / width) * reference_matrix @ s.values[rows]
    return s.with_values(out)


def upsilon_apply(s: SphericalSpectralField) -> SphericalSpectralField:
    """Upsilon = -sqrt(1 - Lambda^2) d/dLambda by Legendre-basis differentiation"""
    _flag_resolution(s)
    derivative = s.values @ _lambda_differentiation(s.n_lam).T
    return s.with_values(-np.sqrt(1 - s.lam ** 2)[None, :] * derivative)


def d3_apply(s: SphericalSpectralField) -> SphericalSpectralField:
    """D3 = Lambda S - sqrt(1 - Lambda^2) Upsilon"""
    scaled = scaling_apply_spherical(s).values
    ups = upsilon_apply(s).values
    return s.with_values(s.lam[None, :] * scaled - np.sqrt(1 - s.lam ** 2)[None, :] * ups)


# --- localized sampling ---------------------------------------------------------------------

def _abs_lambda_interval(index: ShellIndex) -> Optional[Tuple[float, float]]:
    """Interval of |Lambda| compatible with the p and q cutoffs, None if empty"""
    lo, hi = 0.0, 1.0
    if index.q is not None:
        lo = max(lo, 2.0 ** index.q * 2 / 5)
        if index.q < 0:
            hi = min(hi, 2.0 ** index.q * BUMP.outer)
    if index.p is not None:
        s_lo = 2.0 ** index.p * 2 / 5
        s_hi = 1.0 if index.p == 0 else min(1.0, 2.0 ** index.p * BUMP.outer)
        hi = min(hi, np.sqrt(1 - s_lo ** 2))
        lo = max(lo, np.sqrt(max(0.0, 1 - s_hi ** 2)))
    return (lo, hi) if lo < hi else None


def sample_shell(rng: np.random.Generator, index: ShellIndex, count: int,
                 hemisphere: Optional[int] = None) -> np.ndarray:
    """Uniform in (log rho, Lambda, theta) on the support of a shell"""
    interval = _abs_lambda_interval(index)
    if interval is None:
        return np.zeros((0, 3))
    log_rho = rng.uniform(index.k + np.log2(2 / 5), index.k + np.log2(BUMP.outer), count)
    rho = 2.0 ** log_rho
    magnitude = rng.uniform(interval[0], interval[1], count)
    sign = np.full(count, hemisphere) if hemisphere else rng.choice([-1.0, 1.0], count)
    lam = sign * magnitude
    theta = rng.uniform(0, 2 * np.pi, count)
    s = np.sqrt(1 - lam ** 2)
    return np.stack([rho * s * np.cos(theta), rho * s * np.sin(theta), rho * lam], axis=-1)


def in_shell(vectors: np.ndarray, index: ShellIndex, hemisphere: Optional[int] = None) -> np.ndarray:
    rho = _norm(vectors)
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.where(rho > 0, vectors[..., 2] / np.where(rho > 0, rho, 1.0), 0.0)
    inside = (rho > 2.0 ** index.k * 2 / 5) & (rho < 2.0 ** index.k * BUMP.outer)
    interval = _abs_lambda_interval(index)
    if interval is None:
        return np.zeros(rho.shape, dtype=bool)
    inside &= (np.abs(lam) > interval[0]) & (np.abs(lam) <= interval[1])
    inside &= _norm(_h(vectors)) > 0
    if hemisphere:
        inside &= np.sign(lam) == hemisphere
    return inside


def sample_localized_pairs(rng: np.random.Generator, shells: Sequence[ShellIndex], count: int,
                           max_batches: int = 200) -> FrequencyPair:
    """Pairs with xi, xi - eta, eta in the given shells (rejection on xi - eta)"""
    xi_shell, zeta_shell, eta_shell = shells
    kept_xi, kept_eta, kept = [], [], 0
    for _ in range(max_batches):
        xi = sample_shell(rng, xi_shell, 4 * count)
        eta = sample_shell(rng, eta_shell, 4 * count)
        if xi.size == 0 or eta.size == 0:
            break
        ok = in_shell(xi - eta, zeta_shell)
        kept_xi.append(xi[ok])
        kept_eta.append(eta[ok])
        kept += int(ok.sum())
        if kept >= count:
            break
    if kept == 0:
        raise DomainError("no frequency pairs found on the requested shells")
    return FrequencyPair(np.concatenate(kept_xi)[:count], np.concatenate(kept_eta)[:count])


# --- phase versus sigma -------------------------------------------------------------------

def _conditioned_eta(rng, xi, eta_shell, zeta_shell, signs, threshold, hemispheres, iterations=60):
    """For each xi and a random (rho, theta) of eta, solve Phi = target for Lambda(eta)"""
    mu, nu = signs
    count = xi.shape[0]
    interval = _abs_lambda_interval(eta_shell)
    if interval is None:
        return np.zeros((0, 3)), np.zeros((0, 3))
    rho = 2.0 ** rng.uniform(eta_shell.k + np.log2(2 / 5), eta_shell.k + np.log2(BUMP.outer), count)
    theta = rng.uniform(0, 2 * np.pi, count)
    hemi = hemispheres[2] if hemispheres else None
    sign = np.full(count, float(hemi)) if hemi else rng.choice([-1.0, 1.0], count)
    target = rng.uniform(-threshold, threshold, count)
    lam_xi = lambda_of(xi)

    def residual(lam):
        s = np.sqrt(np.clip(1 - lam ** 2, 0, None))
        eta = np.stack([rho * s * np.cos(theta), rho * s * np.sin(theta), rho * lam], axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            value = lam_xi + mu * lambda_of_safe(xi - eta) + nu * lam - target
        return value, eta

    lo = sign * interval[0]
    hi = sign * interval[1]
    f_lo, _ = residual(lo)
    f_hi, _ = residual(hi)
    bracket = np.isfinite(f_lo) & np.isfinite(f_hi) & (np.sign(f_lo) != np.sign(f_hi))
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        f_mid, _ = residual(mid)
        left = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(left, mid, lo)
        f_lo = np.where(left, f_mid, f_lo)
        hi = np.where(left, hi, mid)
    _, eta = residual(0.5 * (lo + hi))
    ok = bracket & in_shell(eta, eta_shell, hemi) & in_shell(xi - eta, zeta_shell, hemispheres[1] if hemispheres else None)
    return xi[ok], eta[ok]


def lambda_of_safe(v: np.ndarray) -> np.ndarray:
    modulus = _norm(v)
    return np.where(modulus > 0, v[..., 2] / np.where(modulus > 0, modulus, 1.0), np.nan)


def phase_vs_sigma_sample(shells: Sequence[ShellIndex], count: int, signs: Tuple[int, int] = (1, 1),
                          seed: int = 0, c_star: Optional[float] = None,
                          hemispheres: Optional[Tuple[int, int, int]] = None,
                          batch: int = 200_000, max_draws: Optional[int] = None) -> PhaseSigmaStatistics:
    """Conditioned samples with |Phi| <= 2^(q_max - 10) on the shells of (xi, xi - eta, eta)

    Samples are drawn on the conditioned set directly: xi and the modulus and azimuth of eta are
    uniform on their supports, the polar coordinate of eta solves Phi = target by bisection.
    """
    c_star = config.C_STAR if c_star is None else c_star
    xi_shell, zeta_shell, eta_shell = shells
    q_max = max((s.q if s.q is not None else 0) for s in shells)
    k_values = [s.k for s in shells]
    threshold = 2.0 ** (q_max - 10)
    scale = 2.0 ** q_max * 2.0 ** (max(k_values) + min(k_values))
    max_draws = max_draws or 50 * count
    rng = np.random.default_rng(seed)

    min_ratio, min_pmax = np.inf, np.inf
    drawn = conditioned = counterexamples = hard = 0
    while conditioned < count and drawn < max_draws:
        xi = sample_shell(rng, xi_shell, batch, hemispheres[0] if hemispheres else None)
        if xi.size == 0:
            break
        drawn += batch
        xi, eta = _conditioned_eta(rng, xi, eta_shell, zeta_shell, signs, threshold, hemispheres)
        if xi.shape[0] == 0:
            continue
        pair = FrequencyPair(xi, eta)
        phi = phase(signs[0], signs[1], pair)
        keep = np.abs(phi) <= threshold
        if not np.any(keep):
            continue
        ratio = _norm(sigma_bar(pair))[keep] / scale
        vectors = (pair.xi[keep], pair.zeta[keep], pair.eta[keep])
        pmax = np.max(np.stack([np.sqrt(1 - lambda_of(v) ** 2) for v in vectors]), axis=0)
        conditioned += int(keep.sum())
        min_ratio = min(min_ratio, float(ratio.min()))
        min_pmax = min(min_pmax, float(pmax.min()))
        counterexamples += int(np.sum(ratio < c_star))
        hard += int(np.sum(ratio < c_star / 2))

    if conditioned == 0:
        logger.info("ℹ️ Conditioned sample set is empty: phase never small on these shells")
        return PhaseSigmaStatistics(drawn=drawn, conditioned=0, phase_threshold=threshold,
                                    c_star=c_star, inconclusive=True)
    logger.info(f"📊 phase-vs-sigma: {conditioned} conditioned samples, min ratio {min_ratio:.4e}, "
                f"min 2^p_max {min_pmax:.4f}")
    return PhaseSigmaStatistics(
        drawn=drawn, conditioned=conditioned, phase_threshold=threshold, min_ratio=min_ratio,
        min_pmax=min_pmax, counterexamples=counterexamples, hard_failures=hard, c_star=c_star,
    )


def multiplier_bound_sample(shells: Sequence[ShellIndex], count: int, seed: int = 0) -> IdentityStatistics:
    """max over samples of |xi| |Lambda(z1)| sqrt(1 - Lambda^2(z2)) / 2^(k + p_max + q_max)"""
    rng = np.random.default_rng(seed)
    pair = sample_localized_pairs(rng, shells, count)
    vectors = (pair.xi, pair.zeta, pair.eta)
    p_max = max((s.p if s.p is not None else 0) for s in shells)
    q_max = max((s.q if s.q is not None else 0) for s in shells)
    scale = 2.0 ** (shells[0].k + p_max + q_max)
    worst = np.zeros(pair.xi.shape[0])
    for z1 in vectors:
        for z2 in vectors:
            m = _norm(pair.xi) * np.abs(lambda_of(z1)) * np.sqrt(1 - lambda_of(z2) ** 2)
            worst = np.maximum(worst, m / scale)
    budget = BUMP.outer ** 3
    return summarize("null-structure multiplier bound", worst, budget)


def summarize(name: str, residuals: np.ndarray, budget: float) -> IdentityStatistics:
    residuals = np.asarray(residuals, dtype=float).ravel()
    quantiles = {f"q{int(100 * q)}": float(np.quantile(residuals, q)) for q in (0.5, 0.9, 0.99)}
    return IdentityStatistics(
        name=name, samples=residuals.size, max_residual=float(residuals.max()), quantiles=quantiles,
        budget=budget, failures=int(np.sum(residuals > budget)),
    )


def identity_suite(pair: FrequencyPair, budget: Optional[float] = None) -> Dict[str, IdentityStatistics]:
    """Closed forms against finite-difference oracles on a batch of pairs"""
    budget = config.TOL_IDENTITY if budget is None else budget
    out: Dict[str, IdentityStatistics] = {}
    for signs in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        for slot in SLOTS:
            for V in FIELDS:
                closed = vf_phase_derivative(V, slot, pair, *signs)
                oracle = fd_phase_derivative(V, slot, pair, *signs)
                out[f"{V}_{slot} Phi{signs}"] = summarize(
                    f"{V}_{slot} Phi{signs}", np.abs(closed - oracle) / (1 + np.abs(closed)), budget)
    for V1 in FIELDS:
        for V2 in FIELDS:
            for slot in SLOTS:
                closed = vf_phase_second_derivative(V1, V2, slot, pair)
                oracle = fd_phase_second_derivative(V1, V2, slot, pair)
                out[f"{V1}{V2}_{slot} Phi"] = summarize(
                    f"{V1}{V2}_{slot} Phi", np.abs(closed - oracle) / (1 + np.abs(closed)), budget)
    closed_d3 = d3_closed_forms(pair)
    oracle_d3 = d3_finite_difference(pair)
    for name, value in closed_d3.items():
        out[f"D3 {name}"] = summarize(
            f"D3 {name}", np.abs(value - oracle_d3[name]) / (1 + np.abs(value)), budget)
    for V in FIELDS:
        for slot in SLOTS:
            out[f"chain rule {V}_{slot}"] = summarize(
                f"chain rule {V}_{slot}", chain_rule_residual(V, slot, pair), min(budget, 1e-8))
    return out
