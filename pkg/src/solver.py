"""
Pseudo-spectral integration of axisymmetric Euler-Coriolis in the dispersive unknowns.

    d_t A - i Lambda C = N_A,   d_t C - i Lambda A = N_C,   U+- = A +- C

The linear part is solved exactly by stepping the profiles e^{-+it Lambda} U+-; their Duhamel integrand
is advanced with classical RK4. Quadratic products are formed in physical space with the 2/3 rule.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from src.exceptions import CFLViolation, ConfigurationError, NumericalAbort
from src.fields import (
    SpectralField,
    VectorFieldSpectral,
    apply_scaling,
    check_axisymmetry,
    dealias_mask,
    divergence_residual,
    field_from_spectrum,
    inverse_transform,
    leray_project,
    coriolis_apply,
    spectral_derivative,
    wavenumbers,
)
from src.localization import project_k
from src.models import FitRecord, GridSpec, SolverConfig
from src.norms import b_norm, d_norm, sobolev_norm, x_norm
from src.propagator import fit_exponent
from src.scalar_decomposition import (
    DispersiveUnknowns,
    ScalarPair,
    from_dispersive,
    from_profiles,
    quadratic_products,
    reconstruct,
    to_dispersive,
    to_profiles,
)
from src.utils.field_io import dump_field, load_field

# Runge-Kutta parameters
RK_A = [1. / 6., 1. / 3., 1. / 3., 1. / 6.]
RK_B = [0.5, 0.5, 1.]
RK_C = [0., 0.5, 0.5, 1.]

CFL_NUMBER = 0.5
SPECTRAL_TAIL = 1e-10


# --- right-hand sides ---------------------------------------------------------------------------

def _inv_kh(spec: GridSpec) -> np.ndarray:
    kh = wavenumbers(spec).kh
    return np.where(kh > 0, 1.0 / np.where(kh > 0, kh, 1.0), 0.0)


def nonlinearity(pair: ScalarPair, mask: Optional[np.ndarray] = None) -> ScalarPair:
    """(N_A, N_C) from the quadratic products Q[a, b] = F(u^a u^b)

        N_A = -|xi_h|^-1 sum_{j,k<=2} eps^{jk} (i xi_j) sum_n (i xi_n) Q[n, k]
        N_C = |xi|/|xi_h| [ -i xi_3 (1 - Lambda^2) Q[3,3] - sum_j i xi_j (1 - 2 Lambda^2) Q[3,j]
                            + i xi_3 sum_{j,k<=2} xi_j xi_k Q[j,k] / |xi|^2 ]
    """
    spec = pair.spec
    mask = dealias_mask(spec) if mask is None else mask
    w = wavenumbers(spec)
    k = (w.kx, w.ky, w.kz)
    inv_kh = _inv_kh(spec)
    q = quadratic_products(reconstruct(pair), mask)

    flux = [sum(1j * k[n] * q[(n, c)] for n in range(3)) for c in range(2)]
    n_a = -inv_kh * (1j * k[0] * flux[1] - 1j * k[1] * flux[0])

    lam2 = w.lam ** 2
    k2 = w.kmod ** 2
    inv_k2 = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    horizontal = sum(k[a] * k[b] * q[(a, b)] for a in range(2) for b in range(2))
    bracket = (-1j * w.kz * (1 - lam2) * q[(2, 2)]
               - sum(1j * k[j] * (1 - 2 * lam2) * q[(2, j)] for j in range(2))
               + 1j * w.kz * horizontal * inv_k2)
    n_c = w.kmod * inv_kh * bracket
    return ScalarPair(SpectralField(spec, n_a * mask), SpectralField(spec, n_c * mask))


def advection(u: VectorFieldSpectral, mask: Optional[np.ndarray] = None) -> VectorFieldSpectral:
    """u . grad u in physical space, dealiased"""
    spec = u.spec
    mask = dealias_mask(spec) if mask is None else mask
    truncated = u.apply(mask)
    velocity = truncated.physical()
    out = []
    for a in range(3):
        grads = [inverse_transform(spectral_derivative(truncated[a], b)) for b in range(3)]
        out.append(sum(velocity[b] * grads[b] for b in range(3)))
    return VectorFieldSpectral.from_physical(np.stack(out), spec).apply(mask)


def u_space_tendency(u: VectorFieldSpectral, mask: Optional[np.ndarray] = None,
                     linear: bool = True) -> VectorFieldSpectral:
    """Leray projection of -u.grad u - e3 x u"""
    rhs = advection(u, mask) * -1.0
    if linear:
        rhs = rhs - coriolis_apply(u)
    return leray_project(rhs)


def linear_velocity_propagator(u: VectorFieldSpectral, t: float) -> VectorFieldSpectral:
    """Exact linear flow on divergence-free fields: cos(t Lambda) w - sin(t Lambda) n x w"""
    w = wavenumbers(u.spec)
    kmod = w.kmod
    inv = np.where(kmod > 0, 1.0 / np.where(kmod > 0, kmod, 1.0), 0.0)
    n = (w.kx * inv, w.ky * inv, w.kz * inv)
    c = u.coeffs()
    cross = (n[1] * c[2] - n[2] * c[1],
             n[2] * c[0] - n[0] * c[2],
             n[0] * c[1] - n[1] * c[0])
    cos, sin = np.cos(t * w.lam), np.sin(t * w.lam)
    out = [cos * c[j] - sin * cross[j] for j in range(3)]
    real = all(component.real for component in u)
    return VectorFieldSpectral.from_coeffs(out, u.spec, real=real, divergence_free=True)


# --- state ----------------------------------------------------------------------------------------

@dataclass
class SimulationState:
    step: int
    t: float
    profiles: DispersiveUnknowns
    history: List[Dict[str, float]] = field(default_factory=list)

    @property
    def spec(self) -> GridSpec:
        return self.profiles.spec

    def unknowns(self) -> DispersiveUnknowns:
        return from_profiles(self.profiles, self.t)

    def pair(self) -> ScalarPair:
        return from_dispersive(self.unknowns())

    def velocity(self) -> VectorFieldSpectral:
        return reconstruct(self.pair())


@dataclass
class RunResult:
    config: SolverConfig
    history: pd.DataFrame
    snapshots: Dict[float, DispersiveUnknowns]
    final: SimulationState
    checkpoints: List[Path] = field(default_factory=list)


def clip_shells(spec: GridSpec, shells: Sequence[int], dealias: float = 2.0 / 3.0,
                tail: float = SPECTRAL_TAIL) -> List[int]:
    """Shells whose Gaussian (sigma = 2^k / 2) decays below `tail` both at the box edge and at the cutoff"""
    cutoff = dealias * spec.k_max
    kept = []
    for k in shells:
        sigma = 2.0 ** k / 2
        physical_tail = np.exp(-(spec.L / 2) ** 2 * sigma ** 2 / 2)
        spectral_tail = np.exp(-cutoff ** 2 / (2 * sigma ** 2))
        if physical_tail <= tail and spectral_tail <= tail:
            kept.append(k)
    dropped = sorted(set(shells) - set(kept))
    if dropped:
        logger.info(f"ℹ️ Initial-data shells {dropped} are not resolved on n={spec.n}, L={spec.L}; dropped")
    return kept


def initial_data(cfg: SolverConfig, clip: bool = True) -> ScalarPair:
    """(A, C) with hat = |xi_h|^2 sum_k (a_k + i b_k Lambda) exp(-|xi|^2 / (2 sigma_k^2)), normalized to sup|u| = eps"""
    spec = cfg.grid
    shells = clip_shells(spec, cfg.shells, cfg.dealias) if clip else list(cfg.shells)
    if not shells:
        raise ConfigurationError(f"no initial-data shell in {cfg.shells} is resolved by the grid")
    rng = np.random.default_rng(cfg.seed)
    coefficients = rng.standard_normal((2, len(shells), 2))

    def spectrum(which: int):
        def fhat(k1, k2, k3):
            kh2 = k1 ** 2 + k2 ** 2
            k2_total = kh2 + k3 ** 2
            kmod = np.sqrt(k2_total)
            lam = np.where(kmod > 0, k3 / np.where(kmod > 0, kmod, 1.0), 0.0)
            total = 0.0
            for (a, b), k in zip(coefficients[which], shells):
                sigma = 2.0 ** k / 2
                total = total + (a + 1j * b * lam) * np.exp(-k2_total / (2 * sigma ** 2))
            return kh2 * total
        return fhat

    mask = dealias_mask(spec, cfg.dealias)
    pair = ScalarPair(field_from_spectrum(spectrum(0), spec).apply(mask),
                      field_from_spectrum(spectrum(1), spec).apply(mask))
    peak = float(np.max(np.abs(reconstruct(pair).physical())))
    if cfg.epsilon == 0 or peak == 0:
        return pair * 0.0
    return pair * (cfg.epsilon / peak)


# --- solver ---------------------------------------------------------------------------------------

class EulerCoriolisSolver:
    """RK4 on the profiles of (U+, U-) with exact linear rotation"""

    def __init__(self, cfg: SolverConfig, out_dir: Optional[Path] = None):
        self.cfg = cfg
        self.spec = cfg.grid
        self.mask = dealias_mask(self.spec, cfg.dealias)
        self.lam = wavenumbers(self.spec).lam
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.initial_hn: Optional[float] = None
        self.increment_integral = 0.0
        self._last_increment_sample: Optional[Tuple[float, float]] = None

    # right-hand side in profile variables
    def profile_rhs(self, t: float, profiles: DispersiveUnknowns) -> DispersiveUnknowns:
        if not self.cfg.nonlinear:
            zero = SpectralField.zeros(self.spec)
            return DispersiveUnknowns(zero, zero, t=t)
        pair = from_dispersive(from_profiles(profiles, t))
        n = nonlinearity(pair, self.mask)
        phase = np.exp(-1j * t * self.lam)
        return DispersiveUnknowns((n.A + n.C).apply(phase), (n.A - n.C).apply(np.conj(phase)), t=t)

    def check_cfl(self, state: SimulationState, dt: float) -> Tuple[float, float]:
        u = state.velocity()
        velocity = u.physical()
        linf_u = float(np.max(np.sqrt(np.sum(velocity ** 2, axis=0))))
        linf_grad = max(float(np.max(np.abs(inverse_transform(spectral_derivative(c, j)))))
                        for c in u for j in range(3))
        if not np.isfinite(linf_u) or not np.isfinite(linf_grad):
            raise NumericalAbort(f"non-finite velocity at t={state.t:.4f}", self.dump(state, "abort"))
        if linf_u > 0 and dt > CFL_NUMBER * self.spec.dx / linf_u:
            raise CFLViolation(
                f"dt={dt} exceeds {CFL_NUMBER} dx / max|u| = {CFL_NUMBER * self.spec.dx / linf_u:.4g} at t={state.t:.4f}"
            )
        if linf_grad * dt > 1:
            raise NumericalAbort(f"blow-up indicator |grad u| dt = {linf_grad * dt:.3g} > 1 at t={state.t:.4f}",
                                 self.dump(state, "abort"))
        return linf_u, linf_grad

    def step(self, state: SimulationState, dt: Optional[float] = None) -> SimulationState:
        dt = self.cfg.dt if dt is None else dt
        if self.cfg.nonlinear:
            self.check_cfl(state, dt)
        t = state.t
        U = (state.profiles.Uplus.coeffs, state.profiles.Uminus.coeffs)
        U0 = U
        U1 = [U[0].copy(), U[1].copy()]
        for rk in range(4):
            stage = DispersiveUnknowns(SpectralField(self.spec, np.array(U[0]), True),
                                       SpectralField(self.spec, np.array(U[1]), True), t=t + RK_C[rk] * dt)
            dU = self.profile_rhs(t + RK_C[rk] * dt, stage)
            if rk < 3:
                U = (U0[0] + RK_B[rk] * dt * dU.Uplus.coeffs, U0[1] + RK_B[rk] * dt * dU.Uminus.coeffs)
            U1[0] += RK_A[rk] * dt * dU.Uplus.coeffs
            U1[1] += RK_A[rk] * dt * dU.Uminus.coeffs
        if not (np.all(np.isfinite(U1[0])) and np.all(np.isfinite(U1[1]))):
            raise NumericalAbort(f"NaN or overflow in step {state.step + 1}", self.dump(state, "abort"))
        new_step = state.step + 1
        new_t = state.t + dt
        profiles = DispersiveUnknowns(SpectralField(self.spec, U1[0], True), SpectralField(self.spec, U1[1], True),
                                      t=new_t)
        return SimulationState(step=new_step, t=new_t, profiles=profiles, history=state.history)

    def initial_state(self, pair: Optional[ScalarPair] = None) -> SimulationState:
        pair = initial_data(self.cfg) if pair is None else pair
        return SimulationState(step=0, t=0.0, profiles=to_profiles(to_dispersive(pair), 0.0))

    # diagnostics
    def diagnostics(self, state: SimulationState) -> Dict[str, float]:
        cfg = self.cfg
        pair = state.pair()
        u = reconstruct(pair)
        velocity = u.physical()
        linf_u = float(np.max(np.sqrt(np.sum(velocity ** 2, axis=0))))
        linf_grad = max(float(np.max(np.abs(inverse_transform(spectral_derivative(c, j))))) for c in u for j in range(3))
        hn = float(np.sqrt(sum(sobolev_norm(c, cfg.sobolev_n) ** 2 for c in u)))
        alpha = (1 + state.t) * (linf_u + linf_grad)
        if self.initial_hn is None:
            self.initial_hn = hn
        sample = alpha * hn ** 2 / (1 + state.t)
        if self._last_increment_sample is not None:
            t_prev, s_prev = self._last_increment_sample
            self.increment_integral += 0.5 * (state.t - t_prev) * (sample + s_prev)
        self._last_increment_sample = (state.t, sample)
        axisymmetry = max(check_axisymmetry(pair.A).residual, check_axisymmetry(pair.C).residual)
        row = {
            "t": state.t,
            "step": state.step,
            "linf_u": linf_u,
            "linf_grad": linf_grad,
            "l2": u.l2_norm(),
            f"h{cfg.sobolev_n}": hn,
            "alpha": alpha,
            "energy_increment": hn ** 2 - self.initial_hn ** 2,
            "increment_bound": self.increment_integral,
            "axisymmetry": axisymmetry,
            "divergence": divergence_residual(u),
        }
        if cfg.nonlinear and (cfg.dt_profile_shells or cfg.dt_profile_powers):
            derivative = self.profile_rhs(state.t, state.profiles)
            for k in cfg.dt_profile_shells:
                for b in cfg.dt_profile_powers:
                    row[f"dt_profile_k{k}_b{b}"] = _profile_derivative_norm(derivative, k, b)
        if cfg.norm_diagnostics:
            profile = state.profiles.Uplus
            row["b_norm"] = b_norm(profile)
            row["x_norm"] = x_norm(profile, cfg.beta)
            row["d_norm"] = d_norm(profile, cfg.beta)
        return row

    # checkpoints
    def dump(self, state: SimulationState, label: str) -> Optional[Path]:
        if self.out_dir is None:
            return None
        base = self.out_dir / "checkpoints"
        extra = {"t": state.t, "step": state.step}
        dump_field(state.profiles.Uplus, base / f"{label}_{state.step:06d}_plus.bin", "profile_plus", extra)
        dump_field(state.profiles.Uminus, base / f"{label}_{state.step:06d}_minus.bin", "profile_minus", extra)
        return base / f"{label}_{state.step:06d}_plus.bin"

    def run(self, state: Optional[SimulationState] = None) -> RunResult:
        cfg = self.cfg
        state = self.initial_state() if state is None else state
        n_steps = int(round(cfg.T / cfg.dt))
        snapshot_times = dyadic_times(cfg.T)
        checkpoint_stride = int(round(cfg.checkpoint_every / cfg.dt)) if cfg.checkpoint_every > 0 else 0
        snapshots: Dict[float, DispersiveUnknowns] = {}
        checkpoints: List[Path] = []
        logger.info(f"🚀 Running {n_steps - state.step} steps of dt={cfg.dt} from t={state.t:.3f} "
                    f"(n={self.spec.n}, L={self.spec.L}, eps={cfg.epsilon})")
        self._record(state, snapshot_times, snapshots)
        while state.step < n_steps:
            state = self.step(state)
            self._record(state, snapshot_times, snapshots)
            if checkpoint_stride and state.step % checkpoint_stride == 0:
                checkpoints.append(self.dump(state, "ckpt"))
        history = pd.DataFrame(state.history)
        logger.info(f"✅ Run finished at t={state.t:.3f}")
        return RunResult(config=cfg, history=history, snapshots=snapshots, final=state,
                         checkpoints=[p for p in checkpoints if p is not None])

    def _record(self, state: SimulationState, snapshot_times: Sequence[float],
                snapshots: Dict[float, DispersiveUnknowns]):
        at_snapshot = [t for t in snapshot_times if abs(state.t - t) < 0.5 * self.cfg.dt]
        for t in at_snapshot:
            snapshots[t] = state.profiles
        if state.step % self.cfg.cadence == 0 or at_snapshot:
            state.history.append(self.diagnostics(state))


def _profile_derivative_norm(derivative: DispersiveUnknowns, k: int, b: int) -> float:
    total = 0.0
    for g in (derivative.Uplus, derivative.Uminus):
        g = project_k(g, k)
        for _ in range(b):
            g = apply_scaling(g)
        total += g.l2_norm() ** 2
    return float(np.sqrt(total))


def dyadic_times(T: float) -> List[float]:
    times, t = [], 1.0
    while t <= T + 1e-12:
        times.append(t)
        t *= 2
    return times


def load_checkpoint(path_plus: Path) -> SimulationState:
    """Rebuild a state from the `_plus` dump of a checkpoint pair"""
    path_plus = Path(path_plus)
    plus, meta = load_field(path_plus)
    minus, _ = load_field(path_plus.with_name(path_plus.name.replace("_plus", "_minus")))
    t = float(meta["t"])
    return SimulationState(step=int(meta["step"]), t=t, profiles=DispersiveUnknowns(plus, minus, t=t))


def step(state: SimulationState, dt: float, cfg: SolverConfig) -> SimulationState:
    return EulerCoriolisSolver(cfg).step(state, dt)


def run(cfg: SolverConfig, out_dir: Optional[Path] = None) -> RunResult:
    return EulerCoriolisSolver(cfg, out_dir).run()


# --- velocity reference integrator ----------------------------------------------------------------

def run_velocity_reference(u0: VectorFieldSpectral, dt: float, T: float,
                           mask: Optional[np.ndarray] = None) -> VectorFieldSpectral:
    """RK4 on v = e^{-tL} u for the Leray-projected velocity equation"""
    spec = u0.spec
    mask = dealias_mask(spec) if mask is None else mask

    def rhs(t: float, v: VectorFieldSpectral) -> VectorFieldSpectral:
        u = linear_velocity_propagator(v, t)
        return linear_velocity_propagator(u_space_tendency(u, mask, linear=False), -t)

    v = u0
    n_steps = int(round(T / dt))
    for n in range(n_steps):
        t = n * dt
        v0, v1, stage = v, v, v
        for rk in range(4):
            dv = rhs(t + RK_C[rk] * dt, stage)
            if rk < 3:
                stage = v0 + dv * (RK_B[rk] * dt)
            v1 = v1 + dv * (RK_A[rk] * dt)
        v = v1
    return linear_velocity_propagator(v, n_steps * dt)


def formulation_cross_check(cfg: SolverConfig, T: float, pair: Optional[ScalarPair] = None) -> float:
    """Relative L2 distance at time T between the (A, C) solver and the velocity reference integrator"""
    solver = EulerCoriolisSolver(cfg)
    pair = initial_data(cfg) if pair is None else pair
    state = solver.initial_state(pair)
    n_steps = int(round(T / cfg.dt))
    while state.step < n_steps:
        state = solver.step(state)
    reference = run_velocity_reference(reconstruct(pair), cfg.dt, n_steps * cfg.dt, solver.mask)
    scale = reference.l2_norm()
    deviation = (state.velocity() - reference).l2_norm()
    logger.info(f"📊 Formulation cross-check over T={T}: deviation {deviation:.3e} (scale {scale:.3e})")
    return deviation / scale if scale > 0 else deviation


# --- post-run diagnostics -------------------------------------------------------------------------

def scattering_diagnostic(snapshots: Dict[float, DispersiveUnknowns], with_norms: bool = True) -> pd.DataFrame:
    """Increments of the profiles between dyadic times (t, 2t) in L2, B and X"""
    rows = []
    for t1 in sorted(snapshots):
        t2 = 2 * t1
        if t2 not in snapshots:
            continue
        d_plus = snapshots[t2].Uplus - snapshots[t1].Uplus
        d_minus = snapshots[t2].Uminus - snapshots[t1].Uminus
        row = {"t1": t1, "t2": t2, "l2": float(np.hypot(d_plus.l2_norm(), d_minus.l2_norm()))}
        if with_norms:
            row["b"] = max(b_norm(d_plus), b_norm(d_minus))
            row["x"] = max(x_norm(d_plus), x_norm(d_minus))
        rows.append(row)
    frame = pd.DataFrame(rows)
    if len(frame) >= 2:
        increments = frame["l2"].to_numpy()
        frame.attrs["monotone"] = bool(np.all(np.diff(increments) <= 0))
        frame.attrs["last_over_first"] = float(increments[-1] / increments[0]) if increments[0] > 0 else 0.0
        if not frame.attrs["monotone"]:
            logger.warning("⚠️ Profile increments stopped decreasing: the run may be near its stability edge")
    return frame


def dt_profile_decay(history: pd.DataFrame, k: int, b: int, bracket: Optional[Sequence[float]] = None) -> FitRecord:
    column = f"dt_profile_k{k}_b{b}"
    if column not in history:
        raise ConfigurationError(f"history has no column {column}; enable shell {k} and power {b} in the run")
    frame = history[history["t"] > 0]
    return fit_exponent(f"|d_t profile| k={k} b={b}", frame["t"].to_numpy(), frame[column].to_numpy(), bracket)


def linf_decay(history: pd.DataFrame, bracket: Optional[Sequence[float]] = None) -> FitRecord:
    frame = history[history["t"] > 0]
    return fit_exponent("|u|_Linf", frame["t"].to_numpy(), frame["linf_u"].to_numpy(), bracket)


def energy_drift(history: pd.DataFrame) -> float:
    l2 = history["l2"].to_numpy()
    if l2.size == 0 or l2[0] == 0:
        return 0.0
    return float(np.max(np.abs(l2 ** 2 - l2[0] ** 2)) / l2[0] ** 2)
