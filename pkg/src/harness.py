"""
Experiment recipes behind the command line.

Every command returns a list of AssertionOutcome records, writes its tables under the output
directory and leaves a manifest.json that is enough to reproduce the run.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import ValidationError

from src.config import Config, config
from src.exceptions import (
    AdmissibilityError,
    ConfigurationError,
    DomainError,
    FieldIOError,
    NumericalAbort,
    QuadratureBudgetError,
    ResolutionError,
)
from src.fields import field_from_spectrum, make_grid, set_fft_workers
from src.localization import (
    BUMP,
    angular_weights,
    commutator_ratio,
    horizontal_cutoff,
    kernel_corruption_hook,
    kernel_l1_mass,
    k_range,
    legendre_operators,
    radial_cutoff,
    required_nodes,
    bernstein_ratio,
    sample_spherical,
    spherical_grid,
    square_function_ratio,
    vertical_cutoff,
    zonal_kernel,
)
from src.models import AssertionOutcome, ExperimentConfig, GridSpec, ShellIndex, SolverConfig
from src.norms import d_norm, fourier_linf_check, norm_report, write_norm_report
from src.propagator import (
    decay_profile,
    decay_table,
    oracle_cross_check,
    origin_decay,
    origin_sharpness_oracle,
    split_I_II,
)
from src.solver import (
    EulerCoriolisSolver,
    dt_profile_decay,
    energy_drift,
    formulation_cross_check,
    linf_decay,
    load_checkpoint,
    scattering_diagnostic,
)
from src.utils.field_io import load_field
from src.utils.helpers import WarningRecorder, content_hash, file_hash, package_versions, write_json
from src.vector_fields import (
    identity_suite,
    multiplier_bound_sample,
    phase_vs_sigma_sample,
    sample_localized_pairs,
)

EXIT_PASS = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_ABORT = 3

# Accepted slope intervals
LINEAR_DECAY_BRACKET = (-1.15, -0.90)
NONDEGENERATE_DECAY_BRACKET = (-1.6, -1.35)
NONLINEAR_DECAY_BRACKET = (-1.2, -0.85)
DT_PROFILE_BRACKET = (-10.0, -1.2)
BERNSTEIN_BRACKET = (0.25 * BUMP.inner ** 2, 4.0 * BUMP.outer ** 2)
II_BAND = 2.0
SCATTERING_RATIO = 0.5
HN_GROWTH_EXPONENT = 0.1
C_STAR_SPREAD = 0.1


@dataclass
class CommandResult:
    outcomes: List[AssertionOutcome] = field(default_factory=list)
    files: Dict[str, Path] = field(default_factory=dict)

    def check(self, name: str, reference: str, measured: float, budget: float, passed: bool,
              notice: Optional[str] = None) -> AssertionOutcome:
        outcome = AssertionOutcome(name=name, reference=reference, measured=float(measured), budget=float(budget),
                                   passed=bool(passed), notice=notice)
        self.outcomes.append(outcome)
        (logger.info if outcome.passed else logger.error)(("✅ " if outcome.passed else "❌ ") + outcome.describe())
        return outcome

    def at_most(self, name: str, reference: str, measured: float, budget: float) -> AssertionOutcome:
        return self.check(name, reference, measured, budget, measured <= budget)

    def write_csv(self, key: str, frame: pd.DataFrame, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
        self.files[key] = path

    @property
    def passed(self) -> bool:
        return all(outcome.passed for outcome in self.outcomes)


def _ints(text: str) -> List[int]:
    return [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _floats(text: str) -> List[float]:
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _grid() -> GridSpec:
    return make_grid(config.GRID_N, config.BOX_L)


def _gaussian(sigma: float = 1.0, shape: Callable = None) -> Callable:
    """f_hat(k1, k2, k3) = shape(Lambda) exp(-|xi|^2 / (2 sigma^2))"""
    def fhat(k1, k2, k3):
        k2_total = k1 ** 2 + k2 ** 2 + k3 ** 2
        envelope = np.exp(-k2_total / (2 * sigma ** 2))
        if shape is None:
            return envelope
        kmod = np.sqrt(k2_total)
        lam = np.where(kmod > 0, k3 / np.where(kmod > 0, kmod, 1.0), 0.0)
        return shape(lam) * envelope
    return fhat


# --- lindecay --------------------------------------------------------------------------------

def cmd_lindecay(out_dir: Path, seed: int) -> CommandResult:
    result = CommandResult()
    times = _floats(config.LIN_TIMES)
    if not times:
        raise ConfigurationError("LIN_TIMES is empty")
    spec = _grid()
    times = [t for t in times if t <= spec.t_wrap + 1e-12]

    # radial Gaussian: sharpness value at the origin
    radial = field_from_spectrum(_gaussian(), spec)
    origin = origin_decay(radial, _floats(config.ORIGIN_TIMES))
    result.write_csv("origin", origin, out_dir / "origin_decay.csv")
    result.at_most("origin sharpness (grid)", "e^{it Lambda} f(0) = (sin t / t) f(0) for radial f",
                   float(origin["relative_error"].max()), config.TOL_ORACLE)
    sharpness = origin_sharpness_oracle(_floats(config.SHARPNESS_TIMES))
    result.write_csv("sharpness", sharpness, out_dir / "origin_sharpness.csv")
    result.at_most("origin sharpness (quadrature)", "e^{it Lambda} f(0) = (sin t / t) f(0) for radial f",
                   float(sharpness["relative_error"].max()), config.TOL_SHARPNESS)

    # generic axisymmetric data on one radial shell
    rng = np.random.default_rng(seed)
    a, b, c = rng.standard_normal(3)
    generic = field_from_spectrum(_gaussian(shape=lambda lam: a + 1j * b * lam + c * lam ** 2), spec)
    k = config.LIN_SHELL_K
    fit = decay_profile(generic, times, ShellIndex(k=k), LINEAR_DECAY_BRACKET)
    result.check("linear decay, radial shell", "|P_k e^{it Lambda} f|_Linf ~ t^-1",
                 fit.slope if fit.slope is not None else np.nan, LINEAR_DECAY_BRACKET[1], fit.passed,
                 notice=f"bracket {LINEAR_DECAY_BRACKET}")

    # data away from the poles and the equator: faster decay, angular split
    nondegenerate = field_from_spectrum(_gaussian(shape=lambda lam: lam ** 2 * (1 - lam ** 2)), spec)
    shell = ShellIndex(k=k, p=0, q=0)
    fit = decay_profile(nondegenerate, times, shell, NONDEGENERATE_DECAY_BRACKET)
    result.check("linear decay, non-degenerate shell", "|P_kpq e^{it Lambda} f|_Linf ~ 2^(-p-q/2) t^-3/2",
                 fit.slope if fit.slope is not None else np.nan, NONDEGENERATE_DECAY_BRACKET[1], fit.passed,
                 notice=f"bracket {NONDEGENERATE_DECAY_BRACKET}")

    norm_value = d_norm(nondegenerate)
    table = decay_table(nondegenerate, times, [ShellIndex(k=k), shell], norm_value)
    result.write_csv("decay", table, out_dir / "decay_table.csv")

    band_times = [t for t in (8.0, 16.0) if t <= spec.t_wrap + 1e-12]
    if len(band_times) == 2:
        scaled = []
        for t in band_times:
            record = split_I_II(nondegenerate, k, 0, 0, t, norm_value).record
            scaled.append(record.ii_l2 * t ** (1 + config.BETA_PRIME))
        if scaled[0] == 0:
            result.check("II-piece band", "t^(1+beta') |II|_L2 stays in a fixed band", 0.0, II_BAND, True,
                         notice=f"II piece vanishes at t={band_times[0]}")
        else:
            result.at_most("II-piece band", "t^(1+beta') |II|_L2 stays in a fixed band", scaled[1] / scaled[0],
                           II_BAND)
    return result


# --- projcheck -------------------------------------------------------------------------------

def _orthogonality_residual(s, ell: int, other: int, corrupt: bool, seed: int) -> float:
    first = zonal_kernel(ell, s.n_lam)
    if corrupt:
        first = kernel_corruption_hook(first, seed=seed)
    second = zonal_kernel(other, s.n_lam)
    values = s.values @ first.T @ second.T
    norm = s.l2_norm()
    return float(s.with_values(values).l2_norm() / norm) if norm > 0 else 0.0


def cmd_projcheck(out_dir: Path, seed: int) -> CommandResult:
    result = CommandResult()
    spec = _grid()
    ell_max = config.PROJ_ELL_MAX
    count = required_nodes(ell_max)
    if count > config.LAMBDA_NODES_MAX:
        raise ResolutionError(
            f"angular index {ell_max} needs {count} Lambda nodes, above the cap {config.LAMBDA_NODES_MAX}"
        )

    # radial and anisotropic partitions of unity
    rho = spec.k_min * np.linspace(1.0, spec.n / 2 * np.sqrt(3), 4096)
    ks = k_range(spec)
    radial = sum(radial_cutoff(k, rho) for k in ks)
    result.at_most("radial partition of unity", "sum_k P_k = 1 on resolved frequencies",
                   float(np.max(np.abs(radial - 1))), config.TOL_PARTITION)
    floor = config.P_FLOOR
    lam = np.linspace(-1, 1, 4001)
    horizontal_support = np.sqrt(1 - lam ** 2) >= 2.0 ** floor
    vertical_support = np.abs(lam) >= 2.0 ** floor
    horizontal = sum(horizontal_cutoff(p, lam) for p in range(floor, 1))
    vertical = sum(vertical_cutoff(q, lam) for q in range(floor, 1))
    residual = max(float(np.max(np.abs(horizontal[horizontal_support] - 1))),
                   float(np.max(np.abs(vertical[vertical_support] - 1))))
    result.at_most("anisotropic partition of unity", "sum_p P_kp = P_k and sum_q P_kpq = P_kp", residual,
                   config.TOL_PARTITION)

    _, _, degrees = legendre_operators(count)
    angular = sum(angular_weights(ell, degrees) for ell in range(ell_max + 1))
    covered = degrees <= BUMP.inner * 2 ** ell_max
    result.at_most("angular partition of unity", "sum_l R_l = 1 on degrees resolved by the top band",
                   float(np.max(np.abs(angular[covered] - 1))), config.TOL_PARTITION)

    # spherical test field with content at every degree
    rng = np.random.default_rng(seed)
    s = spherical_grid(1.0, 2.0, points_per_shell=4, n_lam=count)
    coefficients = rng.standard_normal((s.rho.size, degrees.size)) / (1.0 + degrees[None, :])
    s = s.from_coefficients(coefficients)

    rows = []
    worst = 0.0
    for ell in range(ell_max + 1):
        for other in range(ell + 4, ell_max + 1):
            value = _orthogonality_residual(s, ell, other, config.PROJ_CORRUPT_KERNEL, seed)
            rows.append({"ell": ell, "other": other, "residual": value})
            worst = max(worst, value)
    result.write_csv("orthogonality", pd.DataFrame(rows), out_dir / "orthogonality.csv")
    result.at_most("angular almost orthogonality", "R_l R_l' = 0 whenever |l - l'| >= 4", worst,
                   config.TOL_ORTHOGONALITY)

    rows = []
    for ell in range(2, ell_max + 1):
        ratio = bernstein_ratio(s, ell)
        rows.append({"ell": ell, "bernstein_ratio": ratio, "l1_mass": kernel_l1_mass(ell)})
        result.check(f"Bernstein ratio l={ell}", "|Omega R_l f| ~ 2^l |R_l f|", ratio, BERNSTEIN_BRACKET[1],
                     BERNSTEIN_BRACKET[0] <= ratio <= BERNSTEIN_BRACKET[1], notice=f"bracket {BERNSTEIN_BRACKET}")
    bernstein = pd.DataFrame(rows)
    result.write_csv("bernstein", bernstein, out_dir / "bernstein.csv")
    result.at_most("kernel L1 mass", "zonal kernels of R_l have bounded L1 mass",
                   float(bernstein["l1_mass"].max()), config.C_LEMMA)

    ratio = square_function_ratio(s, ell_max)
    result.check("square function", "sum_l |R_l f|^2 ~ |f|^2", ratio, config.SQUARE_FUNCTION_HIGH,
                 config.SQUARE_FUNCTION_LOW <= ratio <= config.SQUARE_FUNCTION_HIGH)

    # commutators with the anisotropic projectors
    radial_field = sample_spherical(lambda r, l: np.exp(-r ** 2 / 2) * (1 + 0 * l), 0.25, 4.0, n_lam=count)
    rows = []
    for p in (-3, -2, -1, 0):
        for q in (-3, -2, -1, 0):
            index = ShellIndex(k=0, p=p, q=q)
            ratio = commutator_ratio(radial_field, index)
            bound = config.COMMUTATOR_CONSTANT * (2.0 ** -p + 2.0 ** -q)
            rows.append({"p": p, "q": q, "ratio": ratio, "bound": bound})
    commutators = pd.DataFrame(rows)
    result.write_csv("commutators", commutators, out_dir / "commutators.csv")
    result.at_most("commutator scaling", "[Omega_j3, P_kpq] ~ 2^-p + 2^-q",
                   float((commutators["ratio"] / commutators["bound"]).max()), 1.0)
    return result


# --- vfcheck ---------------------------------------------------------------------------------

def _vf_shells() -> List[ShellIndex]:
    ks, ps, qs = _ints(config.VF_SHELL_K), _ints(config.VF_SHELL_P), _ints(config.VF_SHELL_Q)
    if not len(ks) == len(ps) == len(qs) == 3:
        raise ConfigurationError("VF_SHELL_K, VF_SHELL_P and VF_SHELL_Q need three entries each")
    return [ShellIndex(k=k, p=p, q=q) for k, p, q in zip(ks, ps, qs)]


def seed_sweep(shells: Sequence[ShellIndex], count: int, seeds: Sequence[int], signs=(1, 1)) -> pd.DataFrame:
    rows = []
    for seed in seeds:
        stats = phase_vs_sigma_sample(shells, count, signs, seed=seed)
        rows.append({"seed": seed, "conditioned": stats.conditioned, "min_ratio": stats.min_ratio,
                     "min_pmax": stats.min_pmax, "inconclusive": stats.inconclusive})
    return pd.DataFrame(rows)


def cmd_vfcheck(out_dir: Path, seed: int) -> CommandResult:
    result = CommandResult()
    shells = _vf_shells()
    signs = tuple(_ints(config.VF_SIGNS))
    if len(signs) != 2 or any(s not in (1, -1) for s in signs):
        raise ConfigurationError("VF_SIGNS must hold two entries in {1, -1}")

    rng = np.random.default_rng(seed)
    try:
        pair = sample_localized_pairs(rng, shells, config.VF_SAMPLES)
    except DomainError as e:
        result.check("vector-field identities", "closed forms against finite differences", 0.0,
                     config.TOL_IDENTITY, True, notice=f"inconclusive: {e}")
        pair = None
    if pair is not None:
        suite = identity_suite(pair)
        rows = [stats.model_dump() for stats in suite.values()]
        result.write_csv("identities", pd.DataFrame(rows), out_dir / "identities.csv")
        for name, stats in suite.items():
            result.check(name, "closed form against finite differences", stats.max_residual, stats.budget,
                         stats.passed, notice=None if stats.passed else f"{stats.failures} samples above budget")
        bound = multiplier_bound_sample(shells, config.VF_SAMPLES, seed)
        result.at_most(bound.name, "|m| <= (8/5)^3 2^(k + p_max + q_max)", bound.max_residual, bound.budget)

    stats = phase_vs_sigma_sample(shells, config.PHASE_SAMPLES, signs, seed=seed)
    write_json(out_dir / "phase_sigma.json", stats.model_dump())
    result.files["phase_sigma"] = out_dir / "phase_sigma.json"
    if stats.inconclusive:
        result.check("phase versus sigma", "|sigma| >~ 2^q_max 2^(k_max + k_min) on small phases", 0.0,
                     stats.c_star, True, notice="inconclusive: the conditioned sample set is empty")
    else:
        result.check("phase versus sigma", "|sigma| >~ 2^q_max 2^(k_max + k_min) on small phases",
                     stats.min_ratio, stats.c_star, stats.passed,
                     notice=f"{stats.conditioned} conditioned samples, {stats.counterexamples} below c_star, "
                            f"min 2^p_max = {stats.min_pmax:.4g}")

    if config.VF_SEED_SWEEP > 0:
        sweep = seed_sweep(shells, max(config.PHASE_SAMPLES // 10, 1000),
                           [seed + j for j in range(config.VF_SEED_SWEEP)], signs)
        result.write_csv("seed_sweep", sweep, out_dir / "seed_sweep.csv")
        ratios = sweep["min_ratio"].dropna().to_numpy(dtype=float)
        if ratios.size:
            spread = float((ratios.max() - ratios.min()) / ratios.max())
            result.at_most("c_star stability", "empirical lower constant stable across seeds", spread, C_STAR_SPREAD)
    return result


# --- simulate --------------------------------------------------------------------------------

def solver_config(seed: int) -> SolverConfig:
    try:
        return SolverConfig(
            grid=_grid(), epsilon=config.EPSILON, dt=config.DT, T=config.T_FINAL, dealias=config.DEALIAS,
            beta=config.BETA, cadence=config.CADENCE, seed=seed, nonlinear=config.NONLINEAR,
            p_floor=config.P_FLOOR, sobolev_n=config.SOBOLEV_N, norm_diagnostics=config.NORM_DIAGNOSTICS,
            dt_profile_shells=_ints(config.DT_PROFILE_SHELLS), dt_profile_powers=_ints(config.DT_PROFILE_POWERS),
            checkpoint_every=config.CHECKPOINT_EVERY, shells=_ints(config.INITIAL_SHELLS),
        )
    except ValidationError as e:
        raise ConfigurationError(f"invalid solver settings: {e}") from e


def cmd_simulate(out_dir: Path, seed: int) -> CommandResult:
    result = CommandResult()
    cfg = solver_config(seed)
    solver = EulerCoriolisSolver(cfg, out_dir)
    state = load_checkpoint(Path(config.RESUME)) if config.RESUME else None
    run = solver.run(state)
    history = run.history
    result.write_csv("history", history, out_dir / "history.csv")
    scattering = scattering_diagnostic(run.snapshots, with_norms=cfg.norm_diagnostics)
    result.write_csv("scattering", scattering, out_dir / "scattering.csv")
    for j, path in enumerate(run.checkpoints):
        result.files[f"checkpoint_{j}"] = path

    if cfg.epsilon == 0:
        peak = float(history.drop(columns=["t", "step"]).abs().to_numpy().max()) if len(history) else 0.0
        result.check("zero data", "zero data stays zero", peak, 0.0, peak == 0.0)
        return result

    result.at_most("energy drift", "|u(t)|_L2 is conserved", energy_drift(history), config.TOL_ENERGY_DRIFT)
    result.at_most("axisymmetry", "the flow preserves axisymmetry", float(history["axisymmetry"].max()),
                   config.TOL_SIMULATION)
    result.at_most("divergence", "the flow stays divergence free", float(history["divergence"].max()),
                   config.TOL_SIMULATION)

    hn = history[f"h{cfg.sobolev_n}"].to_numpy()
    growth_budget = (1 + cfg.T) ** HN_GROWTH_EXPONENT
    result.at_most(f"H^{cfg.sobolev_n} growth", "slow growth of high norms", float(hn.max() / hn[0]), growth_budget)

    if not cfg.nonlinear:
        if len(scattering):
            result.check("profiles constant", "linear profiles do not move", float(scattering["l2"].max()), 0.0,
                         float(scattering["l2"].max()) == 0.0)
    else:
        if cfg.T >= 2 * config.FIT_T_MIN:
            fit = linf_decay(history, NONLINEAR_DECAY_BRACKET)
            result.check("nonlinear decay", "|u(t)|_Linf ~ eps t^-1", fit.slope if fit.slope is not None else np.nan,
                         NONLINEAR_DECAY_BRACKET[1], fit.passed, notice=f"bracket {NONLINEAR_DECAY_BRACKET}")
            for k in cfg.dt_profile_shells:
                for b in cfg.dt_profile_powers:
                    fit = dt_profile_decay(history, k, b, DT_PROFILE_BRACKET)
                    result.check(f"d_t profile decay k={k} b={b}", "|d_t P_k S^b profile|_L2 ~ t^(-3/2 + gamma)",
                                 fit.slope if fit.slope is not None else np.nan, DT_PROFILE_BRACKET[1], fit.passed,
                                 notice="underflow" if fit.underflow else None)
        if len(scattering) >= 2:
            ratio = scattering.attrs.get("last_over_first", 0.0)
            result.at_most("scattering", "profile increments over (t, 2t) shrink", ratio, SCATTERING_RATIO)

    if config.FORMULATION_T > 0:
        deviation = formulation_cross_check(cfg, config.FORMULATION_T)
        result.at_most("formulation cross-check", "(A, C) and velocity integrators agree", deviation,
                       config.TOL_SIMULATION)
    return result


# --- norms -----------------------------------------------------------------------------------

def cmd_norms(out_dir: Path, seed: int, path: Optional[str] = None) -> CommandResult:
    result = CommandResult()
    path = path or config.NORM_FIELD
    if not path:
        raise ConfigurationError("norms needs a field dump (NORM_FIELD or a path argument)")
    f, meta = load_field(path)
    logger.info(f"📊 Norms of {meta.get('kind', 'field')} from {path}")
    report = norm_report(f, config.BETA)
    result.files.update(write_norm_report(report, out_dir, Path(path).stem))
    ratio = fourier_linf_check(f, config.BETA, d_value=report.d_norm)
    result.at_most("Fourier Linf control", "|P_kpq f_hat|_Linf <~ 2^(-3k/2) |f|_D", ratio, config.C_LEMMA)
    return result


# --- oracle-xcheck ---------------------------------------------------------------------------

def cmd_oracle_xcheck(out_dir: Path, seed: int) -> CommandResult:
    result = CommandResult()
    spec = _grid()
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(2)

    def shape(lam):
        return a + b * lam ** 2

    f = field_from_spectrum(_gaussian(shape=shape), spec)
    rho_max = min(8.0, (spec.n / 2 - 1) * spec.k_min)
    frame = oracle_cross_check(f, lambda rho, lam: shape(lam) * np.exp(-rho ** 2 / 2), config.ORACLE_T,
                               config.ORACLE_POINTS, rho_max, seed=seed)
    frame["grid"] = frame["grid"].astype(str)
    frame["oracle"] = frame["oracle"].astype(str)
    result.write_csv("oracle", frame, out_dir / "oracle_xcheck.csv")
    result.at_most("oracle equivalence", "grid semigroup equals the Bessel quadrature", float(frame["deviation"].max()),
                   config.TOL_ORACLE)
    return result


COMMANDS: Dict[str, Callable[..., CommandResult]] = {
    "lindecay": cmd_lindecay,
    "projcheck": cmd_projcheck,
    "vfcheck": cmd_vfcheck,
    "simulate": cmd_simulate,
    "norms": cmd_norms,
    "oracle-xcheck": cmd_oracle_xcheck,
}


def apply_settings(settings: Config):
    """Copy a loaded run file onto the process-wide configuration"""
    for key in Config.keys():
        setattr(config, key, getattr(settings, key))


def execute(command: str, settings: Config, out_dir: Path, seed: int, threads: int = 1, strict: bool = False,
            path: Optional[str] = None) -> int:
    """Run one command and map its result to an exit code"""
    if command not in COMMANDS:
        raise ConfigurationError(f"unknown command {command!r}")
    apply_settings(settings)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    set_fft_workers(threads)
    experiment = ExperimentConfig(command=command, seed=seed, out_dir=str(out_dir), threads=threads, strict=strict,
                                  settings=settings.as_dict(), params={"path": path} if path else {})
    recorder = WarningRecorder().install() if strict else None
    result: Optional[CommandResult] = None
    code = EXIT_PASS
    error = None
    try:
        kwargs = {"path": path} if command == "norms" else {}
        result = COMMANDS[command](out_dir, seed, **kwargs)
        if recorder is not None and recorder.messages:
            result.check("strict mode", "warnings are fatal under --strict", len(recorder.messages), 0, False,
                         notice="; ".join(recorder.messages[:5]))
        code = EXIT_PASS if result.passed else EXIT_ASSERTION
    except NumericalAbort as e:
        logger.error(f"❌ Numerical abort: {e}")
        code, error = EXIT_ABORT, str(e)
    except (ConfigurationError, FieldIOError, ResolutionError, AdmissibilityError, QuadratureBudgetError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        code, error = EXIT_CONFIG, str(e)
    finally:
        if recorder is not None:
            recorder.remove()

    outcomes = result.outcomes if result is not None else []
    files = result.files if result is not None else {}
    manifest = {
        "experiment": experiment.model_dump(),
        "versions": package_versions(),
        "input_hash": content_hash(experiment.model_dump(exclude={"out_dir"})),
        "outputs": {key: file_hash(p) for key, p in sorted(files.items()) if Path(p).exists()},
        "outcomes": [o.model_dump() for o in outcomes],
        "exit_code": code,
        "error": error,
    }
    write_json(out_dir / "manifest.json", manifest)
    failed = [o for o in outcomes if not o.passed]
    if code == EXIT_PASS:
        logger.info(f"✅ {command}: {len(outcomes)} checks passed")
    elif code == EXIT_ASSERTION:
        logger.error(f"❌ {command}: {len(failed)} of {len(outcomes)} checks failed")
    return code
