"""
Configuration settings for the Euler-Coriolis toolkit
"""

import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import dotenv_values, load_dotenv

from src.exceptions import ConfigurationError

# Load environment variables
load_dotenv()


class Config:
    """Toolkit configuration"""

    # Grid Configuration
    GRID_N = int(os.getenv("GRID_N", 128))
    BOX_L = float(os.getenv("BOX_L", 64.0))
    DEALIAS = float(os.getenv("DEALIAS", 2.0 / 3.0))
    P_FLOOR = int(os.getenv("P_FLOOR", -12))
    THREADS = int(os.getenv("THREADS", 1))

    # Norm Configuration
    BETA = float(os.getenv("BETA", 0.01))
    BETA_PRIME = float(os.getenv("BETA_PRIME", 0.005))
    KAPPA = float(os.getenv("KAPPA", (0.01 - 0.005) / 40.0))
    ELL_MAX = int(os.getenv("ELL_MAX", 12))
    SOBOLEV_N = int(os.getenv("SOBOLEV_N", 4))
    SOBOLEV_CAP = 8
    MIN_SHELL_POINTS = int(os.getenv("MIN_SHELL_POINTS", 8))

    # Angular Configuration
    LAMBDA_NODES = int(os.getenv("LAMBDA_NODES", 64))
    LAMBDA_NODES_MAX = int(os.getenv("LAMBDA_NODES_MAX", 4096))
    DEGREE_CAP = int(os.getenv("DEGREE_CAP", 4096))
    RHO_POINTS_PER_SHELL = int(os.getenv("RHO_POINTS_PER_SHELL", 16))

    # Frozen constants
    C_STAR = float(os.getenv("C_STAR", 2e-3))
    C_LEMMA = float(os.getenv("C_LEMMA", 256.0))
    COMMUTATOR_CONSTANT = float(os.getenv("COMMUTATOR_CONSTANT", 32.0))
    SQUARE_FUNCTION_LOW = 0.25
    SQUARE_FUNCTION_HIGH = 4.0

    # Tolerances
    TOL_ROUNDTRIP = float(os.getenv("TOL_ROUNDTRIP", 1e-12))
    TOL_PARSEVAL = float(os.getenv("TOL_PARSEVAL", 1e-10))
    TOL_AXISYMMETRY = float(os.getenv("TOL_AXISYMMETRY", 1e-10))
    TOL_ADMISSIBLE = float(os.getenv("TOL_ADMISSIBLE", 1e-10))
    TOL_IDENTITY = float(os.getenv("TOL_IDENTITY", 1e-5))
    TOL_PARTITION = float(os.getenv("TOL_PARTITION", 1e-10))
    TOL_ORTHOGONALITY = float(os.getenv("TOL_ORTHOGONALITY", 1e-12))
    TOL_ORACLE = float(os.getenv("TOL_ORACLE", 1e-3))
    TOL_SHARPNESS = float(os.getenv("TOL_SHARPNESS", 1e-6))
    TOL_ENERGY_DRIFT = float(os.getenv("TOL_ENERGY_DRIFT", 1e-6))
    UNDERFLOW = float(os.getenv("UNDERFLOW", 1e-13))

    # Quadrature Configuration
    PANEL_BUDGET = int(os.getenv("PANEL_BUDGET", 4096))
    POINTS_PER_PANEL = int(os.getenv("POINTS_PER_PANEL", 8))

    # Fit Configuration
    FIT_T_MIN = float(os.getenv("FIT_T_MIN", 4.0))

    TOL_SIMULATION = float(os.getenv("TOL_SIMULATION", 1e-8))

    # Run Configuration
    SEED = int(os.getenv("SEED", 0))
    STRICT = os.getenv("STRICT", "false").lower() in ("1", "true", "yes")

    # lindecay / oracle-xcheck
    LIN_TIMES = os.getenv("LIN_TIMES", "4,6,8,11,16")
    ORIGIN_TIMES = os.getenv("ORIGIN_TIMES", "1,2,4,8")
    SHARPNESS_TIMES = os.getenv("SHARPNESS_TIMES", "1,2,4,5,8")
    LIN_SHELL_K = int(os.getenv("LIN_SHELL_K", 0))
    ORACLE_T = float(os.getenv("ORACLE_T", 10.0))
    ORACLE_POINTS = int(os.getenv("ORACLE_POINTS", 20))

    # projcheck
    PROJ_ELL_MAX = int(os.getenv("PROJ_ELL_MAX", 8))
    PROJ_CORRUPT_KERNEL = os.getenv("PROJ_CORRUPT_KERNEL", "false").lower() in ("1", "true", "yes")

    # vfcheck
    VF_SAMPLES = int(os.getenv("VF_SAMPLES", 10_000))
    PHASE_SAMPLES = int(os.getenv("PHASE_SAMPLES", 1_000_000))
    VF_SHELL_K = os.getenv("VF_SHELL_K", "0,0,0")
    VF_SHELL_P = os.getenv("VF_SHELL_P", "0,0,0")
    VF_SHELL_Q = os.getenv("VF_SHELL_Q", "0,0,0")
    VF_SIGNS = os.getenv("VF_SIGNS", "1,1")
    VF_SEED_SWEEP = int(os.getenv("VF_SEED_SWEEP", 0))

    # simulate
    EPSILON = float(os.getenv("EPSILON", 1e-2))
    DT = float(os.getenv("DT", 0.1))
    T_FINAL = float(os.getenv("T_FINAL", 16.0))
    CADENCE = int(os.getenv("CADENCE", 5))
    NONLINEAR = os.getenv("NONLINEAR", "true").lower() in ("1", "true", "yes")
    NORM_DIAGNOSTICS = os.getenv("NORM_DIAGNOSTICS", "false").lower() in ("1", "true", "yes")
    CHECKPOINT_EVERY = float(os.getenv("CHECKPOINT_EVERY", 0.0))
    RESUME = os.getenv("RESUME", "")
    INITIAL_SHELLS = os.getenv("INITIAL_SHELLS", "-2,-1,0,1,2")
    DT_PROFILE_SHELLS = os.getenv("DT_PROFILE_SHELLS", "0")
    DT_PROFILE_POWERS = os.getenv("DT_PROFILE_POWERS", "0")
    FORMULATION_T = float(os.getenv("FORMULATION_T", 0.0))

    # norms
    NORM_FIELD = os.getenv("NORM_FIELD", "")

    # Logging Configuration
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")

    # File Paths
    BASE_DIR = Path(__file__).parent.parent
    OUTPUT_DIR = Path(os.getenv("OUTPUT_DIR", str(BASE_DIR / "runs")))
    LOGS_DIR = BASE_DIR / "logs"

    def __init__(self, overrides: Optional[Mapping[str, Any]] = None):
        for key, value in (overrides or {}).items():
            self.set(key, value)

    @classmethod
    def keys(cls):
        return sorted(name for name in vars(cls) if name.isupper())

    def set(self, key: str, value: Any):
        """Override one setting, coercing to the type of its default"""
        key = key.upper()
        if key not in self.keys():
            raise ConfigurationError(f"Unknown configuration key: {key}")
        default = getattr(type(self), key)
        try:
            if isinstance(default, bool):
                coerced = str(value).lower() in ("1", "true", "yes")
            elif isinstance(default, Path):
                coerced = Path(value)
            else:
                coerced = type(default)(value)
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"Bad value for {key}: {value!r} ({e})") from e
        setattr(self, key, coerced)

    @classmethod
    def from_file(cls, path: Union[str, Path], extra: Optional[Mapping[str, Any]] = None) -> "Config":
        """Load a flat KEY=value run file on top of the defaults"""
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"Run file not found: {path}")
        values = {k: v for k, v in dotenv_values(path).items() if v is not None}
        values.update(extra or {})
        return cls(values)

    def as_dict(self) -> Dict[str, Any]:
        out = {}
        for key in self.keys():
            value = getattr(self, key)
            out[key] = str(value) if isinstance(value, Path) else value
        return out

    def validate_config(self):
        """Validate ranges and create output directories"""
        if self.GRID_N < 16 or self.GRID_N & (self.GRID_N - 1):
            raise ConfigurationError(f"GRID_N must be a power of two >= 16, got {self.GRID_N}")
        if self.BOX_L <= 0:
            raise ConfigurationError("BOX_L must be positive")
        if not 0 < self.DEALIAS <= 1:
            raise ConfigurationError("DEALIAS must lie in (0, 1]")
        if not 0 <= self.BETA_PRIME < self.BETA:
            raise ConfigurationError("Need 0 <= BETA_PRIME < BETA")
        if not 0 < self.KAPPA < (self.BETA - self.BETA_PRIME) / 20:
            raise ConfigurationError("KAPPA must satisfy 0 < KAPPA < (BETA - BETA_PRIME)/20")
        if self.SOBOLEV_N > self.SOBOLEV_CAP:
            raise ConfigurationError(f"SOBOLEV_N is capped at {self.SOBOLEV_CAP}")
        if self.P_FLOOR >= 0:
            raise ConfigurationError("P_FLOOR must be negative")
        if self.LAMBDA_NODES > self.LAMBDA_NODES_MAX:
            raise ConfigurationError(f"LAMBDA_NODES is capped at {self.LAMBDA_NODES_MAX}")

        # Create directories if they don't exist
        self.OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
        self.LOGS_DIR.mkdir(exist_ok=True)

        return True


# Global config instance
config = Config()
