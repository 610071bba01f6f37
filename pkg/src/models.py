"""
Pydantic models for the Euler-Coriolis toolkit
"""

import math
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class GridSpec(BaseModel):
    """Periodic box [-L/2, L/2)^3 with n points per axis"""
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., description="Points per axis (power of two, at least 16)")
    L: float = Field(..., gt=0, description="Box side length")

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, v: int) -> int:
        if v < 16 or v & (v - 1):
            raise ValueError(f"n must be a power of two >= 16, got {v}")
        return v

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def k_min(self) -> float:
        return 2 * math.pi / self.L

    @property
    def k_max(self) -> float:
        return math.pi * self.n / self.L

    @property
    def t_wrap(self) -> float:
        """Longest time for which decay measurements are free of wrap-around"""
        return self.L / 4

    @property
    def shape(self):
        return (self.n, self.n, self.n)


class ShellIndex(BaseModel):
    """Localization address (k, p, q, l); unset entries are not localized"""
    model_config = ConfigDict(frozen=True)

    k: int = Field(..., description="Radial dyadic index, |xi| ~ 2^k")
    p: Optional[int] = Field(None, le=0, description="Horizontal index, |xi_h|/|xi| ~ 2^p")
    q: Optional[int] = Field(None, le=0, description="Vertical index, |xi_3|/|xi| ~ 2^q")
    ell: Optional[int] = Field(None, ge=0, description="Angular index, degree ~ 2^ell")

    def admits_angular(self) -> bool:
        """Uncertainty principle: angular localization needs ell + p >= 0"""
        if self.ell is None:
            return True
        return self.ell + (self.p or 0) >= 0

    def label(self) -> str:
        parts = [f"k={self.k}"]
        for name in ("p", "q", "ell"):
            value = getattr(self, name)
            if value is not None:
                parts.append(f"{name}={value}")
        return ",".join(parts)


class AxisymmetryResult(BaseModel):
    """Relative residual ||Omega f|| / ||f||"""
    residual: float = Field(..., ge=0, description="Relative L2 size of the rotation derivative")
    zero_field: bool = Field(False, description="Input had zero norm, residual set to 0")
    axisymmetric: bool = Field(..., description="Residual below the axisymmetry tolerance")


class AssertionOutcome(BaseModel):
    """One asserted budget, reported with its measured value"""
    name: str = Field(..., description="Short name of the check")
    reference: str = Field(..., description="Statement the check is anchored to")
    measured: float = Field(..., description="Measured value")
    budget: float = Field(..., description="Budgeted value")
    passed: bool = Field(..., description="Whether the budget holds")
    notice: Optional[str] = Field(None, description="Inconclusive or informational notice")

    def describe(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.name}: measured {self.measured:.6g} vs budget {self.budget:.6g} ({self.reference})"
        return text if not self.notice else f"{text} - {self.notice}"


class IdentityStatistics(BaseModel):
    """Residual statistics of a closed form against an oracle"""
    name: str = Field(..., description="Identity under test")
    samples: int = Field(..., ge=0, description="Number of evaluated samples")
    max_residual: float = Field(..., description="Largest residual")
    quantiles: Dict[str, float] = Field(default_factory=dict, description="Residual quantiles")
    budget: float = Field(..., description="Residual budget")
    failures: int = Field(0, description="Samples above budget")

    @property
    def passed(self) -> bool:
        return self.failures == 0


class PhaseSigmaStatistics(BaseModel):
    """Conditioned phase-versus-sigma sampling record"""
    drawn: int = Field(..., description="Samples drawn with all three frequencies in their shells")
    conditioned: int = Field(..., description="Samples satisfying the small-phase condition")
    phase_threshold: float = Field(..., description="Conditioning threshold 2^(q_max-10)")
    min_ratio: Optional[float] = Field(None, description="min |sigma|/(2^q_max 2^(k_max+k_min))")
    min_pmax: Optional[float] = Field(None, description="min over samples of the largest sqrt(1-Lambda^2)")
    counterexamples: int = Field(0, description="Samples with ratio below c_star")
    hard_failures: int = Field(0, description="Samples with ratio below c_star/2")
    c_star: float = Field(..., description="Frozen lower constant")
    inconclusive: bool = Field(False, description="Conditioned sample set is empty")

    @property
    def passed(self) -> bool:
        if self.inconclusive:
            return True
        return self.hard_failures == 0 and self.min_pmax is not None and self.min_pmax >= 1 / 8


class FitRecord(BaseModel):
    """Least-squares log-log slope fit"""
    quantity: str = Field(..., description="Fitted quantity")
    times: List[float] = Field(..., description="Times used in the fit")
    values: List[float] = Field(..., description="Values used in the fit")
    slope: Optional[float] = Field(None, description="Fitted exponent")
    intercept: Optional[float] = Field(None, description="Fitted log-amplitude")
    residual_rms: Optional[float] = Field(None, description="RMS residual in log space")
    underflow: bool = Field(False, description="Some value fell below the underflow floor")
    bracket: Optional[List[float]] = Field(None, description="Accepted slope interval")

    @property
    def passed(self) -> bool:
        if self.slope is None or self.bracket is None or self.underflow:
            return False
        return self.bracket[0] <= self.slope <= self.bracket[1]


class SplitRecord(BaseModel):
    """Angular splitting of a localized linear evolution into I and II pieces"""
    t: float
    k: int
    p: int
    q: int
    ell0: Optional[int] = Field(None, description="Angular threshold; None in the crude regime")
    regime: str = Field(..., description="'crude' when 2^(2p+q) t < 1, else 'dispersive'")
    all_in_ii: bool = Field(False, description="Threshold below zero, everything in II")
    i_linf: float
    ii_l2: float
    ii_linf: float
    i_bound: float = Field(..., description="Right-hand side for ||I||_Linf")
    ii_bound: float = Field(..., description="Right-hand side for ||II||_L2")
    ii_linf_bound: float = Field(0.0, description="Right-hand side for ||II||_Linf")
    i_ratio: float
    ii_ratio: float
    ii_linf_ratio: float = 0.0


class NormRow(BaseModel):
    """One shell entry of a norm table"""
    kind: str = Field(..., description="'B' or 'X'")
    k: int
    p: int
    q: Optional[int] = None
    ell: Optional[int] = None
    points: int = Field(..., description="Grid or quadrature points in the shell support")
    l2: float = Field(..., description="L2 norm of the localized piece")
    weight: float = Field(..., description="Norm weight of the shell")
    weighted: float = Field(..., description="weight * l2")


class NormReport(BaseModel):
    """Norm hierarchy of one field"""
    beta: float
    b_norm: float
    x_norm: Optional[float] = None
    d_norm: Optional[float] = None
    sobolev: Dict[str, float] = Field(default_factory=dict, description="H^N norms keyed by N")
    hminus1_proxy: float = Field(..., description="Discrete homogeneous H^-1 proxy over nonzero modes")
    hminus1_kmin_dependent: bool = Field(..., description="Proxy dominated by the lowest box shells")
    rows: List[NormRow] = Field(default_factory=list)
    excluded: List[str] = Field(default_factory=list, description="Shells dropped for lack of points")
    truncation_note: str = ""

    def to_frame(self):
        import pandas as pd

        return pd.DataFrame([row.model_dump() for row in self.rows])


class SolverConfig(BaseModel):
    """Time integration parameters"""
    grid: GridSpec
    epsilon: float = Field(1e-2, ge=0, description="Data amplitude, sup of the initial velocity")
    dt: float = Field(0.1, gt=0, description="Time step")
    T: float = Field(..., gt=0, description="Final time")
    dealias: float = Field(2.0 / 3.0, gt=0, le=1)
    beta: float = Field(0.01, ge=0)
    cadence: int = Field(5, ge=1, description="Diagnostics every `cadence` steps")
    seed: int = 0
    nonlinear: bool = True
    p_floor: int = -12
    sobolev_n: int = Field(4, ge=0, le=8)
    norm_diagnostics: bool = Field(False, description="Evaluate B/X/D of profiles at each diagnostic time")
    dt_profile_shells: List[int] = Field(default_factory=lambda: [0])
    dt_profile_powers: List[int] = Field(default_factory=lambda: [0])
    checkpoint_every: float = Field(0.0, ge=0, description="Checkpoint interval in time units, 0 disables")
    shells: List[int] = Field(default_factory=lambda: [-2, -1, 0, 1, 2], description="Initial-data shells")

    @model_validator(mode="after")
    def _horizon(self):
        if self.T > self.grid.t_wrap + 1e-12:
            raise ValueError(f"T={self.T} exceeds the wrap-around horizon {self.grid.t_wrap}")
        if any(b > 2 for b in self.dt_profile_powers):
            raise ValueError("dt_profile_powers are capped at 2")
        return self


class ExperimentConfig(BaseModel):
    """Serializable record of one harness command"""
    command: str
    seed: int = 0
    out_dir: str
    threads: int = 1
    strict: bool = False
    settings: Dict[str, object] = Field(default_factory=dict, description="Merged configuration")
    params: Dict[str, object] = Field(default_factory=dict, description="Command-specific parameters")
