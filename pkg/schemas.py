"""
Pydantic schemas for run configuration, result rows and API envelopes.
"""

import enum
import json
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Any, Dict, Generic, List, Literal, Optional, TypeVar, Union

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    WithJsonSchema,
    field_validator,
)

from config import settings
from linear_solver import choose_m

DELTA_RULE = "k^(-(2s+2))"

# Generic Wrapper
T = TypeVar("T")


class ApiResponse(BaseModel, Generic[T]):
    status: str = "OK"  # OK | PARTIAL | ERROR
    data: T


class RowStatus(str, enum.Enum):
    OK = "OK"
    UNVERIFIED = "UNVERIFIED"
    FAILED = "FAILED"


def _parse_fraction(value: Any) -> Fraction:
    if isinstance(value, float):
        value = Fraction(value).limit_denominator(10 ** 9)
    Z = Fraction(str(value)) if not isinstance(value, Fraction) else value
    if Z <= 0:
        raise ValueError("Z must be positive")
    return Z


def _parse_complex(value: Any) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError("Complex values are given as [re, im]")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, dict):
        return complex(float(value.get("re", 0.0)), float(value.get("im", 0.0)))
    if isinstance(value, str):
        return complex(value.replace(" ", ""))
    return complex(value)


# Rationals travel as strings ("3/2"), complex numbers as [re, im]
Rational = Annotated[
    Fraction,
    BeforeValidator(_parse_fraction),
    PlainSerializer(str, return_type=str),
    WithJsonSchema({"type": "string"}),
]
ComplexPair = Annotated[
    complex,
    BeforeValidator(_parse_complex),
    PlainSerializer(lambda z: [z.real, z.imag], return_type=List[float]),
    WithJsonSchema({"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}),
]


# Run Configuration Schemas
class ZakharovConfig(BaseModel):
    """Parameters of one θ-periodic run at harmonic k."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    k: int = Field(ge=1)
    Z: Rational = Fraction(1)
    E_bar: ComplexPair = 1 + 0j
    s: int = Field(1, ge=1)
    delta: float = Field(1e-10, gt=0, le=1)
    P: int = Field(4, ge=2)
    c0: float = Field(0.05, gt=0, lt=1)
    picard_tol: float = Field(1e-8, gt=0)
    picard_max_iter: int = Field(50, ge=1)
    norm_ceiling: float = Field(1e12, gt=0)
    integrating_factor: bool = True

    @property
    def m(self) -> Fraction:
        return choose_m(self.k, self.Z)[0]

    @property
    def m_prime(self) -> Fraction:
        return choose_m(self.k, self.Z)[1]

    @property
    def E(self) -> complex:
        return complex(self.E_bar)


class ExperimentConfig(BaseModel):
    """Sweep over k for the audit, growth and theorem runners."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    k_list: List[int] = Field(default_factory=lambda: [32, 64, 128])
    Z: Rational = Fraction(1)
    E_bar: ComplexPair = 1 + 0j
    s: int = Field(1, ge=1)
    c0: float = Field(0.05, gt=0, lt=1)
    delta_rule: Union[Literal["k^(-(2s+2))"], float] = DELTA_RULE
    P: int = Field(4, ge=2)
    dt_factor: float = Field(0.02, gt=0)
    output_dir: str = settings.OUTPUT_DIR
    norm_ceiling: float = Field(1e12, gt=0)
    seed: int = 0
    oracle: bool = False
    workers: int = Field(settings.WORKERS, ge=1)

    @field_validator("k_list")
    @classmethod
    def check_k_list(cls, value: List[int]):
        if any(k < 1 for k in value):
            raise ValueError("Every k must be a positive integer")
        return value

    @field_validator("delta_rule")
    @classmethod
    def check_delta(cls, value):
        if isinstance(value, float) and not 0 < value <= 1:
            raise ValueError("An explicit delta must lie in (0, 1]")
        return value

    def delta_for(self, k: int) -> float:
        if self.delta_rule == DELTA_RULE:
            return float(k) ** -(2 * self.s + 2)
        return float(self.delta_rule)

    def run_config(self, k: int, **overrides) -> ZakharovConfig:
        fields = {
            "k": k,
            "Z": self.Z,
            "E_bar": self.E_bar,
            "s": self.s,
            "delta": self.delta_for(k),
            "P": self.P,
            "c0": self.c0,
            "norm_ceiling": self.norm_ceiling,
        }
        fields.update(overrides)
        return ZakharovConfig(**fields)

    @classmethod
    def from_file(cls, path: Union[str, Path], **overrides) -> "ExperimentConfig":
        """Load a JSON or TOML config file; non-None overrides win."""
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        data = tomllib.loads(text) if path.suffix.lower() == ".toml" else json.loads(text)
        data.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**data)


# Result Row Schemas
class DispersionRow(BaseModel):
    k: int
    m: float
    status: RowStatus = RowStatus.OK
    sigma: Optional[float] = None
    lambdas: List[List[float]] = []
    sigma_over_sqrt_k_half: Optional[float] = None
    lambda1_over_2k2: Optional[float] = None
    amplification_rate: Optional[float] = None
    amplification_law: Optional[float] = None
    max_root_mismatch: Optional[float] = None
    propagator_mismatch: Optional[float] = None
    spectrum: Optional[Dict] = None
    error: Optional[str] = None


class GrowthFit(BaseModel):
    k: int
    sigma: float
    window: List[float]
    gamma_linear: float
    gamma_direct: Optional[float] = None
    ratio_linear: float
    ratio_direct: Optional[float] = None
    delta: float
    blowup_time: Optional[float] = None


class TheoremRow(BaseModel):
    k: int
    status: RowStatus = RowStatus.OK
    sigma: Optional[float] = None
    T_k: Optional[float] = None
    delta: Optional[float] = None
    initial_hs: Optional[float] = None
    terminal_l2_n: Optional[float] = None
    log_terminal_l2_n: Optional[float] = None
    amplification: Optional[float] = None
    crosscheck: Optional[float] = None
    picard_iterations: Optional[int] = None
    C1: Optional[float] = None
    C2: Optional[float] = None
    error: Optional[str] = None


class Report(BaseModel):
    schema_version: str = settings.SCHEMA_VERSION
    config: Dict[str, Any]
    rows: List[Dict[str, Any]] = []
    summary: Dict[str, Any] = {}
    warnings: List[str] = []


# API Request Schemas
class GrowthRequest(BaseModel):
    config: ExperimentConfig = Field(default_factory=ExperimentConfig)
    k: int = Field(64, ge=1)
    direct: bool = True


class SolveRequest(BaseModel):
    config: ZakharovConfig
    T: Optional[float] = Field(None, gt=0)
    steps: Optional[int] = Field(None, ge=1)


# Error Schema
class ErrorResponse(BaseModel):
    status: str = "ERROR"
    error: str
    message: str
