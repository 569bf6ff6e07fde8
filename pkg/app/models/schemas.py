"""Pydantic schemas for domain types and request/response validation."""

from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SIMPLEX_TOLERANCE = 1e-9


class _CaseInsensitiveEnum(str, Enum):
    """String enum that also accepts its values in any letter case."""

    @classmethod
    def _missing_(cls, value: object):
        for member in cls:
            if member.value.lower() == str(value).lower():
                return member
        return None


class Regime(_CaseInsensitiveEnum):
    """Privacy regime of a sign matrix."""

    HIGH = "high"
    MEDIUM = "medium"


class Construction(_CaseInsensitiveEnum):
    """How the entries of a sign matrix were produced."""

    RADEMACHER = "rademacher"
    BIASED = "biased"
    HADAMARD = "hadamard"


class Decoder(_CaseInsensitiveEnum):
    """Map from a raw estimate back into the probability simplex."""

    PROJECT = "project"
    NORMALIZE = "normalize"


class Method(_CaseInsensitiveEnum):
    """Estimation methods available to the harness."""

    CP = "CP"
    RR = "RR"
    HR = "HR"
    SS = "SS"
    RAPPOR = "RAPPOR"


# ==========================================
# Distributions
# ==========================================

class Distribution(BaseModel):
    """A probability vector over the universe [k]."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    probs: np.ndarray = Field(..., description="Nonnegative probabilities summing to 1")

    @field_validator("probs", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> np.ndarray:
        array = np.array(value, dtype=float).reshape(-1)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_simplex(self) -> "Distribution":
        if self.probs.size == 0:
            raise ValueError("Distribution must have at least one entry")
        if not np.all(np.isfinite(self.probs)):
            raise ValueError("Distribution entries must be finite")
        if np.any(self.probs < 0):
            raise ValueError(f"Distribution has negative entry {self.probs.min()}")
        total = float(self.probs.sum())
        if abs(total - 1.0) > SIMPLEX_TOLERANCE:
            raise ValueError(f"Distribution sums to {total!r}, expected 1")
        return self

    @property
    def k(self) -> int:
        """Universe size."""
        return int(self.probs.size)


class SparsityProfile(BaseModel):
    """Target sparsity s with approximation slack lambda for a universe of size k."""

    model_config = ConfigDict(frozen=True)

    k: int = Field(..., gt=0)
    s: int = Field(..., gt=0)
    lam: float = Field(0.0, ge=0.0, description="l1 mass allowed outside the top s entries")

    @model_validator(mode="after")
    def _check_s(self) -> "SparsityProfile":
        if self.s > self.k:
            raise ValueError(f"Sparsity s={self.s} exceeds universe size k={self.k}")
        return self


# ==========================================
# Measurement and Mechanism Reports
# ==========================================

class BalanceReport(BaseModel):
    """How far column plus-counts sit from the regime center."""

    beta_achieved: float = Field(..., ge=0.0)
    target_center: float = Field(..., gt=0.0)
    worst_column: int = Field(..., ge=0)


class PrivacyAudit(BaseModel):
    """Closed-form worst-case likelihood ratio of a privatization channel."""

    max_ratio: float = Field(..., ge=1.0)
    epsilon_effective: float
    bound: float = Field(..., description="epsilon + 2 * beta_achieved")

    @property
    def within_bound(self) -> bool:
        return self.epsilon_effective <= self.bound + 1e-12


# ==========================================
# Recovery
# ==========================================

class Histogram(BaseModel):
    """Empirical frequencies of privatized reports over [m]."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    counts: np.ndarray
    n: int = Field(..., gt=0)

    @field_validator("counts", mode="before")
    @classmethod
    def _as_counts(cls, value: Any) -> np.ndarray:
        array = np.array(value, dtype=np.int64).reshape(-1)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_total(self) -> "Histogram":
        if np.any(self.counts < 0):
            raise ValueError("Histogram counts must be nonnegative")
        if int(self.counts.sum()) != self.n:
            raise ValueError(f"Histogram counts sum to {int(self.counts.sum())}, expected n={self.n}")
        return self

    @property
    def m(self) -> int:
        return int(self.counts.size)

    @property
    def qhat(self) -> np.ndarray:
        return self.counts / self.n


class Estimate(BaseModel):
    """Server-side estimate of the input distribution."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    phat: Distribution
    support: List[int] = Field(default_factory=list)
    raw: np.ndarray
    decoder: Decoder


class BaselineKind(BaseModel):
    """Identity and parameters of a baseline frequency oracle."""

    model_config = ConfigDict(frozen=True)

    kind: Method
    epsilon: float = Field(..., gt=0.0)
    k: int = Field(..., gt=0)


# ==========================================
# Harness
# ==========================================

class DistSource(BaseModel):
    """Tagged source of the true distribution: geo:<lam>, unif:<s> or file:<path>."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["geo", "unif", "file"]
    lam: Optional[float] = Field(None, gt=0.0, lt=1.0)
    s: Optional[int] = Field(None, gt=0)
    path: Optional[Path] = None

    @model_validator(mode="after")
    def _check_payload(self) -> "DistSource":
        if self.kind == "geo" and self.lam is None:
            raise ValueError("geo source needs lam")
        if self.kind == "unif" and self.s is None:
            raise ValueError("unif source needs s")
        if self.kind == "file" and self.path is None:
            raise ValueError("file source needs a path")
        return self

    @classmethod
    def parse(cls, text: str) -> "DistSource":
        """Parse ``geo:0.8``, ``unif:10`` or ``file:/path/to/probs.txt``."""
        kind, sep, payload = text.partition(":")
        kind = kind.strip().lower()
        if not sep or not payload:
            raise ValueError(f"Malformed distribution '{text}', expected geo:<lam>, unif:<s> or file:<path>")
        if kind == "geo":
            return cls(kind="geo", lam=float(payload))
        if kind == "unif":
            return cls(kind="unif", s=int(payload))
        if kind == "file":
            return cls(kind="file", path=Path(payload))
        raise ValueError(f"Unknown distribution kind '{kind}'")

    def tag(self) -> str:
        if self.kind == "geo":
            return f"geo:{self.lam:g}"
        if self.kind == "unif":
            return f"unif:{self.s}"
        return f"file:{self.path}"


class ExperimentSpec(BaseModel):
    """Full configuration of a privatize-then-estimate sweep."""

    k: int = Field(..., gt=0, description="Universe size")
    m: int = Field(..., gt=0, description="Output universe size of the compressive mechanism")
    epsilon: float = Field(..., gt=0.0, description="Privacy parameter")
    dist: DistSource
    sparsity: Union[int, Literal["auto"]] = Field("auto", description="Target sparsity or 'auto'")
    methods: List[Method] = Field(default_factory=lambda: [Method.CP])
    decoders: List[Decoder] = Field(default_factory=lambda: [Decoder.PROJECT])
    n_grid: List[int]
    trials: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=1 << 64)
    strict_epsilon: bool = Field(False, description="Shrink epsilon so epsilon' + 2*beta equals epsilon")

    @field_validator("dist", mode="before")
    @classmethod
    def _parse_dist(cls, value: Any) -> Any:
        if isinstance(value, str):
            return DistSource.parse(value)
        return value

    @field_validator("sparsity", mode="before")
    @classmethod
    def _parse_sparsity(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() != "auto":
            return int(value)
        if isinstance(value, str):
            return "auto"
        return value

    @field_validator("sparsity")
    @classmethod
    def _positive_sparsity(cls, value: Union[int, str]) -> Union[int, str]:
        if isinstance(value, int) and value <= 0:
            raise ValueError("sparsity must be positive")
        return value

    @field_validator("n_grid")
    @classmethod
    def _check_grid(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("n_grid must not be empty")
        if any(n <= 0 for n in value):
            raise ValueError("n_grid entries must be positive")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("n_grid must be strictly increasing")
        return value

    @field_validator("methods", "decoders")
    @classmethod
    def _nonempty_unique(cls, value: List[Any]) -> List[Any]:
        if not value:
            raise ValueError("at least one entry required")
        return list(dict.fromkeys(value))


RESULT_COLUMNS = [
    "method", "decoder", "k", "m", "epsilon", "s", "dist", "n",
    "trial", "l1_error", "l2_error", "wall_ms", "seed",
]


class ResultRow(BaseModel):
    """One (method, decoder, n, trial) measurement."""

    method: Method
    decoder: Decoder
    k: int
    m: int
    epsilon: float
    s: int
    dist: str
    n: int
    trial: int
    l1_error: float
    l2_error: float
    wall_ms: float = 0.0
    seed: int


class ExperimentResult(BaseModel):
    """Rows of a sweep plus the resolved configuration that produced them."""

    spec: ExperimentSpec
    s: int = Field(..., description="Sparsity handed to the recovery algorithm")
    rows: List[ResultRow] = Field(default_factory=list)
    metadata: Dict[str, Any] = Field(default_factory=dict)


# ==========================================
# API Schemas
# ==========================================

class HealthResponse(BaseModel):
    """Health check response."""

    status: str
    app_name: str
    version: str
    environment: str


class MechanismQuery(BaseModel):
    """Public parameters both users and the server use to rebuild the channel."""

    k: int = Field(..., gt=0)
    m: int = Field(..., gt=0)
    epsilon: float = Field(..., gt=0.0)
    seed: int = Field(0, ge=0, lt=1 << 64)
    strict_epsilon: bool = False
    sparsity: Optional[int] = Field(None, gt=0, description="Used only for the advisory size of m")


class MechanismInfoResponse(BaseModel):
    """Description of a public privatization channel."""

    k: int
    m: int
    epsilon: float
    epsilon_mechanism: float
    seed: int
    regime: Regime
    construction: Construction
    bits_per_report: int
    required_m: Optional[int] = None
    balance: BalanceReport
    audit: PrivacyAudit


class EstimateRequest(MechanismQuery):
    """Privatized reports submitted to the collector."""

    reports: List[int] = Field(..., min_length=1, description="Privatized outputs in [0, m)")
    sparsity: int = Field(..., gt=0)
    decoder: Decoder = Decoder.PROJECT


class EstimateResponse(BaseModel):
    """Estimated distribution returned by the collector."""

    n: int
    k: int
    phat: List[float]
    support: List[int]
    decoder: Decoder
    epsilon_effective: float


class SummaryRow(BaseModel):
    """Mean and standard deviation of errors for one (method, decoder, n)."""

    method: Method
    decoder: Decoder
    n: int
    trials: int
    l1_mean: float
    l1_std: float
    l2_mean: float
    l2_std: float


class ExperimentSummaryResponse(BaseModel):
    """Summary of an experiment run through the API."""

    s: int
    rows: List[SummaryRow]
    metadata: Dict[str, Any] = Field(default_factory=dict)
