"""Result records: single-test reports and study tables."""

from typing import Dict, Iterable, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from rftwosample.core.config import settings
from rftwosample.utils.error_handling import InvalidArgumentError


class TestReport(BaseModel):
    """Outcome of one two-sample test; serializes to a single JSON object.

    ``statistic`` is the holdout error for the Binomial and Hoeffding tests, the
    full-data OOB error for hypoRF, the standardized U-statistic for UStat and the
    unbiased squared MMD for MMDBoot. Threshold-form tests leave ``p_value`` empty
    and report ``threshold`` and ``reject_at``.
    """

    __test__ = False

    model_config = ConfigDict(ser_json_inf_nan="constants")

    test_name: Literal["Binomial", "Hoeffding", "HypoRF", "UStat", "MMDBoot"]
    statistic: float
    p_value: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    reject_at: Dict[str, bool] = Field(default_factory=dict)
    threshold: Optional[float] = None
    margin: Optional[float] = None
    null_mean: Optional[float] = None
    null_sd: Optional[float] = None
    n_permutations_or_K: Optional[int] = None
    permutation_p_value: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    details: Dict[str, float] = Field(default_factory=dict)
    seed: int
    runtime_ms: int = 0

    @model_validator(mode="after")
    def _p_value_presence(self) -> "TestReport":
        if self.test_name == "Hoeffding":
            if self.threshold is None or not self.reject_at:
                raise ValueError("a Hoeffding report carries its threshold and reject_at")
        elif self.p_value is None:
            raise ValueError(f"a {self.test_name} report carries a p-value")
        return self

    def rejects(self, alpha: float) -> bool:
        """Decision at level ``alpha``."""
        key = alpha_key(alpha)
        if key in self.reject_at:
            return self.reject_at[key]
        if self.p_value is None:
            raise KeyError(f"no decision recorded at alpha={alpha}")
        return self.p_value < alpha


def alpha_key(alpha: float) -> str:
    return f"{alpha:g}"


def alpha_grid(alpha: Optional[float] = None, alphas: Optional[Iterable[float]] = None) -> List[float]:
    """Sorted levels a report decides at: ``alphas`` (default ALPHA_GRID) plus ``alpha``."""
    grid = set(settings.ALPHA_GRID if alphas is None else alphas)
    if alpha is not None:
        grid.add(alpha)
    for a in grid:
        if not 0.0 < a < 1.0:
            raise InvalidArgumentError(f"alpha must satisfy 0 < alpha < 1, got {a}")
    return sorted(float(a) for a in grid)


# Stable CSV column order of a study table
STUDY_COLUMNS: List[str] = [
    "scenario_family", "knob", "p", "d", "n_per_class", "test", "S",
    "rejections", "power", "failures", "mean_runtime_ms", "grid_label",
]

VAR_CHECK_COLUMNS: List[str] = ["K", "repetition", "null_mean", "null_variance"]


class StudyRow(BaseModel):
    """Rejection count of one test at one grid point."""

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    scenario_family: str
    knob: float
    p: int
    d: int
    n_per_class: int
    test: str
    S: int = Field(ge=1)
    rejections: int = Field(ge=0)
    power: float = Field(ge=0.0, le=1.0)
    failures: int = Field(ge=0)
    mean_runtime_ms: Optional[float] = None
    grid_label: str

    @model_validator(mode="after")
    def _conservation(self) -> "StudyRow":
        if self.rejections + self.failures > self.S:
            raise ValueError("rejections + failures cannot exceed S")
        return self


class StudyResult(BaseModel):
    """Power/level table of a study plus the metadata echoed into the sidecar."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    rows: List[StudyRow] = Field(default_factory=list)
    base_seed: int
    fingerprint: str = ""
    spec: Dict[str, object] = Field(default_factory=dict)
    aborted: List[str] = Field(default_factory=list)

    @property
    def has_aborted(self) -> bool:
        return bool(self.aborted)

    def power_of(self, test: str, grid_label: str) -> float:
        for row in self.rows:
            if row.test == test and row.grid_label == grid_label:
                return row.power
        raise KeyError(f"no row for test={test!r}, grid point {grid_label!r}")


class VarCheckRow(BaseModel):
    """Mean and variance of the permuted OOB errors of one repetition."""

    model_config = ConfigDict(frozen=True)

    K: int = Field(ge=2)
    repetition: int = Field(ge=0)
    null_mean: float
    null_variance: float


class VarCheckResult(BaseModel):
    rows: List[VarCheckRow] = Field(default_factory=list)
    base_seed: int
    fingerprint: str = ""
    spec: Dict[str, object] = Field(default_factory=dict)
    aborted: List[str] = Field(default_factory=list)

    @property
    def has_aborted(self) -> bool:
        return bool(self.aborted)
