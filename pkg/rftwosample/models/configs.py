"""Typed configuration records shared by the services and the CLI."""

from enum import Enum
import hashlib
import json
import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, ValidationError, field_validator, model_validator

from rftwosample.core.config import settings
from rftwosample.utils.error_handling import InvalidArgumentError


def parse_record_text(text: str) -> Dict[str, object]:
    """Parse a configuration record: one JSON object, or ``key=value`` lines.

    Values in ``key=value`` form are decoded as JSON when possible (numbers,
    lists, booleans, null) and kept as plain strings otherwise. Blank lines and
    lines starting with ``#`` are skipped.
    """
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as e:
            raise InvalidArgumentError(f"invalid JSON record: {e}") from e
        if not isinstance(data, dict):
            raise InvalidArgumentError("a JSON record must be an object")
        return data

    data: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise InvalidArgumentError(f"line {lineno}: empty key")
        try:
            data[key] = json.loads(value)
        except json.JSONDecodeError:
            data[key] = value
    return data


def load_record(model: type, text: str):
    """Validate ``text`` into ``model``; pydantic failures become InvalidArgumentError."""
    try:
        return model.model_validate(parse_record_text(text))
    except ValidationError as e:
        raise InvalidArgumentError(f"invalid {model.__name__}: {e}") from e


class ForestConfig(BaseModel):
    """Random Forest hyperparameters; defaults reproduce the published settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_trees: int = Field(default=settings.NUM_TREES, ge=1)
    min_node_size: int = Field(default=settings.MIN_NODE_SIZE, ge=1)
    mtry: Optional[int] = Field(default=None, ge=1)
    max_depth: Optional[int] = Field(default=None, ge=1)
    bootstrap_fraction: float = Field(default=1.0, gt=0.0, le=1.0)

    def resolve_mtry(self, p: int) -> int:
        if self.mtry is None:
            return max(1, int(math.isqrt(p)))
        if self.mtry > p:
            raise InvalidArgumentError(f"mtry={self.mtry} exceeds the dimension p={p}")
        return self.mtry


class ClassifierSpec(BaseModel):
    """Which classifier a split-sample test trains."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["random_forest", "lda"] = "random_forest"
    forest: ForestConfig = ForestConfig()
    stream_id: int = Field(default=0, ge=0)


class SplitPlan(BaseModel):
    """Train/holdout sizes of a split-sample test over 2n pooled rows."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_train: int = Field(ge=1)
    m_n: int = Field(ge=1)
    shuffle_seed: Optional[int] = Field(default=None, ge=0)

    @classmethod
    def balanced(cls, n_rows: int, shuffle_seed: Optional[int] = None) -> "SplitPlan":
        """Half the rows for training, half for testing (n_train = m_n = n)."""
        n_train = n_rows // 2
        return cls(n_train=n_train, m_n=n_rows - n_train, shuffle_seed=shuffle_seed)

    def check(self, n_rows: int) -> None:
        if self.n_train + self.m_n != n_rows:
            raise InvalidArgumentError(
                f"split plan covers {self.n_train} + {self.m_n} rows but the data has {n_rows}"
            )


class KernelConfig(BaseModel):
    """Gaussian-kernel bandwidth; resolved to a positive number before use."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    bandwidth_sigma: Union[PositiveFloat, Literal["median-heuristic"]] = "median-heuristic"


class ScenarioFamily(str, Enum):
    MEAN_SHIFT = "MeanShift"
    CONTAMINATION = "Contamination"
    CORRELATED_GAUSSIAN = "CorrelatedGaussian"
    T_COPULA = "TCopula"
    BLOB_CORRELATION = "BlobCorrelation"
    BLOB_VARIANCE = "BlobVariance"
    LEVEL_CHECK = "LevelCheck"


class LevelDist(str, Enum):
    RNORM = "rnorm"
    RBINOM = "rbinom"
    RT = "rt"
    RPOIS = "rpois"
    RF = "rf"
    RUNIF = "runif"
    RMVT = "rmvt"
    REXP = "rexp"
    RBETA = "rbeta"
    MVRNORM = "mvrnorm"
    RLNORM = "rlnorm"
    RTCOPULA = "rtcopula"
    RWEIBULL = "rweibull"
    RMIXTURE = "rmixture"
    CONT_DIST = "cont_dist"

    @classmethod
    def _missing_(cls, value):
        aliases = {"rcont": cls.CONT_DIST, "mvrnom": cls.MVRNORM}
        return aliases.get(value)


# Knob value under which P_X = P_Y
NULL_KNOB: Dict[ScenarioFamily, float] = {
    ScenarioFamily.MEAN_SHIFT: 0.0,
    ScenarioFamily.CONTAMINATION: 0.0,
    ScenarioFamily.CORRELATED_GAUSSIAN: 0.0,
    ScenarioFamily.T_COPULA: math.inf,
    ScenarioFamily.BLOB_CORRELATION: 0.0,
    ScenarioFamily.BLOB_VARIANCE: 0.0,
    ScenarioFamily.LEVEL_CHECK: 0.0,
}


class ScenarioSpec(BaseModel):
    """A named, parameterized pair of samplers (P_X, P_Y).

    ``knob`` is the family's strength parameter: the mean shift delta, the
    contamination weight lambda, the correlation rho, the copula degrees of freedom
    nu, the blend s in [0, 1] towards the random blob correlation, or the increase
    of the middle blob component's standard deviation. ``d`` is the number of
    affected coordinates (the number of correlated slots for CorrelatedGaussian,
    the size of the base vector for BlobCorrelation); ``None`` selects the family
    default.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", ser_json_inf_nan="constants")

    family: ScenarioFamily
    p: int = Field(ge=1)
    d: Optional[int] = Field(default=None, ge=0)
    knob: float = 0.0
    level_dist: Optional[LevelDist] = None
    n_per_class: int = Field(ge=1)
    shared_seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "ScenarioSpec":
        fam, p, d, knob = self.family, self.p, self.d, self.knob
        if math.isnan(knob):
            raise ValueError("knob must not be NaN")
        if d is not None:
            if fam is ScenarioFamily.CORRELATED_GAUSSIAN:
                if d > p * (p - 1) // 2:
                    raise ValueError(f"d={d} exceeds the p(p-1)/2={p * (p - 1) // 2} off-diagonal slots")
            elif fam not in (ScenarioFamily.BLOB_CORRELATION, ScenarioFamily.BLOB_VARIANCE) and d > p:
                raise ValueError(f"d={d} exceeds p={p}")
        if fam is ScenarioFamily.MEAN_SHIFT and (knob < 0 or (d == 0 and knob > 0)):
            raise ValueError("MeanShift needs delta >= 0 and d >= 1 for a shift")
        if fam is ScenarioFamily.CONTAMINATION and not 0.0 <= knob <= 1.0:
            raise ValueError(f"Contamination weight must lie in [0, 1], got {knob}")
        if fam is ScenarioFamily.CORRELATED_GAUSSIAN and not -1.0 < knob < 1.0:
            raise ValueError(f"correlation must lie in (-1, 1), got {knob}")
        if fam is ScenarioFamily.CORRELATED_GAUSSIAN and p < 2:
            raise ValueError("CorrelatedGaussian needs p >= 2")
        if fam is ScenarioFamily.T_COPULA and not knob > 0.0:
            raise ValueError(f"degrees of freedom must be positive, got {knob}")
        if fam is ScenarioFamily.BLOB_CORRELATION:
            if not 0.0 <= knob <= 1.0:
                raise ValueError(f"blob correlation blend must lie in [0, 1], got {knob}")
            if d is not None and d < 1:
                raise ValueError("BlobCorrelation needs a base vector of size d >= 1")
        if fam is ScenarioFamily.BLOB_VARIANCE and knob < 0:
            raise ValueError(f"standard deviation increase must be >= 0, got {knob}")
        if fam is ScenarioFamily.LEVEL_CHECK and self.level_dist is None:
            raise ValueError("LevelCheck needs level_dist")
        return self

    @property
    def effective_d(self) -> int:
        if self.d is not None:
            return self.d
        fam, p = self.family, self.p
        if fam is ScenarioFamily.CORRELATED_GAUSSIAN:
            return p * (p - 1) // 2
        if fam in (ScenarioFamily.CONTAMINATION, ScenarioFamily.LEVEL_CHECK):
            return max(1, p // 10)
        if fam is ScenarioFamily.BLOB_CORRELATION:
            return 2
        if fam is ScenarioFamily.BLOB_VARIANCE:
            return 3
        return p

    @property
    def is_null(self) -> bool:
        return self.family is ScenarioFamily.LEVEL_CHECK or self.knob == NULL_KNOB[self.family]

    @classmethod
    def from_text(cls, text: str) -> "ScenarioSpec":
        return load_record(cls, text)


TestName = Literal["binomial", "hoeffding", "hyporf", "ustat", "mmdboot"]


class TestConfig(BaseModel):
    """One test as run inside a study."""

    __test__ = False

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: TestName
    label: Optional[str] = None
    classifier: Literal["random_forest", "lda"] = "random_forest"
    forest: ForestConfig = ForestConfig()
    permutations: int = Field(default=settings.DEFAULT_PERMUTATIONS, ge=2)
    mmd_permutations: int = Field(default=settings.DEFAULT_MMD_PERMUTATIONS, ge=50)
    ustat_replicates: int = Field(default=settings.USTAT_REPLICATES, ge=2)
    ustat_partitions: int = Field(default=settings.USTAT_PARTITIONS, ge=2)
    n_train: Optional[int] = Field(default=None, ge=1)

    @property
    def display_name(self) -> str:
        return self.label or self.name


class StudySpec(BaseModel):
    """A Monte-Carlo study: a scenario grid, the tests to run and S runs per point."""

    model_config = ConfigDict(frozen=True, extra="forbid", ser_json_inf_nan="constants")

    scenario: ScenarioSpec
    axis: Literal["knob", "p", "level_dist"] = "knob"
    grid: List[float] = Field(default_factory=list)
    level_dists: List[LevelDist] = Field(default_factory=list)
    tests: List[TestConfig] = Field(min_length=1)
    S: int = Field(ge=1)
    base_seed: int = Field(default=settings.DEFAULT_SEED, ge=0)
    alpha: float = Field(default=settings.DEFAULT_ALPHA, gt=0.0, lt=1.0)
    jobs: int = Field(default=settings.DEFAULT_JOBS, ge=1)
    record_runtime: bool = False
    output: Optional[Path] = None
    preset: Optional[str] = None

    @field_validator("tests")
    @classmethod
    def _unique_labels(cls, tests: List[TestConfig]) -> List[TestConfig]:
        names = [t.display_name for t in tests]
        if len(set(names)) != len(names):
            raise ValueError(f"test labels must be unique, got {names}")
        return tests

    @model_validator(mode="after")
    def _check_grid(self) -> "StudySpec":
        if self.axis == "level_dist":
            if not self.level_dists:
                raise ValueError("a level-check study needs a non-empty level_dists list")
            if self.scenario.family is not ScenarioFamily.LEVEL_CHECK:
                raise ValueError("axis level_dist needs a LevelCheck scenario")
        elif not self.grid:
            raise ValueError("the study grid must not be empty")
        if self.axis == "p" and any(v < 1 or v != int(v) for v in self.grid):
            raise ValueError("a dimension grid needs positive integers")
        # grid labels key the result rows and the resume bookkeeping
        if len(set(self.grid)) != len(self.grid):
            raise ValueError(f"grid values must be unique, got {self.grid}")
        if len(set(self.level_dists)) != len(self.level_dists):
            raise ValueError(f"level distributions must be unique, got {[d.value for d in self.level_dists]}")
        return self

    def grid_points(self) -> List[Tuple[str, ScenarioSpec]]:
        """(label, scenario) for every grid point, in grid order."""
        points = []
        if self.axis == "level_dist":
            for dist in self.level_dists:
                points.append((dist.value, self.scenario.model_copy(update={"level_dist": dist})))
        elif self.axis == "p":
            for value in self.grid:
                p = int(value)
                points.append((str(p), ScenarioSpec.model_validate({**self.scenario.model_dump(), "p": p})))
        else:
            for value in self.grid:
                points.append((repr(float(value)), ScenarioSpec.model_validate({**self.scenario.model_dump(), "knob": value})))
        return points

    def fingerprint(self) -> str:
        """Hash of everything that determines the result values."""
        payload = self.model_dump_json(exclude={"output", "jobs", "preset"})
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def from_text(cls, text: str) -> "StudySpec":
        return load_record(cls, text)
