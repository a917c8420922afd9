"""Samplers for the (P_X, P_Y) pairs of the power and level experiments.

Every sampler builds one generator from its stream and draws X before Y, so a
(spec, stream) pair always yields the same SamplePair.
"""

from dataclasses import dataclass
from functools import lru_cache
import itertools
import logging
from typing import Callable, Dict, List, Tuple

import numpy as np

from rftwosample.core.config import settings
from rftwosample.models.configs import LevelDist, ScenarioFamily, ScenarioSpec
from rftwosample.utils.error_handling import (
    DecompositionError,
    InvalidArgumentError,
    ScenarioConstructionError,
)
from rftwosample.utils.numkit import RngStream, cholesky, gamma_sample, normal_quantile, student_t_cdf

logger = logging.getLogger(__name__)

# Stream of the blob correlation matrix shared by all runs of a study
BLOB_SIGMA_STREAM = 7

CONTAMINATION_MEAN = 50.0
CONTAMINATION_SD = 5.0
LEVEL_CONTAMINATION_WEIGHT = 0.6
LEVEL_EQUICORRELATION = 0.95
MIXTURE_WEIGHT = 0.9
MIXTURE_SHIFT = 4.0
BLOB_VARIANCE_MEANS = np.array([-5.0, 0.0, 5.0])


@dataclass(frozen=True)
class SamplePair:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.shape != self.y.shape:
            raise ScenarioConstructionError(f"sample shapes differ: {self.x.shape} vs {self.y.shape}")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ScenarioConstructionError("sampler produced non-finite values")

    @property
    def n(self) -> int:
        return int(self.x.shape[0])


def _require(spec: ScenarioSpec, family: ScenarioFamily) -> None:
    if spec.family is not family:
        raise InvalidArgumentError(f"expected a {family.value} scenario, got {spec.family.value}")


def sample_mean_shift(spec: ScenarioSpec, rng: RngStream) -> SamplePair:
    """X ~ N(0, I); Y ~ N(mu, I) with delta / sqrt(d) on the first d coordinates."""
    _require(spec, ScenarioFamily.MEAN_SHIFT)
    gen = rng.generator()
    n, p, d = spec.n_per_class, spec.p, spec.effective_d
    x = gen.standard_normal((n, p))
    y = gen.standard_normal((n, p))
    if d > 0 and spec.knob != 0.0:
        y[:, :d] += spec.knob / np.sqrt(d)
    return SamplePair(x, y)


def _contaminated_rows(n: int, p: int, d: int, weight: float, gen: np.random.Generator) -> np.ndarray:
    rows = CONTAMINATION_MEAN + CONTAMINATION_SD * gen.standard_normal((n, p))
    hit = gen.random(n) < weight
    n_hit = int(hit.sum())
    if n_hit and d:
        # Binomial(100, 1/2) matches the Gaussian coordinates' mean 50 and variance 25
        rows[np.ix_(hit, np.arange(d))] = gen.binomial(100, 0.5, size=(n_hit, d))
    return rows


def sample_contamination(spec: ScenarioSpec, rng: RngStream) -> SamplePair:
    """X ~ N(50, 25 I); Y mixes in, per row with probability lambda, d Binomial(100, 1/2) coordinates."""
    _require(spec, ScenarioFamily.CONTAMINATION)
    gen = rng.generator()
    n, p = spec.n_per_class, spec.p
    x = CONTAMINATION_MEAN + CONTAMINATION_SD * gen.standard_normal((n, p))
    y = _contaminated_rows(n, p, spec.effective_d, spec.knob, gen)
    return SamplePair(x, y)


def correlation_slots(p: int, d: int) -> List[Tuple[int, int]]:
    """First d upper-triangle positions, walking the diagonals outward."""
    slots = []
    for offset in range(1, p):
        for i in range(p - offset):
            if len(slots) == d:
                return slots
            slots.append((i, i + offset))
    return slots


@lru_cache(maxsize=64)
def _correlation_factor(p: int, d: int, rho: float) -> np.ndarray:
    sigma = np.eye(p)
    for i, j in correlation_slots(p, d):
        sigma[i, j] = sigma[j, i] = rho
    if np.linalg.eigvalsh(sigma)[0] <= 1e-12:
        raise ScenarioConstructionError(f"correlation {rho} in {d} slots is not positive definite for p={p}")
    try:
        factor = cholesky(sigma).entries
    except DecompositionError as e:
        raise ScenarioConstructionError(f"correlation matrix is not positive definite: {e}") from e
    factor.setflags(write=False)
    return factor


def sample_correlated_gaussian(spec: ScenarioSpec, rng: RngStream) -> SamplePair:
    """X ~ N(0, I); Y ~ N(0, Sigma) with rho in d off-diagonal slots (all of them by default)."""
    _require(spec, ScenarioFamily.CORRELATED_GAUSSIAN)
    factor = _correlation_factor(spec.p, spec.effective_d, float(spec.knob))
    gen = rng.generator()
    n, p = spec.n_per_class, spec.p
    x = gen.standard_normal((n, p))
    y = gen.standard_normal((n, p)) @ factor.T
    return SamplePair(x, y)


def _t_copula_rows(n: int, p: int, d: int, nu: float, gen: np.random.Generator) -> np.ndarray:
    latent = gen.standard_normal((n, d))
    if np.isfinite(nu):
        shared = gamma_sample(nu / 2.0, nu / 2.0, gen, size=(n, 1))
        t = latent / np.sqrt(shared)
        # map through the lower tail and reflect, keeping precision for large |t|
        lower = np.clip(student_t_cdf(-np.abs(t), nu), np.finfo(float).tiny, 0.5)
        margins = -np.sign(t) * normal_quantile(lower)
    else:
        margins = latent
    rest = gen.standard_normal((n, p - d))
    return np.hstack([margins, rest])


def sample_t_copula(spec: ScenarioSpec, rng: RngStream) -> SamplePair:
    """X ~ N(0, I); Y has a d-dimensional t copula with nu degrees of freedom and N(0, 1) margins."""
    _require(spec, ScenarioFamily.T_COPULA)
    gen = rng.generator()
    n, p = spec.n_per_class, spec.p
    x = gen.standard_normal((n, p))
    y = _t_copula_rows(n, p, spec.effective_d, float(spec.knob), gen)
    return SamplePair(x, y)


def random_correlation(p: int, ratio_bound: float, rng: RngStream,
                       max_retries: int = settings.CORRELATION_MAX_RETRIES) -> np.ndarray:
    """Random correlation matrix with min/max eigenvalue ratio at most ``ratio_bound``.

    Normalizes A A^T for Gaussian A to unit diagonal and redraws until the
    ratio condition holds.
    """
    if p < 2:
        raise InvalidArgumentError(f"a random correlation matrix needs p >= 2, got {p}")
    if not 0.0 < ratio_bound < 1.0:
        raise InvalidArgumentError(f"ratio_bound must lie in (0, 1), got {ratio_bound}")
    gen = rng.generator()
    for attempt in range(max_retries):
        a = gen.standard_normal((p, p))
        cov = a @ a.T
        scale = 1.0 / np.sqrt(np.diag(cov))
        corr = cov * np.outer(scale, scale)
        corr = (corr + corr.T) / 2.0
        np.fill_diagonal(corr, 1.0)
        eig = np.linalg.eigvalsh(corr)
        if eig[0] > 0 and eig[0] / eig[-1] <= ratio_bound:
            logger.debug(f"Random correlation accepted after {attempt + 1} draws (ratio {eig[0] / eig[-1]:.3f})")
            return corr
    raise ScenarioConstructionError(
        f"no correlation matrix with eigenvalue ratio <= {ratio_bound} after {max_retries} draws"
    )


@lru_cache(maxsize=32)
def shared_blob_correlation(p: int, seed: int) -> np.ndarray:
    """The study-wide blob correlation matrix, drawn once per (p, seed)."""
    corr = random_correlation(p, 1.0 - 1.0 / np.sqrt(p), RngStream(seed, BLOB_SIGMA_STREAM))
    corr.setflags(write=False)
    return corr


def blob_centers(base: np.ndarray, p: int) -> np.ndarray:
    """All len(base)^p ways of choosing p entries of ``base`` with replacement."""
    count = len(base) ** p
    if count > settings.BLOB_SAMPLE_CAP:
        raise ScenarioConstructionError(
            f"{len(base)}^{p} = {count} blobs exceed the cap of {settings.BLOB_SAMPLE_CAP}"
        )
    return np.array(list(itertools.product(base, repeat=p)), dtype=float)


def sample_blob_correlation(spec: ScenarioSpec, rng: RngStream) -> SamplePair:
    """Uniform mixture of blobs at every center; X blobs have identity covariance,
    Y blobs the blend (1 - s) I + s Sigma with the study's shared Sigma."""
    _require(spec, ScenarioFamily.BLOB_CORRELATION)
    n, p = spec.n_per_class, spec.p
    centers = blob_centers(np.arange(1, spec.effective_d + 1, dtype=float), p)
    if spec.knob > 0.0 and p >= 2:
        target = (1.0 - spec.knob) * np.eye(p) + spec.knob * shared_blob_correlation(p, spec.shared_seed)
        try:
            factor = cholesky(target).entries
        except DecompositionError as e:
            raise ScenarioConstructionError(f"blob covariance is not positive definite: {e}") from e
    else:
        factor = np.eye(p)
    gen = rng.generator()
    x = centers[gen.integers(0, len(centers), n)] + gen.standard_normal((n, p))
    y = centers[gen.integers(0, len(centers), n)] + gen.standard_normal((n, p)) @ factor.T
    return SamplePair(x, y)


def sample_blob_variance(spec: ScenarioSpec, rng: RngStream) -> SamplePair:
    """Product of 1-d three-blob mixtures at (-5, 0, 5); in Y the middle blob's sd is 1 + knob."""
    _require(spec, ScenarioFamily.BLOB_VARIANCE)
    gen = rng.generator()
    n, p = spec.n_per_class, spec.p
    comp_x = gen.integers(0, 3, size=(n, p))
    x = BLOB_VARIANCE_MEANS[comp_x] + gen.standard_normal((n, p))
    comp_y = gen.integers(0, 3, size=(n, p))
    sd_y = np.where(comp_y == 1, 1.0 + spec.knob, 1.0)
    y = BLOB_VARIANCE_MEANS[comp_y] + sd_y * gen.standard_normal((n, p))
    return SamplePair(x, y)


@lru_cache(maxsize=16)
def _equicorrelation_factor(p: int, rho: float) -> np.ndarray:
    sigma = np.full((p, p), rho)
    np.fill_diagonal(sigma, 1.0)
    factor = cholesky(sigma).entries
    factor.setflags(write=False)
    return factor


def _multivariate_t_rows(n: int, p: int, nu: float, gen: np.random.Generator) -> np.ndarray:
    shared = gamma_sample(nu / 2.0, nu / 2.0, gen, size=(n, 1))
    return gen.standard_normal((n, p)) / np.sqrt(shared)


def _mixture_rows(n: int, p: int, gen: np.random.Generator) -> np.ndarray:
    shifted = gen.random(n) >= MIXTURE_WEIGHT
    return gen.standard_normal((n, p)) + MIXTURE_SHIFT * shifted[:, None]


def _level_rows(dist: LevelDist, n: int, p: int, d: int, gen: np.random.Generator) -> np.ndarray:
    shape = (n, p)
    if dist is LevelDist.RNORM:
        return gen.standard_normal(shape)
    if dist is LevelDist.RBINOM:
        return gen.binomial(4, 0.7, size=shape).astype(float)
    if dist is LevelDist.RT:
        return gen.standard_t(1.0, size=shape)
    if dist is LevelDist.RPOIS:
        return gen.poisson(4.0, size=shape).astype(float)
    if dist is LevelDist.RF:
        return gen.f(4.0, 12.0, size=shape)
    if dist is LevelDist.RUNIF:
        return gen.uniform(3.0, 10.0, size=shape)
    if dist is LevelDist.RMVT:
        return _multivariate_t_rows(n, p, 1.0, gen)
    if dist is LevelDist.REXP:
        return gen.exponential(1.0 / 4.0, size=shape)
    if dist is LevelDist.RBETA:
        return gen.beta(3.0, 4.0, size=shape)
    if dist is LevelDist.MVRNORM:
        if p == 1:
            return gen.standard_normal(shape)
        return gen.standard_normal(shape) @ _equicorrelation_factor(p, LEVEL_EQUICORRELATION).T
    if dist is LevelDist.RLNORM:
        return gen.lognormal(0.0, 1.0, size=shape)
    if dist is LevelDist.RTCOPULA:
        return _t_copula_rows(n, p, p, 1.0, gen)
    if dist is LevelDist.RWEIBULL:
        return gen.weibull(1.0, size=shape)
    if dist is LevelDist.RMIXTURE:
        return _mixture_rows(n, p, gen)
    if dist is LevelDist.CONT_DIST:
        return _contaminated_rows(n, p, d, LEVEL_CONTAMINATION_WEIGHT, gen)
    raise InvalidArgumentError(f"unknown level-check distribution {dist!r}")


def sample_level_check(spec: ScenarioSpec, rng: RngStream) -> SamplePair:
    """Both samples from the named distribution; H0 holds by construction."""
    _require(spec, ScenarioFamily.LEVEL_CHECK)
    if spec.level_dist is None:
        raise InvalidArgumentError("LevelCheck needs level_dist")
    gen = rng.generator()
    n, p, d = spec.n_per_class, spec.p, spec.effective_d
    x = _level_rows(spec.level_dist, n, p, d, gen)
    y = _level_rows(spec.level_dist, n, p, d, gen)
    return SamplePair(x, y)


SAMPLERS: Dict[ScenarioFamily, Callable[[ScenarioSpec, RngStream], SamplePair]] = {
    ScenarioFamily.MEAN_SHIFT: sample_mean_shift,
    ScenarioFamily.CONTAMINATION: sample_contamination,
    ScenarioFamily.CORRELATED_GAUSSIAN: sample_correlated_gaussian,
    ScenarioFamily.T_COPULA: sample_t_copula,
    ScenarioFamily.BLOB_CORRELATION: sample_blob_correlation,
    ScenarioFamily.BLOB_VARIANCE: sample_blob_variance,
    ScenarioFamily.LEVEL_CHECK: sample_level_check,
}


def sample(spec: ScenarioSpec, rng: RngStream) -> SamplePair:
    return SAMPLERS[spec.family](spec, rng)
