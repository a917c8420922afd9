"""OOB-error tests: the hypoRF permutation test and the partition-resampling U-statistic test."""

from dataclasses import dataclass
import logging
import time
from typing import Iterable, Optional

from joblib import Parallel, delayed
import numpy as np

from rftwosample.core.config import settings
from rftwosample.core.dataset import LabeledDataset
from rftwosample.models.configs import ForestConfig
from rftwosample.models.reports import TestReport, alpha_grid, alpha_key
from rftwosample.services.forest import forest as rf
from rftwosample.utils.error_handling import DegenerateNullError, DegenerateSplitError, InvalidArgumentError
from rftwosample.utils.numkit import RngStream, normal_cdf, normal_quantile

logger = logging.getLogger(__name__)


def _permuted_oob(data: LabeledDataset, config: ForestConfig, rng: RngStream) -> float:
    labels = rng.child(0).generator().permutation(data.labels)
    permuted = data.with_labels(labels)
    return rf.oob_error(rf.fit(permuted, config, rng.child(1)), permuted)


def permutation_oob_null(data: LabeledDataset, config: ForestConfig, K: int, rng: RngStream,
                         n_jobs: int = 1) -> np.ndarray:
    """OOB errors of K forests refit on uniformly permuted labels; permutation j uses ``rng.child(j)``."""
    if K < 1:
        raise InvalidArgumentError(f"K must be positive, got {K}")
    values = Parallel(n_jobs=n_jobs)(
        delayed(_permuted_oob)(data, config, rng.child(j)) for j in range(K)
    )
    return np.asarray(values, dtype=float)


def hyporf_test(x, y, config: ForestConfig = ForestConfig(), K: int = settings.DEFAULT_PERMUTATIONS,
                rng: RngStream = RngStream(settings.DEFAULT_SEED), alpha: float = settings.DEFAULT_ALPHA,
                alphas: Optional[Iterable[float]] = None, n_jobs: int = 1) -> TestReport:
    """Full-data OOB error against its label-permutation null, normal approximation.

    The observed forest uses ``rng.child(0)`` and the permutations ``rng.child(1)``.

    Raises:
        DegenerateNullError: the K permuted OOB errors are all identical
    """
    if K < 2:
        raise InvalidArgumentError(f"hypoRF needs K >= 2 permutations, got {K}")
    start = time.perf_counter()
    grid = alpha_grid(alpha, alphas)
    data = LabeledDataset.from_samples(x, y)

    observed = rf.oob_summary(rf.fit(data, config, rng.child(0), n_jobs=n_jobs), data)
    null = permutation_oob_null(data, config, K, rng.child(1), n_jobs=n_jobs)
    mean = float(null.mean())
    sd = float(null.std(ddof=1))
    if sd == 0.0:
        raise DegenerateNullError(f"all {K} permuted OOB errors equal {mean}", null.tolist())

    p_value = normal_cdf((observed.error - mean) / sd)
    rank_p = (1 + int(np.count_nonzero(null <= observed.error))) / (K + 1)
    logger.debug(f"hypoRF: OOB {observed.error:.4f}, null mean {mean:.4f}, sd {sd:.4f}, p {p_value:.4g}")

    return TestReport(
        test_name="HypoRF",
        statistic=observed.error,
        p_value=p_value,
        reject_at={alpha_key(a): p_value < a for a in grid},
        null_mean=mean,
        null_sd=sd,
        n_permutations_or_K=K,
        permutation_p_value=rank_p,
        details={
            "oob_skipped": float(observed.n_skipped),
            "null_min": float(null.min()),
            "null_max": float(null.max()),
        },
        seed=rng.seed,
        runtime_ms=int((time.perf_counter() - start) * 1000),
    )


@dataclass(frozen=True)
class PartitionVariance:
    u_hat: float
    sigma2_wp: float
    sigma2_bp: float
    v_hat: float
    variance: float
    fallback: bool


def partition_variance(h: np.ndarray) -> PartitionVariance:
    """Within/between-partition decomposition of a K x m table of kernel values.

    V = sigma2_wp - sigma2_bp; when V is not positive the within-partition
    variance is used instead.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 2:
        raise InvalidArgumentError(f"need a K x m table with m >= 2, got shape {h.shape}")
    K, m = h.shape
    row_means = h.mean(axis=1)
    u_hat = float(row_means.mean())
    sigma2_wp = float(((h - row_means[:, None]) ** 2).sum() / (K * m * (m - 1)))
    sigma2_bp = float(((row_means - u_hat) ** 2).sum() / K)
    v_hat = sigma2_wp - sigma2_bp
    fallback = not v_hat > 0.0
    if fallback:
        logger.warning(f"Partition variance {v_hat:.3g} is not positive; using the within-partition variance")
    variance = sigma2_wp if fallback else v_hat
    return PartitionVariance(u_hat, sigma2_wp, sigma2_bp, v_hat, variance, fallback)


def draw_partition(labels: np.ndarray, m_partitions: int, n_train: int, rng: RngStream,
                   max_retries: int = settings.SUBSET_MAX_RETRIES) -> np.ndarray:
    """m disjoint random row subsets of size n_train, each holding both labels."""
    gen = rng.generator()
    for attempt in range(max_retries):
        order = gen.permutation(labels.shape[0])[: m_partitions * n_train]
        subsets = order.reshape(m_partitions, n_train)
        sums = labels[subsets].sum(axis=1)
        if np.all((sums > 0) & (sums < n_train)):
            return subsets
        logger.warning(f"Partition draw {attempt + 1} has a single-label subset; redrawing")
    raise DegenerateSplitError(
        f"no partition with both labels in every subset after {max_retries} draws (n_train={n_train})"
    )


def _replicate(data: LabeledDataset, config: ForestConfig, m_partitions: int, n_train: int,
               rng: RngStream) -> np.ndarray:
    subsets = draw_partition(data.labels, m_partitions, n_train, rng.child(0))
    values = []
    for j, rows in enumerate(subsets):
        part = data.subset(rows)
        values.append(rf.oob_error(rf.fit(part, config, rng.child(1 + j)), part))
    return np.asarray(values, dtype=float)


def ustat_test(x, y, config: ForestConfig = ForestConfig(), K: int = settings.USTAT_REPLICATES,
               n_train: Optional[int] = None, m_partitions: int = settings.USTAT_PARTITIONS,
               alpha: float = settings.DEFAULT_ALPHA, rng: RngStream = RngStream(settings.DEFAULT_SEED),
               alphas: Optional[Iterable[float]] = None, n_jobs: int = 1) -> TestReport:
    """Incomplete U-statistic of subset OOB errors with the partition-resampling variance.

    Replicate k draws m disjoint subsets of size n_train from ``rng.child(k)``.
    Rejects iff (U - 1/2) / sqrt(V) < Phi^-1(alpha).
    """
    if K < 2:
        raise InvalidArgumentError(f"the U-statistic test needs K >= 2 replicates, got {K}")
    if m_partitions < 2:
        raise InvalidArgumentError(f"need at least 2 partitions, got {m_partitions}")
    start = time.perf_counter()
    grid = alpha_grid(alpha, alphas)
    data = LabeledDataset.from_samples(x, y)
    n_half = data.n_rows // 2
    if n_train is None:
        n_train = min(n_half, data.n_rows // m_partitions)
    if n_train < 2 or n_train > n_half or m_partitions * n_train > data.n_rows:
        raise InvalidArgumentError(
            f"need 2 <= n_train <= {n_half} and m * n_train <= {data.n_rows}, "
            f"got n_train={n_train}, m={m_partitions}"
        )

    h = Parallel(n_jobs=n_jobs)(
        delayed(_replicate)(data, config, m_partitions, n_train, rng.child(k)) for k in range(K)
    )
    est = partition_variance(np.vstack(h))
    if est.variance == 0.0:
        raise DegenerateNullError("all subset OOB errors are identical", np.ravel(h).tolist())

    statistic = (est.u_hat - 0.5) / np.sqrt(est.variance)
    p_value = normal_cdf(statistic)

    return TestReport(
        test_name="UStat",
        statistic=float(statistic),
        p_value=p_value,
        reject_at={alpha_key(a): bool(statistic < normal_quantile(a)) for a in grid},
        threshold=normal_quantile(alpha),
        margin=float(statistic - normal_quantile(alpha)),
        null_mean=0.5,
        null_sd=float(np.sqrt(est.variance)),
        n_permutations_or_K=K,
        details={
            "u_hat": est.u_hat,
            "sigma2_wp": est.sigma2_wp,
            "sigma2_bp": est.sigma2_bp,
            "v_hat": est.v_hat,
            "fallback": float(est.fallback),
            "n_train": float(n_train),
            "m_partitions": float(m_partitions),
        },
        seed=rng.seed,
        runtime_ms=int((time.perf_counter() - start) * 1000),
    )
