"""Split-sample tests: the exact Binomial test and the Hoeffding-bound test.

Rows of X are labeled 1 and rows of Y 0, pooled, shuffled and split into
``n_train`` training rows and ``m_n`` holdout rows. Under H0 the number of
holdout misclassifications is exactly Binomial(m_n, 1/2).
"""

from dataclasses import dataclass
import logging
import math
import time
from typing import Iterable, Optional

import numpy as np

from rftwosample.core.config import settings
from rftwosample.core.dataset import LabeledDataset
from rftwosample.models.configs import ClassifierSpec, SplitPlan
from rftwosample.models.reports import TestReport, alpha_grid, alpha_key
from rftwosample.services.classifiers.registry import train
from rftwosample.services.twosample.power import tv_estimate
from rftwosample.utils.error_handling import InvalidArgumentError
from rftwosample.utils.numkit import RngStream, binomial_cdf, binomial_quantile

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HoldoutOutcome:
    errors: int
    m_n: int
    n_train: int

    @property
    def error_rate(self) -> float:
        return self.errors / self.m_n


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must satisfy 0 < alpha < 1, got {alpha}")
    return alpha


def holdout_errors(x, y, spec: ClassifierSpec, plan: Optional[SplitPlan], rng: RngStream,
                   n_jobs: int = 1) -> HoldoutOutcome:
    """Shuffle with ``rng.child(0)`` (or the plan's own seed), train with ``rng.child(1)``."""
    data = LabeledDataset.from_samples(x, y)
    plan = plan or SplitPlan.balanced(data.n_rows)
    plan.check(data.n_rows)

    shuffle = RngStream(plan.shuffle_seed) if plan.shuffle_seed is not None else rng.child(0)
    order = shuffle.generator().permutation(data.n_rows)
    train_rows, test_rows = order[:plan.n_train], order[plan.n_train:]

    classifier = train(spec, data.subset(train_rows), rng.child(1), n_jobs=n_jobs)
    test = data.subset(test_rows)
    errors = int(np.count_nonzero(classifier.classify_rows(test.features) != test.labels))
    logger.debug(f"Holdout: {errors} of {plan.m_n} test rows misclassified")
    return HoldoutOutcome(errors=errors, m_n=plan.m_n, n_train=plan.n_train)


def binomial_rejection_bound(alpha: float, m_n: int) -> float:
    """Bound b such that the Binomial test rejects iff m_n * (L - 1/2) < b."""
    alpha = _check_alpha(alpha)
    return binomial_quantile(alpha, m_n, 0.5) - m_n / 2.0


def hoeffding_threshold(alpha: float, m_n: int) -> float:
    """t* = -sqrt(-2 log(alpha) / m_n)."""
    alpha = _check_alpha(alpha)
    if m_n < 1:
        raise InvalidArgumentError(f"m_n must be positive, got {m_n}")
    return -math.sqrt(-2.0 * math.log(alpha) / m_n)


def binomial_test(x, y, spec: ClassifierSpec = ClassifierSpec(), plan: Optional[SplitPlan] = None,
                  rng: RngStream = RngStream(settings.DEFAULT_SEED), alpha: float = settings.DEFAULT_ALPHA,
                  alphas: Optional[Iterable[float]] = None, n_jobs: int = 1) -> TestReport:
    """Exact test: p-value = P(Binomial(m_n, 1/2) <= holdout errors)."""
    start = time.perf_counter()
    grid = alpha_grid(alpha, alphas)
    outcome = holdout_errors(x, y, spec, plan, rng, n_jobs=n_jobs)
    p_value = binomial_cdf(outcome.errors, outcome.m_n, 0.5)
    bound = binomial_rejection_bound(alpha, outcome.m_n)

    return TestReport(
        test_name="Binomial",
        statistic=outcome.error_rate,
        p_value=p_value,
        reject_at={alpha_key(a): p_value < a for a in grid},
        threshold=bound,
        margin=(outcome.errors - outcome.m_n / 2.0) - bound,
        details={
            "errors": float(outcome.errors),
            "m_n": float(outcome.m_n),
            "n_train": float(outcome.n_train),
            "tv_estimate": tv_estimate(outcome.error_rate),
        },
        seed=rng.seed,
        runtime_ms=int((time.perf_counter() - start) * 1000),
    )


def hoeffding_test(x, y, spec: ClassifierSpec = ClassifierSpec(), plan: Optional[SplitPlan] = None,
                   alpha: float = settings.DEFAULT_ALPHA, rng: RngStream = RngStream(settings.DEFAULT_SEED),
                   alphas: Optional[Iterable[float]] = None, n_jobs: int = 1) -> TestReport:
    """Reject as soon as L - 1/2 < t*; a threshold-form test with no p-value."""
    start = time.perf_counter()
    alpha = _check_alpha(alpha)
    grid = alpha_grid(alpha, alphas)
    outcome = holdout_errors(x, y, spec, plan, rng, n_jobs=n_jobs)
    centered = outcome.error_rate - 0.5
    t_star = hoeffding_threshold(alpha, outcome.m_n)

    return TestReport(
        test_name="Hoeffding",
        statistic=outcome.error_rate,
        reject_at={alpha_key(a): centered < hoeffding_threshold(a, outcome.m_n) for a in grid},
        threshold=t_star,
        margin=centered - t_star,
        details={
            "errors": float(outcome.errors),
            "m_n": float(outcome.m_n),
            "n_train": float(outcome.n_train),
            "tv_estimate": tv_estimate(outcome.error_rate),
        },
        seed=rng.seed,
        runtime_ms=int((time.perf_counter() - start) * 1000),
    )
