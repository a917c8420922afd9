"""TV-distance estimate and closed-form asymptotic power predictors."""

import math

from rftwosample.utils.error_handling import InvalidArgumentError
from rftwosample.utils.numkit import normal_cdf, normal_quantile


def tv_estimate(holdout_error: float) -> float:
    """1 - 2 * holdout error. Not clamped: negative values occur by chance under H0."""
    holdout_error = float(holdout_error)
    if not 0.0 <= holdout_error <= 1.0:
        raise InvalidArgumentError(f"holdout error must lie in [0, 1], got {holdout_error}")
    return 1.0 - 2.0 * holdout_error


def _check_l_star(l_star: float) -> float:
    l_star = float(l_star)
    if not 0.0 <= l_star <= 0.5:
        raise InvalidArgumentError(f"l_star must lie in [0, 1/2], got {l_star}")
    return l_star


def asymptotic_power(alpha: float, m_n: int, l_star: float, a: float = 0.0, c: float = 0.0) -> float:
    """Limit power of the holdout test with m_n test points and Bayes error l_star.

    Phi((Phi^-1(alpha) * sqrt(0.25) + sqrt(m_n) * (1/2 - l_star) - a) / sqrt(l_star * (1 - l_star) + c))
    """
    l_star = _check_l_star(l_star)
    if m_n < 1:
        raise InvalidArgumentError(f"m_n must be positive, got {m_n}")
    if c < 0:
        raise InvalidArgumentError(f"c must be nonnegative, got {c}")
    scale = math.sqrt(l_star * (1.0 - l_star) + c)
    if scale == 0.0:
        return 1.0
    numerator = normal_quantile(alpha) * math.sqrt(0.25) + math.sqrt(m_n) * (0.5 - l_star) - a
    return normal_cdf(numerator / scale)


def ustat_power(alpha: float, K: int, l_star: float, a: float, variance_proxy: float) -> float:
    """Phi(Phi^-1(alpha) - a + sqrt(K) * (1/2 - l_star) / sqrt(variance_proxy))."""
    l_star = _check_l_star(l_star)
    if K < 1:
        raise InvalidArgumentError(f"K must be positive, got {K}")
    if not variance_proxy > 0:
        raise InvalidArgumentError(f"variance_proxy must be positive, got {variance_proxy}")
    return normal_cdf(normal_quantile(alpha) - a + math.sqrt(K) * (0.5 - l_star) / math.sqrt(variance_proxy))
