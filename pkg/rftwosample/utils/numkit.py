"""Numerical kit: reproducible random streams, special functions and small linear algebra.

Every stochastic routine in the package receives an :class:`RngStream` rather than a
live generator. A stream is an immutable ``(seed, stream_id, lineage)`` address; its
generator is rebuilt from a ``numpy.random.SeedSequence`` on demand, so the draws of
a stream depend only on its address and never on scheduling order.
"""

from dataclasses import dataclass
import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special
from scipy.linalg import lapack

from rftwosample.utils.error_handling import DecompositionError, InvalidArgumentError

logger = logging.getLogger(__name__)

_UINT64_MAX = 2**64 - 1


def _check_uint64(name: str, value: int) -> int:
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
        raise InvalidArgumentError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if not 0 <= value <= _UINT64_MAX:
        raise InvalidArgumentError(f"{name} must fit in 64 unsigned bits, got {value}")
    return value


@dataclass(frozen=True)
class RngStream:
    """Address of an independent random stream derived from a root seed."""

    seed: int
    stream_id: int = 0
    lineage: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "seed", _check_uint64("seed", self.seed))
        object.__setattr__(self, "stream_id", _check_uint64("stream_id", self.stream_id))
        object.__setattr__(self, "lineage", tuple(_check_uint64("lineage", v) for v in self.lineage))

    @property
    def spawn_key(self) -> Tuple[int, ...]:
        return self.lineage + (self.stream_id,)

    def child(self, stream_id: int) -> "RngStream":
        """Derive the sub-stream ``stream_id`` of this stream."""
        return RngStream(self.seed, stream_id, self.spawn_key)

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.spawn_key)
        return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class LowerTriangular:
    """Cholesky factor L with L @ L.T equal to the factored matrix."""

    entries: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.entries.shape[0])

    def reconstruct(self) -> np.ndarray:
        return self.entries @ self.entries.T


def normal_cdf(x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Standard normal distribution function Phi."""
    out = special.ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def normal_quantile(p: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Inverse of :func:`normal_cdf` on the open unit interval."""
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise InvalidArgumentError(f"normal_quantile needs 0 < p < 1, got {p!r}")
    out = special.ndtri(arr)
    return float(out) if np.ndim(out) == 0 else out


def _check_probability(name: str, p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise InvalidArgumentError(f"{name} must lie in [0, 1], got {p}")
    return p


def binomial_cdf(k: int, m: int, p: float) -> float:
    """P(B <= k) for B ~ Binomial(m, p).

    Evaluated through the regularized incomplete beta identity
    ``P(B <= k) = I_{1-p}(m - k, k + 1)`` which keeps full relative precision in
    both tails.
    """
    k, m = int(k), int(m)
    p = _check_probability("p", p)
    if m < 1:
        raise InvalidArgumentError(f"m must be positive, got {m}")
    if k < 0 or k > m:
        raise InvalidArgumentError(f"k must satisfy 0 <= k <= m, got k={k}, m={m}")
    if k == m:
        return 1.0
    return float(special.bdtr(k, m, p))


def binomial_quantile(alpha: float, m: int, p: float) -> int:
    """Smallest k with ``binomial_cdf(k, m, p) >= alpha``."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must satisfy 0 < alpha < 1, got {alpha}")
    m = int(m)
    if m < 1:
        raise InvalidArgumentError(f"m must be positive, got {m}")
    p = _check_probability("p", p)
    ks = np.arange(m + 1)
    cdf = special.bdtr(ks, m, p)
    cdf[-1] = 1.0
    # bdtr is monotone in k; guard the rare last-ulp wobble before searching
    cdf = np.maximum.accumulate(cdf)
    return int(np.searchsorted(cdf, alpha, side="left"))


def student_t_cdf(x: Union[float, np.ndarray], nu: float) -> Union[float, np.ndarray]:
    """Distribution function of Student's t with ``nu`` degrees of freedom."""
    nu = float(nu)
    if not nu > 0.0:
        raise InvalidArgumentError(f"nu must be positive, got {nu}")
    out = special.stdtr(nu, x)
    return float(out) if np.ndim(out) == 0 else out


def gamma_sample(shape: float, rate: float, rng: Union[RngStream, np.random.Generator],
                 size: Optional[Union[int, Tuple[int, ...]]] = None) -> Union[float, np.ndarray]:
    """Draw from Gamma(shape, rate); mean shape / rate.

    Accepts a stream (a fresh generator is built) or an already running generator,
    so samplers can keep drawing from one generator across several calls.
    """
    shape, rate = float(shape), float(rate)
    if not shape > 0.0 or not rate > 0.0:
        raise InvalidArgumentError(f"shape and rate must be positive, got shape={shape}, rate={rate}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    # numpy's sampler is Marsaglia-Tsang with the power boost for shape < 1
    out = gen.gamma(shape, 1.0 / rate, size=size)
    return float(out) if size is None else out


def cholesky(matrix: np.ndarray) -> LowerTriangular:
    """Lower Cholesky factor of a symmetric positive-definite matrix."""
    a = np.array(matrix, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"cholesky needs a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-10 * scale:
        raise InvalidArgumentError("cholesky needs a symmetric matrix")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError("cholesky needs finite entries")

    factor, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise DecompositionError(
            f"matrix is not positive definite: leading minor of order {info} fails", pivot=int(info)
        )
    if info < 0:
        raise InvalidArgumentError(f"dpotrf rejected argument {-info}")
    return LowerTriangular(np.tril(factor))


def median(values: Sequence[float]) -> float:
    """Middle order statistic; mean of the two middle ones for even length."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise InvalidArgumentError("median of an empty sequence")
    return float(np.median(arr))
