from fractions import Fraction
from math import comb, sqrt

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import pytest
from scipy import stats

from rftwosample.utils.error_handling import DecompositionError, InvalidArgumentError
from rftwosample.utils.numkit import (
    RngStream,
    binomial_cdf,
    binomial_quantile,
    cholesky,
    gamma_sample,
    median,
    normal_cdf,
    normal_quantile,
    student_t_cdf,
)


def exact_binomial_cdf(k, m):
    total = sum(Fraction(comb(m, i)) for i in range(k + 1))
    return float(total / Fraction(2) ** m)


def test_stream_is_reproducible():
    a = RngStream(5, 3).generator().standard_normal(10)
    b = RngStream(5, 3).generator().standard_normal(10)
    assert_array_equal(a, b)


def test_children_are_distinct_streams():
    root = RngStream(5)
    draws = [root.child(i).generator().random() for i in range(5)]
    assert len(set(draws)) == 5
    assert root.child(1).child(0).generator().random() != root.child(0).child(1).generator().random()


def test_stream_rejects_negative_seed():
    with pytest.raises(InvalidArgumentError):
        RngStream(-1)


def test_normal_cdf_known_values():
    assert normal_cdf(0.0) == pytest.approx(0.5)
    assert normal_cdf(1.959963984540054) == pytest.approx(0.975, abs=1e-12)


@pytest.mark.parametrize("p", [1e-10, 0.001, 0.05, 0.5, 0.9, 0.999999])
def test_normal_quantile_inverts_cdf(p):
    assert normal_cdf(normal_quantile(p)) == pytest.approx(p, rel=1e-8)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, float("nan")])
def test_normal_quantile_domain(p):
    with pytest.raises(InvalidArgumentError):
        normal_quantile(p)


def test_binomial_cdf_golden():
    assert binomial_cdf(5, 10, 0.5) == pytest.approx(0.623046875, abs=1e-15)
    assert binomial_cdf(10, 10, 0.5) == 1.0


@pytest.mark.parametrize("m", [1, 7, 60, 301, 1000])
def test_binomial_cdf_matches_exact_sum(m):
    for k in sorted({0, 1, m // 3, m // 2, m - 1}):
        assert binomial_cdf(k, m, 0.5) == pytest.approx(exact_binomial_cdf(k, m), rel=1e-11, abs=1e-300)


def test_binomial_cdf_rejects_out_of_range():
    with pytest.raises(InvalidArgumentError):
        binomial_cdf(11, 10, 0.5)
    with pytest.raises(InvalidArgumentError):
        binomial_cdf(3, 10, 1.5)


def test_binomial_quantile_golden():
    assert binomial_quantile(0.05, 100, 0.5) == 42


@pytest.mark.parametrize("alpha,m", [(0.01, 50), (0.05, 300), (0.1, 17)])
def test_binomial_quantile_is_smallest(alpha, m):
    k = binomial_quantile(alpha, m, 0.5)
    assert binomial_cdf(k, m, 0.5) >= alpha
    if k > 0:
        assert binomial_cdf(k - 1, m, 0.5) < alpha


def test_student_t_cdf_matches_scipy():
    xs = np.array([-3.0, -0.5, 0.0, 1.2, 4.0])
    assert_allclose(student_t_cdf(xs, 3.5), stats.t.cdf(xs, 3.5), rtol=1e-12)
    assert student_t_cdf(0.0, 1.0) == pytest.approx(0.5)


def test_gamma_sample_mean():
    draws = gamma_sample(0.5, 0.5, RngStream(3), size=200_000)
    assert draws.mean() == pytest.approx(1.0, rel=0.02)
    assert np.all(draws > 0)


def test_gamma_sample_rejects_nonpositive_shape():
    with pytest.raises(InvalidArgumentError):
        gamma_sample(0.0, 1.0, RngStream(3))


def test_cholesky_golden():
    factor = cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
    assert_allclose(factor.entries, [[2.0, 0.0], [1.0, sqrt(2.0)]], atol=1e-14)
    assert_allclose(factor.reconstruct(), [[4.0, 2.0], [2.0, 3.0]], atol=1e-12)


def test_cholesky_reports_failing_pivot():
    with pytest.raises(DecompositionError) as excinfo:
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert excinfo.value.pivot == 2


def test_cholesky_rejects_asymmetric():
    with pytest.raises(InvalidArgumentError):
        cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_median():
    assert median([3.0, 1.0, 2.0]) == 2.0
    assert median([4.0, 1.0, 2.0, 3.0]) == 2.5
    with pytest.raises(InvalidArgumentError):
        median([])
