import math
import os

import numpy as np
from numpy.testing import assert_allclose
import pytest
from scipy import stats

from rftwosample.core.dataset import LabeledDataset
from rftwosample.models.configs import ClassifierSpec, ForestConfig, ScenarioFamily, ScenarioSpec, SplitPlan, TestConfig
from rftwosample.models.reports import TestReport
from rftwosample.services.forest import forest as rf
from rftwosample.services.simulation import harness
from rftwosample.services.simulation.scenarios import sample
from rftwosample.services.twosample import oob
from rftwosample.services.twosample.holdout import (
    binomial_rejection_bound,
    binomial_test,
    hoeffding_test,
    hoeffding_threshold,
    holdout_errors,
)
from rftwosample.services.twosample.oob import (
    draw_partition,
    hyporf_test,
    partition_variance,
    permutation_oob_null,
    ustat_test,
)
from rftwosample.services.twosample.power import asymptotic_power, tv_estimate, ustat_power
from rftwosample.utils.error_handling import DegenerateNullError, DegenerateSplitError, InvalidArgumentError
from rftwosample.utils.numkit import RngStream, binomial_cdf, binomial_quantile, normal_cdf


def test_hoeffding_threshold_golden():
    assert hoeffding_threshold(0.05, 200) == pytest.approx(-0.17308, abs=1e-5)


def test_binomial_rejection_bound_matches_quantile():
    assert binomial_rejection_bound(0.05, 100) == pytest.approx(42 - 50)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2])
def test_thresholds_reject_bad_alpha(alpha):
    with pytest.raises(InvalidArgumentError):
        hoeffding_threshold(alpha, 100)
    with pytest.raises(InvalidArgumentError):
        binomial_rejection_bound(alpha, 100)


def test_tv_estimate():
    assert tv_estimate(0.25) == pytest.approx(0.5)
    assert tv_estimate(0.6) == pytest.approx(-0.2)
    with pytest.raises(InvalidArgumentError):
        tv_estimate(1.5)


def test_asymptotic_power_golden():
    expected = normal_cdf((stats.norm.ppf(0.05) * 0.5 + math.sqrt(300) * 0.05) / math.sqrt(0.45 * 0.55))
    assert asymptotic_power(0.05, 300, 0.45) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(stats.norm.cdf(0.0876), abs=1e-3)


def test_asymptotic_power_degenerate_bayes_error():
    assert asymptotic_power(0.05, 10, 0.0) == 1.0


def test_asymptotic_power_at_null_is_below_alpha():
    assert asymptotic_power(0.05, 100, 0.5) == pytest.approx(0.05, rel=1e-9)


def test_ustat_power_golden():
    assert ustat_power(0.05, 100, 0.4, 0.0, 1.0) == pytest.approx(stats.norm.cdf(-0.644854), abs=1e-6)


def test_holdout_split_sizes(separated_pair, small_forest, rng):
    outcome = holdout_errors(*separated_pair, ClassifierSpec(forest=small_forest), None, rng)
    assert outcome.n_train == 40
    assert outcome.m_n == 40


def test_split_plan_must_cover_rows(separated_pair, rng):
    with pytest.raises(InvalidArgumentError):
        holdout_errors(*separated_pair, ClassifierSpec(kind="lda"), SplitPlan(n_train=10, m_n=10), rng)


def test_binomial_test_rejects_separated_samples(separated_pair, small_forest, rng):
    report = binomial_test(*separated_pair, spec=ClassifierSpec(forest=small_forest), rng=rng)
    assert report.test_name == "Binomial"
    assert report.p_value < 1e-6
    assert report.rejects(0.05)
    errors, m_n = int(report.details["errors"]), int(report.details["m_n"])
    assert report.p_value == pytest.approx(binomial_cdf(errors, m_n, 0.5))
    assert report.statistic == pytest.approx(errors / m_n)
    # the threshold form agrees with the p-value form
    assert (report.margin < 0) == report.reject_at["0.05"]


def test_binomial_test_is_reproducible(null_pair, small_forest):
    a = binomial_test(*null_pair, spec=ClassifierSpec(forest=small_forest), rng=RngStream(9))
    b = binomial_test(*null_pair, spec=ClassifierSpec(forest=small_forest), rng=RngStream(9))
    assert a.p_value == b.p_value
    assert a.details == b.details


def test_binomial_test_with_lda_and_explicit_plan(separated_pair, rng):
    plan = SplitPlan(n_train=30, m_n=50, shuffle_seed=4)
    report = binomial_test(*separated_pair, spec=ClassifierSpec(kind="lda"), plan=plan, rng=rng)
    assert report.details["m_n"] == 50
    assert report.details["n_train"] == 30
    assert report.rejects(0.01)


def test_binomial_reject_at_covers_alpha_grid(null_pair, small_forest, rng):
    report = binomial_test(*null_pair, spec=ClassifierSpec(forest=small_forest), rng=rng, alpha=0.2)
    assert set(report.reject_at) == {"0.01", "0.05", "0.1", "0.2"}


def test_hoeffding_test_has_no_p_value(separated_pair, small_forest, rng):
    report = hoeffding_test(*separated_pair, spec=ClassifierSpec(forest=small_forest), rng=rng)
    assert report.p_value is None
    assert report.threshold == pytest.approx(hoeffding_threshold(0.05, 40))
    assert report.rejects(0.05)


def test_hoeffding_is_more_conservative_than_binomial(null_pair, small_forest, rng):
    spec = ClassifierSpec(forest=small_forest)
    binomial = binomial_test(*null_pair, spec=spec, rng=rng)
    hoeffding = hoeffding_test(*null_pair, spec=spec, rng=rng)
    if hoeffding.rejects(0.05):
        assert binomial.rejects(0.05)


def test_report_requires_p_value_for_binomial():
    with pytest.raises(ValueError):
        TestReport(test_name="Binomial", statistic=0.3, seed=1)


def test_permutation_null_is_reproducible(null_pair, small_forest):
    data = LabeledDataset.from_samples(*null_pair)
    a = permutation_oob_null(data, small_forest, 4, RngStream(2))
    b = permutation_oob_null(data, small_forest, 4, RngStream(2), n_jobs=2)
    assert_allclose(a, b)
    assert a.shape == (4,)
    assert np.all((a >= 0) & (a <= 1))


def test_hyporf_detects_separated_samples(separated_pair, small_forest, rng):
    report = hyporf_test(*separated_pair, config=small_forest, K=10, rng=rng)
    assert report.test_name == "HypoRF"
    assert report.statistic < 0.1
    assert report.p_value < 0.01
    assert report.permutation_p_value == pytest.approx(1 / 11)
    assert report.n_permutations_or_K == 10
    assert report.null_sd > 0


def test_hyporf_needs_two_permutations(separated_pair, small_forest, rng):
    with pytest.raises(InvalidArgumentError):
        hyporf_test(*separated_pair, config=small_forest, K=1, rng=rng)


def test_hyporf_degenerate_null(separated_pair, small_forest, rng, monkeypatch):
    monkeypatch.setattr(oob, "permutation_oob_null", lambda *args, **kwargs: np.full(3, 0.5))
    with pytest.raises(DegenerateNullError) as excinfo:
        hyporf_test(*separated_pair, config=small_forest, K=3, rng=rng)
    assert excinfo.value.values == [0.5, 0.5, 0.5]


def test_partition_variance_decomposition():
    h = np.array([[0.4, 0.6], [0.5, 0.5], [0.3, 0.5]])
    est = partition_variance(h)
    row_means = h.mean(axis=1)
    assert est.u_hat == pytest.approx(row_means.mean())
    assert est.sigma2_wp == pytest.approx(((h - row_means[:, None]) ** 2).sum() / (3 * 2 * 1))
    assert est.sigma2_bp == pytest.approx(((row_means - row_means.mean()) ** 2).sum() / 3)
    assert est.v_hat == pytest.approx(est.sigma2_wp - est.sigma2_bp)
    assert not est.fallback
    assert est.variance == pytest.approx(est.v_hat)


def test_partition_variance_falls_back_when_not_positive():
    # identical within each partition, different across: sigma2_wp = 0 < sigma2_bp
    h = np.array([[0.4, 0.4], [0.6, 0.6]])
    est = partition_variance(h)
    assert est.fallback
    assert est.v_hat < 0
    assert est.variance == est.sigma2_wp == 0.0


def test_draw_partition_disjoint_and_mixed(rng):
    labels = np.array([1] * 10 + [0] * 10, dtype=np.int8)
    subsets = draw_partition(labels, 2, 8, rng)
    assert subsets.shape == (2, 8)
    assert len(np.unique(subsets)) == 16
    for rows in subsets:
        assert 0 < labels[rows].sum() < 8


def test_draw_partition_gives_up(rng):
    labels = np.array([1, 0, 0, 0, 0, 0], dtype=np.int8)
    with pytest.raises(DegenerateSplitError):
        draw_partition(labels, 3, 2, rng, max_retries=5)


def test_ustat_detects_shifted_samples(small_forest, rng):
    gen = np.random.default_rng(21)
    x = gen.standard_normal((60, 3))
    y = gen.standard_normal((60, 3)) + 1.5
    report = ustat_test(x, y, config=small_forest, K=4, rng=rng)
    assert report.test_name == "UStat"
    assert report.details["u_hat"] < 0.4
    assert report.details["n_train"] == 60
    assert report.rejects(0.05)
    assert report.threshold == pytest.approx(stats.norm.ppf(0.05))


def test_ustat_rejects_oversized_subsets(separated_pair, small_forest, rng):
    with pytest.raises(InvalidArgumentError):
        ustat_test(*separated_pair, config=small_forest, K=4, n_train=41, rng=rng)


@pytest.mark.slow
def test_binomial_level_on_gaussian_null():
    scenario = ScenarioSpec(family=ScenarioFamily.MEAN_SHIFT, p=5, knob=0.0, n_per_class=50)
    spec = ClassifierSpec(forest=ForestConfig(num_trees=50))
    rejections = 0
    S = 200
    for s in range(S):
        pair = sample(scenario, RngStream(100, s))
        rejections += binomial_test(pair.x, pair.y, spec=spec, rng=RngStream(200, s)).rejects(0.05)
    # exact 99% band around 0.05 at S=200
    assert 3 <= rejections <= 19


@pytest.mark.slow
def test_hyporf_p_values_on_identical_files(null_pair):
    x = null_pair[0]
    small = [hyporf_test(x, x, config=ForestConfig(num_trees=50), K=30, rng=RngStream(s)).p_value <= 0.01
             for s in range(20)]
    assert sum(small) <= 1


@pytest.mark.slow
def test_permutation_null_centers_on_one_half():
    gen = np.random.default_rng(31)
    data = LabeledDataset.from_samples(gen.standard_normal((50, 10)), gen.standard_normal((50, 10)))
    null = permutation_oob_null(data, ForestConfig(num_trees=100), 200, RngStream(31), n_jobs=-1)
    assert abs(null.mean() - 0.5) <= 0.02


@pytest.mark.slow
def test_unpermuted_oob_rank_is_uniform_under_null():
    K, runs = 9, 500
    config = ForestConfig(num_trees=25)
    counts = np.zeros(K + 1, dtype=int)
    for s in range(runs):
        stream = RngStream(32, s)
        gen = np.random.default_rng(3200 + s)
        data = LabeledDataset.from_samples(gen.standard_normal((50, 10)), gen.standard_normal((50, 10)))
        observed = rf.oob_error(rf.fit(data, config, stream.child(0)), data)
        null = permutation_oob_null(data, config, K, stream.child(1), n_jobs=-1)
        # OOB errors are discrete; ties are broken at random
        ties = int(np.count_nonzero(null == observed))
        counts[int(np.count_nonzero(null < observed)) + int(gen.integers(0, ties + 1))] += 1
    assert stats.chisquare(counts).pvalue > 0.001


@pytest.mark.slow
def test_partition_variance_tracks_replication_variance():
    config = ForestConfig(num_trees=50)
    u_hats, variances = [], []
    for s in range(50):
        gen = np.random.default_rng(3300 + s)
        x, y = gen.standard_normal((50, 10)), gen.standard_normal((50, 10))
        report = ustat_test(x, y, config=config, K=50, n_train=50, m_partitions=2, rng=RngStream(33, s), n_jobs=-1)
        u_hats.append(report.details["u_hat"])
        variances.append(report.null_sd**2)
    empirical = np.var(u_hats, ddof=1)
    assert 0.5 * empirical <= np.median(variances) <= 2.0 * empirical


LEVEL_SUITE = [
    TestConfig(name="binomial", forest=ForestConfig(num_trees=50)),
    TestConfig(name="hyporf", permutations=100, forest=ForestConfig(num_trees=50)),
    TestConfig(name="ustat", ustat_replicates=50, forest=ForestConfig(num_trees=50)),
    TestConfig(name="mmdboot", mmd_permutations=200),
]


@pytest.mark.slow
@pytest.mark.parametrize("dist", ["rnorm", "rbinom", "rt", "mvrnorm", "rcont"])
def test_every_test_holds_its_level(dist):
    result = harness.run_level_check([dist], S=200, n=100, p=20, tests=LEVEL_SUITE, base_seed=34,
                                     jobs=os.cpu_count() or 1)
    for row in result.rows:
        assert row.failures == 0, row.test
        # exact 99% binomial band around 0.05 at S=200
        assert 0.015 <= row.power <= 0.095, (row.test, row.power)
