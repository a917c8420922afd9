import json
import os

from pydantic import ValidationError
import pytest

from rftwosample.models.configs import (
    ForestConfig,
    LevelDist,
    ScenarioFamily,
    ScenarioSpec,
    StudySpec,
    TestConfig,
)
from rftwosample.models.reports import StudyResult
from rftwosample.services.simulation import harness, store
from rftwosample.services.simulation.presets import build_preset, preset_names
from rftwosample.utils.error_handling import InvalidArgumentError, ResultVersionError


def quick_tests():
    return [TestConfig(name="binomial", classifier="lda"), TestConfig(name="mmdboot", mmd_permutations=50)]


def quick_study(output=None, jobs=1, **kwargs):
    fields = dict(
        scenario=ScenarioSpec(family=ScenarioFamily.MEAN_SHIFT, p=2, n_per_class=20),
        grid=[0.0, 3.0],
        tests=quick_tests(),
        S=6,
        base_seed=3,
        jobs=jobs,
        output=output,
    )
    fields.update(kwargs)
    return StudySpec(**fields)


def test_power_study_rows_and_conservation():
    result = harness.run_power_study(quick_study())
    assert len(result.rows) == 4
    for row in result.rows:
        assert row.rejections + row.failures <= row.S == 6
        assert row.power == pytest.approx(row.rejections / 6)
        assert row.mean_runtime_ms is None
    # a three-sigma shift is found every time by both tests
    assert result.power_of("binomial", "3.0") == 1.0
    assert result.power_of("mmdboot", "3.0") == 1.0
    assert not result.has_aborted


def test_power_study_records_runtime():
    result = harness.run_power_study(quick_study(record_runtime=True, grid=[1.0]))
    assert all(row.mean_runtime_ms is not None and row.mean_runtime_ms >= 0 for row in result.rows)


def test_study_table_does_not_depend_on_jobs(tmp_path):
    harness.run_power_study(quick_study(output=tmp_path / "serial.csv", jobs=1))
    harness.run_power_study(quick_study(output=tmp_path / "parallel.csv", jobs=2))
    assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "parallel.csv").read_bytes()


def test_persisted_study_loads_back(tmp_path):
    output = tmp_path / "study.csv"
    result = harness.run_power_study(quick_study(output=output))
    loaded = store.load(output)
    assert isinstance(loaded, StudyResult)
    assert loaded.rows == result.rows
    assert loaded.fingerprint == result.fingerprint
    meta = json.loads(store.sidecar_path(output).read_text())
    assert meta["completed"] == ["0.0", "3.0"]
    assert meta["spec"]["S"] == 6


def test_study_resumes_completed_points(tmp_path, monkeypatch):
    output = tmp_path / "study.csv"
    first = harness.run_power_study(quick_study(output=output))

    def no_more_runs(*args, **kwargs):
        raise AssertionError("completed grid point was recomputed")

    monkeypatch.setattr(harness.StudyRunner, "run_grid_point", no_more_runs)
    second = harness.run_power_study(quick_study(output=output))
    assert second.rows == first.rows


def test_changed_study_is_recomputed(tmp_path):
    output = tmp_path / "study.csv"
    harness.run_power_study(quick_study(output=output))
    changed = harness.run_power_study(quick_study(output=output, base_seed=4))
    assert store.load(output).fingerprint == changed.fingerprint


def test_failing_tests_abort_the_grid_point(monkeypatch):
    def broken(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(harness, "run_test", broken)
    result = harness.run_power_study(quick_study(grid=[1.0]))
    assert result.aborted == ["1.0"]
    assert all(row.failures == 6 and row.rejections == 0 for row in result.rows)


def test_load_rejects_other_schema_version(tmp_path):
    output = tmp_path / "study.csv"
    harness.run_power_study(quick_study(output=output, grid=[0.0]))
    meta_path = store.sidecar_path(output)
    meta = json.loads(meta_path.read_text())
    meta["schema_version"] = store.SCHEMA_VERSION + 1
    meta_path.write_text(json.dumps(meta))
    with pytest.raises(ResultVersionError):
        store.load(output)


def test_load_rejects_changed_header(tmp_path):
    output = tmp_path / "study.csv"
    harness.run_power_study(quick_study(output=output, grid=[0.0]))
    lines = output.read_text().splitlines()
    lines[0] = lines[0].replace("power", "rate")
    output.write_text("\n".join(lines) + "\n")
    with pytest.raises(ResultVersionError):
        store.load(output)


def test_level_check_one_row_per_distribution_and_test():
    result = harness.run_level_check([LevelDist.RNORM, "rcont"], S=3, n=15, p=10,
                                     tests=[TestConfig(name="binomial", classifier="lda")])
    assert [row.grid_label for row in result.rows] == ["rnorm", "cont_dist"]
    assert all(row.scenario_family == "LevelCheck" for row in result.rows)


def test_level_check_needs_distributions():
    with pytest.raises(InvalidArgumentError):
        harness.run_level_check([], S=3, n=15, p=2, tests=quick_tests())


def test_var_check_rows_and_summary(tmp_path):
    output = tmp_path / "var.csv"
    config = ForestConfig(num_trees=10, min_node_size=2)
    result = harness.run_var_check([2, 4], S=3, n=15, p=2, config=config, output=output)
    assert len(result.rows) == 6
    assert all(row.null_variance >= 0 for row in result.rows)
    assert len(result.fingerprint) == 64
    summaries = harness.summarize_var_check(result)
    assert [s.K for s in summaries] == [2, 4]
    assert all(s.n == 3 and s.q1 <= s.median <= s.q3 and s.iqr >= 0 for s in summaries)
    assert store.load(output).rows == result.rows


def test_var_check_is_reproducible():
    config = ForestConfig(num_trees=10, min_node_size=2)
    a = harness.run_var_check([3], S=2, n=12, p=2, config=config, base_seed=5)
    b = harness.run_var_check([3], S=2, n=12, p=2, config=config, base_seed=5)
    assert a.rows == b.rows


def test_var_check_rejects_small_k():
    with pytest.raises(InvalidArgumentError):
        harness.run_var_check([1, 10], S=2, n=10, p=2)


@pytest.mark.parametrize("name", preset_names())
def test_every_preset_builds_at_desk_scale(name):
    spec = build_preset(name)
    assert spec.preset == name
    assert spec.grid_points()
    for _, scenario in spec.grid_points():
        assert scenario.p >= 1


def test_blob_preset_reads_table_n_by_convention():
    total = build_preset("blob-correlation-2x2", scale="paper")
    per_class = build_preset("blob-correlation-2x2", scale="paper", n_convention="per-class")
    assert total.scenario.n_per_class == 300
    assert per_class.scenario.n_per_class == 600
    assert total.S == 500
    assert total.scenario.shared_seed == total.base_seed


def test_preset_overrides():
    spec = build_preset("meanshift-dense", S=7, tests=["hoeffding"], base_seed=9)
    assert spec.S == 7
    assert [t.name for t in spec.tests] == ["hoeffding"]
    assert spec.base_seed == 9


def test_level_check_preset_covers_every_distribution():
    spec = build_preset("level-check")
    assert [label for label, _ in spec.grid_points()] == [d.value for d in LevelDist]
    assert {t.name for t in spec.tests} == {"binomial", "hyporf", "ustat", "mmdboot"}


def test_unknown_preset():
    with pytest.raises(InvalidArgumentError):
        build_preset("nope")


def test_meanshift_sparse_desk_preset():
    spec = build_preset("meanshift-sparse")
    assert spec.scenario.p == 200
    assert spec.scenario.effective_d == 2
    assert spec.scenario.n_per_class == 300
    assert spec.grid == [0.0, 0.5, 1.0]
    assert spec.S == 50
    assert {t.forest.num_trees for t in spec.tests} == {300}


@pytest.mark.parametrize("name, d", [("meanshift-sparse", 2), ("meanshift-moderate", 20)])
def test_meanshift_presets_keep_absolute_d(name, d):
    for scale in ("desk", "paper"):
        spec = build_preset(name, scale=scale)
        assert spec.scenario.effective_d == d
        assert spec.scenario.p == 200
    assert len(build_preset(name, scale="paper").grid) == 9


@pytest.mark.parametrize("grid", [[0.0, 1.0, 0.0], [0.5, 0.50]])
def test_repeated_grid_values_are_rejected(grid):
    with pytest.raises(ValidationError, match="grid values must be unique"):
        quick_study(grid=grid)


def test_repeated_dimension_grid_is_rejected():
    with pytest.raises(ValidationError):
        quick_study(axis="p", grid=[2.0, 4.0, 2.0])


def test_level_check_repeated_distribution():
    # rcont is an alias of cont_dist
    with pytest.raises(InvalidArgumentError, match="unique"):
        harness.run_level_check(["cont_dist", "rcont"], S=2, n=10, p=10, tests=quick_tests())


def cpu_jobs():
    return os.cpu_count() or 1


@pytest.mark.slow
def test_sparse_mean_shift_power_rises_with_delta():
    spec = build_preset("meanshift-sparse", jobs=cpu_jobs())
    forest = ForestConfig(num_trees=100, min_node_size=4)
    spec = spec.model_copy(update={"tests": [TestConfig(name="binomial", forest=forest),
                                             TestConfig(name="hyporf", permutations=50, forest=forest)]})
    result = harness.run_power_study(spec)
    for test in ("binomial", "hyporf"):
        powers = [result.power_of(test, label) for label in ("0.0", "0.5", "1.0")]
        assert all(later >= earlier - 0.15 for earlier, later in zip(powers, powers[1:])), (test, powers)
    assert result.power_of("hyporf", "1.0") >= 0.8
    assert result.power_of("hyporf", "0.0") <= 0.15


@pytest.mark.slow
def test_permutation_variance_settles_by_k_200():
    result = harness.run_var_check([200, 1000], S=100, n=50, p=10, config=ForestConfig(num_trees=50),
                                   base_seed=35, jobs=cpu_jobs())
    at_200, at_1000 = harness.summarize_var_check(result)
    assert (at_200.K, at_1000.K) == (200, 1000)
    assert abs(at_200.iqr - at_1000.iqr) <= 0.5 * at_1000.iqr


@pytest.mark.slow
def test_blob_correlation_table_row():
    spec = build_preset("blob-correlation-2x2", scale="paper", S=200, jobs=cpu_jobs())
    forest = ForestConfig(num_trees=600, min_node_size=4)
    spec = spec.model_copy(update={
        "grid": [1.0],
        "tests": [TestConfig(name="hyporf", permutations=50, forest=forest),
                  TestConfig(name="binomial", forest=forest),
                  TestConfig(name="mmdboot", mmd_permutations=200)],
    })
    assert spec.scenario.n_per_class == 300
    result = harness.run_power_study(spec)
    assert result.power_of("hyporf", "1.0") == pytest.approx(0.306, abs=0.12)
    assert result.power_of("binomial", "1.0") == pytest.approx(0.204, abs=0.12)
    assert result.power_of("mmdboot", "1.0") <= 0.12
