"""Monte-Carlo studies: power curves, level checks and the permutation-variance check.

Run ``s`` of grid point ``g`` draws from ``RngStream(base_seed, s, lineage=(g,))``:
its sample pair from ``.child(0)`` and test ``t`` from ``.child(1 + t)``. Runs
are independent tasks, so any ``jobs`` setting gives the same table.
"""

from dataclasses import dataclass
import hashlib
import json
import logging
from pathlib import Path
import time
from typing import Dict, List, Optional, Sequence, Tuple

from joblib import Parallel, delayed
import numpy as np
from pydantic import ValidationError
from tqdm import tqdm

from rftwosample.core.config import settings
from rftwosample.core.dataset import LabeledDataset
from rftwosample.models.configs import (
    ClassifierSpec,
    ForestConfig,
    KernelConfig,
    LevelDist,
    ScenarioFamily,
    ScenarioSpec,
    SplitPlan,
    StudySpec,
    TestConfig,
)
from rftwosample.models.reports import StudyResult, StudyRow, TestReport, VarCheckResult, VarCheckRow
from rftwosample.services.simulation import store
from rftwosample.services.simulation.scenarios import SamplePair, sample
from rftwosample.services.twosample.holdout import binomial_test, hoeffding_test
from rftwosample.services.twosample.mmd import mmd_boot_test
from rftwosample.services.twosample.oob import hyporf_test, permutation_oob_null, ustat_test
from rftwosample.utils.error_handling import InvalidArgumentError, handle_study_errors
from rftwosample.utils.numkit import RngStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TestOutcome:
    """Decision of one test in one run; ``rejected`` is None when the test failed."""

    __test__ = False

    rejected: Optional[bool]
    runtime_ms: int = 0


def run_test(test: TestConfig, pair: SamplePair, alpha: float, rng: RngStream) -> TestReport:
    """Run one configured test on a sample pair."""
    if test.name in ("binomial", "hoeffding"):
        spec = ClassifierSpec(kind=test.classifier, forest=test.forest)
        plan = None
        if test.n_train is not None:
            rows = 2 * pair.n
            plan = SplitPlan(n_train=test.n_train, m_n=rows - test.n_train)
        runner = binomial_test if test.name == "binomial" else hoeffding_test
        return runner(pair.x, pair.y, spec=spec, plan=plan, rng=rng, alpha=alpha, alphas=[alpha])
    if test.name == "hyporf":
        return hyporf_test(pair.x, pair.y, config=test.forest, K=test.permutations, rng=rng,
                           alpha=alpha, alphas=[alpha])
    if test.name == "ustat":
        return ustat_test(pair.x, pair.y, config=test.forest, K=test.ustat_replicates, n_train=test.n_train,
                          m_partitions=test.ustat_partitions, alpha=alpha, rng=rng, alphas=[alpha])
    if test.name == "mmdboot":
        return mmd_boot_test(pair.x, pair.y, config=KernelConfig(), B=test.mmd_permutations, rng=rng,
                             alpha=alpha, alphas=[alpha])
    raise InvalidArgumentError(f"unknown test {test.name!r}")


def run_stream(base_seed: int, grid_index: int, run_index: int) -> RngStream:
    return RngStream(base_seed, run_index, lineage=(grid_index,))


def _single_run(scenario: ScenarioSpec, tests: Sequence[TestConfig], alpha: float,
                rng: RngStream) -> List[TestOutcome]:
    try:
        pair = sample(scenario, rng.child(0))
    except Exception as e:
        logger.warning(f"Run {rng.stream_id}: sampling failed: {e}")
        return [TestOutcome(None) for _ in tests]

    outcomes = []
    for t, test in enumerate(tests):
        start = time.perf_counter()
        try:
            report = run_test(test, pair, alpha, rng.child(1 + t))
            rejected = report.rejects(alpha)
        except Exception as e:
            logger.warning(f"Run {rng.stream_id}: test {test.display_name} failed: {e}")
            rejected = None
        outcomes.append(TestOutcome(rejected, int((time.perf_counter() - start) * 1000)))
    return outcomes


class StudyRunner:
    """Runs the grid points of a study, checkpointing after each one."""

    def __init__(self, spec: StudySpec, progress: bool = False):
        self.spec = spec
        self.progress = progress
        self.fingerprint = spec.fingerprint()
        self.spec_echo = json.loads(spec.model_dump_json())
        self.aborted: List[str] = []
        self.total_runs = 0
        self.total_failures = 0

    def _resumable_rows(self) -> Dict[str, List[StudyRow]]:
        output = self.spec.output
        if output is None or not Path(output).exists():
            return {}
        meta = store.load_meta(output)
        if meta is None or meta.get("fingerprint") != self.fingerprint:
            logger.info(f"Existing {output} belongs to another study; recomputing")
            return {}
        previous = store.load(output)
        completed = set(meta.get("completed", []))
        self.aborted.extend(label for label in meta.get("aborted", []) if label in completed)
        rows: Dict[str, List[StudyRow]] = {}
        for row in previous.rows:
            if row.grid_label in completed:
                rows.setdefault(row.grid_label, []).append(row)
        logger.info(f"Resuming: {len(rows)} of {len(self.spec.grid_points())} grid points already done")
        return rows

    def run_grid_point(self, grid_index: int, label: str, scenario: ScenarioSpec) -> List[StudyRow]:
        spec = self.spec
        logger.info(f"Grid point {label} ({scenario.family.value}, p={scenario.p}, n={scenario.n_per_class})")
        runs = Parallel(n_jobs=spec.jobs)(
            delayed(_single_run)(scenario, spec.tests, spec.alpha, run_stream(spec.base_seed, grid_index, s))
            for s in range(spec.S)
        )

        failed_runs = sum(1 for outcomes in runs if any(o.rejected is None for o in outcomes))
        self.total_runs += spec.S
        self.total_failures += failed_runs
        if failed_runs > settings.FAILURE_ABORT_FRACTION * spec.S:
            logger.error(f"Grid point {label}: {failed_runs} of {spec.S} runs failed; marking it aborted")
            self.aborted.append(label)

        rows = []
        for t, test in enumerate(spec.tests):
            outcomes = [run[t] for run in runs]
            rejections = sum(1 for o in outcomes if o.rejected)
            failures = sum(1 for o in outcomes if o.rejected is None)
            runtime = None
            if spec.record_runtime and failures < spec.S:
                runtime = float(np.mean([o.runtime_ms for o in outcomes if o.rejected is not None]))
            rows.append(StudyRow(
                scenario_family=scenario.family.value,
                knob=float(scenario.knob),
                p=scenario.p,
                d=scenario.effective_d,
                n_per_class=scenario.n_per_class,
                test=test.display_name,
                S=spec.S,
                rejections=rejections,
                power=rejections / spec.S,
                failures=failures,
                mean_runtime_ms=runtime,
                grid_label=label,
            ))
            logger.info(f"  {test.display_name}: {rejections}/{spec.S} rejections, {failures} failures")
        return rows

    def run(self) -> StudyResult:
        spec = self.spec
        done = self._resumable_rows()
        points = spec.grid_points()
        rows: List[StudyRow] = []
        completed: List[str] = []
        start = time.time()

        for grid_index, (label, scenario) in enumerate(tqdm(points, desc="Grid points", disable=not self.progress)):
            if label in done:
                rows.extend(done[label])
            else:
                rows.extend(self.run_grid_point(grid_index, label, scenario))
            completed.append(label)
            if spec.output is not None:
                store.persist(self._result(rows), spec.output, completed=completed)

        logger.info(f"Study finished in {time.time() - start:.2f} seconds")
        logger.info(f"  Grid points: {len(points)} ({len(done)} resumed)")
        logger.info(f"  Runs with a failed test: {self.total_failures} of {self.total_runs}")
        if self.aborted:
            logger.warning(f"  Aborted grid points: {', '.join(self.aborted)}")
        return self._result(rows)

    def _result(self, rows: List[StudyRow]) -> StudyResult:
        return StudyResult(rows=list(rows), base_seed=self.spec.base_seed, fingerprint=self.fingerprint,
                           spec=self.spec_echo, aborted=list(self.aborted))


@handle_study_errors("Power study failed")
def run_power_study(spec: StudySpec, progress: bool = False) -> StudyResult:
    """Rejection fractions of every test at every grid point over S runs."""
    return StudyRunner(spec, progress=progress).run()


@handle_study_errors("Level check failed")
def run_level_check(dists: Sequence[LevelDist], S: int, n: int, p: int, tests: Sequence[TestConfig],
                    base_seed: int = settings.DEFAULT_SEED, alpha: float = settings.DEFAULT_ALPHA,
                    jobs: int = 1, output: Optional[Path] = None, record_runtime: bool = False,
                    progress: bool = False) -> StudyResult:
    """Realized level of every test under each null distribution."""
    dists = [LevelDist(d) for d in dists]
    if not dists:
        raise InvalidArgumentError("level check needs at least one distribution")
    try:
        spec = StudySpec(
            scenario=ScenarioSpec(family=ScenarioFamily.LEVEL_CHECK, p=p, level_dist=dists[0], n_per_class=n),
            axis="level_dist",
            level_dists=dists,
            tests=list(tests),
            S=S,
            base_seed=base_seed,
            alpha=alpha,
            jobs=jobs,
            output=output,
            record_runtime=record_runtime,
        )
    except ValidationError as e:
        raise InvalidArgumentError(f"invalid level check: {e}") from e
    return StudyRunner(spec, progress=progress).run()


def _var_check_repetition(K: int, n: int, p: int, config: ForestConfig,
                          rng: RngStream) -> Optional[Tuple[float, float]]:
    try:
        scenario = ScenarioSpec(family=ScenarioFamily.MEAN_SHIFT, p=p, knob=0.0, n_per_class=n)
        pair = sample(scenario, rng.child(0))
        null = permutation_oob_null(LabeledDataset.from_samples(pair.x, pair.y), config, K, rng.child(1))
    except Exception as e:
        logger.warning(f"Variance check K={K}, repetition {rng.stream_id} failed: {e}")
        return None
    return float(null.mean()), float(null.var(ddof=1))


@handle_study_errors("Variance check failed")
def run_var_check(K_grid: Sequence[int], S: int, n: int, p: int, config: ForestConfig = ForestConfig(),
                  base_seed: int = settings.DEFAULT_SEED, jobs: int = 1, output: Optional[Path] = None,
                  progress: bool = False) -> VarCheckResult:
    """Variance of the permuted OOB errors after K permutations, S fresh H0 datasets per K."""
    K_grid = [int(k) for k in K_grid]
    if not K_grid or any(k < 2 for k in K_grid):
        raise InvalidArgumentError(f"K values must be >= 2, got {K_grid}")
    if S < 1:
        raise InvalidArgumentError(f"S must be positive, got {S}")

    echo = {"K_grid": K_grid, "S": S, "n": n, "p": p, "base_seed": base_seed,
            "forest": json.loads(config.model_dump_json())}
    rows: List[VarCheckRow] = []
    aborted: List[str] = []
    for index, K in enumerate(tqdm(K_grid, desc="K values", disable=not progress)):
        logger.info(f"Variance check K={K}: {S} repetitions")
        results = Parallel(n_jobs=jobs)(
            delayed(_var_check_repetition)(K, n, p, config, RngStream(base_seed, r, lineage=(index,)))
            for r in range(S)
        )
        failures = sum(1 for r in results if r is None)
        if failures > settings.FAILURE_ABORT_FRACTION * S:
            logger.error(f"Variance check K={K}: {failures} of {S} repetitions failed; marking it aborted")
            aborted.append(str(K))
        rows.extend(
            VarCheckRow(K=K, repetition=r, null_mean=res[0], null_variance=res[1])
            for r, res in enumerate(results) if res is not None
        )

    fingerprint = hashlib.sha256(json.dumps(echo, sort_keys=True).encode("utf-8")).hexdigest()
    result = VarCheckResult(rows=rows, base_seed=base_seed, fingerprint=fingerprint, spec=echo, aborted=aborted)
    if output is not None:
        store.persist(result, output, completed=[str(k) for k in K_grid])
    return result


@dataclass(frozen=True)
class VarCheckSummary:
    K: int
    n: int
    q1: float
    median: float
    q3: float

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def summarize_var_check(result: VarCheckResult) -> List[VarCheckSummary]:
    """Quartiles of the variance estimates per K, in increasing K."""
    by_k: Dict[int, List[float]] = {}
    for row in result.rows:
        by_k.setdefault(row.K, []).append(row.null_variance)
    summaries = []
    for K in sorted(by_k):
        q1, med, q3 = np.percentile(by_k[K], [25, 50, 75])
        summaries.append(VarCheckSummary(K=K, n=len(by_k[K]), q1=float(q1), median=float(med), q3=float(q3)))
    return summaries
