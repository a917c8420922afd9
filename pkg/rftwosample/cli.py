#!/usr/bin/env python
"""Command-line entry point: single tests on CSV samples and the Monte-Carlo studies.

Exit codes: 0 success, 2 usage or input error, 3 computation error,
4 a study finished with aborted grid points.
"""

import argparse
import csv
import io
import logging
from pathlib import Path
import sys
from typing import Callable, Dict, List, Optional, Sequence

from pydantic import ValidationError

from rftwosample.core.config import settings
from rftwosample.models.configs import ClassifierSpec, ForestConfig, KernelConfig, LevelDist, SplitPlan, StudySpec
from rftwosample.models.reports import TestReport
from rftwosample.services.simulation import harness, presets, store
from rftwosample.services.twosample.holdout import binomial_test, hoeffding_test
from rftwosample.services.twosample.mmd import mmd_boot_test
from rftwosample.services.twosample.oob import hyporf_test, ustat_test
from rftwosample.utils.error_handling import InputFormatError, InvalidArgumentError, TwoSampleError
from rftwosample.utils.file_ops import atomic_output, load_sample_csv
from rftwosample.utils.numkit import RngStream

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTATION = 3
EXIT_PARTIAL = 4

METHODS = ("binomial", "hoeffding", "hyporf", "ustat", "mmdboot")
VAR_CHECK_K_GRID = "10,20,40,60,80,100,150,200,500,700,1000"


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--seed', type=int, default=None,
                        help=f'Root seed of every random stream (default: {settings.DEFAULT_SEED})')
    parser.add_argument('--jobs', type=int, default=None,
                        help=f'Parallel worker processes (default: {settings.DEFAULT_JOBS})')
    parser.add_argument('--output', '-o', type=Path, default=None,
                        help='Output file (default: standard output)')


def _add_forest_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--trees', type=int, default=settings.NUM_TREES,
                        help=f'Trees per forest (default: {settings.NUM_TREES})')
    parser.add_argument('--min-node-size', type=int, default=settings.MIN_NODE_SIZE,
                        help=f'Minimum node size to attempt a split (default: {settings.MIN_NODE_SIZE})')
    parser.add_argument('--mtry', type=int, default=None,
                        help='Features tried per split (default: floor(sqrt(p)))')
    parser.add_argument('--max-depth', type=int, default=None,
                        help='Maximum tree depth (default: unlimited)')


def _add_study_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--scale', choices=['desk', 'paper'], default='desk',
                        help='Sample sizes, run counts and forest size (default: desk)')
    parser.add_argument('--runs', type=int, default=None,
                        help='Monte-Carlo runs S per grid point (default: from the scale)')
    parser.add_argument('--tests', type=str, default=None,
                        help=f'Comma-separated tests out of {", ".join(METHODS)}')
    parser.add_argument('--alpha', type=float, default=settings.DEFAULT_ALPHA,
                        help=f'Level of every decision (default: {settings.DEFAULT_ALPHA})')
    parser.add_argument('--record-runtime', action='store_true',
                        help='Fill the mean_runtime_ms column (makes the table nondeterministic)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='rftwosample',
                                     description='Random Forest two-sample tests and their power studies')
    parser.add_argument('--verbose', '-v', action='store_true',
                        help='Enable debug logging and progress bars')
    commands = parser.add_subparsers(dest='command', required=True)

    test = commands.add_parser('test', help='Run one test on two CSV samples')
    test.add_argument('x', type=Path, help='CSV file of the first sample (rows are observations)')
    test.add_argument('y', type=Path, help='CSV file of the second sample')
    test.add_argument('--method', choices=METHODS, default='hyporf',
                      help='Test to run (default: hyporf)')
    test.add_argument('--alpha', type=float, default=settings.DEFAULT_ALPHA,
                      help=f'Level of the reported decision (default: {settings.DEFAULT_ALPHA})')
    test.add_argument('--k', type=int, default=None,
                      help=f'Permutations for hyporf (default: {settings.DEFAULT_PERMUTATIONS}) '
                           f'or partitions for ustat (default: {settings.USTAT_REPLICATES})')
    test.add_argument('--b', type=int, default=settings.DEFAULT_MMD_PERMUTATIONS,
                      help=f'Permutations for mmdboot (default: {settings.DEFAULT_MMD_PERMUTATIONS})')
    test.add_argument('--classifier', choices=['random_forest', 'lda'], default='random_forest',
                      help='Classifier of the holdout tests (default: random_forest)')
    test.add_argument('--n-train', type=int, default=None,
                      help='Training rows of the holdout tests, or rows per subset for ustat')
    test.add_argument('--partitions', type=int, default=settings.USTAT_PARTITIONS,
                      help=f'Disjoint subsets per ustat partition (default: {settings.USTAT_PARTITIONS})')
    test.add_argument('--bandwidth', type=float, default=None,
                      help='Gaussian kernel bandwidth for mmdboot (default: median heuristic)')
    test.add_argument('--format', choices=['json', 'csv'], default='json',
                      help='Report format (default: json)')
    _add_forest_options(test)
    _add_run_options(test)
    test.set_defaults(handler=cmd_test)

    power = commands.add_parser('power-study', help='Run a power study from a preset or a StudySpec file')
    power.add_argument('--preset', choices=presets.preset_names(), default=None,
                       help='Named experiment grid')
    power.add_argument('--config', type=Path, default=None,
                       help='StudySpec file (JSON object or key=value lines)')
    power.add_argument('--n-convention', choices=['total', 'per-class'], default='total',
                       help='How blob presets read the published sample size (default: total)')
    _add_study_options(power)
    _add_run_options(power)
    power.set_defaults(handler=cmd_power_study)

    level = commands.add_parser('level-check', help='Realized level under the null distributions')
    level.add_argument('--dists', type=str, default='all',
                       help='Comma-separated distribution names, or "all" (default: all)')
    level.add_argument('--n', type=int, default=None,
                       help='Observations per sample (default: from the scale)')
    level.add_argument('--p', type=int, default=None,
                       help='Dimension (default: from the scale)')
    _add_study_options(level)
    _add_run_options(level)
    level.set_defaults(handler=cmd_level_check)

    var = commands.add_parser('var-check', help='Spread of the permutation variance estimate across K')
    var.add_argument('--k-grid', type=str, default=VAR_CHECK_K_GRID,
                     help=f'Comma-separated permutation counts (default: {VAR_CHECK_K_GRID})')
    var.add_argument('--runs', type=int, default=100,
                     help='Repetitions per K (default: 100)')
    var.add_argument('--n', type=int, default=50,
                     help='Observations per sample (default: 50)')
    var.add_argument('--p', type=int, default=10,
                     help='Dimension (default: 10)')
    _add_forest_options(var)
    _add_run_options(var)
    var.set_defaults(handler=cmd_var_check)
    return parser


def flag_surface(parser: argparse.ArgumentParser) -> List[str]:
    """One line per option string group, prefixed by its subcommand."""
    lines = [f"{parser.prog} {' '.join(a.option_strings)}" for a in parser._actions if a.option_strings]
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for name, sub in action.choices.items():
                lines.extend(f"{name} {' '.join(a.option_strings)}" for a in sub._actions if a.option_strings)
    return lines


def _seed(args) -> int:
    return settings.DEFAULT_SEED if args.seed is None else args.seed


def _jobs(args) -> int:
    jobs = settings.DEFAULT_JOBS if args.jobs is None else args.jobs
    if jobs < 1:
        raise InvalidArgumentError(f"--jobs must be positive, got {jobs}")
    return jobs


def _forest_config(args) -> ForestConfig:
    return ForestConfig(num_trees=args.trees, min_node_size=args.min_node_size, mtry=args.mtry,
                        max_depth=args.max_depth)


def _split_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(',') if item.strip()]


def _progress(args) -> bool:
    return args.verbose or sys.stderr.isatty()


def _emit(text: str, output: Optional[Path]) -> None:
    if output is None:
        sys.stdout.write(text)
        return
    with atomic_output(output, newline="") as handle:
        handle.write(text)
    logger.info(f"Wrote {output}")


def render_report(report: TestReport, fmt: str) -> str:
    if fmt == 'json':
        return report.model_dump_json(indent=2) + "\n"
    flat: Dict[str, object] = {}
    for key, value in report.model_dump().items():
        if isinstance(value, dict):
            flat.update({f"{key}_{k}": v for k, v in value.items()})
        else:
            flat[key] = "" if value is None else value
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(list(flat))
    writer.writerow(list(flat.values()))
    return buffer.getvalue()


def cmd_test(args) -> int:
    x = load_sample_csv(args.x)
    y = load_sample_csv(args.y)
    if x.shape[1] != y.shape[1]:
        raise InputFormatError(f"column counts differ: {args.x} has {x.shape[1]}, {args.y} has {y.shape[1]}")

    rng = RngStream(_seed(args))
    jobs = _jobs(args)
    forest = _forest_config(args)
    logger.info(f"Running {args.method} on {x.shape[0]} + {y.shape[0]} rows, p={x.shape[1]}")

    if args.method in ('binomial', 'hoeffding'):
        spec = ClassifierSpec(kind=args.classifier, forest=forest)
        plan = None
        if args.n_train is not None:
            plan = SplitPlan(n_train=args.n_train, m_n=x.shape[0] + y.shape[0] - args.n_train)
        runner = binomial_test if args.method == 'binomial' else hoeffding_test
        report = runner(x, y, spec=spec, plan=plan, rng=rng, alpha=args.alpha, n_jobs=jobs)
    elif args.method == 'hyporf':
        K = settings.DEFAULT_PERMUTATIONS if args.k is None else args.k
        report = hyporf_test(x, y, config=forest, K=K, rng=rng, alpha=args.alpha, n_jobs=jobs)
    elif args.method == 'ustat':
        K = settings.USTAT_REPLICATES if args.k is None else args.k
        report = ustat_test(x, y, config=forest, K=K, n_train=args.n_train, m_partitions=args.partitions,
                            alpha=args.alpha, rng=rng, n_jobs=jobs)
    else:
        kernel = KernelConfig() if args.bandwidth is None else KernelConfig(bandwidth_sigma=args.bandwidth)
        report = mmd_boot_test(x, y, config=kernel, B=args.b, rng=rng, alpha=args.alpha)

    _emit(render_report(report, args.format), args.output)
    return EXIT_OK


def _finish_study(result, output: Optional[Path]) -> int:
    if output is None:
        buffer = io.StringIO()
        store.write_table(result, buffer)
        sys.stdout.write(buffer.getvalue())
    if result.has_aborted:
        logger.error(f"Study finished with aborted points: {', '.join(result.aborted)}")
        return EXIT_PARTIAL
    return EXIT_OK


def _load_study_config(path: Path) -> StudySpec:
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise InputFormatError(f"cannot read study file: {e}", path=str(path)) from e
    return StudySpec.from_text(text)


def cmd_power_study(args) -> int:
    if (args.preset is None) == (args.config is None):
        raise InvalidArgumentError("power-study needs exactly one of --preset and --config")

    if args.config is not None:
        spec = _load_study_config(args.config)
        update = {}
        if args.seed is not None:
            update["base_seed"] = args.seed
        if args.jobs is not None:
            update["jobs"] = _jobs(args)
        if args.output is not None:
            update["output"] = args.output
        if args.runs is not None:
            update["S"] = args.runs
        spec = StudySpec.model_validate({**spec.model_dump(), **update})
    else:
        spec = presets.build_preset(
            args.preset,
            scale=args.scale,
            base_seed=_seed(args),
            jobs=_jobs(args),
            output=args.output,
            n_convention=args.n_convention,
            S=args.runs,
            tests=_split_list(args.tests) if args.tests else None,
            alpha=args.alpha,
            record_runtime=args.record_runtime,
        )

    logger.info(f"Power study: {len(spec.grid_points())} grid points x {len(spec.tests)} tests, S={spec.S}")
    result = harness.run_power_study(spec, progress=_progress(args))
    return _finish_study(result, spec.output)


def cmd_level_check(args) -> int:
    if args.dists.strip() == 'all':
        dists = list(LevelDist)
    else:
        try:
            dists = [LevelDist(name) for name in _split_list(args.dists)]
        except ValueError as e:
            raise InvalidArgumentError(f"--dists: {e}") from e

    scale = presets.scale_settings(args.scale)
    test_names = _split_list(args.tests) if args.tests else presets.LEVEL_TESTS
    result = harness.run_level_check(
        dists,
        S=scale.S if args.runs is None else args.runs,
        n=scale.n if args.n is None else args.n,
        p=scale.p if args.p is None else args.p,
        tests=presets.default_tests(test_names, scale.trees),
        base_seed=_seed(args),
        alpha=args.alpha,
        jobs=_jobs(args),
        output=args.output,
        record_runtime=args.record_runtime,
        progress=_progress(args),
    )
    return _finish_study(result, args.output)


def cmd_var_check(args) -> int:
    try:
        k_grid = [int(k) for k in _split_list(args.k_grid)]
    except ValueError as e:
        raise InvalidArgumentError(f"--k-grid: {e}") from e

    result = harness.run_var_check(k_grid, S=args.runs, n=args.n, p=args.p, config=_forest_config(args),
                                   base_seed=_seed(args), jobs=_jobs(args), output=args.output,
                                   progress=_progress(args))
    print(f"{'K':>6} {'n':>4} {'q1':>12} {'median':>12} {'q3':>12} {'iqr':>12}", file=sys.stderr)
    for s in harness.summarize_var_check(result):
        print(f"{s.K:>6} {s.n:>4} {s.q1:>12.6g} {s.median:>12.6g} {s.q3:>12.6g} {s.iqr:>12.6g}", file=sys.stderr)
    return _finish_study(result, args.output)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )

    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except (InputFormatError, InvalidArgumentError) as e:
        logger.error(str(e))
        return EXIT_INPUT
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_INPUT
    except TwoSampleError as e:
        logger.error(f"Computation failed: {e}", exc_info=args.verbose)
        return EXIT_COMPUTATION
    except Exception as e:
        logger.error(f"An unexpected error occurred: {e}", exc_info=True)
        return EXIT_COMPUTATION


if __name__ == "__main__":
    sys.exit(main())
