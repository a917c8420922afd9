"""Named study presets: the scenario grid of each published experiment, at desk or paper scale."""

from dataclasses import dataclass
import logging
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence

import numpy as np

from rftwosample.core.config import settings
from rftwosample.models.configs import ForestConfig, LevelDist, ScenarioFamily, ScenarioSpec, StudySpec, TestConfig
from rftwosample.utils.error_handling import InvalidArgumentError

logger = logging.getLogger(__name__)

Scale = Literal["desk", "paper"]
NConvention = Literal["total", "per-class"]

POWER_TESTS = ("binomial", "hyporf", "mmdboot")
LEVEL_TESTS = ("binomial", "hyporf", "ustat", "mmdboot")
BLOB_VARIANCE_DIMS = (2, 4, 6, 8, 10, 20, 40, 80, 120, 200)
BLOB_TABLE_N = 600
BLOB_TABLE_S = 500
MEANSHIFT_P = 200
MEANSHIFT_N = 300
MEANSHIFT_DESK_S = 50


@dataclass(frozen=True)
class ScaleSettings:
    n: int
    p: int
    S: int
    trees: int
    paper: bool


def scale_settings(scale: Scale) -> ScaleSettings:
    if scale == "desk":
        return ScaleSettings(settings.DESK_N, settings.DESK_P, settings.DESK_S, settings.DESK_TREES, paper=False)
    if scale == "paper":
        return ScaleSettings(settings.PAPER_N, settings.PAPER_P, settings.PAPER_S, settings.PAPER_TREES, paper=True)
    raise InvalidArgumentError(f"scale must be 'desk' or 'paper', got {scale!r}")


def _grid(start: float, stop: float, points: int) -> List[float]:
    return [round(float(v), 4) for v in np.linspace(start, stop, points)]


def default_tests(names: Sequence[str], trees: int) -> List[TestConfig]:
    forest = ForestConfig(num_trees=trees, min_node_size=settings.MIN_NODE_SIZE)
    return [TestConfig(name=name, forest=forest) for name in names]


@dataclass(frozen=True)
class PresetContext:
    scale: ScaleSettings
    base_seed: int
    n_convention: NConvention


PresetBuilder = Callable[[PresetContext], Dict[str, object]]


def _mean_shift(d: Optional[int], full_points: int) -> PresetBuilder:
    def build(ctx: PresetContext) -> Dict[str, object]:
        if d is None:
            points = full_points if ctx.scale.paper else 5
            return dict(scenario=dict(family=ScenarioFamily.MEAN_SHIFT, p=ctx.scale.p), grid=_grid(0.0, 1.0, points))
        # fixed d keeps p = 200 at both scales
        fields: Dict[str, object] = dict(
            scenario=dict(family=ScenarioFamily.MEAN_SHIFT, p=MEANSHIFT_P, d=d, n_per_class=MEANSHIFT_N),
            grid=_grid(0.0, 1.0, full_points) if ctx.scale.paper else [0.0, 0.5, 1.0],
        )
        if not ctx.scale.paper:
            fields["S"] = MEANSHIFT_DESK_S
        return fields
    return build


def _contamination(ctx: PresetContext) -> Dict[str, object]:
    points = 11 if ctx.scale.paper else 6
    return dict(scenario=dict(family=ScenarioFamily.CONTAMINATION, p=ctx.scale.p), grid=_grid(0.5, 1.0, points))


def _correlation_all(ctx: PresetContext) -> Dict[str, object]:
    points = 16 if ctx.scale.paper else 4
    return dict(scenario=dict(family=ScenarioFamily.CORRELATED_GAUSSIAN, p=ctx.scale.p), grid=_grid(0.0, 0.15, points))


def _correlation_sparse(ctx: PresetContext) -> Dict[str, object]:
    points = 16 if ctx.scale.paper else 4
    return dict(scenario=dict(family=ScenarioFamily.CORRELATED_GAUSSIAN, p=10, d=4), grid=_grid(0.0, 0.375, points))


def _tcopula_all(ctx: PresetContext) -> Dict[str, object]:
    p = 60 if ctx.scale.paper else min(60, ctx.scale.p)
    grid = _grid(1.0, 8.0, 15) if ctx.scale.paper else [1.0, 2.0, 4.0, 8.0]
    return dict(scenario=dict(family=ScenarioFamily.T_COPULA, p=p, d=p, knob=grid[0]), grid=grid)


def _tcopula_sparse(ctx: PresetContext) -> Dict[str, object]:
    p = ctx.scale.p
    grid = _grid(1.0, 8.0, 15) if ctx.scale.paper else [1.0, 2.0, 4.0, 8.0]
    return dict(scenario=dict(family=ScenarioFamily.T_COPULA, p=p, d=max(1, p // 10), knob=grid[0]), grid=grid)


def _blob_n(ctx: PresetContext) -> int:
    table_n = BLOB_TABLE_N if ctx.scale.paper else 2 * ctx.scale.n
    return table_n // 2 if ctx.n_convention == "total" else table_n


def _blob_correlation(p: int, base: int) -> PresetBuilder:
    def build(ctx: PresetContext) -> Dict[str, object]:
        return dict(
            scenario=dict(family=ScenarioFamily.BLOB_CORRELATION, p=p, d=base, n_per_class=_blob_n(ctx),
                          shared_seed=ctx.base_seed),
            grid=[0.0, 1.0],
            S=BLOB_TABLE_S if ctx.scale.paper else ctx.scale.S,
        )
    return build


def _blob_variance(ctx: PresetContext) -> Dict[str, object]:
    dims = [p for p in BLOB_VARIANCE_DIMS if ctx.scale.paper or p <= ctx.scale.p]
    return dict(scenario=dict(family=ScenarioFamily.BLOB_VARIANCE, p=dims[0], knob=1.0), axis="p",
                grid=[float(p) for p in dims])


def _level_check(ctx: PresetContext) -> Dict[str, object]:
    return dict(
        scenario=dict(family=ScenarioFamily.LEVEL_CHECK, p=ctx.scale.p, level_dist=LevelDist.RNORM),
        axis="level_dist",
        level_dists=list(LevelDist),
        tests=LEVEL_TESTS,
    )


PRESETS: Dict[str, PresetBuilder] = {
    "meanshift-dense": _mean_shift(None, 16),
    "meanshift-moderate": _mean_shift(20, 9),
    "meanshift-sparse": _mean_shift(2, 9),
    "contamination": _contamination,
    "correlation-all": _correlation_all,
    "correlation-sparse": _correlation_sparse,
    "tcopula-all": _tcopula_all,
    "tcopula-sparse": _tcopula_sparse,
    "blob-correlation-2x2": _blob_correlation(2, 2),
    "blob-correlation-2x3": _blob_correlation(2, 3),
    "blob-correlation-3x2": _blob_correlation(3, 2),
    "blob-correlation-3x3": _blob_correlation(3, 3),
    "blob-variance": _blob_variance,
    "level-check": _level_check,
}


def preset_names() -> List[str]:
    return sorted(PRESETS)


def build_preset(name: str, scale: Scale = "desk", base_seed: int = settings.DEFAULT_SEED, jobs: int = 1,
                 output: Optional[Path] = None, n_convention: NConvention = "total", S: Optional[int] = None,
                 tests: Optional[Sequence[str]] = None, alpha: float = settings.DEFAULT_ALPHA,
                 record_runtime: bool = False) -> StudySpec:
    """StudySpec of the named preset.

    ``n_convention`` only affects the blob-correlation presets, whose published
    table gives a single sample size n: "total" reads it as 2n, "per-class" as n.
    """
    if name not in PRESETS:
        raise InvalidArgumentError(f"unknown preset {name!r}; choose from {', '.join(preset_names())}")
    ctx = PresetContext(scale=scale_settings(scale), base_seed=base_seed, n_convention=n_convention)
    fields = PRESETS[name](ctx)

    scenario = dict(n_per_class=ctx.scale.n)
    scenario.update(fields.pop("scenario"))
    test_names = tests or fields.pop("tests", POWER_TESTS)
    fields.pop("tests", None)
    runs = S if S is not None else fields.pop("S", ctx.scale.S)
    fields.pop("S", None)

    spec = StudySpec(
        scenario=ScenarioSpec(**scenario),
        tests=default_tests(test_names, ctx.scale.trees),
        S=runs,
        base_seed=base_seed,
        alpha=alpha,
        jobs=jobs,
        output=output,
        preset=name,
        record_runtime=record_runtime,
        **fields,
    )
    logger.debug(f"Preset {name} ({scale}): {len(spec.grid_points())} grid points, S={spec.S}")
    return spec
