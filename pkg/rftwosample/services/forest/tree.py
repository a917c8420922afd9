"""A single classification tree grown on bootstrap counts with Gini splits."""

from dataclasses import dataclass
import logging
from typing import List, Optional, Sequence

import numpy as np

from rftwosample.models.configs import ForestConfig
from rftwosample.utils.numkit import RngStream

logger = logging.getLogger(__name__)

LEAF = -1

# Impurity decreases at or below this are treated as no improvement
_MIN_DECREASE = 1e-12


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    decrease: float


@dataclass(frozen=True)
class Tree:
    """Array-backed binary tree.

    Node ``i`` is internal when ``feature[i] >= 0``; an observation goes to
    ``left[i]`` when its value on that feature is ``<= threshold[i]``. ``counts``
    holds the bootstrap-weighted class counts (count0, count1) of every node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    in_bag: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature == LEAF))

    @property
    def leaf_labels(self) -> np.ndarray:
        # ties go to label 0
        return (self.counts[:, 1] > self.counts[:, 0]).astype(np.int8)

    def apply(self, features: np.ndarray) -> np.ndarray:
        """Index of the leaf reached by every row of ``features``."""
        node = np.zeros(features.shape[0], dtype=np.int64)
        rows = np.arange(features.shape[0])
        active = self.feature[node] != LEAF
        while np.any(active):
            r = rows[active]
            n = node[r]
            go_left = features[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] != LEAF
        return node

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.leaf_labels[self.apply(features)]


def gini_decrease(left0, left1, right0, right1) -> np.ndarray:
    """Weighted Gini impurity decrease of the partitions described by class counts."""
    left0, left1 = np.asarray(left0, dtype=float), np.asarray(left1, dtype=float)
    right0, right1 = np.asarray(right0, dtype=float), np.asarray(right1, dtype=float)
    n_left = left0 + left1
    n_right = right0 + right1
    total = n_left + n_right
    parent = 1.0 - ((left0 + right0) ** 2 + (left1 + right1) ** 2) / total**2
    with np.errstate(divide="ignore", invalid="ignore"):
        purity = np.where(n_left > 0, (left0**2 + left1**2) / n_left, 0.0)
        purity = purity + np.where(n_right > 0, (right0**2 + right1**2) / n_right, 0.0)
    return parent - 1.0 + purity / total


def best_split(features: np.ndarray, labels: np.ndarray, weights: np.ndarray,
               candidates: Sequence[int]) -> Optional[Split]:
    """Exhaustive Gini search over the candidate features of one node.

    Only rows with positive weight take part. Thresholds sit at the midpoint of
    adjacent distinct values; the first best (feature, cut) in candidate order wins.
    Returns None when no cut strictly decreases the impurity.
    """
    mask = weights > 0
    x_node, y_node, w_node = features[mask], labels[mask], weights[mask].astype(float)
    if x_node.shape[0] < 2:
        return None

    best: Optional[Split] = None
    for feat in candidates:
        column = x_node[:, feat]
        order = np.argsort(column, kind="stable")
        xs = column[order]
        w = w_node[order]
        ones = w * y_node[order]
        cum1 = np.cumsum(ones)[:-1]
        cum = np.cumsum(w)[:-1]
        total1, total = ones.sum(), w.sum()
        valid = xs[:-1] < xs[1:]
        if not np.any(valid):
            continue
        decrease = gini_decrease(cum - cum1, cum1, (total - total1) - (cum - cum1), total1 - cum1)
        decrease = np.where(valid, decrease, -np.inf)
        pos = int(np.argmax(decrease))
        if decrease[pos] <= _MIN_DECREASE:
            continue
        if best is None or decrease[pos] > best.decrease:
            lo, hi = xs[pos], xs[pos + 1]
            threshold = lo + (hi - lo) / 2.0
            if not lo <= threshold < hi:
                threshold = lo
            best = Split(int(feat), float(threshold), float(decrease[pos]))
    return best


def grow_tree(features: np.ndarray, labels: np.ndarray, config: ForestConfig,
              mtry: int, rng: RngStream) -> Tree:
    """Grow one tree on a bootstrap resample drawn from ``rng``."""
    gen = rng.generator()
    n_rows, p = features.shape
    n_draws = max(1, int(round(n_rows * config.bootstrap_fraction)))
    draws = gen.integers(0, n_rows, size=n_draws)
    root_weights = np.bincount(draws, minlength=n_rows)

    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    counts: List[List[int]] = []

    def new_node(weights: np.ndarray) -> int:
        c1 = int(weights[labels == 1].sum())
        feature.append(LEAF)
        threshold.append(np.nan)
        left.append(LEAF)
        right.append(LEAF)
        counts.append([int(weights.sum()) - c1, c1])
        return len(feature) - 1

    stack = [(new_node(root_weights), root_weights, 0)]
    while stack:
        node, weights, depth = stack.pop()
        c0, c1 = counts[node]
        if c0 + c1 < config.min_node_size or c0 == 0 or c1 == 0:
            continue
        if config.max_depth is not None and depth >= config.max_depth:
            continue
        candidates = gen.choice(p, size=mtry, replace=False)
        split = best_split(features, labels, weights, candidates)
        if split is None:
            continue
        goes_left = features[:, split.feature] <= split.threshold
        left_weights = np.where(goes_left, weights, 0)
        right_weights = np.where(goes_left, 0, weights)
        feature[node] = split.feature
        threshold[node] = split.threshold
        left[node] = new_node(left_weights)
        right[node] = new_node(right_weights)
        stack.append((right[node], right_weights, depth + 1))
        stack.append((left[node], left_weights, depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.int64),
        in_bag=root_weights > 0,
    )
