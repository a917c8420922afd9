"""Random Forest: fit, majority-vote prediction and out-of-bag error."""

from dataclasses import dataclass
import logging
from typing import Tuple

from joblib import Parallel, delayed
import numpy as np

from rftwosample.core.dataset import LabeledDataset
from rftwosample.models.configs import ForestConfig
from rftwosample.services.forest.tree import Tree, grow_tree
from rftwosample.utils.error_handling import DegenerateOOBError, InvalidArgumentError
from rftwosample.utils.numkit import RngStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Forest:
    trees: Tuple[Tree, ...]
    config: ForestConfig
    p: int
    n_rows: int

    @property
    def num_trees(self) -> int:
        return len(self.trees)


@dataclass(frozen=True)
class OOBSummary:
    """OOB error together with how many observations could be scored."""

    error: float
    n_used: int
    n_skipped: int


def fit(data: LabeledDataset, config: ForestConfig, rng: RngStream, n_jobs: int = 1) -> Forest:
    """Train ``config.num_trees`` trees; tree ``t`` draws only from ``rng.child(t)``.

    Raises:
        InvalidArgumentError: fewer than two rows or a single label present
    """
    if data.n_rows < 2:
        raise InvalidArgumentError(f"a forest needs at least 2 rows, got {data.n_rows}")
    if not data.has_both_labels():
        raise InvalidArgumentError("training data must contain both labels")
    mtry = config.resolve_mtry(data.dim)

    trees = Parallel(n_jobs=n_jobs)(
        delayed(grow_tree)(data.features, data.labels, config, mtry, rng.child(t))
        for t in range(config.num_trees)
    )
    return Forest(trees=tuple(trees), config=config, p=data.dim, n_rows=data.n_rows)


def _check_features(forest: Forest, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features.reshape(1, -1)
    if features.shape[1] != forest.p:
        raise InvalidArgumentError(
            f"feature dimension {features.shape[1]} does not match the forest dimension {forest.p}"
        )
    if not np.all(np.isfinite(features)):
        raise InvalidArgumentError("features must be finite")
    return features


def vote_fractions(forest: Forest, features: np.ndarray) -> np.ndarray:
    """Fraction of trees voting label 1, per row."""
    features = _check_features(forest, features)
    votes = np.zeros(features.shape[0], dtype=np.int64)
    for tree in forest.trees:
        votes += tree.predict(features)
    return votes / forest.num_trees


def predict(forest: Forest, features: np.ndarray) -> np.ndarray:
    """Majority vote per row; exact ties go to label 0."""
    return (vote_fractions(forest, features) > 0.5).astype(np.int8)


def predict_vote(forest: Forest, z: np.ndarray) -> Tuple[int, float]:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise InvalidArgumentError(f"z must be a single feature vector, got shape {z.shape}")
    fraction = float(vote_fractions(forest, z)[0])
    return int(fraction > 0.5), fraction


def oob_summary(forest: Forest, data: LabeledDataset) -> OOBSummary:
    """Score every observation with the trees whose bootstrap left it out.

    Raises:
        DegenerateOOBError: no observation was ever out of bag
    """
    if data.n_rows != forest.n_rows:
        raise InvalidArgumentError(
            f"forest was trained on {forest.n_rows} rows, got data with {data.n_rows}"
        )
    features = _check_features(forest, data.features)
    votes = np.zeros(data.n_rows, dtype=np.int64)
    voters = np.zeros(data.n_rows, dtype=np.int64)
    for tree in forest.trees:
        oob = ~tree.in_bag
        if not np.any(oob):
            continue
        votes[oob] += tree.predict(features[oob])
        voters[oob] += 1

    used = voters > 0
    n_used = int(used.sum())
    if n_used == 0:
        raise DegenerateOOBError(
            f"all {data.n_rows} observations are in bag for all {forest.num_trees} trees"
        )
    oob_labels = (2 * votes[used] > voters[used]).astype(np.int8)
    error = float(np.mean(oob_labels != data.labels[used]))
    n_skipped = data.n_rows - n_used
    if n_skipped:
        logger.debug(f"OOB error skipped {n_skipped} of {data.n_rows} observations")
    return OOBSummary(error=error, n_used=n_used, n_skipped=n_skipped)


def oob_error(forest: Forest, data: LabeledDataset) -> float:
    return oob_summary(forest, data).error
