"""Identity-covariance LDA: the plug-in nearest-mean rule."""

from dataclasses import dataclass

import numpy as np

from rftwosample.core.dataset import LabeledDataset
from rftwosample.utils.error_handling import DegenerateSplitError, InvalidArgumentError


@dataclass(frozen=True)
class LdaModel:
    """Estimated class means; ``mean0`` from label-0 rows, ``mean1`` from label-1 rows."""

    mean0: np.ndarray
    mean1: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.mean0.shape[0])


def fit_lda(data: LabeledDataset) -> LdaModel:
    if not data.has_both_labels():
        raise DegenerateSplitError("LDA needs rows of both labels")
    mean0 = data.features[data.labels == 0].mean(axis=0)
    mean1 = data.features[data.labels == 1].mean(axis=0)
    return LdaModel(mean0=mean0, mean1=mean1)


def discriminant(model: LdaModel, features: np.ndarray) -> np.ndarray:
    """(mean0 - mean1)^T (z - (mean0 + mean1) / 2) for every row z."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[1] != model.dim:
        raise InvalidArgumentError(
            f"feature dimension {features.shape[1]} does not match the model dimension {model.dim}"
        )
    midpoint = (model.mean0 + model.mean1) / 2.0
    return (features - midpoint) @ (model.mean0 - model.mean1)


def lda_classify_rows(model: LdaModel, features: np.ndarray) -> np.ndarray:
    # a positive discriminant means z is nearer mean0; the boundary belongs to label 0
    return (discriminant(model, features) < 0).astype(np.int8)


def lda_classify(model: LdaModel, z: np.ndarray) -> int:
    return int(lda_classify_rows(model, np.asarray(z, dtype=float).reshape(1, -1))[0])
