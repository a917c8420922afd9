"""Classifier plug-in contract used by the split-sample tests."""

from dataclasses import dataclass
import logging
from typing import Union

import numpy as np

from rftwosample.core.dataset import LabeledDataset
from rftwosample.models.configs import ClassifierSpec
from rftwosample.services.classifiers.lda import LdaModel, fit_lda, lda_classify_rows
from rftwosample.services.forest import forest as rf
from rftwosample.utils.error_handling import DegenerateSplitError, InvalidArgumentError
from rftwosample.utils.numkit import RngStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainedClassifier:
    kind: str
    model: Union[rf.Forest, LdaModel]

    @property
    def supports_oob(self) -> bool:
        return isinstance(self.model, rf.Forest)

    def classify_rows(self, features: np.ndarray) -> np.ndarray:
        if isinstance(self.model, rf.Forest):
            return rf.predict(self.model, features)
        return lda_classify_rows(self.model, features)

    def classify(self, z: np.ndarray) -> int:
        return int(self.classify_rows(np.asarray(z, dtype=float).reshape(1, -1))[0])


def train(spec: ClassifierSpec, data: LabeledDataset, rng: RngStream, n_jobs: int = 1) -> TrainedClassifier:
    """Train the classifier named by ``spec`` on the sub-stream ``spec.stream_id`` of ``rng``."""
    if not data.has_both_labels():
        raise DegenerateSplitError("training data must contain both labels")
    if spec.kind == "random_forest":
        model = rf.fit(data, spec.forest, rng.child(spec.stream_id), n_jobs=n_jobs)
    else:
        model = fit_lda(data)
    logger.debug(f"Trained {spec.kind} on {data.n_rows} rows")
    return TrainedClassifier(kind=spec.kind, model=model)
