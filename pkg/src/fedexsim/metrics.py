"""Evaluation metrics over the fixed test set: accuracy, fidelity, KL divergence.

Fidelity counts test points where victim and surrogate agree on the top-1
class (ground-truth labels unused). KL is the mean over the test set of
KL(victim || surrogate) with natural log; only the surrogate distribution is
clamped (victim zeros contribute 0). Argmax ties break to the lowest index.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import models
from .errors import DomainError, ShapeError

KL_EPS = 1e-9


@dataclass(frozen=True)
class MetricsReport:
    accuracy_victim: float
    accuracy_extracted: float
    fidelity: float
    kl_divergence: float
    test_size: int

    def to_dict(self):
        return {
            "accuracy_victim": self.accuracy_victim,
            "accuracy_extracted": self.accuracy_extracted,
            "fidelity": self.fidelity,
            "kl_divergence": self.kl_divergence,
            "test_size": self.test_size,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_test(test):
    if len(test) == 0:
        raise DomainError("empty test set")


def accuracy(model, test):
    _check_test(test)
    pred = models.predict_labels(model, test.inputs)
    return float(np.mean(pred == test.labels))


def _check_pair(victim, extracted):
    if victim.spec.input_shape != extracted.spec.input_shape:
        raise ShapeError(
            f"input shape mismatch: {victim.spec.input_shape} vs {extracted.spec.input_shape}"
        )
    if victim.spec.class_count != extracted.spec.class_count:
        raise ShapeError(
            f"class count mismatch: {victim.spec.class_count} vs {extracted.spec.class_count}"
        )


def fidelity(victim, extracted, test):
    _check_test(test)
    _check_pair(victim, extracted)
    pv = models.predict_labels(victim, test.inputs)
    pe = models.predict_labels(extracted, test.inputs)
    return float(np.mean(pv == pe))


def kl_divergence(victim, extracted, test):
    _check_test(test)
    _check_pair(victim, extracted)
    p = models.predict(victim, test.inputs)
    q = np.clip(models.predict(extracted, test.inputs), KL_EPS, 1.0)
    terms = np.where(p > 0, p * (np.log(np.where(p > 0, p, 1.0)) - np.log(q)), 0.0)
    return float(terms.sum(axis=1).mean())


def evaluate(victim, extracted, test):
    """All three metrics in one report."""
    return MetricsReport(
        accuracy_victim=accuracy(victim, test),
        accuracy_extracted=accuracy(extracted, test),
        fidelity=fidelity(victim, extracted, test),
        kl_divergence=kl_divergence(victim, extracted, test),
        test_size=len(test),
    )
