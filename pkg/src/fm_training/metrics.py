"""
ACC, AUC, NLL and F1 for mistake predictions (positive class = label 1)
"""
from dataclasses import asdict, dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from kt_errors import SingleClass
from fm_model.links import log_loss

DEFAULT_THRESHOLD = 0.5


@dataclass
class EvalReport:
    acc: float
    auc: float
    nll: float
    f1: float
    n: int
    threshold: float = DEFAULT_THRESHOLD

    def to_line(self) -> str:
        return f"acc={self.acc:.6f} auc={self.auc:.6f} nll={self.nll:.6f} f1={self.f1:.6f} n={self.n}"

    def to_table(self) -> str:
        header = f"{'ACC':>8} {'AUC':>8} {'NLL':>8} {'F1':>8} {'n':>8}"
        row = f"{self.acc:8.3f} {self.auc:8.3f} {self.nll:8.3f} {self.f1:8.3f} {self.n:8d}"
        return f"{header}\n{row}"

    def to_dict(self):
        return asdict(self)


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Probability that a random positive outranks a random negative, ties counted 1/2

    Uses average ranks (Mann-Whitney U).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    positives = labels == 1
    n_pos = int(positives.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC is undefined when only one class is present")

    ranks = rankdata(scores, method="average")
    u = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def nll(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mean negative log-likelihood of clamped probabilities"""
    return float(np.mean(log_loss(scores, labels)))


def acc_f1(scores: Sequence[float], labels: Sequence[int], threshold: float = DEFAULT_THRESHOLD) -> Tuple[float, float]:
    """
    Accuracy and F1 of the positive class; a score equal to the threshold counts as positive

    No predicted and no actual positives gives F1 = 1.
    """
    predicted = np.asarray(scores, dtype=np.float64) >= threshold
    actual = np.asarray(labels) == 1
    acc = float(np.mean(predicted == actual))

    true_pos = int(np.sum(predicted & actual))
    n_predicted = int(predicted.sum())
    n_actual = int(actual.sum())
    if n_predicted == 0 and n_actual == 0:
        return acc, 1.0
    if n_predicted == 0 or n_actual == 0 or true_pos == 0:
        return acc, 0.0

    precision = true_pos / n_predicted
    recall = true_pos / n_actual
    return acc, float(2.0 * precision * recall / (precision + recall))


def evaluate(scores: Sequence[float], labels: Sequence[int], threshold: float = DEFAULT_THRESHOLD) -> EvalReport:
    if len(scores) == 0:
        raise ValueError("cannot evaluate an empty prediction set")
    acc, f1 = acc_f1(scores, labels, threshold)
    return EvalReport(
        acc=acc,
        auc=auc(scores, labels),
        nll=nll(scores, labels),
        f1=f1,
        n=len(scores),
        threshold=threshold,
    )
