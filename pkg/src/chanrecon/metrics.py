"""Detection metrics: accuracy at a threshold, ROC AUC, average precision.

Conventions pinned here: AUC is the pairwise ranking probability with ties
credited 1/2 (Mann-Whitney); AP groups tied scores at one threshold;
accuracy uses `score >= threshold` to call a sample positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, MetricUndefinedError


@dataclass(frozen=True)
class ScoredSet:
    """Scores with binary labels; `kind` flags probabilities vs raw logits."""

    scores: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    kind: str = "probabilities"

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).ravel()
        labels = np.asarray(self.labels).ravel()
        if scores.size != labels.size:
            raise ArgumentError("scores and labels must have equal length")
        if scores.size == 0:
            raise ArgumentError("scored set is empty")
        if not np.all(np.isin(labels, (0, 1))):
            raise ArgumentError("labels must be 0 or 1")
        if self.kind not in ("probabilities", "logits"):
            raise ArgumentError(f"unknown score kind {self.kind!r}")
        scores.flags.writeable = False
        labels = labels.astype(np.int64)
        labels.flags.writeable = False
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    @property
    def n_positive(self) -> int:
        return int(np.sum(self.labels == 1))

    @property
    def n_negative(self) -> int:
        return int(np.sum(self.labels == 0))


def accuracy(scored: ScoredSet, threshold: float) -> float:
    """Fraction of samples where (score >= threshold) matches (label == 1)."""
    if scored.kind != "probabilities":
        raise ArgumentError("accuracy requires probability scores")
    if not 0.0 < threshold < 1.0:
        raise ArgumentError(f"threshold must lie in (0, 1), got {threshold}")
    if np.min(scored.scores) < 0.0 or np.max(scored.scores) > 1.0:
        raise ArgumentError("probability scores must lie in [0, 1]")
    predicted = scored.scores >= threshold
    return float(np.mean(predicted == (scored.labels == 1)))


def _tied_ranks(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based); equal values share the mean of their ranks."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scored: ScoredSet) -> float:
    """P(score_fake > score_real) + 0.5 * P(tie) over all fake/real pairs."""
    n_pos, n_neg = scored.n_positive, scored.n_negative
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUC needs at least one sample of each class")
    ranks = _tied_ranks(scored.scores)
    pos_rank_sum = float(np.sum(ranks[scored.labels == 1]))
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def average_precision(scored: ScoredSet) -> float:
    """Area under precision-recall: sum_k (R_k - R_{k-1}) * P_k.

    Thresholds sweep the distinct scores in descending order; all samples
    tied at a score enter at the same threshold.
    """
    n_pos = scored.n_positive
    if n_pos == 0:
        raise MetricUndefinedError("AP needs at least one positive sample")
    order = np.argsort(-scored.scores, kind="mergesort")
    scores = scored.scores[order]
    labels = scored.labels[order]
    ap = 0.0
    tp = 0
    seen = 0
    prev_recall = 0.0
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and scores[j + 1] == scores[i]:
            j += 1
        tp += int(np.sum(labels[i:j + 1]))
        seen += j - i + 1
        recall = tp / n_pos
        precision = tp / seen
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return float(ap)
