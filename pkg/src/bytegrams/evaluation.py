"""Stratified cross-validation, balanced accuracy, ROC/AUC, boxplot stats.

Metrics raise MetricUndefinedError instead of returning sentinel values when
a class is absent; a silent 0 would poison sweep aggregates downstream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MetricUndefinedError, TrainingError
from .seeds import rng_from

DEFAULT_FOLDS = 5


@dataclass(frozen=True)
class FoldPlan:
    """Per-row fold indices; rows of one class are spread round-robin."""

    n_folds: int
    assignment: np.ndarray
    seed: int

    def rows_in(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def rows_out(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)


def stratified_folds(labels, n_folds: int = DEFAULT_FOLDS,
                     seed: int = 0) -> FoldPlan:
    """Deal each class's seeded-shuffled rows round-robin into folds."""
    if not (isinstance(n_folds, (int, np.integer)) and n_folds >= 2):
        raise ConfigError(f"n_folds must be an integer >= 2, got {n_folds}")
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ConfigError("labels must be a non-empty 1-D sequence")
    assignment = np.empty(labels.size, dtype=np.int64)
    for tag in np.unique(labels):
        rows = np.flatnonzero(labels == tag)
        if rows.size < n_folds:
            raise ConfigError(
                f"class {tag!r} has {rows.size} rows, fewer than "
                f"{n_folds} folds")
        order = rng_from(seed, "fold-shuffle", str(tag)).permutation(rows.size)
        for pos, row in enumerate(rows[order]):
            assignment[row] = pos % n_folds
    return FoldPlan(int(n_folds), assignment, int(seed))


@dataclass
class EvalOutcome:
    """Confusion counts plus held-out (label, score) pairs for ROC."""

    tp: int
    tn: int
    fp: int
    fn: int
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def p(self) -> int:
        return self.tp + self.fn

    @property
    def n(self) -> int:
        return self.tn + self.fp

    @property
    def accuracy(self) -> float:
        total = self.p + self.n
        if total == 0:
            raise MetricUndefinedError("accuracy undefined with no rows")
        return (self.tp + self.tn) / total

    @property
    def balanced_accuracy(self) -> float:
        if self.p == 0 or self.n == 0:
            raise MetricUndefinedError(
                f"balanced accuracy undefined with P={self.p}, N={self.n}")
        # single division of exact integers: one rounding, and replicating
        # the negative class scales numerator and denominator together
        return (self.tp * self.n + self.tn * self.p) / (2 * self.p * self.n)


def accuracy(outcome: EvalOutcome) -> float:
    return outcome.accuracy


def balanced_accuracy(outcome: EvalOutcome) -> float:
    return outcome.balanced_accuracy


def outcome_from_predictions(z_true, z_pred, scores=None) -> EvalOutcome:
    z_true = np.asarray(z_true)
    z_pred = np.asarray(z_pred)
    tp = int(np.count_nonzero((z_true == 1) & (z_pred == 1)))
    tn = int(np.count_nonzero((z_true == -1) & (z_pred == -1)))
    fp = int(np.count_nonzero((z_true == -1) & (z_pred == 1)))
    fn = int(np.count_nonzero((z_true == 1) & (z_pred == -1)))
    s = np.zeros(0) if scores is None else np.asarray(scores, dtype=np.float64)
    return EvalOutcome(tp, tn, fp, fn, z_true.astype(np.int64), s)


def cross_validate(X, z, plan: FoldPlan, trainer):
    """Train/score each fold; returns (pooled, per_fold outcomes).

    ``trainer(X_train, z_train, fold)`` must return a model with scores and
    predict.  Pooled held-out scores are placed back in row order, so the
    result is independent of fold evaluation order.
    """
    X = np.asarray(X, dtype=np.float64)
    z = np.asarray(z)
    if plan.assignment.shape != (X.shape[0],):
        raise ConfigError(
            f"fold plan covers {plan.assignment.shape[0]} rows, matrix has "
            f"{X.shape[0]}")
    all_scores = np.zeros(X.shape[0])
    all_preds = np.zeros(X.shape[0], dtype=np.int64)
    per_fold = []
    for fold in range(plan.n_folds):
        test = plan.rows_in(fold)
        train_rows = plan.rows_out(fold)
        try:
            model = trainer(X[train_rows], z[train_rows], fold)
        except TrainingError as exc:
            raise TrainingError(f"fold {fold}: {exc}") from exc
        s = model.scores(X[test])
        p = model.predict(X[test])
        all_scores[test] = s
        all_preds[test] = p
        per_fold.append(outcome_from_predictions(z[test], p, s))
    pooled = outcome_from_predictions(z, all_preds, all_scores)
    return pooled, per_fold


@dataclass(frozen=True)
class RocCurve:
    """Threshold-sweep staircase from (0,0) to (1,1) and its area."""

    points: list
    auc: float


def roc_auc(labels, scores) -> RocCurve:
    """Trapezoid ROC over distinct-score groups; ties form single steps."""
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ConfigError("labels and scores must be aligned 1-D sequences")
    pos_total = int(np.count_nonzero(labels == 1))
    neg_total = int(np.count_nonzero(labels == -1))
    if pos_total == 0 or neg_total == 0:
        raise MetricUndefinedError(
            f"ROC undefined with P={pos_total}, N={neg_total}")
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    l_sorted = labels[order]
    points = [(0.0, 0.0)]
    auc = 0.0
    tp = fp = 0
    prev_tpr = prev_fpr = 0.0
    i = 0
    n_rows = labels.size
    while i < n_rows:
        j = i
        while j < n_rows and s_sorted[j] == s_sorted[i]:
            j += 1
        tp += int(np.count_nonzero(l_sorted[i:j] == 1))
        fp += (j - i) - int(np.count_nonzero(l_sorted[i:j] == 1))
        tpr = tp / pos_total
        fpr = fp / neg_total
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0
        points.append((fpr, tpr))
        prev_tpr, prev_fpr = tpr, fpr
        i = j
    return RocCurve(points, auc)


def distribution_stats(values) -> dict:
    """Five-number summary plus mean and range; quartiles interpolate
    linearly between order statistics."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise MetricUndefinedError("distribution stats undefined on no values")
    q1, med, q3 = np.percentile(v, [25.0, 50.0, 75.0])
    return {
        "min": float(v.min()),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "max": float(v.max()),
        "mean": float(v.mean()),
        "range": float(v.max() - v.min()),
    }


OUTCOME_CSV_HEADER = ["level", "combo_id", "learner", "fold",
                      "TP", "TN", "FP", "FN", "acc", "bal_acc"]


def outcome_csv_row(level, combo_id, learner, fold, outcome) -> list:
    return [str(level), str(combo_id), learner, str(fold),
            str(outcome.tp), str(outcome.tn), str(outcome.fp),
            str(outcome.fn), repr(outcome.accuracy),
            repr(outcome.balanced_accuracy)]


def write_outcomes_csv(path, rows) -> None:
    """rows: iterable of (level, combo_id, learner, fold, EvalOutcome)."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(OUTCOME_CSV_HEADER)
        for level, combo_id, learner, fold, outcome in rows:
            writer.writerow(
                outcome_csv_row(level, combo_id, learner, fold, outcome))


def write_roc_csv(path, curve: RocCurve) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(f"auc={curve.auc!r}\n")
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for fpr, tpr in curve.points:
            writer.writerow([repr(fpr), repr(tpr)])


def load_roc_csv(path) -> RocCurve:
    from .errors import FormatError

    with open(path, encoding="ascii", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith("auc="):
            raise FormatError(f"{path}: line 1: expected 'auc=<value>'")
        try:
            auc = float(first[4:])
        except ValueError as exc:
            raise FormatError(f"{path}: line 1: bad AUC value") from exc
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["fpr", "tpr"]:
            raise FormatError(f"{path}: line 2: expected 'fpr,tpr' header")
        points = []
        for lineno, row in enumerate(reader, start=3):
            if len(row) != 2:
                raise FormatError(f"{path}: line {lineno}: expected 2 fields")
            try:
                points.append((float(row[0]), float(row[1])))
            except ValueError as exc:
                raise FormatError(
                    f"{path}: line {lineno}: bad number") from exc
    return RocCurve(points, auc)
