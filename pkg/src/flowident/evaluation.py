"""One-vs-rest confusion counts, derived metrics, and stratified k-fold CV.

Every rate with a zero denominator is reported as 0.0 and flagged in the
entry's ``degenerate`` list instead of raising or emitting NaN, so reports
stay machine-readable even for folds that never see a class.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError
from .features import Dataset

DEFAULT_FOLDS = 10


class StratificationError(ContractError):
    """A class is too small to spread across the requested folds."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ContractError("confusion counts cannot be negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predicted, truth, target: str) -> ConfusionCounts:
    """Tally one-vs-rest counts for ``target``."""
    predicted = list(predicted)
    truth = list(truth)
    if len(predicted) != len(truth):
        raise ContractError("predicted and truth lengths differ")
    if not predicted:
        raise ContractError("cannot tally an empty prediction list")
    tp = fp = tn = fn = 0
    for pred, actual in zip(predicted, truth):
        if actual == target:
            if pred == target:
                tp += 1
            else:
                fn += 1
        else:
            if pred == target:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


@dataclass(frozen=True)
class MetricEntry:
    tpr: float
    fpr: float
    tnr: float
    fnr: float
    precision: float
    recall: float
    f_measure: float
    oa: float
    degenerate: tuple[str, ...] = ()


def metrics(counts: ConfusionCounts) -> MetricEntry:
    """All derived rates for one one-vs-rest table."""
    if counts.total == 0:
        raise ContractError("metrics need at least one sample")
    degenerate: list[str] = []

    def rate(name: str, num: int, den: int) -> float:
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    tpr = rate("tpr", counts.tp, counts.tp + counts.fn)
    fpr = rate("fpr", counts.fp, counts.fp + counts.tn)
    tnr = rate("tnr", counts.tn, counts.tn + counts.fp)
    fnr = rate("fnr", counts.fn, counts.fn + counts.tp)
    precision = rate("precision", counts.tp, counts.tp + counts.fp)
    recall = tpr
    if precision + recall == 0:
        degenerate.append("f_measure")
        f_measure = 0.0
    else:
        f_measure = 2 * precision * recall / (precision + recall)
    oa = (counts.tp + counts.tn) / counts.total
    return MetricEntry(
        tpr=tpr, fpr=fpr, tnr=tnr, fnr=fnr,
        precision=precision, recall=recall, f_measure=f_measure, oa=oa,
        degenerate=tuple(degenerate),
    )


@dataclass(frozen=True)
class MetricReport:
    per_class: dict[str, MetricEntry]
    overall_accuracy: float
    n: int

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "overall_accuracy": self.overall_accuracy,
            "per_class": {label: asdict(entry) for label, entry in self.per_class.items()},
        }


def evaluate_predictions(predicted, truth, classes=None) -> MetricReport:
    """Per-class one-vs-rest metrics plus the global correct/total accuracy."""
    predicted = list(predicted)
    truth = list(truth)
    if len(predicted) != len(truth):
        raise ContractError("predicted and truth lengths differ")
    if not predicted:
        raise ContractError("cannot evaluate an empty prediction list")
    if classes is None:
        classes = tuple(sorted(set(truth) | set(predicted)))
    per_class = {
        label: metrics(confusion(predicted, truth, label)) for label in classes
    }
    correct = sum(1 for p, t in zip(predicted, truth) if p == t)
    return MetricReport(
        per_class=per_class,
        overall_accuracy=correct / len(truth),
        n=len(truth),
    )


@dataclass(frozen=True)
class FoldResult:
    fold: int
    test_size: int
    report: MetricReport


@dataclass
class CVReport:
    k: int
    seed: int
    folds: list[FoldResult]

    @property
    def mean_overall_accuracy(self) -> float:
        return float(np.mean([fold.report.overall_accuracy for fold in self.folds]))

    def _macro(self, attr: str) -> float:
        fold_means = [
            float(np.mean([getattr(e, attr) for e in fold.report.per_class.values()]))
            for fold in self.folds
        ]
        return float(np.mean(fold_means))

    @property
    def macro_precision(self) -> float:
        return self._macro("precision")

    @property
    def macro_recall(self) -> float:
        return self._macro("recall")

    @property
    def macro_f_measure(self) -> float:
        return self._macro("f_measure")

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "summary": {
                "mean_overall_accuracy": self.mean_overall_accuracy,
                "macro_precision": self.macro_precision,
                "macro_recall": self.macro_recall,
                "macro_f_measure": self.macro_f_measure,
            },
            "folds": [
                {
                    "fold": fold.fold,
                    "test_size": fold.test_size,
                    **fold.report.to_json_dict(),
                }
                for fold in self.folds
            ],
        }


def assign_folds(labels, k: int, seed: int) -> list[int]:
    """Stratified fold assignment: per-class shuffle, global round-robin.

    With k equal to the number of rows this degenerates to leave-one-out;
    otherwise every class must have at least k rows so each fold sees it.
    """
    labels = list(labels)
    n = len(labels)
    if k < 2:
        raise ContractError("k-fold needs k >= 2")
    if k > n:
        raise ContractError(f"cannot make {k} folds from {n} rows")
    counts: dict[str, int] = {}
    for lbl in labels:
        counts[lbl] = counts.get(lbl, 0) + 1
    if k < n:
        for lbl, count in sorted(counts.items()):
            if count < k:
                raise StratificationError(
                    f"class {lbl!r} has {count} flows; need at least k={k}"
                )
    rng = np.random.default_rng(seed)
    fold_of = [0] * n
    cursor = 0
    for lbl in sorted(counts):
        idx = np.flatnonzero(np.array(labels, dtype=object) == lbl)
        rng.shuffle(idx)
        for i in idx:
            fold_of[int(i)] = cursor % k
            cursor += 1
    return fold_of


def kfold_cv(ds: Dataset, pipeline, k: int = DEFAULT_FOLDS, seed: int = 0) -> CVReport:
    """Stratified k-fold cross-validation of a train+predict closure.

    ``pipeline(train_ds, test_ds)`` must return one predicted label per test
    vector.  Fold membership is deterministic given (ds order, k, seed).
    """
    if any(v.label is None for v in ds.vectors):
        raise ContractError("cross-validation needs a fully labeled dataset")
    labels = [v.label for v in ds.vectors]
    fold_of = assign_folds(labels, k, seed)
    results = []
    for fold in range(k):
        train_vecs = [v for v, f in zip(ds.vectors, fold_of) if f != fold]
        test_vecs = [v for v, f in zip(ds.vectors, fold_of) if f == fold]
        train_ds = Dataset(train_vecs, ds.alphabet)
        test_ds = Dataset(test_vecs, ds.alphabet)
        predicted = list(pipeline(train_ds, test_ds))
        if len(predicted) != len(test_vecs):
            raise ContractError("pipeline returned the wrong number of predictions")
        report = evaluate_predictions(
            predicted, [v.label for v in test_vecs], classes=ds.alphabet
        )
        results.append(FoldResult(fold=fold, test_size=len(test_vecs), report=report))
    return CVReport(k=k, seed=seed, folds=results)
