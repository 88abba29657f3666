"""One-vs-rest classification metrics, confusion matrices and ROC/AUC."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError


@dataclass
class ConfusionMatrix:
    """Rows are true labels, columns predicted labels, both in ``labels`` order."""

    labels: list[str]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def supports(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def _index(labels, registry: Sequence[str]) -> np.ndarray:
    lookup = {lab: i for i, lab in enumerate(registry)}
    try:
        return np.array([lookup[lab] for lab in labels], dtype=np.int64)
    except KeyError as exc:
        raise ValidationError(f"label {exc.args[0]!r} is not in the registry") from None


def confusion(true_labels, predicted_labels, registry: Sequence[str]) -> ConfusionMatrix:
    true_labels, predicted_labels = list(true_labels), list(predicted_labels)
    if len(true_labels) != len(predicted_labels):
        raise ValidationError("true and predicted label sequences differ in length")
    registry = list(registry)
    t = _index(true_labels, registry)
    p = _index(predicted_labels, registry)
    k = len(registry)
    counts = np.bincount(t * k + p, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(registry, counts.astype(np.int64))


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    fpr: float
    support: int
    tp: int
    fp: int
    fn: int
    tn: int
    # names of the metrics whose denominator was zero (reported as 0)
    degenerate: list[str] = field(default_factory=list)


def _ratio(num, den, name, flags) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def per_class_metrics(cm: ConfusionMatrix) -> dict[str, ClassMetrics]:
    c = cm.counts
    total = c.sum()
    out = {}
    for i, label in enumerate(cm.labels):
        tp = int(c[i, i])
        fn = int(c[i].sum()) - tp
        fp = int(c[:, i].sum()) - tp
        tn = int(total) - tp - fn - fp
        flags: list[str] = []
        precision = _ratio(tp, tp + fp, "precision", flags)
        recall = _ratio(tp, tp + fn, "recall", flags)
        f1 = _ratio(2 * precision * recall, precision + recall, "f1", flags)
        fpr = _ratio(fp, fp + tn, "fpr", flags)
        out[label] = ClassMetrics(precision, recall, f1, fpr, tp + fn, tp, fp, fn, tn, flags)
    return out


@dataclass
class Aggregate:
    precision: float
    recall: float
    f1: float
    fpr: float
    accuracy: float
    support: int


def aggregate(per_class: Mapping[str, ClassMetrics], cm: ConfusionMatrix) -> Aggregate:
    """Support-weighted averages of the per-class rates, plus accuracy."""
    total = cm.total
    if total == 0:
        raise ValidationError("cannot aggregate an empty evaluation set")
    w = np.array([m.support for m in per_class.values()], dtype=float) / total

    def avg(attr):
        return float(np.dot(w, [getattr(m, attr) for m in per_class.values()]))

    return Aggregate(avg("precision"), avg("recall"), avg("f1"), avg("fpr"),
                     float(np.trace(cm.counts)) / total, total)


@dataclass
class RocCurve:
    label: str
    auc: float | None  # None when the class has no positives or no negatives
    fpr: list[float]
    tpr: list[float]
    thresholds: list[float]


def roc_auc(scores, true_labels, cls: str, registry: Sequence[str] | None = None) -> RocCurve:
    """One-vs-rest ROC for ``cls``.

    ``scores`` is either an (n, C) matrix whose column for ``cls`` is located
    via ``registry``, or an (n,) vector of scores for ``cls``.  AUC is the
    Mann-Whitney rank statistic, so tied scores count one half.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 2:
        if registry is None:
            raise ValidationError("a registry is needed to pick a score column")
        registry = list(registry)
        if cls not in registry or scores.shape[1] != len(registry):
            raise ValidationError(f"cannot find score column for {cls!r}")
        scores = scores[:, registry.index(cls)]
    truth = np.array([lab == cls for lab in true_labels], dtype=bool)
    if scores.shape != truth.shape:
        raise ValidationError("one score per record required")
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos

    # ROC points: one per distinct threshold, highest first
    order = np.argsort(-scores, kind="stable")
    s_sorted, t_sorted = scores[order], truth[order]
    cut = np.flatnonzero(np.diff(s_sorted)) if len(s_sorted) else np.array([], dtype=int)
    ends = np.r_[cut, len(s_sorted) - 1] if len(s_sorted) else np.array([], dtype=int)
    tps = np.cumsum(t_sorted)[ends] if len(ends) else np.array([])
    fps = (ends + 1) - tps
    tpr = np.r_[0.0, tps / n_pos] if n_pos else np.r_[0.0, np.zeros(len(ends))]
    fpr = np.r_[0.0, fps / n_neg] if n_neg else np.r_[0.0, np.zeros(len(ends))]
    thresholds = np.r_[np.inf, s_sorted[ends]] if len(ends) else np.array([np.inf])

    if n_pos == 0 or n_neg == 0:
        auc = None
    else:
        ranks = rankdata(scores)  # average ranks for ties
        auc = float((ranks[truth].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
    return RocCurve(cls, auc, fpr.tolist(), tpr.tolist(), thresholds.tolist())


def _jsonable(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return "inf" if obj > 0 else "-inf" if obj < 0 else "nan"
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_jsonable(v) for v in obj]
    return obj


@dataclass
class EvaluationReport:
    labels: list[str]
    per_class: dict[str, ClassMetrics]
    weighted: Aggregate
    confusion: ConfusionMatrix
    roc: dict[str, RocCurve]

    @property
    def accuracy(self) -> float:
        return self.weighted.accuracy

    @property
    def auc(self) -> dict[str, float | None]:
        return {label: curve.auc for label, curve in self.roc.items()}

    @property
    def macro_auc(self) -> float | None:
        defined = [a for a in self.auc.values() if a is not None]
        return float(np.mean(defined)) if defined else None

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "per_class": {k: asdict(v) for k, v in self.per_class.items()},
            "weighted": asdict(self.weighted),
            "accuracy": self.accuracy,
            "macro_auc": self.macro_auc,
            "confusion": self.confusion.counts.tolist(),
            "roc": {k: asdict(v) for k, v in self.roc.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvaluationReport":
        labels = list(d["labels"])
        roc = {}
        for k, v in d["roc"].items():
            v = dict(v)
            v["thresholds"] = [float(t) for t in v["thresholds"]]
            roc[k] = RocCurve(**v)
        return cls(labels,
                   {k: ClassMetrics(**v) for k, v in d["per_class"].items()},
                   Aggregate(**d["weighted"]),
                   ConfusionMatrix(labels, np.array(d["confusion"], dtype=np.int64)),
                   roc)

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvaluationReport":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, EvaluationReport):
            return NotImplemented
        return self.to_json() == other.to_json()


def evaluate(true_labels, predicted_labels, scores, registry: Sequence[str]) -> EvaluationReport:
    """Full report; ``scores`` is the (n, len(registry)) decider Q-value matrix."""
    registry = list(registry)
    true_labels = list(true_labels)
    cm = confusion(true_labels, predicted_labels, registry)
    pcm = per_class_metrics(cm)
    weighted = aggregate(pcm, cm)
    scores = np.asarray(scores, dtype=float)
    roc = {label: roc_auc(scores, true_labels, label, registry) for label in registry}
    return EvaluationReport(registry, pcm, weighted, cm, roc)


# -- rendering ----------------------------------------------------------------

def render_text(report: EvaluationReport) -> str:
    width = max([len("Weighted Average")] + [len(lab) for lab in report.labels])
    head = f"{'Class':<{width}}  {'Precision':>9}  {'Recall':>7}  {'F1-Score':>8}  " \
           f"{'FPR':>8}  {'AUC':>6}  {'Support':>8}"
    lines = [head, "-" * len(head)]
    for label in report.labels:
        m = report.per_class[label]
        auc = report.roc[label].auc
        auc_s = f"{auc:6.4f}" if auc is not None else f"{'n/a':>6}"
        mark = " *" if m.degenerate else ""
        lines.append(f"{label:<{width}}  {m.precision:9.4f}  {m.recall:7.4f}  {m.f1:8.4f}  "
                     f"{m.fpr:8.5f}  {auc_s}  {m.support:8d}{mark}")
    w = report.weighted
    lines.append("-" * len(head))
    lines.append(f"{'Weighted Average':<{width}}  {w.precision:9.4f}  {w.recall:7.4f}  "
                 f"{w.f1:8.4f}  {w.fpr:8.5f}  {'':>6}  {w.support:8d}")
    lines.append(f"{'Accuracy':<{width}}  {w.accuracy:9.4f}")
    macro = report.macro_auc
    lines.append(f"{'AUC (macro)':<{width}}  " + (f"{macro:9.4f}" if macro is not None else "n/a"))
    if any(m.degenerate for m in report.per_class.values()):
        lines.append("* some rates had a zero denominator and are reported as 0")
    return "\n".join(lines) + "\n"


def render_confusion(cm: ConfusionMatrix) -> str:
    width = max(len(lab) for lab in cm.labels)
    cell = max(6, max(len(str(int(v))) for v in cm.counts.ravel()) + 1)
    lines = [" " * width + " " + "".join(f"{i:>{cell}d}" for i in range(len(cm.labels)))]
    for i, label in enumerate(cm.labels):
        lines.append(f"{label:<{width}} " + "".join(f"{int(v):>{cell}d}" for v in cm.counts[i]))
    lines.append("rows: true label; columns: predicted label index")
    return "\n".join(lines) + "\n"


def roc_csv(report: EvaluationReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["class", "threshold", "fpr", "tpr"])
    for label, curve in report.roc.items():
        for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr):
            writer.writerow([label, repr(float(t)), repr(float(f)), repr(float(p))])
    return buf.getvalue()
