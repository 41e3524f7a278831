"""Evaluation suite: confusion counts, the four headline metrics,
ROC/AUC, and single-sample detection-time benchmarking."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from .errors import UndefinedMetricError, ValidationError
from .validation import check_binary_labels, check_sample_array
from .zoo import Checkpoint, GraphNet, network_from_checkpoint
from .training import predict_logits


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValidationError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(predictions, labels) -> ConfusionCounts:
    """Exact confusion counts; positive class is 'malicious' (1)."""
    predictions = check_binary_labels(predictions, name="predictions")
    labels = check_binary_labels(labels, name="labels")
    if len(predictions) != len(labels):
        raise ValidationError(
            f"{len(predictions)} predictions for {len(labels)} labels"
        )
    if len(labels) == 0:
        raise ValidationError("need at least one sample")
    return ConfusionCounts(
        tp=int(((predictions == 1) & (labels == 1)).sum()),
        tn=int(((predictions == 0) & (labels == 0)).sum()),
        fp=int(((predictions == 1) & (labels == 0)).sum()),
        fn=int(((predictions == 0) & (labels == 1)).sum()),
    )


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class MetricValues:
    accuracy: float
    precision: float
    recall: float
    f1: float
    # metrics whose denominator was 0 and were reported as 0 instead
    undefined: tuple[str, ...] = ()


def metrics(c: ConfusionCounts) -> MetricValues:
    """Accuracy, precision, recall and F1 from confusion counts.

    Degenerate denominators (a constant classifier, or a single-class
    sample set) yield 0 with the metric name flagged in ``undefined``
    rather than an exception, so such runs remain reportable.
    """
    if c.total == 0:
        raise ValidationError("confusion counts are empty")
    undefined = []
    accuracy = (c.tp + c.tn) / c.total
    if c.tp + c.fp > 0:
        precision = c.tp / (c.tp + c.fp)
    else:
        precision, undefined = 0.0, undefined + ["precision"]
    if c.tp + c.fn > 0:
        recall = c.tp / (c.tp + c.fn)
    else:
        recall, undefined = 0.0, undefined + ["recall"]
    if precision + recall == 0.0:
        undefined.append("f1")
    return MetricValues(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        undefined=tuple(undefined),
    )


@dataclass(frozen=True)
class RocCurve:
    """(false-positive-rate, true-positive-rate) points, one per distinct
    score threshold plus the (0,0)/(1,1) endpoints."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        fprs = [p[0] for p in self.points]
        tprs = [p[1] for p in self.points]
        if any(b < a for a, b in zip(fprs, fprs[1:])) or any(
            b < a for a, b in zip(tprs, tprs[1:])
        ):
            raise ValidationError("ROC curve must be monotone in both coordinates")


def roc_and_auc(scores, labels) -> tuple[RocCurve, float]:
    """Threshold sweep over all distinct scores plus trapezoidal area.

    Tied scores move along a single diagonal segment, which makes the
    trapezoidal area equal to the tie-adjusted probability that a random
    malicious sample outscores a random benign one.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = check_binary_labels(labels, n=len(scores), name="labels")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            "AUC is undefined when only one class is present "
            f"(positives={n_pos}, negatives={n_neg})"
        )
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(sorted_scores):
        j = i
        while j < len(sorted_scores) and sorted_scores[j] == sorted_scores[i]:
            tp += int(sorted_labels[j] == 1)
            fp += int(sorted_labels[j] == 0)
            j += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j
    points.append((1.0, 1.0))
    curve = RocCurve(points=tuple(points))
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return curve, auc


@dataclass(frozen=True)
class DetectionTiming:
    median_ms: float
    mean_ms: float
    repetitions: int
    warmup: int


def detection_time(
    net: GraphNet,
    samples: np.ndarray,
    repetitions: int = 30,
    warmup: int = 10,
) -> DetectionTiming:
    """Wall-clock per-prediction latency on single-sample batches.

    This is the online-detection setting: one snapshot arrives, one
    prediction is produced.  Warm-up runs are excluded and the median is
    reported alongside the mean because it resists scheduler noise.
    """
    if repetitions < 30:
        raise ValidationError("need at least 30 repetitions for a stable latency estimate")
    if warmup < 1:
        raise ValidationError("at least one warm-up run is required")
    channels = net.spec.input_shape[0]
    X = check_sample_array(samples)
    if X.shape[1] == 1 and channels == 3:
        X = np.repeat(X, 3, axis=1)
    if X.shape[1] != channels:
        raise ValidationError(f"samples have {X.shape[1]} channels, model expects {channels}")
    batches = [torch.from_numpy(X[i : i + 1]) for i in range(len(X))]
    was_training = net.training
    net.eval()
    timings = []
    with torch.no_grad():
        for r in range(warmup + repetitions):
            xb = batches[r % len(batches)]
            t0 = time.perf_counter()
            net(xb)
            elapsed = time.perf_counter() - t0
            if r >= warmup:
                timings.append(elapsed * 1000.0)
    if was_training:
        net.train()
    return DetectionTiming(
        median_ms=float(np.median(timings)),
        mean_ms=float(np.mean(timings)),
        repetitions=repetitions,
        warmup=warmup,
    )


@dataclass(frozen=True)
class MetricReport:
    """Everything the comparison tables and plots need for one model."""

    model_name: str
    counts: ConfusionCounts
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    roc: RocCurve
    undefined: tuple[str, ...] = ()
    detection_time_ms: float | None = None

    def to_json(self) -> dict:
        return {
            "model": self.model_name,
            "counts": {
                "tp": self.counts.tp,
                "tn": self.counts.tn,
                "fp": self.counts.fp,
                "fn": self.counts.fn,
            },
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "undefined": list(self.undefined),
            "detection_time_ms": self.detection_time_ms,
            "roc": [[fpr, tpr] for fpr, tpr in self.roc.points],
        }

    @classmethod
    def from_json(cls, data: dict) -> "MetricReport":
        return cls(
            model_name=data["model"],
            counts=ConfusionCounts(**data["counts"]),
            accuracy=data["accuracy"],
            precision=data["precision"],
            recall=data["recall"],
            f1=data["f1"],
            auc=data["auc"],
            roc=RocCurve(points=tuple((p[0], p[1]) for p in data["roc"])),
            undefined=tuple(data["undefined"]),
            detection_time_ms=data["detection_time_ms"],
        )


def scores_from_logits(logits: np.ndarray) -> np.ndarray:
    """Positive-class (malicious) probability from 2-class logits."""
    return torch.softmax(torch.from_numpy(logits), dim=1).numpy()[:, 1]


def evaluate_model(
    checkpoint: Checkpoint | GraphNet,
    X_test: np.ndarray,
    y_test: np.ndarray,
    batch_size: int = 64,
) -> MetricReport:
    """Score the test samples once, in stored order, and assemble the
    report: 0.5-threshold confusion metrics plus threshold-free ROC/AUC."""
    net = checkpoint if isinstance(checkpoint, GraphNet) else network_from_checkpoint(checkpoint)
    X_test = check_sample_array(X_test)
    y_test = check_binary_labels(y_test, len(X_test))
    if len(y_test) == 0:
        raise ValidationError("test split is empty")
    scores = scores_from_logits(predict_logits(net, X_test, batch_size=batch_size))
    preds = (scores >= 0.5).astype(np.int64)
    counts = confusion(preds, y_test)
    values = metrics(counts)
    roc, auc = roc_and_auc(scores, y_test)
    return MetricReport(
        model_name=net.spec.name,
        counts=counts,
        accuracy=values.accuracy,
        precision=values.precision,
        recall=values.recall,
        f1=values.f1,
        auc=auc,
        roc=roc,
        undefined=values.undefined,
    )
