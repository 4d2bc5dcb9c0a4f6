"""Multi-label evaluation metrics and the class-similarity matrix.

Implemented directly on numpy arrays. Division-by-zero cells (a class with no
predicted and no true positives, say) follow the 0/0 -> 0 convention
throughout, so reports never contain NaNs.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .exceptions import ValidationError

PER_CLASS_METRICS = ("precision", "recall", "f1", "hamming", "brier")


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _check_binary(arr, name: str) -> np.ndarray:
    a = np.asarray(arr)
    if a.ndim != 2:
        raise ValidationError(f"{name} must be 2-D (samples, labels), got shape {a.shape}")
    if a.size == 0:
        raise ValidationError(f"{name} must be non-empty")
    vals = a.astype(np.float64)
    if not np.isin(vals, (0.0, 1.0)).all():
        raise ValidationError(f"{name} must contain only 0/1 entries")
    return vals.astype(np.int64)


def _check_probs(arr, name: str) -> np.ndarray:
    p = np.asarray(arr, dtype=np.float64)
    if p.ndim != 2:
        raise ValidationError(f"{name} must be 2-D (samples, labels), got shape {p.shape}")
    if not np.isfinite(p).all() or (p < 0).any() or (p > 1).any():
        raise ValidationError(f"{name} must contain probabilities in [0, 1]")
    return p


def _default_names(n_labels: int) -> list[str]:
    width = max(2, len(str(n_labels - 1)))
    return [f"class_{i:0{width}d}" for i in range(n_labels)]


@dataclass
class MetricReport:
    """Aggregate and per-class evaluation results for one model run.

    ``per_class`` maps class name -> metric name -> value. ``hamming_total``
    and ``brier_total`` are None when the inputs needed to compute them were
    not supplied (e.g. a pure precision/recall report without probabilities).
    """

    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    per_class: dict[str, dict[str, float]]
    n_samples: int
    n_labels: int
    hamming_total: float | None = None
    brier_total: float | None = None

    def summary(self) -> dict[str, float]:
        out = {
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
        }
        if self.hamming_total is not None:
            out["hamming"] = self.hamming_total
        if self.brier_total is not None:
            out["brier"] = self.brier_total
        return out

    def to_dict(self) -> dict:
        return {
            "summary": self.summary(),
            "per_class": self.per_class,
            "n_samples": self.n_samples,
            "n_labels": self.n_labels,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def per_class_csv(self) -> str:
        """One row per class; columns are the per-class metrics present."""
        cols = [m for m in PER_CLASS_METRICS if all(m in v for v in self.per_class.values())]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", *cols])
        for name, vals in self.per_class.items():
            writer.writerow([name, *(f"{vals[c]:.6f}" for c in cols)])
        return buf.getvalue()


def prf_report(
    y_true,
    y_pred,
    class_names: Sequence[str] | None = None,
) -> MetricReport:
    """Precision/recall/F1 report over binary label matrices.

    Macro values average per-class scores; micro values pool true/false
    positive counts over every class first. All 0/0 cells resolve to 0.
    """
    yt = _check_binary(y_true, "y_true")
    yp = _check_binary(y_pred, "y_pred")
    if yt.shape != yp.shape:
        raise ValidationError(
            f"y_true and y_pred must share a shape, got {yt.shape} vs {yp.shape}"
        )
    n, n_labels = yt.shape
    names = list(class_names) if class_names is not None else _default_names(n_labels)
    if len(names) != n_labels:
        raise ValidationError(
            f"class_names has {len(names)} entries but matrices have {n_labels} labels"
        )

    tp = ((yt == 1) & (yp == 1)).sum(axis=0).astype(np.float64)
    fp = ((yt == 0) & (yp == 1)).sum(axis=0).astype(np.float64)
    fn = ((yt == 1) & (yp == 0)).sum(axis=0).astype(np.float64)

    per_class: dict[str, dict[str, float]] = {}
    precisions, recalls, f1s = [], [], []
    for c, name in enumerate(names):
        p = _safe_div(tp[c], tp[c] + fp[c])
        r = _safe_div(tp[c], tp[c] + fn[c])
        f = _safe_div(2 * p * r, p + r)
        per_class[name] = {"precision": p, "recall": r, "f1": f}
        precisions.append(p)
        recalls.append(r)
        f1s.append(f)

    micro_p = _safe_div(tp.sum(), tp.sum() + fp.sum())
    micro_r = _safe_div(tp.sum(), tp.sum() + fn.sum())
    micro_f = _safe_div(2 * micro_p * micro_r, micro_p + micro_r)

    return MetricReport(
        macro_precision=float(np.mean(precisions)),
        macro_recall=float(np.mean(recalls)),
        macro_f1=float(np.mean(f1s)),
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=micro_f,
        per_class=per_class,
        n_samples=n,
        n_labels=n_labels,
    )


def hamming_loss(y_true, y_pred) -> tuple[float, np.ndarray]:
    """Fraction of disagreeing (sample, label) cells, total and per class."""
    yt = _check_binary(y_true, "y_true")
    yp = _check_binary(y_pred, "y_pred")
    if yt.shape != yp.shape:
        raise ValidationError(
            f"y_true and y_pred must share a shape, got {yt.shape} vs {yp.shape}"
        )
    disagree = (yt != yp).astype(np.float64)
    return float(disagree.mean()), disagree.mean(axis=0)


def brier_score(y_true, probs) -> tuple[float, np.ndarray]:
    """Mean squared error between probabilities and 0/1 targets."""
    yt = _check_binary(y_true, "y_true")
    p = _check_probs(probs, "probs")
    if yt.shape != p.shape:
        raise ValidationError(
            f"y_true and probs must share a shape, got {yt.shape} vs {p.shape}"
        )
    sq = (p - yt.astype(np.float64)) ** 2
    return float(sq.mean()), sq.mean(axis=0)


def evaluate_predictions(
    y_true,
    probs,
    threshold: float = 0.5,
    class_names: Sequence[str] | None = None,
) -> MetricReport:
    """Full report from probabilities: thresholded PRF plus Hamming and Brier."""
    if not (0.0 <= threshold <= 1.0):
        raise ValidationError(f"threshold must lie in [0, 1], got {threshold!r}")
    p = _check_probs(probs, "probs")
    y_pred = (p >= threshold).astype(np.int64)
    report = prf_report(y_true, y_pred, class_names)
    ham_total, ham_per_class = hamming_loss(y_true, y_pred)
    brier_total, brier_per_class = brier_score(y_true, p)
    for c, name in enumerate(report.per_class):
        report.per_class[name]["hamming"] = float(ham_per_class[c])
        report.per_class[name]["brier"] = float(brier_per_class[c])
    report.hamming_total = ham_total
    report.brier_total = brier_total
    return report


@dataclass
class ClassSimilarityMatrix:
    """Symmetric class-by-class spectral similarity with a unit diagonal."""

    classes: list[str]
    values: np.ndarray

    def pair(self, a: str, b: str) -> float:
        i, j = self.classes.index(a), self.classes.index(b)
        return float(self.values[i, j])

    def max_off_diagonal(self) -> tuple[str, str, float]:
        """The most similar distinct class pair."""
        masked = self.values.copy()
        np.fill_diagonal(masked, -np.inf)
        i, j = np.unravel_index(int(masked.argmax()), masked.shape)
        return self.classes[i], self.classes[j], float(masked[i, j])

    def mean_off_diagonal(self) -> float:
        n = len(self.classes)
        mask = ~np.eye(n, dtype=bool)
        return float(self.values[mask].mean())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", *self.classes])
        for name, row in zip(self.classes, self.values):
            writer.writerow([name, *(f"{v:.6f}" for v in row)])
        return buf.getvalue()


def class_similarity(class_pixel_sets: Mapping[str, np.ndarray]) -> ClassSimilarityMatrix:
    """Similarity 1 / (1 + d) between per-class mean spectral vectors.

    ``class_pixel_sets`` maps class name -> (n_pixels, bands) array of
    spectral vectors drawn from patches where that class is active. ``d`` is
    the Euclidean distance between the two class means. The result is
    symmetric with an exactly-unit diagonal.
    """
    if not class_pixel_sets:
        raise ValidationError("class_pixel_sets must name at least one class")
    classes = list(class_pixel_sets)
    means = []
    bands = None
    empty = [name for name, px in class_pixel_sets.items() if np.asarray(px).size == 0]
    if empty:
        raise ValidationError(f"classes with no pixels: {empty}")
    for name in classes:
        px = np.asarray(class_pixel_sets[name], dtype=np.float64)
        if px.ndim != 2:
            raise ValidationError(
                f"pixel set for {name!r} must be 2-D (pixels, bands), got shape {px.shape}"
            )
        if bands is None:
            bands = px.shape[1]
        elif px.shape[1] != bands:
            raise ValidationError(
                f"pixel set for {name!r} has {px.shape[1]} bands, expected {bands}"
            )
        means.append(px.mean(axis=0))

    n = len(classes)
    values = np.ones((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.linalg.norm(means[i] - means[j]))
            s = 1.0 / (1.0 + d)
            values[i, j] = values[j, i] = s
    return ClassSimilarityMatrix(classes=classes, values=values)


@dataclass
class AggregateStats:
    """Mean and sample standard deviation of a metric across runs."""

    mean: float
    std: float | None

    def to_dict(self) -> dict[str, float]:
        out = {"mean": self.mean}
        if self.std is not None:
            out["std"] = self.std
        return out


def aggregate_metric(values: Sequence[float]) -> AggregateStats:
    """Mean plus ddof=1 standard deviation; std omitted for a single run."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValidationError("aggregate_metric needs at least one value")
    mean = float(np.mean(vals))
    if len(vals) == 1:
        return AggregateStats(mean=mean, std=None)
    std = float(np.std(vals, ddof=1))
    return AggregateStats(mean=mean, std=std)
