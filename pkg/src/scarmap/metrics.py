"""Pixelwise confusion counts and precision/recall/F1.

Zero-denominator cases (no predicted positives, or no actual positives) are
reported as None rather than coerced to 0, so degenerate runs stay visible.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass

import numpy as np

from .raster import atomic_write_bytes


@dataclass
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float | None
    recall: float | None
    f1: float | None

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def confusion(
    pred: np.ndarray,
    truth: np.ndarray,
    valid: np.ndarray | None = None,
) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) over valid pixels; counts sum to the valid total."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != pred.shape:
            raise ValueError(f"valid-mask shape {valid.shape} != prediction shape {pred.shape}")
        pred, truth = pred[valid], truth[valid]
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    tn = int(np.count_nonzero(~pred & ~truth))
    return tp, fp, fn, tn


def precision_recall_f1(counts: tuple[int, int, int, int]) -> Metrics:
    """Metrics from confusion counts.

    F1 is computed as 2*tp / (2*tp + fp + fn), which equals the harmonic mean
    of precision and recall whenever both are defined and stays exact for
    integer counts.
    """
    tp, fp, fn, tn = (int(c) for c in counts)
    if min(tp, fp, fn, tn) < 0:
        raise ValueError("confusion counts must be non-negative")
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    f1 = 2 * tp / (2 * tp + fp + fn) if precision is not None and recall is not None else None
    return Metrics(tp=tp, fp=fp, fn=fn, tn=tn, precision=precision, recall=recall, f1=f1)


def evaluate_masks(pred: np.ndarray, truth: np.ndarray, valid: np.ndarray | None = None) -> Metrics:
    """Convenience wrapper: confusion + precision_recall_f1."""
    return precision_recall_f1(confusion(pred, truth, valid=valid))


def f1_from_precision_recall(precision: float, recall: float) -> float:
    """Harmonic mean 2PR/(P+R) for already-computed precision and recall."""
    if precision < 0 or recall < 0:
        raise ValueError("precision and recall must be >= 0")
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def write_metrics_json(metrics: Metrics, path: str | os.PathLike) -> None:
    atomic_write_bytes(str(path), (json.dumps(metrics.to_dict(), sort_keys=True, indent=2) + "\n").encode())


def write_metrics_csv(metrics: Metrics, path: str | os.PathLike) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    d = metrics.to_dict()
    writer.writerow(list(d.keys()))
    writer.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in d.values()])
    atomic_write_bytes(str(path), buf.getvalue().encode())
