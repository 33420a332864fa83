"""Sentiment metrics: Acc7, Acc2, F1, MAE and Pearson correlation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class MetricsReport:
    acc7: float
    acc2: float
    f1: float
    mae: float
    corr: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def __str__(self) -> str:
        return (
            f"acc7={self.acc7:.4f} acc2={self.acc2:.4f} f1={self.f1:.4f} "
            f"mae={self.mae:.4f} corr={self.corr:.4f}"
        )


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def seven_class(scores) -> np.ndarray:
    """Clamp to [-3, 3] and round to the nearest integer class."""
    return round_half_away(np.clip(np.asarray(scores, dtype=np.float64), -3.0, 3.0))


def binary_confusion(pred, target) -> np.ndarray:
    """2x2 counts indexed [target positive?, prediction positive?]; zero counts as positive."""
    p = np.asarray(pred) >= 0
    t = np.asarray(target) >= 0
    cm = np.zeros((2, 2), dtype=np.int64)
    np.add.at(cm, (t.astype(int), p.astype(int)), 1)
    return cm


def pearson(x, y) -> float:
    """Pearson correlation; 0.0 when either side is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc, yc = x - x.mean(), y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        return 0.0
    return float(np.clip((xc * yc).sum() / denom, -1.0, 1.0))


def compute_metrics(pred_scores, target_scores) -> MetricsReport:
    pred = np.asarray(pred_scores, dtype=np.float64).reshape(-1)
    target = np.asarray(target_scores, dtype=np.float64).reshape(-1)
    if pred.size == 0:
        raise ContractError("cannot compute metrics on an empty set")
    if pred.shape != target.shape:
        raise ContractError(f"{pred.size} predictions for {target.size} targets")
    cm = binary_confusion(pred, target)
    tp, fp, fn = cm[1, 1], cm[0, 1], cm[1, 0]
    f1 = 1.0 if tp + fp + fn == 0 else 2.0 * tp / (2.0 * tp + fp + fn)
    return MetricsReport(
        acc7=float((seven_class(pred) == seven_class(target)).mean()),
        acc2=float(np.trace(cm) / cm.sum()),
        f1=float(f1),
        mae=float(np.abs(pred - target).mean()),
        corr=pearson(pred, target),
    )
