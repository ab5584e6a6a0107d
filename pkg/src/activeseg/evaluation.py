"""Dice and specificity over pooled pixel counts, plus learning-curve rows."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

CURVE_COLUMNS = (
    "cycle",
    "cost_seconds",
    "regions_labeled",
    "dice",
    "specificity",
    "heuristic",
    "aggregation",
    "seed",
    "val_dice",
)


class UndefinedMetricError(ValueError):
    """The metric's denominator is empty for these inputs."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


def confusion(preds, gts) -> ConfusionCounts:
    """Pixel counts pooled over the whole set (micro-aggregation)."""
    preds = list(preds)
    gts = list(gts)
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    tp = fp = fn = tn = 0
    for i, (p, g) in enumerate(zip(preds, gts)):
        p = np.asarray(p).astype(bool)
        g = np.asarray(g).astype(bool)
        if p.shape != g.shape:
            raise ValueError(f"pair {i}: prediction shape {p.shape} != ground truth {g.shape}")
        tp += int(np.count_nonzero(p & g))
        fp += int(np.count_nonzero(p & ~g))
        fn += int(np.count_nonzero(~p & g))
        tn += int(np.count_nonzero(~p & ~g))
    return ConfusionCounts(tp, fp, fn, tn)


def dice(counts: ConfusionCounts) -> float:
    """2TP / (2TP + FP + FN); defined as 1.0 for empty-vs-empty."""
    denom = 2 * counts.tp + counts.fp + counts.fn
    if denom == 0:
        return 1.0
    return 2.0 * counts.tp / denom


def specificity(counts: ConfusionCounts) -> float:
    """TN / (FP + TN); undefined when the ground truth has no negatives."""
    denom = counts.fp + counts.tn
    if denom == 0:
        raise UndefinedMetricError("specificity undefined: no negative pixels")
    return counts.tn / denom


@dataclass(frozen=True)
class CurvePoint:
    cycle: int
    cost_seconds: float
    regions_labeled: int
    dice: float
    specificity: float
    heuristic: str
    aggregation: str
    seed: int
    val_dice: float | None = None

    def row(self) -> list:
        return [
            self.cycle,
            _fmt(self.cost_seconds),
            self.regions_labeled,
            _fmt(self.dice),
            _fmt(self.specificity),
            self.heuristic,
            self.aggregation,
            self.seed,
            "" if self.val_dice is None else _fmt(self.val_dice),
        ]


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def curve_to_csv(points: list[CurvePoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for p in points:
        writer.writerow(p.row())
    return buf.getvalue()


def curve_from_csv(text: str) -> list[CurvePoint]:
    reader = csv.DictReader(io.StringIO(text))
    points = []
    for row in reader:
        points.append(
            CurvePoint(
                cycle=int(row["cycle"]),
                cost_seconds=float(row["cost_seconds"]),
                regions_labeled=int(row["regions_labeled"]),
                dice=float(row["dice"]),
                specificity=float(row["specificity"]),
                heuristic=row["heuristic"],
                aggregation=row["aggregation"],
                seed=int(row["seed"]),
                val_dice=float(row["val_dice"]) if row.get("val_dice") else None,
            )
        )
    return points


def auc_trapezoid(xs, ys) -> float:
    """Trapezoidal area under a curve sampled at (xs, ys)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.size < 2:
        raise ValueError("need two same-length samples for a trapezoid")
    trapezoid = getattr(np, "trapezoid", np.trapz)
    return float(trapezoid(ys, xs))
