"""Adaptive class confidence selection: per-class percentile thresholds,
the growing selection-ratio schedule, class assignment, and selection masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Detection


@dataclass(frozen=True)
class RatioSchedule:
    """Selection ratio schedule: starts at c0, grows by delta_c per round."""

    c0: float = 0.20
    delta_c: float = 0.05
    cap: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.c0 <= 1.0:
            raise ValueError(f"c0 must lie in (0, 1], got {self.c0}")
        if self.delta_c < 0.0:
            raise ValueError(f"delta_c must be non-negative, got {self.delta_c}")


def ratio_at(schedule: RatioSchedule, t: int) -> float:
    """Selection ratio for round index t >= 0, clamped to the cap.

    Rounded to 12 decimals so decimal schedules (20% + t * 5%) stay exact.
    """
    if t < 0:
        raise ValueError("round index must be non-negative")
    return min(round(schedule.c0 + t * schedule.delta_c, 12), schedule.cap)


@dataclass
class ThresholdTable:
    """Per-class confidence thresholds for one pseudo-labeling round.

    Classes with an empty prediction pool hold +inf and select nothing.
    """

    round: int
    c: float
    lam: np.ndarray

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=np.float64).reshape(-1)

    @property
    def num_classes(self) -> int:
        return len(self.lam)

    def to_json_dict(self) -> dict:
        return {
            "round": self.round,
            "c": self.c,
            "lambda": [None if math.isinf(v) else v for v in self.lam],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ThresholdTable":
        lam = [math.inf if v is None else float(v) for v in d["lambda"]]
        return cls(round=int(d["round"]), c=float(d["c"]), lam=np.array(lam))


def nearest_rank_threshold(pool: np.ndarray, c: float) -> float:
    """Confidence at 1-based rank ceil(c*N) of the descending-sorted pool."""
    n = len(pool)
    if n == 0:
        return math.inf
    rank = math.ceil(c * n)
    rank = min(max(rank, 1), n)
    ordered = np.sort(np.asarray(pool, dtype=np.float64))[::-1]
    return float(ordered[rank - 1])


def compute_thresholds(
    predictions, c: float, num_classes: int, round_index: int = 0
) -> ThresholdTable:
    """Per-class thresholds from the round's full prediction pool.

    ``predictions`` is an iterable of Detection (already flattened over the
    unlabeled set). For each class the threshold is the confidence at the
    nearest-rank top-c percentile; empty pools get +inf.
    """
    if not 0.0 < c <= 1.0:
        raise ValueError(f"selection ratio must lie in (0, 1], got {c}")
    pools: list[list[float]] = [[] for _ in range(num_classes)]
    for det in predictions:
        pools[det.class_id].append(det.confidence)
    lam = np.full(num_classes, math.inf)
    for k in range(num_classes):
        lam[k] = nearest_rank_threshold(np.asarray(pools[k]), c)
    return ThresholdTable(round=round_index, c=c, lam=lam)


def assign_class(scores, table: ThresholdTable) -> int:
    """Class with the largest score-to-threshold ratio.

    Classes with infinite thresholds are excluded; ties break toward the
    lowest class index. Raises if no class is selectable.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if len(scores) != table.num_classes:
        raise ValueError("scores length must equal the number of classes")
    finite = np.isfinite(table.lam)
    if not finite.any():
        raise ValueError("no selectable class: all thresholds are infinite")
    ratios = np.where(finite, scores / table.lam, -math.inf)
    return int(np.argmax(ratios))


def select_mask(detections, table: ThresholdTable) -> list[int]:
    """Binary selection mask: 1 iff confidence >= the class threshold."""
    return [1 if det.confidence >= table.lam[det.class_id] else 0 for det in detections]


def selected_fraction_report(predictions, table: ThresholdTable) -> dict[int, dict]:
    """Per-class selection diagnostics: {class: {selected, pool, fraction}}."""
    report: dict[int, dict] = {}
    for k in range(table.num_classes):
        pool = [d.confidence for d in predictions if d.class_id == k]
        selected = sum(1 for conf in pool if conf >= table.lam[k])
        fraction = selected / len(pool) if pool else 0.0
        report[k] = {"selected": selected, "pool": len(pool), "fraction": fraction}
    return report
