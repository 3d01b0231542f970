"""KITTI-style average precision over 3D IoU, per class and difficulty tier."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Detection, iou_3d
from .scene import CLASS_NAMES, Difficulty, Scene

TP, FP, IGNORE = "tp", "fp", "ignore"


@dataclass(frozen=True)
class EvalConfig:
    """Per-class IoU thresholds plus the interpolation variant."""

    iou_thresholds: dict[int, float] = field(
        default_factory=lambda: {0: 0.7, 1: 0.5, 2: 0.5}
    )
    interpolation: str = "R11"
    difficulties: tuple[Difficulty, ...] = (
        Difficulty.EASY,
        Difficulty.MODERATE,
        Difficulty.HARD,
    )

    def __post_init__(self):
        if self.interpolation not in ("R11", "R40"):
            raise ValueError(f"interpolation must be R11 or R40, got {self.interpolation}")
        for k, thr in self.iou_thresholds.items():
            if not 0.0 < thr <= 1.0:
                raise ValueError(f"IoU threshold for class {k} must lie in (0,1], got {thr}")

    def to_json_dict(self) -> dict:
        return {
            "iou_thresholds": {str(k): v for k, v in self.iou_thresholds.items()},
            "interpolation": self.interpolation,
            "difficulties": [d.name for d in self.difficulties],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EvalConfig":
        return cls(
            iou_thresholds={int(k): float(v) for k, v in d["iou_thresholds"].items()},
            interpolation=d["interpolation"],
            difficulties=tuple(Difficulty[n] for n in d["difficulties"]),
        )


def match(
    predictions: list[Detection],
    ground_truths: list[Detection],
    gt_difficulties: list[Difficulty],
    iou_threshold: float,
    difficulty: Difficulty,
) -> tuple[list[str], int]:
    """Greedy matching for one class in one scene.

    Predictions are processed in descending confidence; each takes the
    unmatched eligible ground truth with the highest 3D IoU at or above the
    threshold. Ground truths of harder tiers than requested act as ignore
    regions: matching one yields neither TP nor FP. Returns per-prediction
    flags (input order) and the eligible ground-truth count.
    """
    eligible = [d <= difficulty for d in gt_difficulties]
    flags = [FP] * len(predictions)
    taken = [False] * len(ground_truths)
    order = sorted(range(len(predictions)), key=lambda i: -predictions[i].confidence)
    for i in order:
        pred = predictions[i]
        best_j, best_iou = -1, 0.0
        best_ign_j, best_ign_iou = -1, 0.0
        for j, gt in enumerate(ground_truths):
            if taken[j]:
                continue
            iou = iou_3d(pred.box, gt.box)
            if iou < iou_threshold:
                continue
            if eligible[j]:
                if iou > best_iou:
                    best_j, best_iou = j, iou
            elif iou > best_ign_iou:
                best_ign_j, best_ign_iou = j, iou
        if best_j >= 0:
            flags[i] = TP
            taken[best_j] = True
        elif best_ign_j >= 0:
            flags[i] = IGNORE
            taken[best_ign_j] = True
    return flags, sum(eligible)


@dataclass
class PRCurve:
    """Precision/recall sweep in descending-confidence order, plus its AP."""

    points: list[tuple[float, float, float]]  # (confidence, precision, recall)
    ap: float | None


def _recall_grid(mode: str) -> np.ndarray:
    if mode == "R11":
        return np.linspace(0.0, 1.0, 11)
    return (np.arange(40) + 1) / 40.0


def average_precision(scored_flags, n_gt: int, mode: str = "R11") -> PRCurve:
    """Interpolated AP from pooled (confidence, flag) pairs.

    Ignored predictions contribute nothing; zero eligible ground truth makes
    the cell undefined (ap=None).
    """
    if n_gt == 0:
        return PRCurve(points=[], ap=None)
    pairs = [(c, f) for c, f in scored_flags if f != IGNORE]
    pairs.sort(key=lambda p: -p[0])
    points = []
    tp = fp = 0
    for conf, flag in pairs:
        if flag == TP:
            tp += 1
        else:
            fp += 1
        points.append((conf, tp / (tp + fp), tp / n_gt))
    precisions = np.array([p[1] for p in points])
    recalls = np.array([p[2] for p in points])
    ap = 0.0
    grid = _recall_grid(mode)
    for r in grid:
        at_least = precisions[recalls >= r - 1e-12]
        ap += float(at_least.max()) if len(at_least) else 0.0
    return PRCurve(points=points, ap=ap / len(grid))


@dataclass
class EvalResult:
    """AP per class and difficulty; None marks undefined cells."""

    table: dict[int, dict[str, float | None]]
    config: EvalConfig
    num_runs: int = 1

    def cell(self, class_id: int, difficulty: Difficulty) -> float | None:
        return self.table.get(class_id, {}).get(difficulty.name)

    def mean_ap(self) -> float | None:
        vals = [v for row in self.table.values() for v in row.values() if v is not None]
        return float(np.mean(vals)) if vals else None

    def to_json_dict(self) -> dict:
        return {
            "interpolation": self.config.interpolation,
            "num_runs": self.num_runs,
            "ap": {CLASS_NAMES[k]: dict(row) for k, row in sorted(self.table.items())},
            "mean_ap": self.mean_ap(),
        }

    def text_table(self) -> str:
        tiers = [d.name.capitalize() for d in self.config.difficulties]
        header = f"{'Class':<12}" + "".join(f"{t:>12}" for t in tiers)
        lines = [header, "-" * len(header)]
        for k in sorted(self.table):
            row = self.table[k]
            cells = []
            for d in self.config.difficulties:
                v = row.get(d.name)
                cells.append(f"{'-':>12}" if v is None else f"{100 * v:>12.2f}")
            lines.append(f"{CLASS_NAMES[k]:<12}" + "".join(cells))
        mean = self.mean_ap()
        lines.append("-" * len(header))
        lines.append(f"{'mean AP':<12}" + (f"{'-':>12}" if mean is None else f"{100 * mean:>12.2f}"))
        return "\n".join(lines)


def _evaluate_single(scenes, predictions, config: EvalConfig) -> EvalResult:
    scenes = sorted(scenes, key=lambda s: s.scene_id)
    class_ids = sorted(config.iou_thresholds)
    table: dict[int, dict[str, float | None]] = {}
    for k in class_ids:
        thr = config.iou_thresholds[k]
        row: dict[str, float | None] = {}
        for tier in config.difficulties:
            pooled = []
            n_gt = 0
            for scene in scenes:
                gts = scene.gt or []
                diffs = scene.difficulties()
                gt_k = [g for g in gts if g.class_id == k]
                diff_k = [d for g, d in zip(gts, diffs) if g.class_id == k]
                preds_k = [p for p in predictions.get(scene.scene_id, []) if p.class_id == k]
                flags, eligible = match(preds_k, gt_k, diff_k, thr, tier)
                n_gt += eligible
                pooled.extend((p.confidence, f) for p, f in zip(preds_k, flags))
            row[tier.name] = average_precision(pooled, n_gt, config.interpolation).ap
        if any(v is not None for v in row.values()):
            table[k] = row
    return EvalResult(table=table, config=config)


def evaluate(scenes, predictions, config: EvalConfig | None = None) -> EvalResult:
    """AP table over scenes with ground truth.

    ``predictions`` maps scene id to detections; passing a list of such maps
    evaluates each run and returns the cell-wise mean.
    """
    config = config or EvalConfig()
    if isinstance(predictions, dict):
        return _evaluate_single(scenes, predictions, config)
    results = [_evaluate_single(scenes, run, config) for run in predictions]
    if not results:
        raise ValueError("need at least one prediction run")
    table: dict[int, dict[str, float | None]] = {}
    for k in sorted(set().union(*(r.table.keys() for r in results))):
        row: dict[str, float | None] = {}
        for tier in config.difficulties:
            vals = [r.cell(k, tier) for r in results]
            present = [v for v in vals if v is not None]
            row[tier.name] = float(np.mean(present)) if present else None
        table[k] = row
    return EvalResult(table=table, config=config, num_runs=len(results))
