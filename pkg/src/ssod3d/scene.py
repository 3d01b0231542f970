"""Shared scene-level data model: class vocabulary, difficulty tiers, Scene."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

from .geometry import Detection, PointCloud

CLASS_NAMES = ("Car", "Pedestrian", "Cyclist")
NUM_CLASSES = len(CLASS_NAMES)
CLASS_IDS = {name: i for i, name in enumerate(CLASS_NAMES)}


class Difficulty(IntEnum):
    """KITTI-style difficulty strata, ordered easiest to hardest."""

    EASY = 0
    MODERATE = 1
    HARD = 2
    IGNORED = 3


@dataclass
class Scene:
    """One point-cloud sample: cloud, optional ground truth, optional pseudo labels.

    ``gt_difficulty`` runs parallel to ``gt`` (defaults to EASY when absent);
    ``pseudo_mask`` runs parallel to ``pseudo`` with 1 = selected.
    """

    scene_id: str
    cloud: PointCloud
    gt: list[Detection] | None = None
    gt_difficulty: list[Difficulty] | None = None
    pseudo: list[Detection] | None = None
    pseudo_mask: list[int] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.gt is not None and self.gt_difficulty is not None:
            if len(self.gt) != len(self.gt_difficulty):
                raise ValueError("gt_difficulty must match gt length")
        if self.pseudo is not None and self.pseudo_mask is not None:
            if len(self.pseudo) != len(self.pseudo_mask):
                raise ValueError("pseudo_mask must match pseudo length")

    def difficulties(self) -> list[Difficulty]:
        if self.gt is None:
            return []
        if self.gt_difficulty is None:
            return [Difficulty.EASY] * len(self.gt)
        return list(self.gt_difficulty)
