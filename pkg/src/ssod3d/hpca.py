"""Holistic point-cloud augmentation: pseudo-label database paste, global
stochastic transforms, and per-object jitter, composed deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    Box3D,
    Detection,
    PointCloud,
    bev_iou,
    flip_box_y,
    flip_y,
    in_box_mask,
    points_in_box,
    rotate_box_z,
    rotate_z,
    scale,
    scale_box,
)
from .seeding import derive_seed

# Footprint overlap at or below this is treated as non-overlapping.
OVERLAP_EPS = 1e-9


@dataclass(frozen=True)
class AugmentParams:
    """Knobs for the three augmentation stages.

    Global stage: scale in [scale_range], rotation in [-rot_bound, rot_bound],
    flip with probability flip_prob. Object stage: per-box rotation in
    [-obj_rot_bound, obj_rot_bound] and Gaussian translation with std
    obj_trans_sigma per axis. Paste stage: per-class target counts and a
    retry budget for rejected candidates.
    """

    scale_range: tuple[float, float] = (0.95, 1.05)
    rot_bound: float = math.pi / 4.0
    flip_prob: float = 0.5
    obj_rot_bound: float = math.pi / 10.0
    obj_trans_sigma: float = 1.0
    paste_counts: dict[int, int] = field(default_factory=lambda: {0: 12, 1: 6, 2: 6})
    paste_retry_budget: int = 20

    def __post_init__(self):
        a, b = self.scale_range
        if not 0.0 < a <= b:
            raise ValueError(f"scale_range must satisfy 0 < a <= b, got {self.scale_range}")
        if self.rot_bound < 0 or self.obj_rot_bound < 0:
            raise ValueError("rotation bounds must be non-negative")
        if self.obj_trans_sigma < 0:
            raise ValueError("translation sigma must be non-negative")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob must lie in [0,1], got {self.flip_prob}")

    @classmethod
    def identity(cls) -> "AugmentParams":
        """Parameters under which every stage is a no-op."""
        return cls(
            scale_range=(1.0, 1.0),
            rot_bound=0.0,
            flip_prob=0.0,
            obj_rot_bound=0.0,
            obj_trans_sigma=0.0,
            paste_counts={},
            paste_retry_budget=0,
        )

    def to_json_dict(self) -> dict:
        return {
            "scale_range": list(self.scale_range),
            "rot_bound": self.rot_bound,
            "flip_prob": self.flip_prob,
            "obj_rot_bound": self.obj_rot_bound,
            "obj_trans_sigma": self.obj_trans_sigma,
            "paste_counts": {str(k): v for k, v in self.paste_counts.items()},
            "paste_retry_budget": self.paste_retry_budget,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AugmentParams":
        return cls(
            scale_range=tuple(d["scale_range"]),
            rot_bound=d["rot_bound"],
            flip_prob=d["flip_prob"],
            obj_rot_bound=d["obj_rot_bound"],
            obj_trans_sigma=d["obj_trans_sigma"],
            paste_counts={int(k): int(v) for k, v in d["paste_counts"].items()},
            paste_retry_budget=int(d["paste_retry_budget"]),
        )


@dataclass
class DBEntry:
    """One pasteable object: its box, interior points, and provenance."""

    box: Box3D
    points: PointCloud
    source_scene: str
    confidence: float


@dataclass
class PseudoLabelDB:
    """Per-class store of selected pseudo-labeled objects."""

    entries: dict[int, list[DBEntry]] = field(default_factory=dict)

    def size(self, class_id: int | None = None) -> int:
        if class_id is not None:
            return len(self.entries.get(class_id, []))
        return sum(len(v) for v in self.entries.values())


@dataclass
class AugmentedScene:
    """A scene mid-augmentation: cloud, co-transformed labels, provenance."""

    scene_id: str
    cloud: PointCloud
    labels: list[Detection]
    mask: list[int]
    provenance: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, scene_id, cloud, labels, mask=None) -> "AugmentedScene":
        labels = list(labels)
        mask = list(mask) if mask is not None else [1] * len(labels)
        if len(mask) != len(labels):
            raise ValueError("mask length must equal label count")
        return cls(scene_id=scene_id, cloud=cloud, labels=labels, mask=mask)


def build_db(scenes) -> PseudoLabelDB:
    """Collect every mask-selected pseudo detection with its interior points.

    ``scenes`` is an iterable carrying cloud, pseudo detections, and the
    selection mask (Scene objects or anything shaped like them).
    """
    db = PseudoLabelDB()
    for scene in scenes:
        if scene.pseudo is None:
            continue
        mask = scene.pseudo_mask if scene.pseudo_mask is not None else [1] * len(scene.pseudo)
        for det, m in zip(scene.pseudo, mask):
            if not m:
                continue
            idx = points_in_box(scene.cloud, det.box)
            entry = DBEntry(
                box=det.box,
                points=scene.cloud.take(idx),
                source_scene=scene.scene_id,
                confidence=det.confidence,
            )
            db.entries.setdefault(det.class_id, []).append(entry)
    return db


def _footprint_mask(xyz: np.ndarray, box: Box3D) -> np.ndarray:
    """Boolean mask of points whose (x, y) fall inside the box footprint."""
    d = xyz[:, :2] - box.center[:2]
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    u = d[:, 0] * c + d[:, 1] * s
    v = -d[:, 0] * s + d[:, 1] * c
    return (np.abs(u) <= box.l / 2.0) & (np.abs(v) <= box.w / 2.0)


def _concat_clouds(a: PointCloud, b: PointCloud) -> PointCloud:
    xyz = np.vstack([a.xyz, b.xyz])
    if a.reflectance is None and b.reflectance is None:
        return PointCloud(xyz)
    ra = a.reflectance if a.reflectance is not None else np.zeros(len(a))
    rb = b.reflectance if b.reflectance is not None else np.zeros(len(b))
    return PointCloud(xyz, np.concatenate([ra, rb]))


def sample_paste(scene: AugmentedScene, db: PseudoLabelDB, params: AugmentParams, seed: int) -> AugmentedScene:
    """Insert database objects whose footprints do not overlap any scene box.

    Candidates are drawn without replacement per class; each rejection
    consumes one retry from the per-class budget. Scene points under an
    accepted footprint are removed before insertion.
    """
    rng = np.random.default_rng(seed)
    cloud = scene.cloud
    labels = list(scene.labels)
    mask = list(scene.mask)
    boxes = [det.box for det in labels]
    accepted, rejected = [], 0
    for class_id in sorted(params.paste_counts):
        target = params.paste_counts[class_id]
        entries = db.entries.get(class_id, [])
        if target <= 0 or not entries:
            continue
        budget = params.paste_retry_budget
        placed = 0
        for entry_idx in rng.permutation(len(entries)):
            if placed >= target:
                break
            entry = entries[int(entry_idx)]
            if any(bev_iou(entry.box, b) > OVERLAP_EPS for b in boxes):
                rejected += 1
                budget -= 1
                if budget <= 0:
                    break
                continue
            keep = ~_footprint_mask(cloud.xyz, entry.box)
            cloud = _concat_clouds(cloud.take(keep), entry.points)
            labels.append(Detection(entry.box, class_id, entry.confidence))
            mask.append(1)
            boxes.append(entry.box)
            accepted.append(
                {"class_id": class_id, "source_scene": entry.source_scene, "entry": int(entry_idx)}
            )
            placed += 1
    provenance = dict(scene.provenance)
    provenance["paste"] = {
        "accepted": accepted,
        "rejected": rejected,
        "requested": {str(k): v for k, v in sorted(params.paste_counts.items())},
    }
    return AugmentedScene(scene.scene_id, cloud, labels, mask, provenance)


def global_augment(scene: AugmentedScene, params: AugmentParams, seed: int) -> AugmentedScene:
    """Whole-scene stochastic transform: scale, then z-rotation, then flip."""
    rng = np.random.default_rng(seed)
    a, b = params.scale_range
    s = float(rng.uniform(a, b))
    phi = float(rng.uniform(-params.rot_bound, params.rot_bound))
    eta = float(rng.uniform(0.0, 1.0))
    flip = eta < params.flip_prob

    cloud = scene.cloud
    labels = list(scene.labels)
    if s != 1.0:
        cloud = scale(cloud, s)
        labels = [replace(d, box=scale_box(d.box, s)) for d in labels]
    if phi != 0.0:
        cloud = rotate_z(cloud, phi)
        labels = [replace(d, box=rotate_box_z(d.box, phi)) for d in labels]
    if flip:
        cloud = flip_y(cloud)
        labels = [replace(d, box=flip_box_y(d.box)) for d in labels]

    provenance = dict(scene.provenance)
    provenance["global"] = {"scale": s, "rotation": phi, "flip": bool(flip)}
    return AugmentedScene(scene.scene_id, cloud, labels, list(scene.mask), provenance)


def object_augment(scene: AugmentedScene, params: AugmentParams, seed: int) -> AugmentedScene:
    """Independent per-box jitter: rotation about the box center plus a
    Gaussian translation; moves that would create footprint overlap are
    redrawn up to the retry budget, then skipped.
    """
    rng = np.random.default_rng(seed)
    xyz = scene.cloud.xyz.copy()
    labels = list(scene.labels)
    boxes = [det.box for det in labels]
    records = []
    for i in range(len(boxes)):
        moved = False
        retries = 0
        d_theta, trans = 0.0, np.zeros(3)
        for attempt in range(params.paste_retry_budget + 1):
            d_theta = float(rng.uniform(-params.obj_rot_bound, params.obj_rot_bound))
            trans = rng.normal(0.0, params.obj_trans_sigma, size=3)
            candidate = Box3D(
                boxes[i].center + trans, boxes[i].l, boxes[i].w, boxes[i].h, boxes[i].yaw + d_theta
            )
            others = boxes[:i] + boxes[i + 1 :]
            if all(bev_iou(candidate, other) <= OVERLAP_EPS for other in others):
                moved = True
                break
            retries += 1
        if not moved:
            records.append({"index": i, "accepted": False, "retries": retries})
            continue
        if d_theta != 0.0 or np.any(trans != 0.0):
            idx = np.nonzero(in_box_mask(xyz, boxes[i]))[0]
            if len(idx):
                local = xyz[idx] - boxes[i].center
                c, s = math.cos(d_theta), math.sin(d_theta)
                rotated = local.copy()
                rotated[:, 0] = local[:, 0] * c - local[:, 1] * s
                rotated[:, 1] = local[:, 0] * s + local[:, 1] * c
                xyz[idx] = rotated + boxes[i].center + trans
            new_box = Box3D(
                boxes[i].center + trans, boxes[i].l, boxes[i].w, boxes[i].h, boxes[i].yaw + d_theta
            )
            boxes[i] = new_box
            labels[i] = replace(labels[i], box=new_box)
        records.append(
            {
                "index": i,
                "accepted": True,
                "retries": retries,
                "rotation": d_theta,
                "translation": [float(v) for v in trans],
            }
        )
    provenance = dict(scene.provenance)
    provenance["object"] = records
    cloud = PointCloud(xyz, scene.cloud.reflectance)
    return AugmentedScene(scene.scene_id, cloud, labels, list(scene.mask), provenance)


def hpca(scene: AugmentedScene, db: PseudoLabelDB, params: AugmentParams, seed: int) -> AugmentedScene:
    """Full augmentation pipeline: paste, then global, then object jitter.

    Stage seeds are mixed from (seed, scene id, stage tag), so results do not
    depend on the order scenes are processed in.
    """
    out = sample_paste(scene, db, params, derive_seed(seed, scene.scene_id, "paste"))
    out = global_augment(out, params, derive_seed(seed, scene.scene_id, "global"))
    out = object_augment(out, params, derive_seed(seed, scene.scene_id, "object"))
    return out
