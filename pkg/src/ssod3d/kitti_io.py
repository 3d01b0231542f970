"""KITTI object-detection artifacts: velodyne scans, labels, calibration,
camera-to-LiDAR box conversion, subsampling, and sequence-aware splits.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Box3D, Detection, PointCloud, normalize_yaw
from .scene import CLASS_IDS, CLASS_NAMES, Difficulty, Scene


class KittiIOError(ValueError):
    """Malformed or incomplete KITTI artifact."""


@dataclass
class Calibration:
    """Projection and rigid transforms from a KITTI calib file."""

    P2: np.ndarray
    R0_rect: np.ndarray
    Tr_velo_to_cam: np.ndarray

    def __post_init__(self):
        self.P2 = np.asarray(self.P2, dtype=np.float64).reshape(3, 4)
        self.R0_rect = np.asarray(self.R0_rect, dtype=np.float64).reshape(3, 3)
        self.Tr_velo_to_cam = np.asarray(self.Tr_velo_to_cam, dtype=np.float64).reshape(3, 4)
        for name in ("P2", "R0_rect", "Tr_velo_to_cam"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise KittiIOError(f"calibration matrix {name} contains non-finite values")
        err = np.abs(self.R0_rect @ self.R0_rect.T - np.eye(3)).max()
        if err > 1e-3:
            raise KittiIOError(f"R0_rect is not orthonormal (max deviation {err:.2e})")

    @classmethod
    def identity(cls) -> "Calibration":
        p2 = np.zeros((3, 4))
        p2[:3, :3] = np.eye(3)
        return cls(P2=p2, R0_rect=np.eye(3), Tr_velo_to_cam=p2.copy())

    def velo_to_cam_matrix(self) -> np.ndarray:
        """Homogeneous 4x4 mapping LiDAR points to the rectified camera frame."""
        r0 = np.eye(4)
        r0[:3, :3] = self.R0_rect
        tr = np.eye(4)
        tr[:3, :4] = self.Tr_velo_to_cam
        return r0 @ tr

    def cam_to_velo_matrix(self) -> np.ndarray:
        return np.linalg.inv(self.velo_to_cam_matrix())


@dataclass
class KittiLabel:
    """One parsed line of a KITTI object label file."""

    type: str
    truncated: float
    occluded: int
    alpha: float
    bbox2d: tuple[float, float, float, float]
    dims: tuple[float, float, float]  # (h, w, l), camera convention
    location: tuple[float, float, float]  # camera frame, bottom-center
    rotation_y: float
    score: float | None = None


# ---------------------------------------------------------------------------
# Velodyne binary scans
# ---------------------------------------------------------------------------


def read_velodyne(path) -> PointCloud:
    """Parse consecutive little-endian float32 (x, y, z, reflectance) records."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise KittiIOError(f"cannot read velodyne scan {path}: {exc}") from exc
    if len(raw) % 16 != 0:
        raise KittiIOError(
            f"velodyne scan {path} is truncated or misaligned: "
            f"{len(raw)} bytes is not a multiple of 16"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    return PointCloud(data[:, :3].astype(np.float64), data[:, 3].astype(np.float64))


def write_velodyne(path, cloud: PointCloud) -> None:
    """Inverse of read_velodyne; missing reflectance is written as zeros."""
    refl = cloud.reflectance
    if refl is None:
        refl = np.zeros(len(cloud))
    data = np.empty((len(cloud), 4), dtype="<f4")
    data[:, :3] = cloud.xyz
    data[:, 3] = refl
    Path(path).write_bytes(data.tobytes())


# ---------------------------------------------------------------------------
# Calibration files
# ---------------------------------------------------------------------------


def read_calib(path) -> Calibration:
    """Parse a KITTI calib file of "KEY: v1 v2 ..." lines."""
    entries: dict[str, np.ndarray] = {}
    path = Path(path)
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or ":" not in line:
            continue
        key, _, rest = line.partition(":")
        try:
            entries[key.strip()] = np.array([float(v) for v in rest.split()])
        except ValueError as exc:
            raise KittiIOError(f"calib {path}: cannot parse entry {key!r}: {exc}") from exc
    shapes = {"P2": (3, 4), "R0_rect": (3, 3), "Tr_velo_to_cam": (3, 4)}
    mats = {}
    for key, shape in shapes.items():
        if key not in entries:
            raise KittiIOError(f"calib {path}: missing required entry {key!r}")
        if entries[key].size != shape[0] * shape[1]:
            raise KittiIOError(
                f"calib {path}: entry {key!r} has {entries[key].size} values, "
                f"expected {shape[0] * shape[1]}"
            )
        mats[key] = entries[key].reshape(shape)
    return Calibration(P2=mats["P2"], R0_rect=mats["R0_rect"], Tr_velo_to_cam=mats["Tr_velo_to_cam"])


def write_calib(path, calib: Calibration) -> None:
    """Write a calib file readable by read_calib (P0/P1/P3 mirror P2)."""
    def fmt(mat):
        return " ".join(repr(float(v)) for v in np.asarray(mat).ravel())

    lines = [
        f"P0: {fmt(calib.P2)}",
        f"P1: {fmt(calib.P2)}",
        f"P2: {fmt(calib.P2)}",
        f"P3: {fmt(calib.P2)}",
        f"R0_rect: {fmt(calib.R0_rect)}",
        f"Tr_velo_to_cam: {fmt(calib.Tr_velo_to_cam)}",
        f"Tr_imu_to_velo: {fmt(np.hstack([np.eye(3), np.zeros((3, 1))]))}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Label files and camera<->LiDAR box conversion
# ---------------------------------------------------------------------------


def parse_label_line(line: str, lineno: int) -> KittiLabel:
    fields = line.split()
    if len(fields) not in (15, 16):
        raise KittiIOError(
            f"label line {lineno}: expected 15 or 16 fields, got {len(fields)}"
        )
    try:
        return KittiLabel(
            type=fields[0],
            truncated=float(fields[1]),
            occluded=int(float(fields[2])),
            alpha=float(fields[3]),
            bbox2d=tuple(float(v) for v in fields[4:8]),
            dims=tuple(float(v) for v in fields[8:11]),
            location=tuple(float(v) for v in fields[11:14]),
            rotation_y=float(fields[14]),
            score=float(fields[15]) if len(fields) == 16 else None,
        )
    except ValueError as exc:
        raise KittiIOError(f"label line {lineno}: {exc}") from exc


def read_label_records(path) -> list[KittiLabel]:
    """All label lines of a file, including DontCare and foreign categories."""
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if line.strip():
            records.append(parse_label_line(line, lineno))
    return records


def label_to_detection(label: KittiLabel, calib: Calibration) -> Detection:
    """Camera-frame label to a LiDAR-frame Detection.

    The camera location is the bottom-center; the LiDAR box center is lifted
    by h/2. Yaw follows delta = -rotation_y - pi/2.
    """
    h, w, l = label.dims
    loc = np.array([*label.location, 1.0])
    center = (calib.cam_to_velo_matrix() @ loc)[:3]
    center[2] += h / 2.0
    yaw = normalize_yaw(-label.rotation_y - math.pi / 2.0)
    score = 1.0 if label.score is None else min(max(label.score, 0.0), 1.0)
    return Detection(Box3D(center, l, w, h, yaw), CLASS_IDS[label.type], score)


def detection_to_label(det: Detection, calib: Calibration) -> KittiLabel:
    """Inverse of label_to_detection; 2D fields are benign placeholders."""
    box = det.box
    bottom = box.center.copy()
    bottom[2] -= box.h / 2.0
    loc = calib.velo_to_cam_matrix() @ np.array([*bottom, 1.0])
    rotation_y = normalize_yaw(-box.yaw - math.pi / 2.0)
    alpha = normalize_yaw(rotation_y - math.atan2(loc[0], loc[2]))
    return KittiLabel(
        type=CLASS_NAMES[det.class_id],
        truncated=0.0,
        occluded=0,
        alpha=alpha,
        bbox2d=(0.0, 0.0, 100.0, 100.0),
        dims=(box.h, box.w, box.l),
        location=tuple(loc[:3]),
        rotation_y=rotation_y,
        score=det.confidence,
    )


def read_label(path, calib: Calibration) -> list[Detection]:
    """LiDAR-frame detections for the scored categories; others are dropped."""
    return [
        label_to_detection(rec, calib)
        for rec in read_label_records(path)
        if rec.type in CLASS_IDS
    ]


def format_label(label: KittiLabel) -> str:
    parts = [
        label.type,
        f"{label.truncated:.8f}",
        str(label.occluded),
        f"{label.alpha:.8f}",
        *(f"{v:.8f}" for v in label.bbox2d),
        *(f"{v:.8f}" for v in label.dims),
        *(f"{v:.8f}" for v in label.location),
        f"{label.rotation_y:.8f}",
    ]
    if label.score is not None:
        parts.append(f"{label.score:.8f}")
    return " ".join(parts)


def write_label(path, detections, calib: Calibration) -> None:
    """Write detections as KITTI label lines with the score column."""
    lines = [format_label(detection_to_label(det, calib)) for det in detections]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def assign_difficulty(label: KittiLabel) -> Difficulty:
    """KITTI benchmark tier: easiest tier whose constraints the label meets."""
    height = label.bbox2d[3] - label.bbox2d[1]
    if height >= 40.0 and label.occluded <= 0 and label.truncated <= 0.15:
        return Difficulty.EASY
    if height >= 25.0 and label.occluded <= 1 and label.truncated <= 0.30:
        return Difficulty.MODERATE
    if height >= 25.0 and label.occluded <= 2 and label.truncated <= 0.50:
        return Difficulty.HARD
    return Difficulty.IGNORED


# ---------------------------------------------------------------------------
# Subsampling
# ---------------------------------------------------------------------------


def subsample(cloud: PointCloud, n: int = 16384, seed: int = 0) -> PointCloud:
    """Deterministic fixed-size sample: without replacement when the cloud is
    large enough, otherwise all points plus replacement draws up to n.
    """
    if n <= 0:
        raise ValueError(f"sample size must be positive, got {n}")
    if len(cloud) == 0:
        raise ValueError("cannot subsample an empty cloud")
    rng = np.random.default_rng(seed)
    if len(cloud) >= n:
        idx = rng.choice(len(cloud), size=n, replace=False)
    else:
        extra = rng.choice(len(cloud), size=n - len(cloud), replace=True)
        idx = np.concatenate([np.arange(len(cloud)), extra])
    return cloud.take(idx)


# ---------------------------------------------------------------------------
# Sequence-aware dataset splits
# ---------------------------------------------------------------------------


@dataclass
class DatasetSplit:
    labeled_ids: list[str]
    unlabeled_ids: list[str]
    ratio: float
    seed: int

    def __post_init__(self):
        overlap = set(self.labeled_ids) & set(self.unlabeled_ids)
        if overlap:
            raise ValueError(f"split sides overlap on {sorted(overlap)[:5]}")

    def to_json_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "seed": self.seed,
            "labeled_ids": sorted(self.labeled_ids),
            "unlabeled_ids": sorted(self.unlabeled_ids),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetSplit":
        d = json.loads(Path(path).read_text())
        return cls(
            labeled_ids=list(d["labeled_ids"]),
            unlabeled_ids=list(d["unlabeled_ids"]),
            ratio=float(d["ratio"]),
            seed=int(d["seed"]),
        )


def block_sequence_map(ids, block_length: int = 10) -> dict[str, str]:
    """Fallback sequence map: consecutive sorted scene ids in fixed blocks.

    Used when no recording-sequence mapping is available.
    """
    if block_length <= 0:
        raise ValueError("block length must be positive")
    return {sid: f"block{i // block_length:04d}" for i, sid in enumerate(sorted(ids))}


def split_by_sequence(ids, sequence_of, ratio: float, seed: int = 0) -> DatasetSplit:
    """Assign whole sequences to the labeled side, in seeded-random order,
    until the labeled scene fraction first reaches the requested ratio.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    ids = sorted(ids)
    if not ids:
        raise ValueError("cannot split an empty id set")
    groups: dict[str, list[str]] = {}
    for sid in ids:
        if sid not in sequence_of:
            raise KittiIOError(f"scene id {sid!r} has no sequence mapping")
        groups.setdefault(str(sequence_of[sid]), []).append(sid)
    order = sorted(groups)
    rng = np.random.default_rng(seed)
    order = [order[i] for i in rng.permutation(len(order))]
    labeled: list[str] = []
    total = len(ids)
    taken = 0
    for seq in order:
        if len(labeled) / total >= ratio:
            break
        labeled.extend(groups[seq])
        taken += 1
    labeled_set = set(labeled)
    unlabeled = [sid for sid in ids if sid not in labeled_set]
    return DatasetSplit(
        labeled_ids=sorted(labeled), unlabeled_ids=unlabeled, ratio=ratio, seed=seed
    )


# ---------------------------------------------------------------------------
# Dataset-directory helpers
# ---------------------------------------------------------------------------


def list_scene_ids(dataset_dir) -> list[str]:
    velo_dir = Path(dataset_dir) / "velodyne"
    if not velo_dir.is_dir():
        raise KittiIOError(f"dataset directory {dataset_dir} has no velodyne/ subdirectory")
    return sorted(p.stem for p in velo_dir.glob("*.bin"))


def load_scene(dataset_dir, scene_id: str, with_labels: bool = True) -> Scene:
    """Read one scene (cloud, calib, labels) from a KITTI-layout directory."""
    root = Path(dataset_dir)
    cloud = read_velodyne(root / "velodyne" / f"{scene_id}.bin")
    calib_path = root / "calib" / f"{scene_id}.txt"
    calib = read_calib(calib_path) if calib_path.exists() else Calibration.identity()
    gt = None
    difficulty = None
    label_path = root / "label_2" / f"{scene_id}.txt"
    if with_labels and label_path.exists():
        records = [r for r in read_label_records(label_path) if r.type in CLASS_IDS]
        gt = [label_to_detection(r, calib) for r in records]
        difficulty = [assign_difficulty(r) for r in records]
    return Scene(scene_id=scene_id, cloud=cloud, gt=gt, gt_difficulty=difficulty)
