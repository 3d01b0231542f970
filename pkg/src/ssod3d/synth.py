"""Deterministic synthetic LiDAR-like scenes with ground truth, grouped into
pseudo-sequences, for desk-scale end-to-end runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Box3D, Detection, PointCloud, bev_iou
from .hpca import OVERLAP_EPS
from .kitti_io import Calibration, write_calib, write_label, write_velodyne
from .scene import CLASS_NAMES, Difficulty, Scene
from .seeding import derive_seed


@dataclass(frozen=True)
class SynthParams:
    """Scene generator knobs. Class size priors loosely mirror road-scene
    object statistics; they are generator inputs, not measured claims.
    """

    x_range: tuple[float, float] = (0.0, 40.0)
    y_range: tuple[float, float] = (-16.0, 16.0)
    ground_density: float = 1.2  # points per square meter
    ground_z_sigma: float = 0.03
    # class_id -> inclusive (lo, hi) object count per scene
    class_counts: dict[int, tuple[int, int]] = field(
        default_factory=lambda: {0: (1, 3), 1: (0, 2), 2: (0, 2)}
    )
    # class_id -> ((l, w, h) mean, (l, w, h) std); draws clipped to +-2 std
    class_sizes: dict[int, tuple[tuple[float, float, float], tuple[float, float, float]]] = field(
        default_factory=lambda: {
            0: ((3.9, 1.6, 1.5), (0.5, 0.1, 0.1)),
            1: ((0.8, 0.6, 1.7), (0.08, 0.06, 0.17)),
            2: ((1.8, 0.6, 1.7), (0.18, 0.06, 0.17)),
        }
    )
    interior_points: tuple[int, int] = (20, 120)
    clutter_points: tuple[int, int] = (15, 60)
    clutter_clump_size: tuple[int, int] = (3, 8)
    clutter_radius: float = 0.35
    clutter_z: tuple[float, float] = (0.2, 1.8)
    sequence_length: int = 10
    placement_margin: float = 2.5
    placement_retry: int = 30

    def __post_init__(self):
        if self.ground_density <= 0:
            raise ValueError("ground density must be positive")
        for mean, _ in self.class_sizes.values():
            if min(mean) <= 0:
                raise ValueError("size means must be positive")
        if self.sequence_length <= 0:
            raise ValueError("sequence length must be positive")


def _sample_size(rng, mean, std) -> tuple[float, float, float]:
    dims = []
    for m, s in zip(mean, std):
        v = rng.normal(m, s)
        v = min(max(v, m - 2 * s), m + 2 * s)
        dims.append(max(v, 0.05))
    return tuple(dims)


def generate_scene(seed: int, params: SynthParams, scene_id: str = "000000") -> Scene:
    """One scene: ground plane, rejection-placed objects with interior points,
    and clutter clumps. Ground truth carries confidence 1.
    """
    rng = np.random.default_rng(seed)
    x0, x1 = params.x_range
    y0, y1 = params.y_range

    n_ground = int(round(params.ground_density * (x1 - x0) * (y1 - y0)))
    ground = np.column_stack(
        [
            rng.uniform(x0, x1, n_ground),
            rng.uniform(y0, y1, n_ground),
            rng.normal(0.0, params.ground_z_sigma, n_ground),
        ]
    )

    boxes: list[Box3D] = []
    gt: list[Detection] = []
    chunks = [ground]
    dropped = 0
    for class_id in sorted(params.class_counts):
        lo, hi = params.class_counts[class_id]
        count = int(rng.integers(lo, hi + 1))
        mean, std = params.class_sizes[class_id]
        for _ in range(count):
            l, w, h = _sample_size(rng, mean, std)
            placed = None
            for _ in range(params.placement_retry):
                cx = rng.uniform(x0 + params.placement_margin, x1 - params.placement_margin)
                cy = rng.uniform(y0 + params.placement_margin, y1 - params.placement_margin)
                yaw = rng.uniform(-math.pi, math.pi)
                cand = Box3D(np.array([cx, cy, h / 2.0]), l, w, h, yaw)
                if all(bev_iou(cand, b) <= OVERLAP_EPS for b in boxes):
                    placed = cand
                    break
            if placed is None:
                dropped += 1
                continue
            boxes.append(placed)
            gt.append(Detection(placed, class_id, 1.0))
            n_pts = int(rng.integers(params.interior_points[0], params.interior_points[1] + 1))
            local = np.column_stack(
                [
                    rng.uniform(-l / 2.0, l / 2.0, n_pts),
                    rng.uniform(-w / 2.0, w / 2.0, n_pts),
                    rng.uniform(-h / 2.0, h / 2.0, n_pts),
                ]
            )
            c, s = math.cos(placed.yaw), math.sin(placed.yaw)
            world = np.column_stack(
                [
                    local[:, 0] * c - local[:, 1] * s + placed.center[0],
                    local[:, 0] * s + local[:, 1] * c + placed.center[1],
                    local[:, 2] + placed.center[2],
                ]
            )
            chunks.append(world)

    budget = int(rng.integers(params.clutter_points[0], params.clutter_points[1] + 1))
    while budget > 0:
        clump = int(rng.integers(params.clutter_clump_size[0], params.clutter_clump_size[1] + 1))
        clump = min(clump, budget)
        center = np.array(
            [
                rng.uniform(x0, x1),
                rng.uniform(y0, y1),
                rng.uniform(*params.clutter_z),
            ]
        )
        pts = center + rng.normal(0.0, params.clutter_radius, size=(clump, 3))
        chunks.append(pts)
        budget -= clump

    xyz = np.vstack(chunks)
    reflectance = rng.uniform(0.0, 1.0, len(xyz))
    return Scene(
        scene_id=scene_id,
        cloud=PointCloud(xyz, reflectance),
        gt=gt,
        gt_difficulty=[Difficulty.EASY] * len(gt),
        meta={"dropped_objects": dropped, "seed": int(seed)},
    )


def generate_dataset(
    n_scenes: int, params: SynthParams, seed: int = 0
) -> tuple[list[Scene], dict[str, str]]:
    """Scenes with ids 000000.. grouped into consecutive pseudo-sequences."""
    if n_scenes < 1:
        raise ValueError("need at least one scene")
    scenes = []
    sequence_of = {}
    for i in range(n_scenes):
        sid = f"{i:06d}"
        scenes.append(generate_scene(derive_seed(seed, "scene", i), params, scene_id=sid))
        sequence_of[sid] = f"seq{i // params.sequence_length:04d}"
    return scenes, sequence_of


def export_kitti(scenes, out_dir, sequence_of=None) -> None:
    """Write scenes in KITTI layout (velodyne/label_2/calib, identity calib)."""
    root = Path(out_dir)
    for sub in ("velodyne", "label_2", "calib"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    calib = Calibration.identity()
    for scene in scenes:
        write_velodyne(root / "velodyne" / f"{scene.scene_id}.bin", scene.cloud)
        write_calib(root / "calib" / f"{scene.scene_id}.txt", calib)
        write_label(root / "label_2" / f"{scene.scene_id}.txt", scene.gt or [], calib)
    if sequence_of is not None:
        import json

        (root / "sequences.json").write_text(
            json.dumps(sequence_of, indent=2, sort_keys=True) + "\n"
        )
