"""Core numerical primitives: point clouds, oriented boxes, transforms, IoU.

All functions are pure; clouds and boxes are treated as immutable values.
Coordinates live in the LiDAR frame (x forward, y left, z up), meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# On-edge tolerance for BEV polygon clipping. Footprints are meter-scale,
# so 1e-9 m is far below any sensor noise.
CLIP_EPS = 1e-9


def normalize_yaw(angle: float) -> float:
    """Wrap an angle into the canonical interval (-pi, pi]."""
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


@dataclass
class PointCloud:
    """Ordered 3D points with optional per-point reflectance in [0, 1].

    ``xyz`` is an (N, 3) float array; ``reflectance`` is (N,) or None.
    """

    xyz: np.ndarray
    reflectance: np.ndarray | None = None

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.xyz)):
            raise ValueError("point coordinates must be finite")
        if self.reflectance is not None:
            self.reflectance = np.asarray(self.reflectance, dtype=np.float64).reshape(-1)
            if len(self.reflectance) != len(self.xyz):
                raise ValueError(
                    f"reflectance length {len(self.reflectance)} != point count {len(self.xyz)}"
                )
            if not np.all(np.isfinite(self.reflectance)):
                raise ValueError("reflectance values must be finite")

    def __len__(self) -> int:
        return len(self.xyz)

    def take(self, indices) -> "PointCloud":
        """New cloud holding the selected rows (reflectance follows)."""
        refl = None if self.reflectance is None else self.reflectance[indices]
        return PointCloud(self.xyz[indices], refl)


@dataclass
class Box3D:
    """Oriented 3D box: geometric center, sizes (l, w, h), yaw about z.

    Yaw is normalized to (-pi, pi] on construction.
    """

    center: np.ndarray
    l: float
    w: float
    h: float
    yaw: float = 0.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(self.center)):
            raise ValueError("box center must be finite")
        self.l = float(self.l)
        self.w = float(self.w)
        self.h = float(self.h)
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise ValueError(f"box sizes must be positive, got {(self.l, self.w, self.h)}")
        self.yaw = normalize_yaw(float(self.yaw))

    @property
    def volume(self) -> float:
        return self.l * self.w * self.h

    def allclose(self, other: "Box3D", atol: float = 1e-9) -> bool:
        return (
            np.allclose(self.center, other.center, atol=atol)
            and abs(self.l - other.l) <= atol
            and abs(self.w - other.w) <= atol
            and abs(self.h - other.h) <= atol
            and abs(normalize_yaw(self.yaw - other.yaw)) <= atol
        )

    def to_json_dict(self) -> dict:
        return {
            "center": [float(v) for v in self.center],
            "lwh": [self.l, self.w, self.h],
            "yaw": self.yaw,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Box3D":
        return cls(np.array(d["center"]), *d["lwh"], yaw=d["yaw"])


@dataclass
class Detection:
    """A classified box with confidence; unit of prediction and pseudo-label."""

    box: Box3D
    class_id: int
    confidence: float = 1.0

    def __post_init__(self):
        self.class_id = int(self.class_id)
        self.confidence = float(self.confidence)
        if self.class_id < 0:
            raise ValueError("class_id must be non-negative")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0,1], got {self.confidence}")

    def to_json_dict(self) -> dict:
        return {
            "box": self.box.to_json_dict(),
            "class_id": self.class_id,
            "confidence": self.confidence,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Detection":
        return cls(Box3D.from_json_dict(d["box"]), d["class_id"], d["confidence"])


# ---------------------------------------------------------------------------
# Point-cloud transforms
# ---------------------------------------------------------------------------


def rotate_z(cloud: PointCloud, angle: float) -> PointCloud:
    """Rotate all points about the vertical z axis by ``angle`` radians."""
    if not math.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return PointCloud(cloud.xyz @ rot.T, cloud.reflectance)


def scale(cloud: PointCloud, s: float) -> PointCloud:
    """Scale all coordinates by a positive factor ``s``."""
    if not (s > 0):
        raise ValueError(f"scale factor must be positive, got {s}")
    return PointCloud(cloud.xyz * float(s), cloud.reflectance)


def flip_y(cloud: PointCloud) -> PointCloud:
    """Reflect across the x-z plane: (x, y, z) -> (x, -y, z)."""
    xyz = cloud.xyz.copy()
    xyz[:, 1] = -xyz[:, 1]
    return PointCloud(xyz, cloud.reflectance)


# ---------------------------------------------------------------------------
# Box co-transforms (labels must follow their points)
# ---------------------------------------------------------------------------


def rotate_box_z(box: Box3D, angle: float) -> Box3D:
    if not math.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    c, s = math.cos(angle), math.sin(angle)
    x, y, z = box.center
    center = np.array([x * c - y * s, x * s + y * c, z])
    return Box3D(center, box.l, box.w, box.h, box.yaw + angle)


def scale_box(box: Box3D, s: float) -> Box3D:
    if not (s > 0):
        raise ValueError(f"scale factor must be positive, got {s}")
    return Box3D(box.center * s, box.l * s, box.w * s, box.h * s, box.yaw)


def flip_box_y(box: Box3D) -> Box3D:
    center = box.center.copy()
    center[1] = -center[1]
    return Box3D(center, box.l, box.w, box.h, -box.yaw)


def transform_box(box: Box3D, op: str, value: float | None = None) -> Box3D:
    """Apply one of the named co-transforms: 'rotate_z', 'scale', 'flip_y'."""
    if op == "rotate_z":
        return rotate_box_z(box, value)
    if op == "scale":
        return scale_box(box, value)
    if op == "flip_y":
        return flip_box_y(box)
    raise ValueError(f"unknown box transform {op!r}")


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


def box_corners(box: Box3D) -> np.ndarray:
    """The 8 corners as an (8, 3) array.

    Order: bottom face counter-clockwise viewed from +z, starting at
    (+l/2, +w/2), then the top face in the same order.
    """
    hl, hw, hh = box.l / 2.0, box.w / 2.0, box.h / 2.0
    footprint = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s], [s, c]])
    fp = footprint @ rot.T + box.center[:2]
    corners = np.empty((8, 3))
    corners[:4, :2] = fp
    corners[4:, :2] = fp
    corners[:4, 2] = box.center[2] - hh
    corners[4:, 2] = box.center[2] + hh
    return corners


def bev_corners(box: Box3D) -> np.ndarray:
    """Footprint corners as a (4, 2) array, counter-clockwise."""
    return box_corners(box)[:4, :2]


def in_box_mask(xyz: np.ndarray, box: Box3D) -> np.ndarray:
    """Boolean closed-box membership for an (N, 3) coordinate array."""
    d = xyz - box.center
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    u = d[:, 0] * c + d[:, 1] * s
    v = -d[:, 0] * s + d[:, 1] * c
    return (
        (np.abs(u) <= box.l / 2.0)
        & (np.abs(v) <= box.w / 2.0)
        & (np.abs(d[:, 2]) <= box.h / 2.0)
    )


def points_in_box(cloud: PointCloud, box: Box3D) -> np.ndarray:
    """Indices of points inside the closed box (boundary inclusive)."""
    return np.nonzero(in_box_mask(cloud.xyz, box))[0]


# ---------------------------------------------------------------------------
# Rotated IoU via convex polygon clipping
# ---------------------------------------------------------------------------


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: clip a convex polygon by a CCW convex polygon."""
    output = list(subject)
    n = len(clip)
    for i in range(n):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        pts, output = output, []
        prev = pts[-1]
        prev_in = ex * (prev[1] - ay) - ey * (prev[0] - ax) >= -CLIP_EPS
        for cur in pts:
            cur_in = ex * (cur[1] - ay) - ey * (cur[0] - ax) >= -CLIP_EPS
            if cur_in != prev_in:
                # segment crosses the clip edge; append the intersection
                dx, dy = cur[0] - prev[0], cur[1] - prev[1]
                denom = ex * dy - ey * dx
                if abs(denom) > CLIP_EPS:
                    t = (ex * (ay - prev[1]) - ey * (ax - prev[0])) / denom
                    output.append((prev[0] + t * dx, prev[1] + t * dy))
            if cur_in:
                output.append(tuple(cur))
            prev, prev_in = cur, cur_in
    return np.asarray(output, dtype=np.float64).reshape(-1, 2)


def _polygon_area(poly: np.ndarray) -> float:
    """Shoelace area of a simple polygon given as (N, 2) vertices."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def bev_intersection_area(a: Box3D, b: Box3D) -> float:
    # Bounding-circle rejection: footprints cannot intersect when the
    # centers are farther apart than the sum of the half-diagonals.
    dx = a.center[0] - b.center[0]
    dy = a.center[1] - b.center[1]
    reach = (math.hypot(a.l, a.w) + math.hypot(b.l, b.w)) / 2.0
    if dx * dx + dy * dy > reach * reach:
        return 0.0
    inter = _clip_polygon(bev_corners(a), bev_corners(b))
    return _polygon_area(inter)


def bev_iou(a: Box3D, b: Box3D) -> float:
    """IoU of the two yaw-rotated footprints in the x-y plane."""
    inter = bev_intersection_area(a, b)
    if inter <= 0.0:
        return 0.0
    area_a = a.l * a.w
    area_b = b.l * b.w
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return float(min(max(inter / union, 0.0), 1.0))


def iou_3d(a: Box3D, b: Box3D) -> float:
    """3D IoU: BEV intersection area times vertical overlap over union volume."""
    inter_area = bev_intersection_area(a, b)
    if inter_area <= 0.0:
        return 0.0
    za0, za1 = a.center[2] - a.h / 2.0, a.center[2] + a.h / 2.0
    zb0, zb1 = b.center[2] - b.h / 2.0, b.center[2] + b.h / 2.0
    overlap = min(za1, zb1) - max(za0, zb0)
    if overlap <= 0.0:
        return 0.0
    inter_vol = inter_area * overlap
    union = a.volume + b.volume - inter_vol
    if union <= 0.0:
        return 0.0
    return float(min(max(inter_vol / union, 0.0), 1.0))
