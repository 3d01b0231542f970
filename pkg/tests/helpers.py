"""Shared test utilities: random inputs and independent geometry oracles."""

import math

import numpy as np

from ssod3d.geometry import Box3D, PointCloud, box_corners


def random_cloud(rng, n=100, extent=10.0, reflectance=True):
    xyz = rng.uniform(-extent, extent, size=(n, 3))
    refl = rng.uniform(0.0, 1.0, n) if reflectance else None
    return PointCloud(xyz, refl)


def random_box(rng, extent=5.0, max_dim=4.0):
    center = rng.uniform(-extent, extent, size=3)
    dims = rng.uniform(0.5, max_dim, size=3)
    yaw = rng.uniform(-math.pi, math.pi)
    return Box3D(center, dims[0], dims[1], dims[2], yaw)


def pairwise_distances(cloud):
    xyz = cloud.xyz
    diff = xyz[:, None, :] - xyz[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def corner_halfspace_membership(cloud, box):
    """Brute-force point-in-box from corner-derived axes and half-extents."""
    corners = box_corners(box)
    center = corners.mean(axis=0)
    axes = [
        (corners[0] - corners[1], box.l / 2.0),  # along length
        (corners[0] - corners[3], box.w / 2.0),  # along width
        (corners[4] - corners[0], box.h / 2.0),  # along height
    ]
    inside = np.ones(len(cloud), dtype=bool)
    rel = cloud.xyz - center
    for axis, half in axes:
        unit = axis / np.linalg.norm(axis)
        inside &= np.abs(rel @ unit) <= half
    return np.nonzero(inside)[0]


def footprint_contains(box, pts2d):
    """Vectorized BEV membership used by the Monte-Carlo IoU oracles."""
    d = pts2d - box.center[:2]
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    u = d[:, 0] * c + d[:, 1] * s
    v = -d[:, 0] * s + d[:, 1] * c
    return (np.abs(u) <= box.l / 2.0) & (np.abs(v) <= box.w / 2.0)


def mc_bev_iou(a, b, n_samples, rng):
    """Monte-Carlo BEV IoU over the joint footprint bounding rectangle."""
    ca = box_corners(a)[:4, :2]
    cb = box_corners(b)[:4, :2]
    lo = np.minimum(ca.min(axis=0), cb.min(axis=0))
    hi = np.maximum(ca.max(axis=0), cb.max(axis=0))
    pts = rng.uniform(lo, hi, size=(n_samples, 2))
    in_a = footprint_contains(a, pts)
    in_b = footprint_contains(b, pts)
    union = (in_a | in_b).sum()
    if union == 0:
        return 0.0
    return (in_a & in_b).sum() / union


def box_contains_3d(box, pts):
    d = pts - box.center
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    u = d[:, 0] * c + d[:, 1] * s
    v = -d[:, 0] * s + d[:, 1] * c
    return (
        (np.abs(u) <= box.l / 2.0)
        & (np.abs(v) <= box.w / 2.0)
        & (np.abs(d[:, 2]) <= box.h / 2.0)
    )


def mc_iou_3d(a, b, n_samples, rng):
    """Monte-Carlo 3D IoU over the joint bounding cuboid."""
    ca = box_corners(a)
    cb = box_corners(b)
    lo = np.minimum(ca.min(axis=0), cb.min(axis=0))
    hi = np.maximum(ca.max(axis=0), cb.max(axis=0))
    pts = rng.uniform(lo, hi, size=(n_samples, 3))
    in_a = box_contains_3d(a, pts)
    in_b = box_contains_3d(b, pts)
    union = (in_a | in_b).sum()
    if union == 0:
        return 0.0
    return (in_a & in_b).sum() / union
