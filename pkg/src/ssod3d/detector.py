"""Pluggable detector contract, loss aggregation, and two reference
detectors: a noise-controllable oracle and a geometric clustering heuristic.

The clustering detector is deliberately simple: ground removal, grid
connected components, minimum-area oriented rectangles, Gaussian size priors
with an empirical confidence calibration. Its fitted state improves with the
amount and diversity of supervision it sees, which is what gives pseudo-label
rounds measurable headroom at desk scale.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geometry import Box3D, Detection, PointCloud, bev_iou
from .scene import NUM_CLASSES, Scene
from .seeding import derive_seed

# ---------------------------------------------------------------------------
# Loss aggregation
# ---------------------------------------------------------------------------


def supervised_loss(terms) -> float:
    """Mean of (bin + res) over positive proposals; zero for an empty set."""
    terms = np.asarray(terms, dtype=np.float64).reshape(-1, 2)
    if len(terms) == 0:
        return 0.0
    return float(terms.sum(axis=1).mean())


def unsupervised_loss(terms, mask) -> float:
    """Masked mean: (1/N_pos) * sum_i m_i * (bin_i + res_i).

    N_pos counts every positive proposal, selected or not.
    """
    terms = np.asarray(terms, dtype=np.float64).reshape(-1, 2)
    mask = np.asarray(mask, dtype=np.float64).reshape(-1)
    if len(mask) != len(terms):
        raise ValueError(f"mask length {len(mask)} does not match {len(terms)} terms")
    if len(terms) == 0:
        return 0.0
    return float((terms.sum(axis=1) * mask).sum() / len(terms))


def total_loss(ls: float, lu: float) -> float:
    return float(ls) + float(lu)


# ---------------------------------------------------------------------------
# Detector contract
# ---------------------------------------------------------------------------


@dataclass
class TrainingSample:
    """What a detector is allowed to see during fitting.

    For unlabeled-split scenes the labels are pseudo detections and the mask
    flags the selected ones; ground truth is structurally absent.
    """

    scene_id: str
    cloud: PointCloud
    labels: list[Detection]
    mask: list[int]
    labeled: bool

    def __post_init__(self):
        if len(self.labels) != len(self.mask):
            raise ValueError("mask length must equal label count")


@dataclass(frozen=True)
class FitContext:
    """Per-fit knobs handed down by the training loop."""

    round_index: int = 0
    b_l: int = 1
    b_u: int = 1
    seed: int = 0
    warm_start: bool = True


class Detector(abc.ABC):
    """Behavioral contract: fit on (labeled, pseudo) samples, predict scenes.

    ``predict`` must be deterministic given the fitted state and the scene.
    Implementations apply the augmentation hook to pseudo samples only.
    """

    @abc.abstractmethod
    def fit(self, labeled, pseudo=(), augment=None, ctx: FitContext | None = None) -> dict:
        ...

    @abc.abstractmethod
    def predict(self, scene: Scene) -> list[Detection]:
        ...

    @abc.abstractmethod
    def state_dict(self) -> dict:
        ...

    @abc.abstractmethod
    def load_state_dict(self, state: dict) -> None:
        ...


# ---------------------------------------------------------------------------
# Oracle detector (test double with controllable noise)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleDetectorConfig:
    """Noise model for the oracle: per-class Gaussian perturbations, a miss
    rate, a per-scene false-positive rate, and an exponential map from
    perturbation magnitude to confidence.
    """

    center_noise_sigma: dict[int, float] = field(default_factory=dict)
    size_noise_sigma: dict[int, float] = field(default_factory=dict)
    yaw_noise_sigma: dict[int, float] = field(default_factory=dict)
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0
    confidence_decay: float = 1.0
    fp_confidence: tuple[float, float] = (0.05, 0.4)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.miss_rate <= 1.0:
            raise ValueError(f"miss_rate must lie in [0,1], got {self.miss_rate}")
        if not 0.0 <= self.false_positive_rate <= 1.0:
            raise ValueError(f"false_positive_rate must lie in [0,1]")
        for d in (self.center_noise_sigma, self.size_noise_sigma, self.yaw_noise_sigma):
            if any(v < 0 for v in d.values()):
                raise ValueError("noise sigmas must be non-negative")

    @classmethod
    def noiseless(cls, seed: int = 0) -> "OracleDetectorConfig":
        return cls(seed=seed)

    @classmethod
    def uniform(
        cls,
        center: float = 0.0,
        size: float = 0.0,
        yaw: float = 0.0,
        num_classes: int = NUM_CLASSES,
        **kwargs,
    ) -> "OracleDetectorConfig":
        return cls(
            center_noise_sigma={k: center for k in range(num_classes)},
            size_noise_sigma={k: size for k in range(num_classes)},
            yaw_noise_sigma={k: yaw for k in range(num_classes)},
            **kwargs,
        )

    def to_json_dict(self) -> dict:
        return {
            "center_noise_sigma": {str(k): v for k, v in self.center_noise_sigma.items()},
            "size_noise_sigma": {str(k): v for k, v in self.size_noise_sigma.items()},
            "yaw_noise_sigma": {str(k): v for k, v in self.yaw_noise_sigma.items()},
            "miss_rate": self.miss_rate,
            "false_positive_rate": self.false_positive_rate,
            "confidence_decay": self.confidence_decay,
            "fp_confidence": list(self.fp_confidence),
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "OracleDetectorConfig":
        return cls(
            center_noise_sigma={int(k): float(v) for k, v in d["center_noise_sigma"].items()},
            size_noise_sigma={int(k): float(v) for k, v in d["size_noise_sigma"].items()},
            yaw_noise_sigma={int(k): float(v) for k, v in d["yaw_noise_sigma"].items()},
            miss_rate=d["miss_rate"],
            false_positive_rate=d["false_positive_rate"],
            confidence_decay=d["confidence_decay"],
            fp_confidence=tuple(d["fp_confidence"]),
            seed=int(d["seed"]),
        )


def oracle_predict(scene: Scene, config: OracleDetectorConfig, seed: int) -> list[Detection]:
    """Perturbed copies of the scene's ground truth plus occasional fakes.

    Confidence decays exponentially with the injected perturbation magnitude,
    so zero noise yields the ground truth at confidence 1.
    """
    if scene.gt is None:
        raise ValueError(f"oracle_predict needs ground truth on scene {scene.scene_id}")
    rng = np.random.default_rng(seed)
    out: list[Detection] = []
    for det in scene.gt:
        if rng.uniform() < config.miss_rate:
            continue
        box = det.box
        sc = config.center_noise_sigma.get(det.class_id, 0.0)
        ss = config.size_noise_sigma.get(det.class_id, 0.0)
        sy = config.yaw_noise_sigma.get(det.class_id, 0.0)
        dc = rng.normal(0.0, sc, size=3) if sc > 0 else np.zeros(3)
        ds = rng.normal(0.0, ss, size=3) if ss > 0 else np.zeros(3)
        dy = float(rng.normal(0.0, sy)) if sy > 0 else 0.0
        magnitude = float(np.linalg.norm(dc) + np.abs(ds).sum() + abs(dy))
        if magnitude == 0.0:
            out.append(Detection(box, det.class_id, 1.0))
            continue
        new_box = Box3D(
            box.center + dc,
            max(box.l + ds[0], 0.05),
            max(box.w + ds[1], 0.05),
            max(box.h + ds[2], 0.05),
            box.yaw + dy,
        )
        conf = math.exp(-config.confidence_decay * magnitude)
        out.append(Detection(new_box, det.class_id, min(max(conf, 0.0), 1.0)))
    if config.false_positive_rate > 0 and rng.uniform() < config.false_positive_rate:
        lo = scene.cloud.xyz.min(axis=0)
        hi = scene.cloud.xyz.max(axis=0)
        center = np.array(
            [rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]), rng.uniform(0.3, 1.5)]
        )
        dims = rng.uniform(0.5, 4.0, size=3)
        yaw = rng.uniform(-math.pi, math.pi)
        conf = rng.uniform(*config.fp_confidence)
        out.append(
            Detection(
                Box3D(center, dims[0], dims[1], dims[2], yaw),
                int(rng.integers(0, NUM_CLASSES)),
                conf,
            )
        )
    return out


class OracleDetector(Detector):
    """Reads the hidden ground truth at predict time; fitting is a no-op."""

    def __init__(self, config: OracleDetectorConfig | None = None):
        self.config = config or OracleDetectorConfig.noiseless()

    def fit(self, labeled, pseudo=(), augment=None, ctx=None) -> dict:
        return {"num_labeled": len(list(labeled)), "num_pseudo": len(list(pseudo))}

    def predict(self, scene: Scene) -> list[Detection]:
        return oracle_predict(scene, self.config, derive_seed(self.config.seed, scene.scene_id))

    def state_dict(self) -> dict:
        return {"type": "oracle", "config": self.config.to_json_dict()}

    def load_state_dict(self, state: dict) -> None:
        self.config = OracleDetectorConfig.from_json_dict(state["config"])


# ---------------------------------------------------------------------------
# Minimum-area oriented rectangle
# ---------------------------------------------------------------------------


def min_area_rect(points2d: np.ndarray) -> tuple[np.ndarray, float, float, float]:
    """Smallest-area oriented rectangle enclosing the points.

    Returns (center, long side, short side, yaw of the long side). The
    optimum has a side collinear with a convex-hull edge, so only hull edge
    angles are scanned.
    """
    pts = np.unique(np.asarray(points2d, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) == 1:
        return pts[0].copy(), 0.0, 0.0, 0.0
    try:
        hull_pts = pts[ConvexHull(pts).vertices]
    except (QhullError, ValueError):
        # Degenerate (collinear) input: align with the principal direction.
        centered = pts - pts.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        angles = [math.atan2(vt[0, 1], vt[0, 0])]
        hull_pts = pts
    else:
        edges = np.roll(hull_pts, -1, axis=0) - hull_pts
        angles = [math.atan2(e[1], e[0]) for e in edges]

    best = None
    for theta in angles:
        c, s = math.cos(theta), math.sin(theta)
        u = hull_pts[:, 0] * c + hull_pts[:, 1] * s
        v = -hull_pts[:, 0] * s + hull_pts[:, 1] * c
        du, dv = u.max() - u.min(), v.max() - v.min()
        area = du * dv
        if best is None or area < best[0]:
            cu, cv = (u.max() + u.min()) / 2.0, (v.max() + v.min()) / 2.0
            center = np.array([cu * c - cv * s, cu * s + cv * c])
            best = (area, center, du, dv, theta)
    _, center, du, dv, theta = best
    if du >= dv:
        return center, float(du), float(dv), theta
    return center, float(dv), float(du), theta + math.pi / 2.0


# ---------------------------------------------------------------------------
# Clustering detector
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterDetectorConfig:
    cell_size: float = 0.45
    min_cluster_points: int = 5
    ground_percentile: float = 2.0
    ground_clearance: float = 0.15
    dims_blend: float = 0.45  # weight of raw cluster extents vs the prior mean
    min_emit_confidence: float = 0.02
    nms_iou: float = 0.2
    std_floor: float = 0.02
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell size must be positive")
        if not 0.0 <= self.dims_blend <= 1.0:
            raise ValueError("dims_blend must lie in [0,1]")

    def to_json_dict(self) -> dict:
        return {
            "cell_size": self.cell_size,
            "min_cluster_points": self.min_cluster_points,
            "ground_percentile": self.ground_percentile,
            "ground_clearance": self.ground_clearance,
            "dims_blend": self.dims_blend,
            "min_emit_confidence": self.min_emit_confidence,
            "nms_iou": self.nms_iou,
            "std_floor": self.std_floor,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ClusterDetectorConfig":
        return cls(**d)


@dataclass
class ClassPrior:
    mean: np.ndarray  # (l, w, h)
    std: np.ndarray
    weight: float

    def mahalanobis_sq(self, dims: np.ndarray) -> float:
        z = (np.asarray(dims) - self.mean) / self.std
        return float(np.dot(z, z))

    def nll_score(self, dims: np.ndarray) -> float:
        return self.mahalanobis_sq(dims) + float(2.0 * np.log(self.std).sum())


@dataclass
class ClusterDetectorModel:
    """Fitted state: ground height, per-class size priors, calibration knots."""

    z_ground: float
    priors: dict[int, ClassPrior]
    calibration: dict[int, np.ndarray]  # ascending mahalanobis-squared knots
    config: ClusterDetectorConfig

    def confidence(self, class_id: int, d2: float) -> float:
        knots = self.calibration.get(class_id)
        if knots is None or len(knots) == 0:
            return 0.0
        n = len(knots)
        survival = 1.0 - (np.arange(n) + 0.5) / n
        return float(np.interp(d2, knots, survival, left=1.0, right=0.0))

    def to_json_dict(self) -> dict:
        return {
            "z_ground": self.z_ground,
            "priors": {
                str(k): {
                    "mean": list(map(float, p.mean)),
                    "std": list(map(float, p.std)),
                    "weight": p.weight,
                }
                for k, p in sorted(self.priors.items())
            },
            "calibration": {
                str(k): [float(v) for v in knots] for k, knots in sorted(self.calibration.items())
            },
            "config": self.config.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ClusterDetectorModel":
        return cls(
            z_ground=float(d["z_ground"]),
            priors={
                int(k): ClassPrior(
                    mean=np.array(p["mean"]), std=np.array(p["std"]), weight=float(p["weight"])
                )
                for k, p in d["priors"].items()
            },
            calibration={int(k): np.array(v, dtype=np.float64) for k, v in d["calibration"].items()},
            config=ClusterDetectorConfig.from_json_dict(d["config"]),
        )


def _scene_weights(labeled_ids, pseudo_ids, ctx: FitContext) -> dict[str, int]:
    """Integer multiplicity of each scene over one epoch of B_l:B_u batches."""
    from .selftrain import make_batches  # local import: selftrain depends on this module

    if not pseudo_ids:
        return {sid: 1 for sid in labeled_ids}
    plan = make_batches(labeled_ids, pseudo_ids, ctx.b_l, ctx.b_u, ctx.seed)
    weights: dict[str, int] = {}
    for batch_labeled, batch_pseudo in plan.batches:
        for sid in batch_labeled + batch_pseudo:
            weights[sid] = weights.get(sid, 0) + 1
    return weights


@dataclass
class RawCluster:
    """One extracted cluster: BEV rectangle plus vertical extent."""

    center2: np.ndarray
    dims: np.ndarray  # (long side, short side, top minus ground)
    yaw: float
    n_points: int

    def footprint_box(self, z_ground: float) -> Box3D:
        center = np.array([self.center2[0], self.center2[1], z_ground + self.dims[2] / 2.0])
        return Box3D(center, self.dims[0], self.dims[1], self.dims[2], self.yaw)


def extract_clusters(cloud: PointCloud, z_ground: float, config: ClusterDetectorConfig) -> list[RawCluster]:
    """Ground removal, grid connected components, oriented-rectangle fits."""
    xyz = cloud.xyz
    keep = xyz[:, 2] >= z_ground + config.ground_clearance
    pts = xyz[keep]
    out: list[RawCluster] = []
    if len(pts) == 0:
        return out
    for cluster in _grid_clusters(pts, config.cell_size, config.min_cluster_points):
        cpts = pts[cluster]
        center2, le, we, yaw = min_area_rect(cpts[:, :2])
        h_raw = max(float(cpts[:, 2].max()) - z_ground, 0.05)
        dims = np.array([max(le, 0.05), max(we, 0.05), h_raw])
        out.append(RawCluster(center2=center2, dims=dims, yaw=yaw, n_points=len(cluster)))
    return out


def _match_clusters_to_boxes(clusters, boxes, z_ground: float, min_iou: float = 0.1):
    """Greedy one-to-one cluster/box pairs by descending footprint IoU."""
    pairs = []
    for i, cl in enumerate(clusters):
        raw_box = cl.footprint_box(z_ground)
        for j, box in enumerate(boxes):
            iou = bev_iou(raw_box, box)
            if iou >= min_iou:
                pairs.append((iou, i, j))
    pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
    used_c, used_b, matched = set(), set(), []
    for iou, i, j in pairs:
        if i in used_c or j in used_b:
            continue
        used_c.add(i)
        used_b.add(j)
        matched.append((i, j))
    return matched


def cluster_fit(
    labeled,
    pseudo=(),
    augment=None,
    ctx: FitContext | None = None,
    config: ClusterDetectorConfig | None = None,
) -> tuple[ClusterDetectorModel, dict]:
    """Estimate ground height, per-class size priors, and the confidence
    calibration from the supervision the loop provides.

    Size priors come from the supervision box dims. The calibration is
    self-calibrated: the detector clusters each training scene, matches
    clusters to supervision boxes, and records the prior distance of the
    matched raw cluster dims, so confidences reflect what real clusters look
    like at predict time. Scenes are weighted by their multiplicity under
    the configured labeled-to-pseudo batch mix; the augmentation hook runs
    on pseudo samples only.
    """
    config = config or ClusterDetectorConfig()
    ctx = ctx or FitContext()
    labeled = sorted(labeled, key=lambda s: s.scene_id)
    pseudo = sorted(pseudo, key=lambda s: s.scene_id)
    if augment is not None:
        pseudo = [augment(s) for s in pseudo]

    weights = _scene_weights([s.scene_id for s in labeled], [s.scene_id for s in pseudo], ctx)

    # Ground height comes from labeled clouds only: it is a sensor-setup
    # property, and augmented pseudo clouds move object points in z.
    z_pool = [s.cloud.xyz[:, 2] for s in labeled]
    if not z_pool:
        raise ValueError("cluster_fit needs at least one labeled scene")
    z_ground = float(np.percentile(np.concatenate(z_pool), config.ground_percentile))

    dims_by_class: dict[int, list[tuple[np.ndarray, int]]] = {}
    n_boxes_labeled = n_boxes_pseudo = 0
    samples = list(labeled) + list(pseudo)
    for sample in samples:
        w = weights.get(sample.scene_id, 0)
        if w == 0:
            continue
        for det, m in zip(sample.labels, sample.mask):
            if not m:
                continue
            dims = np.array([det.box.l, det.box.w, det.box.h])
            dims_by_class.setdefault(det.class_id, []).append((dims, w))
            if sample.labeled:
                n_boxes_labeled += 1
            else:
                n_boxes_pseudo += 1

    priors: dict[int, ClassPrior] = {}
    for k, entries in sorted(dims_by_class.items()):
        dims = np.vstack([d for d, _ in entries])
        w = np.array([float(wt) for _, wt in entries])
        total = w.sum()
        mean = (dims * w[:, None]).sum(axis=0) / total
        if len(entries) >= 2:
            var = ((dims - mean) ** 2 * w[:, None]).sum(axis=0) / total
            std = np.sqrt(var)
        else:
            std = 0.1 * mean
        std = np.maximum(std, config.std_floor)
        priors[k] = ClassPrior(mean=mean, std=std, weight=float(total))

    knots: dict[int, list] = {k: [] for k in priors}
    n_matched = 0
    for sample in samples:
        w = weights.get(sample.scene_id, 0)
        if w == 0:
            continue
        supervision = [
            det for det, m in zip(sample.labels, sample.mask) if m and det.class_id in priors
        ]
        if not supervision:
            continue
        clusters = extract_clusters(sample.cloud, z_ground, config)
        matched = _match_clusters_to_boxes(clusters, [d.box for d in supervision], z_ground)
        for ci, bj in matched:
            det = supervision[bj]
            d2 = priors[det.class_id].mahalanobis_sq(clusters[ci].dims)
            knots[det.class_id].extend([d2] * w)
            n_matched += 1
    calibration = {
        k: np.sort(np.asarray(v, dtype=np.float64)) for k, v in knots.items() if v
    }

    model = ClusterDetectorModel(
        z_ground=z_ground, priors=priors, calibration=calibration, config=config
    )

    # Loss summary: dims residual (mahalanobis^2) as the res term, zero bin.
    sup_terms = []
    for sample in labeled:
        for det in sample.labels:
            if det.class_id in priors:
                dims = np.array([det.box.l, det.box.w, det.box.h])
                sup_terms.append((0.0, priors[det.class_id].mahalanobis_sq(dims)))
    unsup_terms, unsup_mask = [], []
    for sample in pseudo:
        for det, m in zip(sample.labels, sample.mask):
            if det.class_id in priors:
                dims = np.array([det.box.l, det.box.w, det.box.h])
                unsup_terms.append((0.0, priors[det.class_id].mahalanobis_sq(dims)))
                unsup_mask.append(m)
    ls = supervised_loss(sup_terms)
    lu = unsupervised_loss(unsup_terms, unsup_mask)
    report = {
        "num_labeled_scenes": len(labeled),
        "num_pseudo_scenes": len(pseudo),
        "num_labeled_boxes": n_boxes_labeled,
        "num_pseudo_boxes": n_boxes_pseudo,
        "num_calibration_matches": n_matched,
        "z_ground": z_ground,
        "supervised_loss": ls,
        "unsupervised_loss": lu,
        "total_loss": total_loss(ls, lu),
    }
    return model, report


def _grid_clusters(xyz: np.ndarray, cell_size: float, min_points: int) -> list[np.ndarray]:
    """Connected components of occupied BEV grid cells (8-neighborhood)."""
    cells: dict[tuple[int, int], list[int]] = {}
    cx = np.floor(xyz[:, 0] / cell_size).astype(np.int64)
    cy = np.floor(xyz[:, 1] / cell_size).astype(np.int64)
    for i in range(len(xyz)):
        cells.setdefault((int(cx[i]), int(cy[i])), []).append(i)
    visited: set[tuple[int, int]] = set()
    clusters = []
    for key in sorted(cells):
        if key in visited:
            continue
        stack = [key]
        visited.add(key)
        members: list[int] = []
        while stack:
            kx, ky = stack.pop()
            members.extend(cells[(kx, ky)])
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    nxt = (kx + dx, ky + dy)
                    if nxt in cells and nxt not in visited:
                        visited.add(nxt)
                        stack.append(nxt)
        if len(members) >= min_points:
            clusters.append(np.array(sorted(members), dtype=np.int64))
    return clusters


def cluster_predict(model: ClusterDetectorModel, scene: Scene) -> list[Detection]:
    """Ground removal, grid clustering, oriented-box fitting, classification
    by size-prior likelihood, calibrated confidence, and greedy BEV NMS.
    """
    cfg = model.config
    if len(scene.cloud) == 0 or not model.priors:
        return []

    candidates: list[Detection] = []
    for cluster in extract_clusters(scene.cloud, model.z_ground, cfg):
        raw_dims = cluster.dims
        best_k, best_score, best_d2 = None, math.inf, math.inf
        for k, prior in sorted(model.priors.items()):
            score = prior.nll_score(raw_dims)
            if score < best_score:
                best_k, best_score = k, score
                best_d2 = prior.mahalanobis_sq(raw_dims)
        if best_k is None:
            continue
        conf = model.confidence(best_k, best_d2)
        if conf < cfg.min_emit_confidence:
            continue
        prior = model.priors[best_k]
        dims = cfg.dims_blend * raw_dims + (1.0 - cfg.dims_blend) * prior.mean
        center = np.array(
            [cluster.center2[0], cluster.center2[1], model.z_ground + dims[2] / 2.0]
        )
        candidates.append(
            Detection(Box3D(center, dims[0], dims[1], dims[2], cluster.yaw), best_k, conf)
        )

    # Greedy BEV NMS, highest confidence first.
    order = sorted(range(len(candidates)), key=lambda i: -candidates[i].confidence)
    kept: list[Detection] = []
    for i in order:
        det = candidates[i]
        if all(bev_iou(det.box, other.box) <= cfg.nms_iou for other in kept):
            kept.append(det)
    return kept


class ClusterDetector(Detector):
    """Non-neural reference detector backed by ClusterDetectorModel."""

    def __init__(self, config: ClusterDetectorConfig | None = None):
        self.config = config or ClusterDetectorConfig()
        self.model: ClusterDetectorModel | None = None

    def fit(self, labeled, pseudo=(), augment=None, ctx=None) -> dict:
        self.model, report = cluster_fit(
            list(labeled), list(pseudo), augment=augment, ctx=ctx, config=self.config
        )
        return report

    def predict(self, scene: Scene) -> list[Detection]:
        if self.model is None:
            raise RuntimeError("ClusterDetector.predict called before fit")
        return cluster_predict(self.model, scene)

    def state_dict(self) -> dict:
        if self.model is None:
            return {"type": "cluster", "model": None, "config": self.config.to_json_dict()}
        return {"type": "cluster", "model": self.model.to_json_dict()}

    def load_state_dict(self, state: dict) -> None:
        if state.get("model") is None:
            self.model = None
            self.config = ClusterDetectorConfig.from_json_dict(state["config"])
        else:
            self.model = ClusterDetectorModel.from_json_dict(state["model"])
            self.config = self.model.config
