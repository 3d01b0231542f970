"""The pseudo-label self-training loop: initial fit on labeled data, T rounds
of predict / threshold / select / augmented refit, then inference over all
data. Every source of randomness derives from the configured seed.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .accs import RatioSchedule, ThresholdTable, compute_thresholds, ratio_at, select_mask, selected_fraction_report
from .detector import Detector, FitContext, TrainingSample
from .geometry import Detection
from .hpca import AugmentedScene, AugmentParams, PseudoLabelDB, build_db, hpca
from .kitti_io import Calibration, subsample, write_label
from .scene import NUM_CLASSES, Scene
from .seeding import derive_seed


@dataclass(frozen=True)
class SelfTrainConfig:
    """Loop configuration; defaults follow the standard recipe
    (T=5 rounds, 20% initial ratio growing by 5%, 1:1 batch mix).
    """

    rounds: int = 5
    schedule: RatioSchedule = field(default_factory=RatioSchedule)
    augment: AugmentParams = field(default_factory=AugmentParams)
    b_l: int = 1
    b_u: int = 1
    seed: int = 0
    checkpoint_dir: str | None = None
    n_points: int | None = 16384
    warm_start: bool = True
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("need at least one round")
        if self.b_l < 1 or self.b_u < 1:
            raise ValueError("batch sizes must be positive")

    def to_json_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "schedule": {"c0": self.schedule.c0, "delta_c": self.schedule.delta_c},
            "augment": self.augment.to_json_dict(),
            "b_l": self.b_l,
            "b_u": self.b_u,
            "seed": self.seed,
            "checkpoint_dir": self.checkpoint_dir,
            "n_points": self.n_points,
            "warm_start": self.warm_start,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SelfTrainConfig":
        d = dict(d)
        sched = d.pop("schedule", {})
        aug = d.pop("augment", None)
        return cls(
            schedule=RatioSchedule(**sched),
            augment=AugmentParams.from_json_dict(aug) if aug else AugmentParams(),
            **d,
        )


@dataclass
class PseudoLabels:
    """Pseudo supervision for one scene: the round it was produced in, every
    predicted detection, and the binary selection mask.
    """

    round: int
    detections: list[Detection]
    mask: list[int]

    def selected_count(self) -> int:
        return sum(self.mask)

    def to_json_dict(self) -> dict:
        return {
            "round": self.round,
            "detections": [d.to_json_dict() for d in self.detections],
            "mask": list(self.mask),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PseudoLabels":
        return cls(
            round=int(d["round"]),
            detections=[Detection.from_json_dict(x) for x in d["detections"]],
            mask=[int(m) for m in d["mask"]],
        )


def accrete(previous: dict[str, PseudoLabels], new: dict[str, PseudoLabels]) -> dict[str, PseudoLabels]:
    """Union keyed by scene id; a re-selected scene keeps the newer labels."""
    merged = dict(previous)
    merged.update(new)
    return merged


@dataclass
class BatchPlan:
    batches: list[tuple[tuple[str, ...], tuple[str, ...]]]
    pseudo_empty: bool = False


class _PoolStream:
    """Endless seeded shuffle over a pool, reshuffling on exhaustion."""

    def __init__(self, items, rng):
        self.items = sorted(items)
        self.rng = rng
        self.queue: list[str] = []

    def take(self, n: int) -> tuple[str, ...]:
        out = []
        for _ in range(n):
            if not self.queue:
                order = self.rng.permutation(len(self.items))
                self.queue = [self.items[i] for i in order]
            out.append(self.queue.pop(0))
        return tuple(out)


def make_batches(labeled_ids, pseudo_ids, b_l: int, b_u: int, seed: int = 0) -> BatchPlan:
    """Seeded epoch of batches holding exactly b_l labeled + b_u pseudo scenes.

    Pools recycle independently; the epoch covers the larger pool once. An
    empty pseudo pool degrades to labeled-only batches with a warning flag.
    """
    if b_l < 1 or b_u < 1:
        raise ValueError("batch sizes must be at least 1")
    labeled_ids = sorted(labeled_ids)
    pseudo_ids = sorted(pseudo_ids)
    if not labeled_ids:
        raise ValueError("labeled pool is empty")
    rng = np.random.default_rng(seed)
    lab_stream = _PoolStream(labeled_ids, rng)
    if not pseudo_ids:
        n_batches = math.ceil(len(labeled_ids) / b_l)
        batches = [(lab_stream.take(b_l), ()) for _ in range(n_batches)]
        return BatchPlan(batches=batches, pseudo_empty=True)
    pse_stream = _PoolStream(pseudo_ids, rng)
    n_batches = max(math.ceil(len(labeled_ids) / b_l), math.ceil(len(pseudo_ids) / b_u))
    batches = [(lab_stream.take(b_l), pse_stream.take(b_u)) for _ in range(n_batches)]
    return BatchPlan(batches=batches, pseudo_empty=False)


@dataclass
class RoundRecord:
    """Audit record for one pseudo-labeling round."""

    round: int
    c: float
    thresholds: ThresholdTable
    selection: dict[int, dict]
    scenes_added: list[str]
    pseudo_pool_size: int
    fit_report: dict
    wall_clock: float
    pseudo_pool: dict[str, PseudoLabels] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "round": self.round,
            "c": self.c,
            "thresholds": self.thresholds.to_json_dict(),
            "selection": {str(k): v for k, v in sorted(self.selection.items())},
            "scenes_added": list(self.scenes_added),
            "pseudo_pool_size": self.pseudo_pool_size,
            "fit_report": self.fit_report,
            "wall_clock": self.wall_clock,
            "pseudo_pool": {
                sid: p.to_json_dict() for sid, p in sorted(self.pseudo_pool.items())
            },
        }


@dataclass
class SelfTrainResult:
    final_labels: dict[str, list[Detection]]
    records: list[RoundRecord]
    checkpoint_dir: str | None = None


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _persist_round(ckpt: Path, record: RoundRecord, detector: Detector) -> None:
    round_dir = ckpt / f"round_{record.round}"
    (round_dir / "pseudo_labels").mkdir(parents=True, exist_ok=True)
    _write_json(round_dir / "thresholds.json", record.thresholds.to_json_dict())
    _write_json(round_dir / "model.json", detector.state_dict())
    calib = Calibration.identity()
    for sid, pseudo in sorted(record.pseudo_pool.items()):
        write_label(round_dir / "pseudo_labels" / f"{sid}.txt", pseudo.detections, calib)
    # record.json written last: its presence marks the round complete
    _write_json(round_dir / "record.json", record.to_json_dict())


def _latest_complete_round(ckpt: Path, max_round: int) -> int | None:
    latest = None
    for t in range(max_round + 1):
        if (ckpt / f"round_{t}" / "record.json").exists():
            latest = t
    return latest


def run(
    config: SelfTrainConfig,
    split,
    scenes,
    detector: Detector,
    resume: bool = False,
    jobs: int = 1,
    progress=None,
) -> SelfTrainResult:
    """Execute the full self-training loop.

    Ground truth of unlabeled-split scenes is never handed to the detector's
    fit; unlabeled supervision consists solely of mask-selected pseudo labels.
    A detector failure propagates after the last completed round was
    checkpointed.
    """
    if isinstance(scenes, dict):
        scene_map = dict(scenes)
    else:
        scene_map = {s.scene_id: s for s in scenes}
    for sid in list(split.labeled_ids) + list(split.unlabeled_ids):
        if sid not in scene_map:
            raise ValueError(f"split references unknown scene {sid!r}")
    labeled_ids = sorted(split.labeled_ids)
    unlabeled_ids = sorted(split.unlabeled_ids)

    ckpt = Path(config.checkpoint_dir) if config.checkpoint_dir else None
    if ckpt:
        ckpt.mkdir(parents=True, exist_ok=True)

    def fit_cloud(sid):
        cloud = scene_map[sid].cloud
        if config.n_points is None:
            return cloud
        return subsample(cloud, config.n_points, seed=derive_seed(config.seed, "subsample", sid))

    labeled_samples = []
    for sid in labeled_ids:
        scene = scene_map[sid]
        if scene.gt is None:
            raise ValueError(f"labeled scene {sid!r} has no ground truth")
        labeled_samples.append(
            TrainingSample(
                scene_id=sid,
                cloud=fit_cloud(sid),
                labels=list(scene.gt),
                mask=[1] * len(scene.gt),
                labeled=True,
            )
        )

    def predict_many(ids):
        ids = sorted(ids)
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(lambda s: detector.predict(scene_map[s]), ids))
        else:
            results = [detector.predict(scene_map[s]) for s in ids]
        return dict(zip(ids, results))

    pseudo_pool: dict[str, PseudoLabels] = {}
    records: list[RoundRecord] = []
    start_round = 1

    resumed = None
    if resume and ckpt is not None:
        resumed = _latest_complete_round(ckpt, config.rounds)
    if resumed is not None:
        state = json.loads((ckpt / f"round_{resumed}" / "model.json").read_text())
        detector.load_state_dict(state)
        record_json = json.loads((ckpt / f"round_{resumed}" / "record.json").read_text())
        pseudo_pool = {
            sid: PseudoLabels.from_json_dict(p)
            for sid, p in record_json.get("pseudo_pool", {}).items()
        }
        start_round = resumed + 1
    else:
        t0 = time.perf_counter()
        fit_report = detector.fit(
            labeled_samples,
            [],
            augment=None,
            ctx=FitContext(
                round_index=0,
                b_l=config.b_l,
                b_u=config.b_u,
                seed=derive_seed(config.seed, "fit", 0),
                warm_start=config.warm_start,
            ),
        )
        record = RoundRecord(
            round=0,
            c=0.0,
            thresholds=ThresholdTable(round=0, c=0.0, lam=np.full(config.num_classes, math.inf)),
            selection={},
            scenes_added=[],
            pseudo_pool_size=0,
            fit_report=fit_report,
            wall_clock=time.perf_counter() - t0,
        )
        records.append(record)
        if ckpt:
            _persist_round(ckpt, record, detector)
        if progress:
            progress(record)

    for t in range(start_round, config.rounds + 1):
        t0 = time.perf_counter()
        c = ratio_at(config.schedule, t - 1)
        predictions = predict_many(unlabeled_ids)
        flat = [det for sid in sorted(predictions) for det in predictions[sid]]
        table = compute_thresholds(flat, c, config.num_classes, round_index=t)
        selection = selected_fraction_report(flat, table)

        new_selected: dict[str, PseudoLabels] = {}
        for sid in sorted(predictions):
            dets = predictions[sid]
            mask = select_mask(dets, table)
            if sum(mask) >= 1:
                new_selected[sid] = PseudoLabels(round=t, detections=list(dets), mask=mask)
        pseudo_pool = accrete(pseudo_pool, new_selected)

        db = build_db(
            dataclasses.replace(
                scene_map[sid], pseudo=p.detections, pseudo_mask=p.mask, gt=None, gt_difficulty=None
            )
            for sid, p in sorted(new_selected.items())
        )

        aug_seed = derive_seed(config.seed, "hpca", t)

        def augment_hook(sample: TrainingSample, _db=db, _seed=aug_seed) -> TrainingSample:
            aug = hpca(
                AugmentedScene.initial(sample.scene_id, sample.cloud, sample.labels, sample.mask),
                _db,
                config.augment,
                _seed,
            )
            return TrainingSample(
                scene_id=sample.scene_id,
                cloud=aug.cloud,
                labels=aug.labels,
                mask=aug.mask,
                labeled=sample.labeled,
            )

        pseudo_samples = [
            TrainingSample(
                scene_id=sid,
                cloud=fit_cloud(sid),
                labels=list(pseudo_pool[sid].detections),
                mask=list(pseudo_pool[sid].mask),
                labeled=False,
            )
            for sid in sorted(pseudo_pool)
        ]

        fit_report = detector.fit(
            labeled_samples,
            pseudo_samples,
            augment=augment_hook,
            ctx=FitContext(
                round_index=t,
                b_l=config.b_l,
                b_u=config.b_u,
                seed=derive_seed(config.seed, "fit", t),
                warm_start=config.warm_start,
            ),
        )

        record = RoundRecord(
            round=t,
            c=c,
            thresholds=table,
            selection=selection,
            scenes_added=sorted(new_selected),
            pseudo_pool_size=len(pseudo_pool),
            fit_report=fit_report,
            wall_clock=time.perf_counter() - t0,
            pseudo_pool=pseudo_pool,
        )
        records.append(record)
        if ckpt:
            _persist_round(ckpt, record, detector)
        if progress:
            progress(record)

    final_labels = predict_many(list(scene_map))
    if ckpt:
        final_dir = ckpt / "final_predictions"
        final_dir.mkdir(parents=True, exist_ok=True)
        calib = Calibration.identity()
        for sid in sorted(final_labels):
            write_label(final_dir / f"{sid}.txt", final_labels[sid], calib)
    return SelfTrainResult(
        final_labels=final_labels,
        records=records,
        checkpoint_dir=str(ckpt) if ckpt else None,
    )
