"""Operator-facing command surface for reproducible batch runs.

All randomness flows from the seeds recorded in the config; outputs land in
a run directory named by the config hash so reruns are comparable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import kitti_io, synth
from .detector import ClusterDetector, ClusterDetectorConfig, OracleDetector, OracleDetectorConfig
from .evaluation import EvalConfig, evaluate
from .hpca import AugmentedScene, AugmentParams, build_db, hpca
from .kitti_io import Calibration, DatasetSplit, block_sequence_map, split_by_sequence
from .scene import NUM_CLASSES
from .selftrain import SelfTrainConfig
from .selftrain import run as selftrain_run
from .synth import SynthParams

SCHEMA_VERSION = 1

_RUN_CONFIG_KEYS = {
    "schema_version",
    "dataset_dir",
    "split_manifest",
    "detector",
    "detector_config",
    "seed",
    "selftrain",
    "augment",
    "eval",
    "out_dir",
}


class ConfigError(ValueError):
    pass


def config_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def load_run_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    cfg = json.loads(path.read_text())
    unknown = set(cfg) - _RUN_CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {cfg.get('schema_version')!r}, expected {SCHEMA_VERSION}"
        )
    for key in ("dataset_dir", "split_manifest"):
        if key not in cfg:
            raise ConfigError(f"config misses required key {key!r}")
        if not Path(cfg[key]).exists():
            raise ConfigError(f"{key} path {cfg[key]!r} does not exist")
    if cfg.get("detector", "cluster") not in ("oracle", "cluster"):
        raise ConfigError(f"detector must be 'oracle' or 'cluster', got {cfg.get('detector')!r}")
    return cfg


def build_detector(cfg: dict):
    kind = cfg.get("detector", "cluster")
    det_cfg = cfg.get("detector_config") or {}
    if kind == "oracle":
        if det_cfg:
            return OracleDetector(OracleDetectorConfig.from_json_dict(det_cfg))
        return OracleDetector(OracleDetectorConfig.noiseless(seed=int(cfg.get("seed", 0))))
    if det_cfg:
        return ClusterDetector(ClusterDetectorConfig.from_json_dict(det_cfg))
    return ClusterDetector()


def _selftrain_config(cfg: dict, checkpoint_dir: str) -> SelfTrainConfig:
    d = dict(cfg.get("selftrain") or {})
    if "augment" in cfg and cfg["augment"] is not None:
        d["augment"] = cfg["augment"]
    d.setdefault("seed", int(cfg.get("seed", 0)))
    d["checkpoint_dir"] = checkpoint_dir
    try:
        return SelfTrainConfig.from_json_dict(d)
    except TypeError as exc:
        raise ConfigError(f"bad selftrain config: {exc}") from exc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    params = SynthParams()
    if args.config:
        overrides = json.loads(Path(args.config).read_text())
        params = _synth_params_from_dict(overrides)
    if args.sequence_length:
        params = replace(params, sequence_length=args.sequence_length)
    scenes, sequence_of = synth.generate_dataset(args.n_scenes, params, seed=args.seed)
    synth.export_kitti(scenes, args.out, sequence_of)
    print(json.dumps({"event": "synth", "scenes": len(scenes), "out": str(args.out)}))
    return 0


def _synth_params_from_dict(d: dict) -> SynthParams:
    kwargs = dict(d)
    for key in ("x_range", "y_range", "interior_points", "clutter_points",
                "clutter_clump_size", "clutter_z"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    if "class_counts" in kwargs:
        kwargs["class_counts"] = {int(k): tuple(v) for k, v in kwargs["class_counts"].items()}
    if "class_sizes" in kwargs:
        kwargs["class_sizes"] = {
            int(k): (tuple(v[0]), tuple(v[1])) for k, v in kwargs["class_sizes"].items()
        }
    try:
        return SynthParams(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad synth params: {exc}") from exc


def cmd_split(args) -> int:
    ids = kitti_io.list_scene_ids(args.data_dir)
    if args.mapping:
        sequence_of = json.loads(Path(args.mapping).read_text())
    else:
        seq_path = Path(args.data_dir) / "sequences.json"
        if seq_path.exists():
            sequence_of = json.loads(seq_path.read_text())
        else:
            sequence_of = block_sequence_map(ids, args.block_length)
    split = split_by_sequence(ids, sequence_of, args.ratio, seed=args.seed)
    split.save(args.out)
    print(
        json.dumps(
            {
                "event": "split",
                "labeled": len(split.labeled_ids),
                "unlabeled": len(split.unlabeled_ids),
                "out": str(args.out),
            }
        )
    )
    return 0


def cmd_selftrain(args) -> int:
    cfg = load_run_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    cfg["seed"] = seed
    out_root = Path(args.out or cfg.get("out_dir", "runs"))
    run_dir = out_root / f"run_{config_hash(cfg)}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")

    split = DatasetSplit.load(cfg["split_manifest"])
    scene_ids = sorted(set(split.labeled_ids) | set(split.unlabeled_ids))
    scenes = {sid: kitti_io.load_scene(cfg["dataset_dir"], sid) for sid in scene_ids}
    detector = build_detector(cfg)
    st_config = _selftrain_config(cfg, str(run_dir / "checkpoints"))

    def progress(record):
        print(
            json.dumps(
                {
                    "event": "round",
                    "round": record.round,
                    "c": record.c,
                    "selection": {str(k): v for k, v in sorted(record.selection.items())},
                    "scenes_added": len(record.scenes_added),
                    "pseudo_pool": record.pseudo_pool_size,
                    "wall_clock": round(record.wall_clock, 3),
                },
                sort_keys=True,
            ),
            flush=True,
        )

    result = selftrain_run(
        st_config, split, scenes, detector, resume=args.resume, jobs=args.jobs, progress=progress
    )
    print(
        json.dumps(
            {
                "event": "done",
                "rounds": st_config.rounds,
                "run_dir": str(run_dir),
                "final_predictions": str(Path(result.checkpoint_dir) / "final_predictions"),
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_eval(args) -> int:
    gt_ids = kitti_io.list_scene_ids(args.gt_dir)
    scenes = [kitti_io.load_scene(args.gt_dir, sid) for sid in gt_ids]
    pred_dir = Path(args.pred_dir)
    pred_ids = sorted(p.stem for p in pred_dir.glob("*.txt"))
    extra = set(pred_ids) - set(gt_ids)
    if extra:
        raise ConfigError(f"prediction ids without ground truth: {sorted(extra)[:5]}")
    predictions = {}
    for scene in scenes:
        path = pred_dir / f"{scene.scene_id}.txt"
        calib_path = Path(args.gt_dir) / "calib" / f"{scene.scene_id}.txt"
        calib = kitti_io.read_calib(calib_path) if calib_path.exists() else Calibration.identity()
        predictions[scene.scene_id] = kitti_io.read_label(path, calib) if path.exists() else []
    config = EvalConfig()
    if args.config:
        config = EvalConfig.from_json_dict(json.loads(Path(args.config).read_text())["eval"])
    if args.r40:
        config = replace(config, interpolation="R40")
    result = evaluate(scenes, predictions, config)
    print(result.text_table())
    if args.out:
        Path(args.out).write_text(json.dumps(result.to_json_dict(), indent=2, sort_keys=True) + "\n")
    return 0


def cmd_augment(args) -> int:
    params = AugmentParams()
    if args.config:
        params = AugmentParams.from_json_dict(json.loads(Path(args.config).read_text())["augment"])
    ids = kitti_io.list_scene_ids(args.data_dir)
    if args.scene_id not in ids:
        raise ConfigError(f"scene {args.scene_id!r} not found in {args.data_dir}")
    scenes = {sid: kitti_io.load_scene(args.data_dir, sid) for sid in ids}
    # The paste database treats every labeled object in the corpus as selected.
    db = build_db(
        replace(s, pseudo=s.gt, pseudo_mask=[1] * len(s.gt or []))
        for s in scenes.values()
        if s.gt and s.scene_id != args.scene_id
    )
    scene = scenes[args.scene_id]
    aug = hpca(
        AugmentedScene.initial(scene.scene_id, scene.cloud, scene.gt or []),
        db,
        params,
        args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    calib = Calibration.identity()
    kitti_io.write_velodyne(out / f"{scene.scene_id}.bin", aug.cloud)
    kitti_io.write_label(out / f"{scene.scene_id}.txt", aug.labels, calib)
    (out / f"{scene.scene_id}_provenance.json").write_text(
        json.dumps(aug.provenance, indent=2, sort_keys=True) + "\n"
    )
    print(json.dumps({"event": "augment", "scene": scene.scene_id, "labels": len(aug.labels)}))
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssod3d", description="Semi-supervised 3D detection self-training toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic KITTI-format corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-scenes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sequence-length", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON file of generator parameters")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="write a sequence-aware labeled/unlabeled split manifest")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mapping", default=None, help="JSON scene-id to sequence-id map")
    p.add_argument("--block-length", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("selftrain", help="run the pseudo-label self-training loop")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="override the output root directory")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_selftrain)

    p = sub.add_parser("eval", help="evaluate KITTI-format predictions against ground truth")
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--r40", action="store_true", help="use 40-point interpolation")
    p.add_argument("--out", default=None, help="also write the table as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment", help="augment one scene and write the result with provenance")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--scene-id", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_augment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, kitti_io.KittiIOError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
