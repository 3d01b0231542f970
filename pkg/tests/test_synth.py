import numpy as np
import pytest

from ssod3d.geometry import bev_iou, points_in_box
from ssod3d.hpca import OVERLAP_EPS
from ssod3d.kitti_io import list_scene_ids, load_scene, read_velodyne, split_by_sequence, write_velodyne
from ssod3d.synth import SynthParams, export_kitti, generate_dataset, generate_scene


class TestGenerateScene:
    def test_deterministic(self):
        params = SynthParams()
        a = generate_scene(123, params)
        b = generate_scene(123, params)
        np.testing.assert_array_equal(a.cloud.xyz, b.cloud.xyz)
        np.testing.assert_array_equal(a.cloud.reflectance, b.cloud.reflectance)
        assert len(a.gt) == len(b.gt)
        for da, db in zip(a.gt, b.gt):
            assert da.box.allclose(db.box, atol=0.0)

    def test_zero_objects(self):
        params = SynthParams(class_counts={0: (0, 0), 1: (0, 0), 2: (0, 0)})
        scene = generate_scene(1, params)
        assert scene.gt == []
        assert len(scene.cloud) > 0

    def test_boxes_pairwise_disjoint(self):
        params = SynthParams()
        for seed in range(20):
            scene = generate_scene(seed, params)
            boxes = [d.box for d in scene.gt]
            for i in range(len(boxes)):
                for j in range(i + 1, len(boxes)):
                    assert bev_iou(boxes[i], boxes[j]) <= OVERLAP_EPS

    def test_interior_points_present(self):
        params = SynthParams(interior_points=(30, 30))
        for seed in range(5):
            scene = generate_scene(seed, params)
            for det in scene.gt:
                inside = points_in_box(scene.cloud, det.box)
                assert len(inside) >= 30

    def test_gt_confidence_one(self):
        scene = generate_scene(7, SynthParams())
        assert all(d.confidence == 1.0 for d in scene.gt)


class TestGenerateDataset:
    def test_sequence_grouping(self):
        scenes, seqmap = generate_dataset(100, SynthParams(sequence_length=10), seed=0)
        assert len(scenes) == 100
        assert len(set(seqmap.values())) == 10

    def test_split_on_uniform_sequences(self):
        scenes, seqmap = generate_dataset(100, SynthParams(sequence_length=10), seed=0)
        split = split_by_sequence([s.scene_id for s in scenes], seqmap, 0.3, seed=1)
        assert len(split.labeled_ids) == 30
        assert len({seqmap[i] for i in split.labeled_ids}) == 3

    def test_scene_ids_unique_and_ordered(self):
        scenes, _ = generate_dataset(12, SynthParams(), seed=4)
        ids = [s.scene_id for s in scenes]
        assert ids == sorted(set(ids))

    def test_object_count_statistics(self):
        counts = {0: (1, 3), 1: (0, 2), 2: (0, 2)}
        params = SynthParams(class_counts=counts)
        scenes, _ = generate_dataset(1000, params, seed=9)
        per_class = {k: [] for k in counts}
        for scene in scenes:
            tallies = {k: 0 for k in counts}
            for det in scene.gt:
                tallies[det.class_id] += 1
            for k, v in tallies.items():
                per_class[k].append(v)
        for k, (lo, hi) in counts.items():
            values = np.arange(lo, hi + 1)
            mean = values.mean()
            var = values.var()
            se = np.sqrt(var / 1000)
            observed = np.mean(per_class[k])
            # placement drops can only lower counts, so allow the 3-SE band
            # plus a small one-sided slack for dropped objects
            assert observed <= mean + 3 * se
            assert observed >= mean - 3 * se - 0.05


class TestKittiExport:
    def test_roundtrip_through_kitti_io(self, tmp_path):
        scenes, seqmap = generate_dataset(4, SynthParams(), seed=2)
        export_kitti(scenes, tmp_path, seqmap)
        assert list_scene_ids(tmp_path) == [s.scene_id for s in scenes]
        for scene in scenes:
            loaded = load_scene(tmp_path, scene.scene_id)
            np.testing.assert_allclose(loaded.cloud.xyz, scene.cloud.xyz, atol=1e-6)
            assert len(loaded.gt) == len(scene.gt)
            for a, b in zip(scene.gt, loaded.gt):
                assert b.box.allclose(a.box, atol=1e-5)
                assert b.class_id == a.class_id

    def test_velodyne_bytes_stable(self, tmp_path):
        scenes, _ = generate_dataset(1, SynthParams(), seed=3)
        export_kitti(scenes, tmp_path)
        src = tmp_path / "velodyne" / "000000.bin"
        cloud = read_velodyne(src)
        write_velodyne(tmp_path / "again.bin", cloud)
        assert src.read_bytes() == (tmp_path / "again.bin").read_bytes()
