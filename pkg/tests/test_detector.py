import json
import math

import numpy as np
import pytest

from helpers import random_box
from ssod3d.detector import (
    ClusterDetector,
    ClusterDetectorConfig,
    ClusterDetectorModel,
    FitContext,
    OracleDetector,
    OracleDetectorConfig,
    TrainingSample,
    cluster_fit,
    cluster_predict,
    min_area_rect,
    oracle_predict,
    supervised_loss,
    total_loss,
    unsupervised_loss,
)
from ssod3d.geometry import Box3D, Detection, PointCloud, iou_3d
from ssod3d.scene import Scene
from ssod3d.seeding import derive_seed
from ssod3d.synth import SynthParams, generate_dataset, generate_scene


class TestLossAggregation:
    def test_supervised_mean(self):
        assert supervised_loss([(1, 1), (2, 0), (0, 2)]) == pytest.approx(2.0)

    def test_supervised_empty_guard(self):
        assert supervised_loss([]) == 0.0

    def test_supervised_matches_naive_sum(self):
        rng = np.random.default_rng(0)
        terms = rng.uniform(0, 5, size=(100, 2))
        naive = sum(b + r for b, r in terms) / len(terms)
        assert supervised_loss(terms) == pytest.approx(naive, rel=1e-12)

    def test_unsupervised_zero_mask(self):
        terms = [(1.0, 2.0), (3.0, 4.0)]
        assert unsupervised_loss(terms, [0, 0]) == 0.0

    def test_unsupervised_full_mask_equals_supervised(self):
        rng = np.random.default_rng(1)
        terms = rng.uniform(0, 3, size=(50, 2))
        assert unsupervised_loss(terms, np.ones(50)) == pytest.approx(
            supervised_loss(terms), abs=1e-12
        )

    def test_unsupervised_masked_subset_algebra(self):
        rng = np.random.default_rng(2)
        terms = rng.uniform(0, 3, size=(40, 2))
        mask = (rng.uniform(size=40) < 0.5).astype(int)
        selected = terms[mask.astype(bool)]
        expected = supervised_loss(selected) * (mask.sum() / len(terms)) if mask.sum() else 0.0
        assert unsupervised_loss(terms, mask) == pytest.approx(expected, abs=1e-12)

    def test_unsupervised_length_mismatch(self):
        with pytest.raises(ValueError, match="mask length"):
            unsupervised_loss([(1, 1)], [1, 0])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        terms = rng.uniform(0, 3, size=(30, 2))
        mask = (rng.uniform(size=30) < 0.6).astype(int)
        base_s = supervised_loss(terms)
        base_u = unsupervised_loss(terms, mask)
        for _ in range(20):
            perm = rng.permutation(30)
            assert supervised_loss(terms[perm]) == pytest.approx(base_s, abs=1e-12)
            assert unsupervised_loss(terms[perm], mask[perm]) == pytest.approx(base_u, abs=1e-12)

    def test_total(self):
        assert total_loss(2.0, 3.0) == 5.0
        assert total_loss(0.0, 7.5) == 7.5


class TestMinAreaRect:
    def test_axis_aligned_rectangle(self):
        pts = np.array([[0, 0], [4, 0], [4, 2], [0, 2], [2, 1]], dtype=float)
        center, le, we, yaw = min_area_rect(pts)
        np.testing.assert_allclose(center, [2.0, 1.0], atol=1e-9)
        assert le == pytest.approx(4.0)
        assert we == pytest.approx(2.0)

    def test_rotated_rectangle_recovered(self):
        rng = np.random.default_rng(4)
        theta = 0.7
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        base = rng.uniform([-2, -1], [2, 1], size=(300, 2))
        pts = base @ rot.T + np.array([5.0, -3.0])
        center, le, we, yaw = min_area_rect(pts)
        np.testing.assert_allclose(center, [5.0, -3.0], atol=0.1)
        assert le == pytest.approx(4.0, abs=0.15)
        assert we == pytest.approx(2.0, abs=0.15)
        assert math.isclose(math.cos(2 * (yaw - theta)), 1.0, abs_tol=0.05)

    def test_against_exhaustive_rotation_scan(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            pts = rng.normal(size=(40, 2)) * rng.uniform(0.5, 3.0, 2)
            _, le, we, _ = min_area_rect(pts)
            area = le * we
            best = math.inf
            for deg in range(180):
                t = math.radians(deg)
                ct, st = math.cos(t), math.sin(t)
                u = pts[:, 0] * ct + pts[:, 1] * st
                v = -pts[:, 0] * st + pts[:, 1] * ct
                best = min(best, (u.max() - u.min()) * (v.max() - v.min()))
            assert area <= best + 1e-9
            assert best <= area * 1.01

    def test_area_not_above_aabb(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            pts = rng.normal(size=(30, 2))
            _, le, we, _ = min_area_rect(pts)
            aabb = np.prod(pts.max(axis=0) - pts.min(axis=0))
            assert le * we <= aabb + 1e-9

    def test_degenerate_collinear(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
        center, le, we, yaw = min_area_rect(pts)
        assert le == pytest.approx(math.sqrt(8), abs=1e-6)
        assert we == pytest.approx(0.0, abs=1e-9)

    def test_single_point(self):
        center, le, we, yaw = min_area_rect(np.array([[3.0, 4.0]]))
        np.testing.assert_allclose(center, [3.0, 4.0])
        assert le == 0.0 and we == 0.0


def _gt_scene(rng, scene_id="s0"):
    return generate_scene(int(rng.integers(0, 2**31)), SynthParams(), scene_id=scene_id)


class TestOracle:
    def test_zero_noise_returns_gt(self):
        rng = np.random.default_rng(7)
        scene = _gt_scene(rng)
        preds = oracle_predict(scene, OracleDetectorConfig.noiseless(), seed=3)
        assert len(preds) == len(scene.gt)
        for p, g in zip(preds, scene.gt):
            assert p.box.allclose(g.box, atol=0.0)
            assert p.confidence == 1.0
            assert p.class_id == g.class_id

    def test_miss_rate_one_leaves_only_false_positives(self):
        rng = np.random.default_rng(8)
        scene = _gt_scene(rng)
        config = OracleDetectorConfig(miss_rate=1.0, false_positive_rate=1.0)
        preds = oracle_predict(scene, config, seed=4)
        assert len(preds) == 1  # one per-scene false positive
        config = OracleDetectorConfig(miss_rate=1.0, false_positive_rate=0.0)
        assert oracle_predict(scene, config, seed=4) == []

    def test_confidence_decreases_with_noise(self):
        rng = np.random.default_rng(9)
        scene = _gt_scene(rng)
        low = OracleDetectorConfig.uniform(center=0.01)
        high = OracleDetectorConfig.uniform(center=1.0)
        conf_low = np.mean([d.confidence for d in oracle_predict(scene, low, seed=5)])
        conf_high = np.mean([d.confidence for d in oracle_predict(scene, high, seed=5)])
        assert conf_low > conf_high

    def test_miss_frequency(self):
        rng = np.random.default_rng(10)
        params = SynthParams(class_counts={0: (2, 2), 1: (0, 0), 2: (0, 0)})
        scenes, _ = generate_dataset(500, params, seed=11)
        config = OracleDetectorConfig(miss_rate=0.3)
        total = kept = 0
        for scene in scenes:
            preds = oracle_predict(scene, config, seed=derive_seed(0, scene.scene_id))
            total += len(scene.gt)
            kept += len(preds)
        miss_freq = 1.0 - kept / total
        se = math.sqrt(0.3 * 0.7 / total)
        assert abs(miss_freq - 0.3) <= 3 * se

    def test_detector_contract_deterministic(self):
        rng = np.random.default_rng(11)
        scene = _gt_scene(rng)
        det = OracleDetector(OracleDetectorConfig.uniform(center=0.1, seed=9))
        a = det.predict(scene)
        b = det.predict(scene)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert x.box.allclose(y.box, atol=0.0)
            assert x.confidence == y.confidence

    def test_state_roundtrip(self):
        det = OracleDetector(OracleDetectorConfig.uniform(center=0.2, miss_rate=0.1, seed=5))
        clone = OracleDetector()
        clone.load_state_dict(json.loads(json.dumps(det.state_dict())))
        assert clone.config == det.config


def _training_samples(scenes):
    return [
        TrainingSample(s.scene_id, s.cloud, list(s.gt), [1] * len(s.gt), True) for s in scenes
    ]


class TestClusterDetector:
    def test_single_car_cluster_detected(self):
        params = SynthParams(
            class_counts={0: (1, 1), 1: (0, 0), 2: (0, 0)},
            clutter_points=(0, 0),
            interior_points=(80, 120),
        )
        scenes, _ = generate_dataset(30, params, seed=13)
        det = ClusterDetector()
        det.fit(_training_samples(scenes[:20]))
        hits = 0
        for scene in scenes[20:]:
            preds = det.predict(scene)
            matching = [
                p for p in preds if p.class_id == 0 and iou_3d(p.box, scene.gt[0].box) >= 0.5
            ]
            hits += bool(matching)
        assert hits >= 8

    def test_ground_only_scene_empty(self):
        params = SynthParams(class_counts={0: (1, 2), 1: (0, 1), 2: (0, 1)})
        scenes, _ = generate_dataset(20, params, seed=14)
        det = ClusterDetector()
        det.fit(_training_samples(scenes))
        ground_only = generate_scene(
            99,
            SynthParams(
                class_counts={0: (0, 0), 1: (0, 0), 2: (0, 0)}, clutter_points=(0, 0)
            ),
        )
        assert det.predict(ground_only) == []

    def test_predict_before_fit_raises(self):
        det = ClusterDetector()
        with pytest.raises(RuntimeError):
            det.predict(generate_scene(0, SynthParams()))

    def test_confidences_in_unit_interval(self):
        scenes, _ = generate_dataset(30, SynthParams(), seed=15)
        det = ClusterDetector()
        det.fit(_training_samples(scenes[:20]))
        for scene in scenes[20:]:
            for p in det.predict(scene):
                assert 0.0 <= p.confidence <= 1.0

    def test_state_roundtrip_exact(self):
        scenes, _ = generate_dataset(10, SynthParams(), seed=16)
        det = ClusterDetector()
        det.fit(_training_samples(scenes))
        payload = json.dumps(det.state_dict(), sort_keys=True)
        clone = ClusterDetector()
        clone.load_state_dict(json.loads(payload))
        assert json.dumps(clone.state_dict(), sort_keys=True) == payload
        scene = generate_scene(123, SynthParams())
        a, b = det.predict(scene), clone.predict(scene)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert x.box.allclose(y.box, atol=0.0) and x.confidence == y.confidence

    def test_fit_report_losses(self):
        scenes, _ = generate_dataset(10, SynthParams(), seed=17)
        det = ClusterDetector()
        report = det.fit(_training_samples(scenes))
        assert report["num_pseudo_scenes"] == 0
        assert report["unsupervised_loss"] == 0.0
        assert report["supervised_loss"] >= 0.0
        assert report["total_loss"] == pytest.approx(report["supervised_loss"])

    def test_class_without_examples_disabled(self):
        params = SynthParams(class_counts={0: (1, 2), 1: (0, 0), 2: (0, 0)})
        scenes, _ = generate_dataset(15, params, seed=18)
        det = ClusterDetector()
        det.fit(_training_samples(scenes))
        assert set(det.model.priors) == {0}
        mixed = generate_scene(7, SynthParams())
        assert all(p.class_id == 0 for p in det.predict(mixed))
