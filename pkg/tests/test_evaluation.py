import itertools
import math

import numpy as np
import pytest

from ssod3d.evaluation import (
    FP,
    IGNORE,
    TP,
    EvalConfig,
    average_precision,
    evaluate,
    match,
)
from ssod3d.geometry import Box3D, Detection
from ssod3d.scene import Difficulty, Scene
from ssod3d.synth import SynthParams, generate_dataset


def _box(x, y=0.0, z=0.75, l=3.9, w=1.6, h=1.5, yaw=0.0):
    return Box3D(np.array([x, y, z]), l, w, h, yaw)


def _det(x, conf, **kw):
    return Detection(_box(x, **kw), 0, conf)


class TestMatch:
    def test_perfect_predictions(self):
        gts = [_det(0.0, 1.0), _det(10.0, 1.0)]
        preds = [_det(0.0, 0.9), _det(10.0, 0.8)]
        flags, n_gt = match(preds, gts, [Difficulty.EASY] * 2, 0.7, Difficulty.EASY)
        assert flags == [TP, TP]
        assert n_gt == 2

    def test_prediction_without_gt_is_fp(self):
        flags, n_gt = match([_det(0.0, 0.9)], [], [], 0.7, Difficulty.EASY)
        assert flags == [FP]
        assert n_gt == 0

    def test_double_match_greedy_vs_bruteforce(self):
        # two GTs, three predictions; the top-confidence pair both prefer gt0
        gts = [_det(0.0, 1.0), _det(3.0, 1.0)]
        preds = [
            _det(0.2, 0.9),  # overlaps gt0 strongly
            _det(0.4, 0.8),  # overlaps gt0 less, gt1 slightly
            _det(3.1, 0.7),  # overlaps gt1
        ]
        flags, _ = match(preds, gts, [Difficulty.EASY] * 2, 0.1, Difficulty.EASY)

        # brute-force optimal assignment oracle on this instance: maximize TP
        # count over injective pred->gt maps respecting the IoU threshold
        from ssod3d.geometry import iou_3d

        feasible = {
            (i, j)
            for i, p in enumerate(preds)
            for j, g in enumerate(gts)
            if iou_3d(p.box, g.box) >= 0.1
        }
        best = 0
        for assign in itertools.permutations([0, 1, None], 3):
            pairs = [(i, j) for i, j in enumerate(assign) if j is not None]
            if all(p in feasible for p in pairs):
                js = [j for _, j in pairs]
                if len(set(js)) == len(js):
                    best = max(best, len(pairs))
        assert flags.count(TP) == best == 2
        # greedy hands gt0 to the strongest prediction; the middle one then
        # claims gt1, leaving the last prediction unmatched
        assert flags == [TP, TP, FP]

    def test_harder_tier_gt_is_ignore_region(self):
        gts = [_det(0.0, 1.0)]
        preds = [_det(0.05, 0.9)]
        flags, n_gt = match(preds, gts, [Difficulty.HARD], 0.5, Difficulty.EASY)
        assert flags == [IGNORE]
        assert n_gt == 0

    def test_easier_tier_gt_counts_in_harder_eval(self):
        gts = [_det(0.0, 1.0)]
        preds = [_det(0.05, 0.9)]
        flags, n_gt = match(preds, gts, [Difficulty.EASY], 0.5, Difficulty.HARD)
        assert flags == [TP]
        assert n_gt == 1

    def test_each_gt_matched_once(self):
        gts = [_det(0.0, 1.0)]
        preds = [_det(0.0, 0.9), _det(0.05, 0.8)]
        flags, _ = match(preds, gts, [Difficulty.EASY], 0.5, Difficulty.EASY)
        assert flags == [TP, FP]


class TestAveragePrecision:
    def test_perfect_detector(self):
        curve = average_precision([(0.9, TP), (0.8, TP)], n_gt=2, mode="R11")
        assert curve.ap == pytest.approx(1.0)

    def test_no_predictions(self):
        curve = average_precision([], n_gt=5, mode="R11")
        assert curve.ap == 0.0

    def test_hand_computed_envelope(self):
        # 1 TP then 1 FP over 2 GTs: precision envelope is 1.0 up to recall
        # 0.5 and zero beyond, so R11 AP = 6/11
        curve = average_precision([(0.9, TP), (0.8, FP)], n_gt=2, mode="R11")
        assert curve.ap == pytest.approx(6.0 / 11.0)

    def test_r40_variant(self):
        curve = average_precision([(0.9, TP), (0.8, FP)], n_gt=2, mode="R40")
        assert curve.ap == pytest.approx(20.0 / 40.0)

    def test_zero_gt_undefined(self):
        curve = average_precision([(0.9, FP)], n_gt=0, mode="R11")
        assert curve.ap is None

    def test_monotone_confidence_transform_invariance(self):
        rng = np.random.default_rng(0)
        flags = [(float(c), TP if rng.uniform() < 0.6 else FP) for c in rng.uniform(0.01, 1, 50)]
        base = average_precision(flags, n_gt=40, mode="R11").ap
        squashed = [(c**3, f) for c, f in flags]
        assert average_precision(squashed, n_gt=40, mode="R11").ap == pytest.approx(base)

    def test_trailing_duplicate_cannot_increase_ap(self):
        flags = [(0.9, TP), (0.5, FP)]
        base = average_precision(flags, n_gt=2, mode="R11").ap
        with_dup = flags + [(0.1, FP)]  # duplicate of an already-matched box
        assert average_precision(with_dup, n_gt=2, mode="R11").ap <= base

    def test_ignored_contribute_nothing(self):
        base = average_precision([(0.9, TP)], n_gt=1, mode="R11").ap
        with_ign = average_precision([(0.95, IGNORE), (0.9, TP)], n_gt=1, mode="R11").ap
        assert with_ign == pytest.approx(base)

    def test_recall_non_decreasing(self):
        rng = np.random.default_rng(1)
        flags = [(float(c), TP if rng.uniform() < 0.5 else FP) for c in rng.uniform(0, 1, 30)]
        curve = average_precision(flags, n_gt=20, mode="R11")
        recalls = [r for _, _, r in curve.points]
        assert all(a <= b for a, b in zip(recalls, recalls[1:]))


class TestEvaluate:
    def _scenes_and_predictions(self, n=10, seed=0):
        scenes, _ = generate_dataset(n, SynthParams(), seed=seed)
        predictions = {
            s.scene_id: [Detection(d.box, d.class_id, 0.9) for d in s.gt] for s in scenes
        }
        return scenes, predictions

    def test_gt_equals_predictions_all_ones(self):
        scenes, predictions = self._scenes_and_predictions()
        result = evaluate(scenes, predictions)
        for k, row in result.table.items():
            for tier, ap in row.items():
                assert ap == pytest.approx(1.0)

    def test_scene_order_invariance(self):
        scenes, predictions = self._scenes_and_predictions(seed=3)
        a = evaluate(scenes, predictions)
        b = evaluate(list(reversed(scenes)), predictions)
        assert a.table == b.table

    def test_missing_class_absent(self):
        params = SynthParams(class_counts={0: (1, 2), 1: (0, 0), 2: (0, 0)})
        scenes, _ = generate_dataset(5, params, seed=4)
        predictions = {s.scene_id: list(s.gt) for s in scenes}
        result = evaluate(scenes, predictions)
        assert 0 in result.table
        assert 1 not in result.table and 2 not in result.table

    def test_empty_predictions_all_zero(self):
        scenes, _ = self._scenes_and_predictions(seed=5)
        result = evaluate(scenes, {})
        for row in result.table.values():
            for ap in row.values():
                assert ap == 0.0

    def test_fixture_table_reproduces_hand_ap(self):
        # one scene, one class: two GTs, one TP at conf .9 and one FP at .8
        gt = [_det(0.0, 1.0), _det(10.0, 1.0)]
        scene = Scene("000000", cloud=None, gt=gt, gt_difficulty=[Difficulty.EASY] * 2)
        preds = {"000000": [_det(0.05, 0.9), _det(20.0, 0.8)]}
        result = evaluate([scene], preds, EvalConfig(iou_thresholds={0: 0.5}))
        assert result.cell(0, Difficulty.EASY) == pytest.approx(6.0 / 11.0)

    def test_mean_over_runs(self):
        scenes, predictions = self._scenes_and_predictions(seed=6)
        empty = {s.scene_id: [] for s in scenes}
        result = evaluate(scenes, [predictions, empty])
        assert result.num_runs == 2
        for row in result.table.values():
            for ap in row.values():
                assert ap == pytest.approx(0.5)

    def test_text_table_renders(self):
        scenes, predictions = self._scenes_and_predictions(seed=7)
        text = evaluate(scenes, predictions).text_table()
        assert "Car" in text and "Easy" in text and "mean AP" in text

    def test_json_payload(self):
        scenes, predictions = self._scenes_and_predictions(seed=8)
        payload = evaluate(scenes, predictions).to_json_dict()
        assert payload["interpolation"] == "R11"
        assert "Car" in payload["ap"]
        assert payload["mean_ap"] == pytest.approx(1.0)
