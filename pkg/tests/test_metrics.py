import math

import numpy as np
import pytest

from railaug.frame import UNLABELED, LabeledFrame
from railaug.metrics import (
    ConfusionMatrix,
    GridSpec,
    RangeBinning,
    RecallGrid,
    SegmentationEvaluator,
    accumulate,
    iou_per_class,
    mean_riou,
    miou,
    range_iou,
    recall_diff,
    recall_grid,
)

from conftest import random_frame

K = 8


def labeled_points(points, gt):
    n = len(points)
    return LabeledFrame(
        "f", "s", np.asarray(points, float), np.zeros(n),
        np.asarray(gt, np.int32), np.full(n, -1, np.int32),
    )


def joint_oracle(frames, preds, class_id, lo=0.0, hi=math.inf):
    """Per-point loop over all frames, fully independent of the vectorized path."""
    tp = fp = fn = 0
    for frame, pred in zip(frames, preds):
        for p, g, q in zip(frame.points, frame.labels, pred):
            d = math.hypot(p[0], p[1])
            if not (lo <= d < hi) or g == UNLABELED:
                continue
            if q == class_id and g == class_id:
                tp += 1
            elif q == class_id:
                fp += 1
            elif g == class_id:
                fn += 1
    if tp + fp + fn == 0:
        return None
    return 100.0 * tp / (tp + fp + fn)


class TestConfusionMatrix:
    def test_accumulate_example(self):
        cm = ConfusionMatrix(K)
        accumulate(cm, [1, 1], [1, 2])
        assert cm.counts[1][1] == 1 and cm.counts[1][2] == 1
        assert cm.total == 2

    def test_empty_sequences_unchanged(self):
        cm = ConfusionMatrix(K)
        accumulate(cm, [], [])
        assert cm.total == 0

    def test_matches_brute_force_tally(self, rng):
        gt = rng.integers(0, K, 10_000)
        pred = rng.integers(0, K, 10_000)
        cm = ConfusionMatrix(K).add(gt, pred)
        expected = np.zeros((K, K), np.int64)
        for g, p in zip(gt, pred):
            expected[g][p] += 1
        np.testing.assert_array_equal(cm.counts, expected)

    def test_unlabeled_gt_skipped(self):
        cm = ConfusionMatrix(K).add([UNLABELED, 2], [5, 2])
        assert cm.total == 1 and cm.counts[2][2] == 1

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            ConfusionMatrix(K).add([1, 2], [1])

    def test_out_of_range_ids(self):
        with pytest.raises(ValueError):
            ConfusionMatrix(K).add([K], [0])
        with pytest.raises(ValueError):
            ConfusionMatrix(K).add([0], [K])

    def test_swapping_gt_pred_transposes(self, rng):
        gt = rng.integers(0, K, 500)
        pred = rng.integers(0, K, 500)
        a = ConfusionMatrix(K).add(gt, pred)
        b = ConfusionMatrix(K).add(pred, gt)
        np.testing.assert_array_equal(a.counts, b.counts.T)

    def test_merge_is_sum(self, rng):
        gt = rng.integers(0, K, 400)
        pred = rng.integers(0, K, 400)
        whole = ConfusionMatrix(K).add(gt, pred)
        merged = ConfusionMatrix(K).add(gt[:150], pred[:150]).merge(
            ConfusionMatrix(K).add(gt[150:], pred[150:])
        )
        np.testing.assert_array_equal(whole.counts, merged.counts)


class TestIoU:
    def test_perfect_prediction(self, rng):
        gt = rng.integers(0, 4, 300)
        ious = iou_per_class(ConfusionMatrix(K).add(gt, gt))
        for c in range(4):
            assert ious[c] == 100.0
        assert np.isnan(ious[7])

    def test_hand_confusion(self):
        # TP=3, FP=1, FN=2 for class 1: IoU = 3/6
        cm = ConfusionMatrix(K).add([1, 1, 1, 0, 1, 1], [1, 1, 1, 1, 0, 0])
        assert iou_per_class(cm)[1] == pytest.approx(50.0)

    def test_absent_class_is_nan(self):
        cm = ConfusionMatrix(K).add([0], [0])
        assert np.isnan(iou_per_class(cm)[5])

    def test_miou_of_printed_class_table(self):
        values = [96.84, 69.65, 86.39, 70.09, 82.89, 47.40, 48.80, 93.86]
        assert miou(values) == pytest.approx(74.49, abs=0.005)

    def test_miou_single_and_pair(self):
        assert miou([60.0]) == 60.0
        assert miou([100.0, 0.0]) == 50.0

    def test_miou_strict_counts_absent_as_zero(self):
        values = [100.0, np.nan, np.nan, np.nan]
        assert miou(values) == 100.0
        assert miou(values, strict=True) == 25.0

    def test_miou_all_absent(self):
        with pytest.raises(ValueError):
            miou([np.nan, np.nan])


class TestMeanRiou:
    def test_published_row_means(self):
        # printed per-bin values reproduce the printed means to +-0.005,
        # except the person baseline row whose printed mean was computed
        # from unrounded bins (see test_acceptance)
        assert mean_riou([86.76, 82.05, 64.98, 40.98, 7.82]) == pytest.approx(56.52, abs=0.005)
        assert mean_riou([86.64, 81.61, 64.74, 43.15, 13.93]) == pytest.approx(58.01, abs=0.005)
        assert mean_riou([86.75, 82.19, 66.70, 48.29, 13.50]) == pytest.approx(59.49, abs=0.005)
        assert mean_riou([78.66, 70.12, 78.49, 49.92, 57.76]) == pytest.approx(66.99, abs=0.005)
        assert mean_riou([80.98, 70.12, 79.46, 44.59, 58.70]) == pytest.approx(66.77, abs=0.005)
        assert mean_riou([80.40, 69.73, 81.23, 31.36, 45.17]) == pytest.approx(61.578, abs=1e-9)

    def test_single_value(self):
        assert mean_riou([42.0]) == 42.0

    def test_constant_sequence(self):
        assert mean_riou([7.5] * 5) == 7.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mean_riou([])


class TestRangeBinning:
    def test_default_edges(self):
        binning = RangeBinning()
        assert binning.edges == (0.0, 20.0, 40.0, 60.0, 80.0, 100.0)
        assert binning.num_bins == 5

    def test_assignment_half_open(self):
        binning = RangeBinning((0, 20, 40))
        assert binning.assign([0.0, 19.999, 20.0, 39.999, 40.0, 55.0]).tolist() == [0, 0, 1, 1, -1, -1]

    def test_non_increasing_rejected(self):
        with pytest.raises(ValueError):
            RangeBinning((0, 20, 20))


class TestRangeIoU:
    def test_single_bin_equals_whole_cloud(self, rng):
        frame = random_frame(rng, n=2000)
        pred = rng.integers(0, K, 2000)
        binning = RangeBinning((0.0, 1000.0))
        report = range_iou([frame], [pred], class_id=3, binning=binning, num_classes=K)
        cm = ConfusionMatrix(K).add(frame.labels, pred)
        assert report.riou[0] == pytest.approx(iou_per_class(cm)[3], abs=1e-12)
        assert report.mean == pytest.approx(report.riou[0])

    def test_two_bin_means(self):
        # bin 0 perfect (100), bin 1 half wrong in a way that gives IoU 50
        points = [[5, 0, 0], [6, 0, 0], [25, 0, 0], [26, 0, 0]]
        frame = labeled_points(points, [1, 1, 1, 1])
        pred = [1, 1, 1, 0]
        report = range_iou([frame], [pred], class_id=1, binning=RangeBinning((0, 20, 40)), num_classes=K)
        assert report.riou.tolist() == [100.0, 50.0]
        assert report.mean == 75.0

    def test_matches_per_bin_oracle(self, rng):
        binning = RangeBinning()
        frames = [random_frame(rng, n=1500, frame_id=f"f{i}") for i in range(2)]
        preds = [rng.integers(0, K, 1500) for _ in range(2)]
        for class_id in (0, 3, 7):
            report = range_iou(frames, preds, class_id, binning, num_classes=K)
            for b in range(binning.num_bins):
                lo, hi = binning.edges[b], binning.edges[b + 1]
                expected = joint_oracle(frames, preds, class_id, lo, hi)
                if expected is None:
                    assert np.isnan(report.riou[b])
                else:
                    assert report.riou[b] == pytest.approx(expected, abs=1e-9)

    def test_union_bound(self, rng):
        binning = RangeBinning((0, 30, 60, 150))
        for trial in range(10):
            frame = random_frame(rng, n=3000, num_classes=3)
            pred = rng.integers(0, 3, 3000)
            report = range_iou([frame], [pred], class_id=1, binning=binning, num_classes=3)
            if np.isnan(report.riou).any():
                continue
            whole = iou_per_class(ConfusionMatrix(3).add(frame.labels, pred))[1]
            assert report.riou.min() - 1e-9 <= whole <= report.riou.max() + 1e-9

    def test_misaligned_inputs_rejected(self, rng):
        frame = random_frame(rng, n=10)
        with pytest.raises(ValueError):
            range_iou([frame], [np.zeros(9, np.int32)], 0, RangeBinning(), K)
        with pytest.raises(ValueError):
            range_iou([frame], [], 0, RangeBinning(), K)

    def test_strict_mean_counts_empty_bins(self):
        frame = labeled_points([[5, 0, 0]], [1])
        report = range_iou([frame], [[1]], 1, RangeBinning((0, 10, 20)), K, strict=True)
        assert report.riou[0] == 100.0 and np.isnan(report.riou[1])
        assert report.mean == 50.0


class TestRecallGrid:
    spec = GridSpec(0, 10, -5, 5, 1.0)

    def test_cell_recall(self):
        # 4 gt points of class 1 in cell (x 2..3, y 0..1), 3 predicted right
        points = [[2.5, 0.5, 0]] * 4
        frame = labeled_points(points, [1, 1, 1, 1])
        grid = recall_grid([frame], [[1, 1, 1, 0]], class_id=1, spec=self.spec)
        r = grid.recall()
        assert r[5, 2] == pytest.approx(0.75)

    def test_unpopulated_cells_absent(self):
        frame = labeled_points([[2.5, 0.5, 0]], [1])
        grid = recall_grid([frame], [[1]], class_id=1, spec=self.spec)
        r = grid.recall()
        assert np.isnan(r).sum() == r.size - 1

    def test_perfect_prediction_all_ones(self, rng):
        pts = np.column_stack([rng.uniform(0, 10, 200), rng.uniform(-5, 5, 200), rng.normal(size=200)])
        frame = labeled_points(pts, np.ones(200, np.int32))
        grid = recall_grid([frame], [np.ones(200, np.int32)], class_id=1, spec=self.spec)
        r = grid.recall()
        assert np.nanmin(r) == 1.0

    def test_points_outside_extent_ignored(self):
        frame = labeled_points([[50, 0, 0], [2.5, 0.5, 0]], [1, 1])
        grid = recall_grid([frame], [[1, 1]], class_id=1, spec=self.spec)
        assert grid.tp.sum() == 1

    def test_matches_per_cell_oracle(self, rng):
        pts = np.column_stack([rng.uniform(0, 10, 800), rng.uniform(-5, 5, 800), np.zeros(800)])
        gt = rng.integers(0, 3, 800).astype(np.int32)
        pred = rng.integers(0, 3, 800).astype(np.int32)
        frame = labeled_points(pts, gt)
        grid = recall_grid([frame], [pred], class_id=2, spec=self.spec)
        for iy in range(self.spec.ny):
            for ix in range(self.spec.nx):
                tp = fn = 0
                for p, g, q in zip(pts, gt, pred):
                    if g != 2:
                        continue
                    if not (ix <= p[0] - 0 < ix + 1 and iy <= p[1] + 5 < iy + 1):
                        continue
                    if q == 2:
                        tp += 1
                    else:
                        fn += 1
                assert grid.tp[iy, ix] == tp and grid.fn[iy, ix] == fn

    def test_merge(self, rng):
        frames = [random_frame(rng, n=300, frame_id=f"m{i}") for i in range(2)]
        preds = [rng.integers(0, K, 300) for _ in range(2)]
        whole = recall_grid(frames, preds, 1, GridSpec())
        merged = recall_grid(frames[:1], preds[:1], 1, GridSpec()).merge(
            recall_grid(frames[1:], preds[1:], 1, GridSpec())
        )
        np.testing.assert_array_equal(whole.tp, merged.tp)
        np.testing.assert_array_equal(whole.fn, merged.fn)


class TestRecallDiff:
    spec = GridSpec(0, 4, 0, 2, 1.0)

    def grid_from(self, cells):
        grid = RecallGrid(self.spec, 1)
        for (iy, ix), (tp, fn) in cells.items():
            grid.tp[iy, ix] = tp
            grid.fn[iy, ix] = fn
        return grid

    def test_identical_grids_zero(self):
        a = self.grid_from({(0, 0): (3, 1), (1, 2): (5, 0)})
        d = recall_diff(a, a)
        assert d[0, 0] == 0.0 and d[1, 2] == 0.0

    def test_hand_computed_difference(self):
        a = self.grid_from({(0, 0): (10, 0)})   # 1.0
        b = self.grid_from({(0, 0): (6, 4)})    # 0.6
        d = recall_diff(a, b)
        assert d[0, 0] == pytest.approx(0.4)

    def test_one_sided_cells_absent(self):
        a = self.grid_from({(0, 0): (1, 0), (0, 1): (1, 0)})
        b = self.grid_from({(0, 0): (1, 0)})
        d = recall_diff(a, b)
        assert d[0, 0] == 0.0 and np.isnan(d[0, 1])

    def test_spec_mismatch_rejected(self):
        a = RecallGrid(self.spec, 1)
        b = RecallGrid(GridSpec(0, 4, 0, 4, 1.0), 1)
        with pytest.raises(ValueError, match="specs differ"):
            recall_diff(a, b)


class TestEvaluator:
    def test_streaming_equals_batch(self, rng):
        binning = RangeBinning()
        frames = [random_frame(rng, n=500, frame_id=f"e{i}") for i in range(3)]
        preds = [rng.integers(0, K, 500) for _ in range(3)]
        ev = SegmentationEvaluator(K, binning)
        for f, p in zip(frames, preds):
            ev.update(f, p)
        report = range_iou(frames, preds, 2, binning, K)
        stream_report = ev.riou_report(2)
        np.testing.assert_allclose(stream_report.riou, report.riou, equal_nan=True)

    def test_merge(self, rng):
        binning = RangeBinning()
        frames = [random_frame(rng, n=400, frame_id=f"g{i}") for i in range(2)]
        preds = [rng.integers(0, K, 400) for _ in range(2)]
        a = SegmentationEvaluator(K, binning).update(frames[0], preds[0])
        b = SegmentationEvaluator(K, binning).update(frames[1], preds[1])
        merged = a.merge(b)
        whole = SegmentationEvaluator(K, binning)
        whole.update(frames[0], preds[0]).update(frames[1], preds[1])
        np.testing.assert_array_equal(merged.cm.counts, whole.cm.counts)
        for x, y in zip(merged.bin_cms, whole.bin_cms):
            np.testing.assert_array_equal(x.counts, y.counts)
