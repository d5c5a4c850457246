"""Segmentation metrics: IoU, range-binned IoU, and planar recall grids.

All accumulators (confusion matrices, recall grids) merge associatively, so
per-frame partials computed in parallel reduce to the same totals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .frame import UNLABELED, LabeledFrame, planar_distances

DEFAULT_BIN_EDGES = (0.0, 20.0, 40.0, 60.0, 80.0, 100.0)


def _labels_of(x) -> np.ndarray:
    if isinstance(x, LabeledFrame):
        return x.labels
    return np.asarray(x)


class ConfusionMatrix:
    """K x K point counts, entry (gt, pred). Unlabeled ground truth is skipped."""

    def __init__(self, num_classes: int, counts: np.ndarray | None = None):
        self.num_classes = num_classes
        if counts is None:
            counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        if self.counts.shape != (num_classes, num_classes):
            raise ValueError(f"counts must be ({num_classes}, {num_classes})")

    def add(self, gt, pred) -> "ConfusionMatrix":
        gt = np.asarray(_labels_of(gt), dtype=np.int64)
        pred = np.asarray(_labels_of(pred), dtype=np.int64)
        if gt.shape != pred.shape:
            raise ValueError(f"label length mismatch: {gt.shape} vs {pred.shape}")
        keep = gt != UNLABELED
        gt, pred = gt[keep], pred[keep]
        k = self.num_classes
        if gt.size:
            if gt.min() < 0 or gt.max() >= k:
                raise ValueError("ground-truth label id outside 0..K-1")
            if pred.min() < 0 or pred.max() >= k:
                raise ValueError("predicted label id outside 0..K-1")
            self.counts += np.bincount(gt * k + pred, minlength=k * k).reshape(k, k)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge confusion matrices of different sizes")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def accumulate(cm: ConfusionMatrix, gt, pred) -> ConfusionMatrix:
    """Fold one aligned (ground truth, prediction) pair into the matrix."""
    return cm.add(gt, pred)


def iou_per_class(cm: ConfusionMatrix) -> np.ndarray:
    """Per-class IoU percentages; NaN where a class never appears."""
    tp = np.diag(cm.counts).astype(np.float64)
    fp = cm.counts.sum(axis=0) - tp
    fn = cm.counts.sum(axis=1) - tp
    denom = tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, 100.0 * tp / denom, np.nan)


def miou(ious: Sequence[float], strict: bool = False) -> float:
    """Mean IoU over present classes, or over all classes (absent as 0) in strict mode."""
    values = np.asarray(ious, dtype=np.float64)
    if values.size == 0:
        raise ValueError("no IoU values to average")
    if strict:
        return float(np.nan_to_num(values, nan=0.0).mean())
    present = values[~np.isnan(values)]
    if present.size == 0:
        raise ValueError("all classes absent")
    return float(present.mean())


def mean_riou(values: Sequence[float]) -> float:
    """Arithmetic mean of range IoU values, weighting every range equally."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("mean of zero range bins")
    return float(values.mean())


@dataclass(frozen=True)
class RangeBinning:
    """Half-open planar range bins [edges[i], edges[i+1])."""

    edges: tuple = DEFAULT_BIN_EDGES

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError(f"bin edges must be strictly increasing, got {edges}")

    @property
    def num_bins(self) -> int:
        return len(self.edges) - 1

    def assign(self, distances) -> np.ndarray:
        """Bin index per distance, -1 outside every bin."""
        d = np.asarray(distances, dtype=np.float64)
        idx = (np.searchsorted(np.asarray(self.edges), d, side="right") - 1).astype(np.int64)
        idx[(d < self.edges[0]) | (d >= self.edges[-1])] = -1
        return idx

    def labels(self) -> list:
        return [f"{self.edges[i]:g}-{self.edges[i + 1]:g}m" for i in range(self.num_bins)]


@dataclass
class RIoUReport:
    """Range-binned IoU for one class plus the equal-weight mean."""

    class_id: int
    binning: RangeBinning
    riou: np.ndarray        # (num_bins,) percentages, NaN where the class is absent
    mean: float
    strict: bool = False


class SegmentationEvaluator:
    """Streaming accumulator: whole-cloud confusion plus one matrix per range bin."""

    def __init__(self, num_classes: int, binning: RangeBinning = RangeBinning()):
        self.num_classes = num_classes
        self.binning = binning
        self.cm = ConfusionMatrix(num_classes)
        self.bin_cms = [ConfusionMatrix(num_classes) for _ in range(binning.num_bins)]

    def update(self, frame: LabeledFrame, pred) -> "SegmentationEvaluator":
        pred = np.asarray(_labels_of(pred))
        if len(pred) != len(frame):
            raise ValueError(
                f"frame {frame.frame_id!r}: {len(frame)} points but {len(pred)} predictions"
            )
        self.cm.add(frame.labels, pred)
        which = self.binning.assign(planar_distances(frame.points))
        for b in range(self.binning.num_bins):
            sel = which == b
            if sel.any():
                self.bin_cms[b].add(frame.labels[sel], pred[sel])
        return self

    def merge(self, other: "SegmentationEvaluator") -> "SegmentationEvaluator":
        if other.num_classes != self.num_classes or other.binning != self.binning:
            raise ValueError("cannot merge evaluators with different classes or binning")
        out = SegmentationEvaluator(self.num_classes, self.binning)
        out.cm = self.cm.merge(other.cm)
        out.bin_cms = [a.merge(b) for a, b in zip(self.bin_cms, other.bin_cms)]
        return out

    def ious(self) -> np.ndarray:
        return iou_per_class(self.cm)

    def riou_report(self, class_id: int, strict: bool = False) -> RIoUReport:
        return _riou_from_bins(self.bin_cms, class_id, self.binning, strict)


def per_bin_confusion(
    frames: Iterable, preds: Iterable, binning: RangeBinning, num_classes: int
) -> list:
    """One confusion matrix per range bin, binned by ground-truth position."""
    ev = SegmentationEvaluator(num_classes, binning)
    frames = list(frames)
    preds = list(preds)
    if len(frames) != len(preds):
        raise ValueError(f"{len(frames)} ground-truth frames vs {len(preds)} predictions")
    for frame, pred in zip(frames, preds):
        ev.update(frame, pred)
    return ev.bin_cms


def _riou_from_bins(bin_cms: list, class_id: int, binning: RangeBinning, strict: bool) -> RIoUReport:
    riou = np.array([iou_per_class(cm)[class_id] for cm in bin_cms])
    present = ~np.isnan(riou)
    if strict:
        mean = float(np.nan_to_num(riou, nan=0.0).mean())
    else:
        mean = float(riou[present].mean()) if present.any() else float("nan")
    return RIoUReport(class_id=class_id, binning=binning, riou=riou, mean=mean, strict=strict)


def range_iou(
    frames: Iterable,
    preds: Iterable,
    class_id: int,
    binning: RangeBinning = RangeBinning(),
    num_classes: int = 8,
    strict: bool = False,
) -> RIoUReport:
    """Range-binned IoU of one class over aligned frame/prediction pairs."""
    bin_cms = per_bin_confusion(frames, preds, binning, num_classes)
    return _riou_from_bins(bin_cms, class_id, binning, strict)


@dataclass(frozen=True)
class GridSpec:
    """Planar raster extent and cell size for recall maps."""

    x_min: float = 0.0
    x_max: float = 100.0
    y_min: float = -20.0
    y_max: float = 20.0
    cell: float = 1.0

    def __post_init__(self):
        if self.x_min >= self.x_max or self.y_min >= self.y_max or self.cell <= 0:
            raise ValueError(f"bad grid spec {self}")
        for lo, hi in ((self.x_min, self.x_max), (self.y_min, self.y_max)):
            n = (hi - lo) / self.cell
            if abs(n - round(n)) > 1e-9:
                raise ValueError(f"cell {self.cell} does not divide extent [{lo}, {hi}]")

    @property
    def nx(self) -> int:
        return int(round((self.x_max - self.x_min) / self.cell))

    @property
    def ny(self) -> int:
        return int(round((self.y_max - self.y_min) / self.cell))


class RecallGrid:
    """Per-cell true-positive / false-negative tallies for one class."""

    def __init__(self, spec: GridSpec, class_id: int, tp=None, fn=None):
        self.spec = spec
        self.class_id = class_id
        shape = (spec.ny, spec.nx)
        self.tp = np.zeros(shape, dtype=np.int64) if tp is None else np.asarray(tp, dtype=np.int64)
        self.fn = np.zeros(shape, dtype=np.int64) if fn is None else np.asarray(fn, dtype=np.int64)
        if self.tp.shape != shape or self.fn.shape != shape:
            raise ValueError(f"tp/fn must have shape {shape}")

    def add(self, frame: LabeledFrame, pred) -> "RecallGrid":
        pred = np.asarray(_labels_of(pred))
        if len(pred) != len(frame):
            raise ValueError(
                f"frame {frame.frame_id!r}: {len(frame)} points but {len(pred)} predictions"
            )
        gt_mask = frame.labels == self.class_id
        if not gt_mask.any():
            return self
        pts = frame.points[gt_mask]
        hit = pred[gt_mask] == self.class_id
        s = self.spec
        ix = np.floor((pts[:, 0] - s.x_min) / s.cell).astype(np.int64)
        iy = np.floor((pts[:, 1] - s.y_min) / s.cell).astype(np.int64)
        ok = (ix >= 0) & (ix < s.nx) & (iy >= 0) & (iy < s.ny)
        flat = iy[ok] * s.nx + ix[ok]
        size = s.nx * s.ny
        self.tp += np.bincount(flat[hit[ok]], minlength=size).reshape(s.ny, s.nx)
        self.fn += np.bincount(flat[~hit[ok]], minlength=size).reshape(s.ny, s.nx)
        return self

    def merge(self, other: "RecallGrid") -> "RecallGrid":
        if other.spec != self.spec or other.class_id != self.class_id:
            raise ValueError("cannot merge grids with different specs or classes")
        return RecallGrid(self.spec, self.class_id, self.tp + other.tp, self.fn + other.fn)

    def recall(self) -> np.ndarray:
        """Per-cell recall in [0, 1]; NaN where the class never appears."""
        seen = self.tp + self.fn
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(seen > 0, self.tp / seen, np.nan)


def recall_grid(frames: Iterable, preds: Iterable, class_id: int, spec: GridSpec = GridSpec()) -> RecallGrid:
    grid = RecallGrid(spec, class_id)
    frames = list(frames)
    preds = list(preds)
    if len(frames) != len(preds):
        raise ValueError(f"{len(frames)} ground-truth frames vs {len(preds)} predictions")
    for frame, pred in zip(frames, preds):
        grid.add(frame, pred)
    return grid


def recall_diff(a: RecallGrid, b: RecallGrid) -> np.ndarray:
    """Per-cell recall difference a - b; NaN unless both cells are populated."""
    if a.spec != b.spec:
        raise ValueError(f"grid specs differ: {a.spec} vs {b.spec}")
    ra, rb = a.recall(), b.recall()
    both = ~np.isnan(ra) & ~np.isnan(rb)
    return np.where(both, ra - rb, np.nan)
