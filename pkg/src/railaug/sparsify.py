"""Track instance sparsification.

Equalizes track point density across range windows: the point count of the
window just below the selection distance caps every closer window, so the
dense near field is thinned to match the sparse far field. Windows walk
downward in steps of the window width, the last one clipped at distance 0,
and excess points are dropped uniformly at random within each window. Points
at or beyond the selection window are never touched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frame import DEFAULT_TRACK_CLASS, Instance, LabeledFrame, planar_distances


@dataclass(frozen=True)
class SparsifyParams:
    """Tunables: selection distance, window width, per-frame probability."""

    max_range: float = 80.0
    window: float = 10.0
    prob: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError(f"window must be positive, got {self.window}")
        if not self.max_range > 0:
            raise ValueError(f"max_range must be positive, got {self.max_range}")
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError(f"prob must be in [0, 1], got {self.prob}")


def window_count(instance: Instance, lo: float, hi: float) -> int:
    """Number of instance points with planar distance in [lo, hi)."""
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi})")
    d = planar_distances(instance.points)
    return int(np.count_nonzero((d >= lo) & (d < hi)))


def _keep_mask(distances: np.ndarray, params: SparsifyParams, rng: np.random.Generator) -> np.ndarray:
    """Survivor mask for one instance's planar distances."""
    keep = np.ones(len(distances), dtype=bool)
    if len(distances) == 0:
        return keep
    upper = min(params.max_range, float(distances.max()))
    cap = int(np.count_nonzero((distances >= upper - params.window) & (distances < upper)))
    hi = upper
    while hi > 0:
        hi -= params.window
        lo = max(hi - params.window, 0.0)
        if hi <= lo:
            continue
        idx = np.flatnonzero((distances >= lo) & (distances < hi))
        if len(idx) > cap:
            drop = rng.choice(idx, size=len(idx) - cap, replace=False)
            keep[drop] = False
    return keep


def sparsify_instance(instance: Instance, params: SparsifyParams, rng: np.random.Generator) -> Instance:
    """Downsample one track instance so no range window exceeds the cap."""
    keep = _keep_mask(planar_distances(instance.points), params, rng)
    if keep.all():
        return instance
    return Instance(
        class_id=instance.class_id,
        points=instance.points[keep],
        intensity=instance.intensity[keep],
        source_frame=instance.source_frame,
        source_instance_id=instance.source_instance_id,
    )


def sparsify_frame(
    frame: LabeledFrame,
    params: SparsifyParams,
    rng: np.random.Generator,
    track_class_id: int = DEFAULT_TRACK_CLASS,
) -> LabeledFrame:
    """Sparsify every track instance of the frame, with probability ``prob``.

    The probability is drawn once per frame; a skipped frame comes back
    unchanged. Instances are processed in ascending instance-id order, the
    un-instanced track points forming one synthetic group, so a fixed rng
    state reproduces the exact output. Non-track points are never removed.
    """
    if rng.random() >= params.prob:
        return frame
    track = frame.labels == track_class_id
    if not track.any():
        return frame
    keep = np.ones(len(frame), dtype=bool)
    distances = planar_distances(frame.points)
    for inst_id in np.unique(frame.instance_ids[track]):
        idx = np.flatnonzero(track & (frame.instance_ids == inst_id))
        keep[idx] = _keep_mask(distances[idx], params, rng)
    if keep.all():
        return frame
    return frame.select(keep)
