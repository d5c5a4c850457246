"""Person instance pasting.

Harvests person instances from donor frames, transforms each one (flip,
rotate about its center, lateral shift, outward shift with density-matched
downsampling, drop to ground height), and appends the result to a target
frame under fresh instance ids. The outward shift targets range bins that
hold few instances, so repeated application balances the instance count
across distance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .frame import (
    DEFAULT_PERSON_CLASS,
    DEFAULT_TRACK_CLASS,
    Aabb2D,
    Instance,
    LabeledFrame,
    extract_instances,
    footprint,
)


@dataclass(frozen=True)
class PasteParams:
    """Tunables for the paste transform chain.

    ``prob`` is the per-frame application probability in online mode;
    ``alpha`` the offline inflation ratio. ``mirror_axis`` selects which
    centroid offset the flip negates.
    """

    prob: float = 1.0
    alpha: float | None = None
    flip_prob: float = 0.5
    rotation_range: tuple = (-180.0, 180.0)
    y_shift_range: tuple = (-2.0, 2.0)
    mirror_axis: str = "x"
    max_per_frame: int | None = None
    min_points: int = 5
    bin_width: float = 20.0
    profile_max_range: float = 100.0
    ground_search_radius: float = 5.0
    max_height_above_track: float = 1.5
    track_class_id: int = DEFAULT_TRACK_CLASS
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError(f"prob must be in [0, 1], got {self.prob}")
        if self.alpha is not None and self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob must be in [0, 1], got {self.flip_prob}")
        if self.mirror_axis not in ("x", "y"):
            raise ValueError(f"mirror_axis must be 'x' or 'y', got {self.mirror_axis!r}")
        if self.bin_width <= 0:
            raise ValueError(f"bin_width must be positive, got {self.bin_width}")


class InstanceRegistry:
    """Person instances harvested from donor frames, in harvest order."""

    def __init__(self, instances: list, class_id: int, min_points: int):
        if not instances:
            raise ValueError("registry must hold at least one instance")
        self.instances = list(instances)
        self.class_id = class_id
        self.min_points = min_points
        self.frame_ids: list = []
        self._by_frame: dict = {}
        for inst in self.instances:
            if inst.source_frame not in self._by_frame:
                self._by_frame[inst.source_frame] = []
                self.frame_ids.append(inst.source_frame)
            self._by_frame[inst.source_frame].append(inst)

    def __len__(self) -> int:
        return len(self.instances)

    def from_frame(self, frame_id: str) -> list:
        return self._by_frame[frame_id]

    def centroid_ranges(self) -> np.ndarray:
        return np.array([inst.centroid_range for inst in self.instances])

    def save(self, path) -> None:
        points = np.concatenate([inst.points for inst in self.instances]).astype(np.float64)
        intensity = np.concatenate([inst.intensity for inst in self.instances]).astype(np.float64)
        counts = np.array([len(inst) for inst in self.instances], dtype=np.int64)
        np.savez(
            path,
            points=points,
            intensity=intensity,
            offsets=np.concatenate([[0], np.cumsum(counts)]),
            source_frames=np.array([inst.source_frame for inst in self.instances]),
            source_instance_ids=np.array([inst.source_instance_id for inst in self.instances], dtype=np.int64),
            class_id=np.int64(self.class_id),
            min_points=np.int64(self.min_points),
        )

    @classmethod
    def load(cls, path) -> "InstanceRegistry":
        with np.load(path, allow_pickle=False) as data:
            offsets = data["offsets"]
            instances = [
                Instance(
                    class_id=int(data["class_id"]),
                    points=data["points"][offsets[i] : offsets[i + 1]],
                    intensity=data["intensity"][offsets[i] : offsets[i + 1]],
                    source_frame=str(data["source_frames"][i]),
                    source_instance_id=int(data["source_instance_ids"][i]),
                )
                for i in range(len(offsets) - 1)
            ]
            return cls(instances, class_id=int(data["class_id"]), min_points=int(data["min_points"]))


def build_registry(frames, class_id: int = DEFAULT_PERSON_CLASS, min_points: int = 5) -> InstanceRegistry:
    """Collect all qualifying instances of ``class_id`` from the frames.

    Instances below ``min_points`` are excluded. Raises ValueError when no
    instance qualifies.
    """
    instances = []
    for frame in frames:
        for inst in extract_instances(frame, class_id):
            if len(inst) >= min_points:
                instances.append(inst)
    if not instances:
        raise ValueError(f"no instance of class {class_id} with at least {min_points} points")
    return InstanceRegistry(instances, class_id=class_id, min_points=min_points)


@dataclass
class DensityProfile:
    """Expected points-per-instance by range bin.

    ``expected`` holds the per-bin median point count; bins with no
    contributing instance (``support`` 0) carry an inverse-square
    extrapolation from the nearest populated bin, evaluated at the bin
    center. Queries at arbitrary distances use the same rule with the query
    distance itself.
    """

    edges: np.ndarray     # (n_bins + 1,)
    expected: np.ndarray  # (n_bins,) float64
    support: np.ndarray   # (n_bins,) int64, contributing instances per bin

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.float64)
        self.expected = np.asarray(self.expected, dtype=np.float64)
        self.support = np.asarray(self.support, dtype=np.int64)
        if len(self.edges) != len(self.expected) + 1:
            raise ValueError("edges must have one more entry than expected")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        populated = self.support > 0
        if populated.any() and np.any(self.expected[populated] <= 0):
            raise ValueError("populated bins must have positive expected counts")

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def centers(self) -> np.ndarray:
        return (self.edges[:-1] + self.edges[1:]) / 2.0

    def _nearest_populated(self, center: float) -> int:
        populated = np.flatnonzero(self.support > 0)
        if populated.size == 0:
            raise ValueError("profile has no populated bin")
        gaps = np.abs(self.centers[populated] - center)
        return int(populated[np.argmin(gaps)])  # argmin ties resolve to the nearer-origin bin

    def expected_count(self, distance: float) -> float:
        """Expected instance point count at a planar distance."""
        d = max(float(distance), 1e-3)
        i = int(np.searchsorted(self.edges, d, side="right") - 1)
        if 0 <= i < len(self.expected) and self.support[i] > 0:
            return float(self.expected[i])
        center = self.centers[min(max(i, 0), len(self.expected) - 1)]
        j = self._nearest_populated(float(center))
        ref_center = float(self.centers[j])
        return float(self.expected[j]) * (ref_center / d) ** 2

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "edges": self.edges.tolist(),
                    "expected": self.expected.tolist(),
                    "support": self.support.tolist(),
                },
                fh,
                indent=2,
            )
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "DensityProfile":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(edges=data["edges"], expected=data["expected"], support=data["support"])


def build_density_profile(
    registry: InstanceRegistry, bin_width: float = 20.0, max_range: float = 100.0
) -> DensityProfile:
    """Median points-per-instance per range bin, by instance centroid range."""
    ranges = registry.centroid_ranges()
    span = max(max_range, float(ranges.max()) + 1e-9)
    n_bins = int(math.ceil(span / bin_width))
    edges = np.arange(n_bins + 1, dtype=np.float64) * bin_width
    counts = np.array([len(inst) for inst in registry.instances], dtype=np.float64)
    which = np.clip(np.searchsorted(edges, ranges, side="right") - 1, 0, n_bins - 1)

    expected = np.zeros(n_bins)
    support = np.zeros(n_bins, dtype=np.int64)
    for b in range(n_bins):
        sel = which == b
        support[b] = int(np.count_nonzero(sel))
        if support[b]:
            expected[b] = float(np.median(counts[sel]))

    profile = DensityProfile(edges=edges, expected=expected, support=support)
    centers = profile.centers
    for b in np.flatnonzero(support == 0):
        j = profile._nearest_populated(float(centers[b]))
        expected[b] = expected[j] * (centers[j] / centers[b]) ** 2
    return DensityProfile(edges=edges, expected=expected, support=support)


def _translate(instance: Instance, offset) -> Instance:
    return Instance(
        class_id=instance.class_id,
        points=instance.points + np.asarray(offset, dtype=np.float64),
        intensity=instance.intensity,
        source_frame=instance.source_frame,
        source_instance_id=instance.source_instance_id,
    )


def flip_instance(
    instance: Instance, rng: np.random.Generator, flip_prob: float = 0.5, mirror_axis: str = "x"
) -> Instance:
    """Mirror the instance about its centroid with the given probability.

    The default negates x offsets (mirror across the local yz plane), which
    keeps the instance in place rather than teleporting it across the
    sensor. The probability draw is consumed in both branches.
    """
    fire = rng.random() < flip_prob
    if not fire:
        return instance
    axis = 0 if mirror_axis == "x" else 1
    centroid = instance.points.mean(axis=0)
    pts = instance.points.copy()
    pts[:, axis] = 2.0 * centroid[axis] - pts[:, axis]
    return Instance(instance.class_id, pts, instance.intensity, instance.source_frame, instance.source_instance_id)


def rotate_instance(
    instance: Instance, rng: np.random.Generator, angle_range: tuple = (-180.0, 180.0)
) -> Instance:
    """Rotate about the vertical axis through the centroid by a uniform angle."""
    theta = math.radians(rng.uniform(*angle_range))
    c, s = math.cos(theta), math.sin(theta)
    centroid = instance.points.mean(axis=0)
    rel = instance.points - centroid
    pts = instance.points.copy()
    pts[:, 0] = centroid[0] + c * rel[:, 0] - s * rel[:, 1]
    pts[:, 1] = centroid[1] + s * rel[:, 0] + c * rel[:, 1]
    return Instance(instance.class_id, pts, instance.intensity, instance.source_frame, instance.source_instance_id)


def shift_y(instance: Instance, rng: np.random.Generator, shift_range: tuple = (-2.0, 2.0)) -> Instance:
    """Rigid lateral translation by a uniform offset."""
    return _translate(instance, (0.0, rng.uniform(*shift_range), 0.0))


def shift_x_with_downsample(
    instance: Instance, profile: DensityProfile, rng: np.random.Generator
) -> Instance:
    """Push the instance outward and thin it to the local expected density.

    The target distance is drawn from bins at or beyond the instance's
    current range, weighted by inverse instance frequency (1 / (1 + count)),
    so sparsely populated far bins are preferred. The point budget is drawn
    uniformly within ten percent of the profile's expected count at the
    target distance; the instance is never upsampled.
    """
    d0 = instance.centroid_range
    candidates = np.flatnonzero(profile.edges[1:] > d0)
    if candidates.size:
        weights = 1.0 / (1.0 + profile.support[candidates].astype(np.float64))
        b = int(rng.choice(candidates, p=weights / weights.sum()))
        lo = max(float(profile.edges[b]), d0)
        hi = float(profile.edges[b + 1])
        d1 = float(rng.uniform(lo, hi))
    else:
        d1 = d0
    out = _translate(instance, (d1 - d0, 0.0, 0.0)) if d1 != d0 else instance

    expected = profile.expected_count(d1)
    lo_n = int(math.ceil(0.9 * expected))
    hi_n = max(int(math.floor(1.1 * expected)), lo_n)
    target = int(rng.integers(lo_n, hi_n + 1))
    if len(out) > target:
        idx = np.sort(rng.choice(len(out), size=target, replace=False))
        out = Instance(out.class_id, out.points[idx], out.intensity[idx], out.source_frame, out.source_instance_id)
    return out


def estimate_ground_height(
    scan: LabeledFrame,
    box: Aabb2D,
    track_class_id: int = DEFAULT_TRACK_CLASS,
    search_radius: float = 5.0,
    max_height_above_track: float = 1.5,
) -> float | None:
    """Ground height under a footprint, or None when no realistic estimate exists.

    Mean z of the scan points inside the box; when the box is empty, mean z
    of track points within ``search_radius`` of the box center. Estimates
    more than ``max_height_above_track`` above the track plane (median z of
    all track points) are rejected.
    """
    inside = box.contains(scan.points)
    track = scan.labels == track_class_id
    if inside.any():
        estimate = float(scan.points[inside, 2].mean())
    else:
        if not track.any():
            return None
        cx = (box.x_min + box.x_max) / 2.0
        cy = (box.y_min + box.y_max) / 2.0
        track_pts = scan.points[track]
        near = np.hypot(track_pts[:, 0] - cx, track_pts[:, 1] - cy) <= search_radius
        if not near.any():
            return None
        estimate = float(track_pts[near, 2].mean())
    if track.any():
        reference = float(np.median(scan.points[track, 2]))
        if estimate > reference + max_height_above_track:
            return None
    return estimate


def shift_z_to_ground(instance: Instance, ground: float) -> Instance:
    """Rigid vertical translation placing the instance's lowest point on the ground."""
    return _translate(instance, (0.0, 0.0, ground - float(instance.points[:, 2].min())))


def paste_instances(
    scan: LabeledFrame,
    registry: InstanceRegistry,
    profile: DensityProfile,
    params: PasteParams,
    rng: np.random.Generator,
) -> LabeledFrame:
    """Paste one donor frame's instances into the scan.

    Picks a donor frame uniformly from the registry, runs each of its
    instances through flip, rotate, lateral shift, outward shift with
    downsampling, and grounding, in that order, and appends the survivors
    under fresh instance ids. Instances without a ground estimate are
    skipped; if all are skipped the scan comes back unchanged. The scan's
    own points are never modified.
    """
    donor = registry.frame_ids[int(rng.integers(len(registry.frame_ids)))]
    donors = registry.from_frame(donor)
    if params.max_per_frame is not None and len(donors) > params.max_per_frame:
        pick = np.sort(rng.choice(len(donors), size=params.max_per_frame, replace=False))
        donors = [donors[i] for i in pick]

    placed = []
    for inst in donors:
        t = flip_instance(inst, rng, params.flip_prob, params.mirror_axis)
        t = rotate_instance(t, rng, params.rotation_range)
        t = shift_y(t, rng, params.y_shift_range)
        t = shift_x_with_downsample(t, profile, rng)
        ground = estimate_ground_height(
            scan,
            footprint(t),
            track_class_id=params.track_class_id,
            search_radius=params.ground_search_radius,
            max_height_above_track=params.max_height_above_track,
        )
        if ground is None:
            continue
        placed.append(shift_z_to_ground(t, ground))

    if not placed:
        return scan
    next_id = int(scan.instance_ids.max()) + 1 if len(scan) else 0
    next_id = max(next_id, 0)
    out = scan
    for k, inst in enumerate(placed):
        out = out.append(
            inst.points,
            inst.intensity,
            np.full(len(inst), registry.class_id, dtype=np.int32),
            np.full(len(inst), next_id + k, dtype=np.int32),
        )
    return out
