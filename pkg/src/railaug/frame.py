"""Labeled point-cloud frames, class mapping, and instance extraction.

Coordinates are meters in the ego sensor frame: x forward, y left, z up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

UNLABELED = -1
NO_INSTANCE = -1
BACKGROUND = 0

# Ids of the default railway class map (see ClassMap.osdar23).
DEFAULT_PERSON_CLASS = 1
DEFAULT_TRACK_CLASS = 4


class MappingError(ValueError):
    """A frame carries an original class name the class map does not know."""


def _as_points(a) -> np.ndarray:
    pts = np.asarray(a, dtype=np.float64)
    if pts.size == 0:
        pts = pts.reshape(0, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
    return pts


@dataclass
class LabeledFrame:
    """One LiDAR scan with per-point class labels and instance ids.

    All per-point arrays have the same length. ``labels`` holds mapped class
    ids (or original annotation ids before class mapping) with UNLABELED for
    unknown points; ``instance_ids`` holds NO_INSTANCE where a point belongs
    to no annotated instance.
    """

    frame_id: str
    sensor_id: str
    points: np.ndarray        # (n, 3) float64
    intensity: np.ndarray     # (n,) float64
    labels: np.ndarray        # (n,) int32
    instance_ids: np.ndarray  # (n,) int32

    def __post_init__(self):
        self.points = _as_points(self.points)
        n = len(self.points)
        self.intensity = np.asarray(self.intensity, dtype=np.float64).reshape(n)
        self.labels = np.asarray(self.labels, dtype=np.int32).reshape(n)
        self.instance_ids = np.asarray(self.instance_ids, dtype=np.int32).reshape(n)

    def __len__(self) -> int:
        return len(self.points)

    def select(self, index) -> "LabeledFrame":
        """New frame restricted to ``index`` (boolean mask or index array)."""
        return LabeledFrame(
            frame_id=self.frame_id,
            sensor_id=self.sensor_id,
            points=self.points[index],
            intensity=self.intensity[index],
            labels=self.labels[index],
            instance_ids=self.instance_ids[index],
        )

    def append(self, points, intensity, labels, instance_ids) -> "LabeledFrame":
        """New frame with extra points appended; the original is untouched."""
        points = _as_points(points)
        n = len(points)
        return LabeledFrame(
            frame_id=self.frame_id,
            sensor_id=self.sensor_id,
            points=np.concatenate([self.points, points]),
            intensity=np.concatenate([self.intensity, np.broadcast_to(np.asarray(intensity, dtype=np.float64), (n,))]),
            labels=np.concatenate([self.labels, np.broadcast_to(np.asarray(labels, dtype=np.int32), (n,))]),
            instance_ids=np.concatenate([self.instance_ids, np.broadcast_to(np.asarray(instance_ids, dtype=np.int32), (n,))]),
        )

    def validate(self, num_classes: int | None = None) -> None:
        """Check frame invariants, raising ValueError on the first violation.

        With ``num_classes`` given, every label must be a valid mapped id in
        [0, num_classes) or UNLABELED. An instance id must never span two
        different class ids within the frame.
        """
        if not np.isfinite(self.points).all():
            raise ValueError(f"frame {self.frame_id!r}: non-finite coordinates")
        if np.any(self.instance_ids < NO_INSTANCE):
            raise ValueError(f"frame {self.frame_id!r}: instance id below {NO_INSTANCE}")
        if np.any(self.labels < UNLABELED):
            raise ValueError(f"frame {self.frame_id!r}: label id below {UNLABELED}")
        if num_classes is not None and np.any(self.labels >= num_classes):
            bad = int(self.labels[self.labels >= num_classes][0])
            raise ValueError(f"frame {self.frame_id!r}: label id {bad} outside 0..{num_classes - 1}")
        has_inst = self.instance_ids != NO_INSTANCE
        if has_inst.any():
            pairs = np.unique(
                np.stack([self.instance_ids[has_inst], self.labels[has_inst]], axis=1), axis=0
            )
            ids, counts = np.unique(pairs[:, 0], return_counts=True)
            if np.any(counts > 1):
                bad = int(ids[counts > 1][0])
                raise ValueError(f"frame {self.frame_id!r}: instance id {bad} spans multiple classes")


@dataclass(frozen=True)
class ClassMap:
    """Mapping from original annotation class names to training classes.

    ``entries`` renames original classes to mapped classes, ``discard`` lists
    original classes whose annotations are dropped, and ``class_ids`` assigns
    a small contiguous integer id (0 = background) to every mapped class.
    """

    entries: Mapping[str, str]
    discard: frozenset
    class_ids: Mapping[str, int]

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))
        object.__setattr__(self, "discard", frozenset(self.discard))
        object.__setattr__(self, "class_ids", dict(self.class_ids))
        overlap = set(self.entries) & self.discard
        if overlap:
            raise ValueError(f"classes both mapped and discarded: {sorted(overlap)}")
        for name, mapped in self.entries.items():
            if mapped not in self.class_ids:
                raise ValueError(f"mapped class {mapped!r} (from {name!r}) has no id")
        ids = sorted(self.class_ids.values())
        if ids != list(range(len(ids))):
            raise ValueError(f"class ids must be contiguous from 0, got {ids}")

    @property
    def num_classes(self) -> int:
        return len(self.class_ids)

    @property
    def names(self) -> tuple:
        """Mapped class names ordered by id."""
        return tuple(sorted(self.class_ids, key=self.class_ids.__getitem__))

    def id_of(self, name: str) -> int:
        return self.class_ids[name]

    def to_json(self, path) -> None:
        data = {
            "entries": dict(self.entries),
            "discard": sorted(self.discard),
            "ids": dict(self.class_ids),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "ClassMap":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(entries=data["entries"], discard=frozenset(data["discard"]), class_ids=data["ids"])

    @classmethod
    def osdar23(cls) -> "ClassMap":
        """Default class map for the OSDaR23 railway dataset.

        Merges sparse classes, discards the overlapping switch annotation,
        and includes mapped-name self entries so re-applying the map to an
        already-mapped frame is the identity.
        """
        entries = {
            "person": "person",
            "crowd": "person",
            "train": "train",
            "wagons": "train",
            "bicycle": "background",
            "animal": "background",
            "signal_bridge": "background",
            "transition": "track",
            "track": "track",
            "road_vehicle": "road_vehicle",
            "catenary_pole": "catenary_pole",
            "signal_pole": "signal",
            "signal": "signal",
            "buffer_stop": "buffer_stop",
            "background": "background",
        }
        class_ids = {
            "background": 0,
            "person": 1,
            "train": 2,
            "road_vehicle": 3,
            "track": 4,
            "catenary_pole": 5,
            "signal": 6,
            "buffer_stop": 7,
        }
        return cls(entries=entries, discard=frozenset({"switch"}), class_ids=class_ids)


@dataclass
class Instance:
    """The points of one annotated object, all sharing a single class id."""

    class_id: int
    points: np.ndarray     # (n, 3) float64
    intensity: np.ndarray  # (n,) float64
    source_frame: str = ""
    source_instance_id: int = NO_INSTANCE

    def __post_init__(self):
        self.points = _as_points(self.points)
        if len(self.points) == 0:
            raise ValueError("instance must contain at least one point")
        self.intensity = np.asarray(self.intensity, dtype=np.float64).reshape(len(self.points))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @property
    def centroid_range(self) -> float:
        """Planar distance of the centroid from the sensor origin."""
        c = self.centroid
        return float(np.hypot(c[0], c[1]))


@dataclass(frozen=True)
class Aabb2D:
    """Planar axis-aligned bounding box (meters)."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"degenerate box ordering: {self}")

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points whose planar position lies in the box."""
        pts = np.asarray(points, dtype=np.float64)
        return (
            (pts[:, 0] >= self.x_min)
            & (pts[:, 0] <= self.x_max)
            & (pts[:, 1] >= self.y_min)
            & (pts[:, 1] <= self.y_max)
        )


def planar_distance(point) -> float:
    """Distance from the origin in the xy plane; z is ignored."""
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError(f"expected one (x, y, z) point, got shape {p.shape}")
    if not np.isfinite(p).all():
        raise ValueError(f"non-finite coordinates: {p.tolist()}")
    return float(np.hypot(p[0], p[1]))


def planar_distances(points: np.ndarray) -> np.ndarray:
    """Vectorized planar distance for an (n, 3) array."""
    pts = np.asarray(points, dtype=np.float64)
    return np.hypot(pts[:, 0], pts[:, 1])


def apply_class_map(
    frame: LabeledFrame,
    class_map: ClassMap,
    vocab: Sequence[str],
    fallback_labels: np.ndarray | None = None,
) -> LabeledFrame:
    """Map original annotation ids to training class ids.

    ``vocab`` names the original class for each id appearing in
    ``frame.labels``; UNLABELED passes through unchanged. ``fallback_labels``
    optionally holds lower-priority co-located annotations (original ids,
    shape (n,) or (n, layers), UNLABELED padded) consulted when a point's
    primary annotation is discarded. A point whose annotations are all
    discarded becomes background. Points resolved through a fallback or to
    background lose their instance id, since the instance belonged to the
    discarded annotation. Coordinates, intensity, and point count never
    change.

    Raises MappingError for any original class name that is neither mapped
    nor discarded, and for label ids outside the vocabulary.
    """
    n = len(frame)
    vocab = list(vocab)
    labels = frame.labels

    layers = []
    if fallback_labels is not None:
        fb = np.asarray(fallback_labels, dtype=np.int64)
        if fb.ndim == 1:
            fb = fb.reshape(n, 1)
        if fb.shape[0] != n:
            raise ValueError(f"fallback_labels rows ({fb.shape[0]}) != point count ({n})")
        layers = [fb[:, j] for j in range(fb.shape[1])]

    lut = np.full(len(vocab), BACKGROUND, dtype=np.int32)
    discarded = np.zeros(len(vocab), dtype=bool)
    known = np.zeros(len(vocab), dtype=bool)
    for i, name in enumerate(vocab):
        if name in class_map.discard:
            discarded[i] = True
            known[i] = True
        elif name in class_map.entries:
            lut[i] = class_map.class_ids[class_map.entries[name]]
            known[i] = True

    def check_ids(ids):
        used = np.unique(ids)
        used = used[used != UNLABELED]
        if used.size and (used.min() < 0 or used.max() >= len(vocab)):
            bad = int(used[(used < 0) | (used >= len(vocab))][0])
            raise MappingError(f"label id {bad} outside vocabulary of {len(vocab)} names")
        for i in used:
            if not known[i]:
                raise MappingError(f"unknown original class {vocab[i]!r}")

    check_ids(labels)
    for layer in layers:
        check_ids(layer)

    unlabeled = labels == UNLABELED
    safe = np.where(unlabeled, 0, labels)
    primary_discarded = ~unlabeled & discarded[safe] if len(vocab) else np.zeros(n, dtype=bool)

    out = np.where(unlabeled, UNLABELED, lut[safe]).astype(np.int32)
    out_inst = frame.instance_ids.copy()

    if primary_discarded.any():
        resolved = np.full(n, BACKGROUND, dtype=np.int32)
        pending = primary_discarded.copy()
        for layer in layers:
            present = pending & (layer != UNLABELED)
            if not present.any():
                continue
            safe_l = np.where(layer == UNLABELED, 0, layer)
            usable = present & ~discarded[safe_l]
            resolved[usable] = lut[safe_l[usable]]
            pending &= ~usable
        out[primary_discarded] = resolved[primary_discarded]
        out_inst[primary_discarded] = NO_INSTANCE

    return LabeledFrame(
        frame_id=frame.frame_id,
        sensor_id=frame.sensor_id,
        points=frame.points,
        intensity=frame.intensity,
        labels=out,
        instance_ids=out_inst,
    )


def extract_instances(frame: LabeledFrame, class_id: int) -> list:
    """Group the frame's points of ``class_id`` into instances.

    Points sharing an instance id form one instance; points of the class
    with NO_INSTANCE are grouped into a single synthetic instance. Returned
    in ascending instance-id order, so together they partition the class's
    points.
    """
    mask = frame.labels == class_id
    if not mask.any():
        return []
    out = []
    for inst_id in np.unique(frame.instance_ids[mask]):
        sel = mask & (frame.instance_ids == inst_id)
        out.append(
            Instance(
                class_id=class_id,
                points=frame.points[sel],
                intensity=frame.intensity[sel],
                source_frame=frame.frame_id,
                source_instance_id=int(inst_id),
            )
        )
    return out


def footprint(instance: Instance) -> Aabb2D:
    """Tight planar bounding box over the instance's points."""
    if len(instance) == 0:
        raise ValueError("cannot compute the footprint of an empty instance")
    xs = instance.points[:, 0]
    ys = instance.points[:, 1]
    return Aabb2D(float(xs.min()), float(xs.max()), float(ys.min()), float(ys.max()))
