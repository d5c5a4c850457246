"""Dataset manifests and per-sensor intensity normalization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .frame import LabeledFrame

SPLITS = ("train", "val", "test")


@dataclass
class FrameRef:
    """One manifest entry; ``path`` is relative to the manifest location."""

    frame_id: str
    split: str
    path: str
    sensor_id: str
    source: str | None = None  # provenance of augmented frames
    seed: int | None = None

    def to_dict(self) -> dict:
        d = {"id": self.frame_id, "split": self.split, "path": self.path, "sensor": self.sensor_id}
        if self.source is not None:
            d["source"] = self.source
        if self.seed is not None:
            d["seed"] = self.seed
        return d


@dataclass
class DatasetManifest:
    frames: list
    class_map: str | None = None
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        seen = set()
        for ref in self.frames:
            if ref.split not in SPLITS:
                raise ValueError(f"frame {ref.frame_id!r}: unknown split {ref.split!r}")
            if ref.frame_id in seen:
                raise ValueError(f"duplicate frame id {ref.frame_id!r}")
            seen.add(ref.frame_id)

    def split(self, name: str) -> list:
        return [ref for ref in self.frames if ref.split == name]

    def resolve(self, ref: FrameRef) -> Path:
        return (self.base_dir / ref.path).resolve()

    def resolve_class_map(self) -> Path | None:
        if self.class_map is None:
            return None
        return (self.base_dir / self.class_map).resolve()

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        frames = [
            FrameRef(
                frame_id=row["id"],
                split=row["split"],
                path=row["path"],
                sensor_id=row["sensor"],
                source=row.get("source"),
                seed=row.get("seed"),
            )
            for row in data["frames"]
        ]
        return cls(frames=frames, class_map=data.get("class_map"), base_dir=path.parent)

    def save(self, path) -> None:
        path = Path(path)
        data: dict = {"frames": [ref.to_dict() for ref in self.frames]}
        if self.class_map is not None:
            data["class_map"] = self.class_map
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2)
            fh.write("\n")


@dataclass
class SensorNorm:
    """Per-sensor intensity percentile bounds used for min-max scaling."""

    bounds: dict

    def __post_init__(self):
        for sensor, (lo, hi) in self.bounds.items():
            if not lo < hi:
                raise ValueError(f"sensor {sensor!r}: need lo < hi, got ({lo}, {hi})")

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({s: list(b) for s, b in sorted(self.bounds.items())}, fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "SensorNorm":
        with open(path, encoding="utf-8") as fh:
            return cls({s: (float(b[0]), float(b[1])) for s, b in json.load(fh).items()})


def fit_sensor_norm(frames: Iterable[LabeledFrame], lo_pct: float = 1.0, hi_pct: float = 99.0) -> SensorNorm:
    """Fit per-sensor intensity bounds at the given percentiles.

    Raises ValueError when a sensor contributes no points or its intensity
    is constant (degenerate bounds).
    """
    if not 0.0 <= lo_pct < hi_pct <= 100.0:
        raise ValueError(f"need 0 <= lo_pct < hi_pct <= 100, got ({lo_pct}, {hi_pct})")
    per_sensor: dict = {}
    for frame in frames:
        per_sensor.setdefault(frame.sensor_id, []).append(frame.intensity)
    if not per_sensor:
        raise ValueError("no frames to fit")
    bounds = {}
    for sensor, chunks in per_sensor.items():
        values = np.concatenate(chunks)
        if values.size == 0:
            raise ValueError(f"sensor {sensor!r} has no intensity samples")
        lo = float(np.percentile(values, lo_pct))
        hi = float(np.percentile(values, hi_pct))
        if not lo < hi:
            raise ValueError(f"sensor {sensor!r}: degenerate intensity bounds ({lo}, {hi})")
        bounds[sensor] = (lo, hi)
    return SensorNorm(bounds)


def normalize_intensity(frame: LabeledFrame, norm: SensorNorm) -> LabeledFrame:
    """Affinely rescale intensity to [0, 1] with clamping; geometry untouched."""
    if frame.sensor_id not in norm.bounds:
        raise ValueError(f"sensor {frame.sensor_id!r} not present in normalization table")
    lo, hi = norm.bounds[frame.sensor_id]
    scaled = np.clip((frame.intensity - lo) / (hi - lo), 0.0, 1.0)
    return LabeledFrame(
        frame_id=frame.frame_id,
        sensor_id=frame.sensor_id,
        points=frame.points,
        intensity=scaled,
        labels=frame.labels,
        instance_ids=frame.instance_ids,
    )
