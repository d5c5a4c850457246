import numpy as np
import pytest

from railaug.dataset import DatasetManifest, FrameRef
from railaug.frame import DEFAULT_PERSON_CLASS, DEFAULT_TRACK_CLASS, ClassMap, LabeledFrame
from railaug.pcd import write_frame


def random_frame(rng, n=100, frame_id="f0", sensor_id="lidar", num_classes=8):
    """Random valid frame; coordinates are float32-representable so binary
    file roundtrips are bit-exact."""
    pts = rng.uniform(-100.0, 100.0, size=(n, 3)).astype(np.float32).astype(np.float64)
    intensity = rng.uniform(0.0, 1.0, size=n).astype(np.float32).astype(np.float64)
    labels = rng.integers(0, num_classes, size=n).astype(np.int32)
    k = rng.integers(-1, 3, size=n)
    instance_ids = np.where(k < 0, -1, labels * 10 + k).astype(np.int32)
    return LabeledFrame(frame_id, sensor_id, pts, intensity, labels, instance_ids)


def synthetic_scene(rng, frame_id, person_centroids=(), n_track=600, n_bg=150, person_points=40):
    """Railway-like scene: a track carpet near z=-1.5, background clutter,
    and person clusters at the given planar centroids."""
    tx = rng.uniform(0.0, 100.0, n_track)
    ty = rng.uniform(-8.0, 8.0, n_track)
    tz = rng.normal(-1.5, 0.02, n_track)
    parts = [np.column_stack([tx, ty, tz])]
    labels = [np.full(n_track, DEFAULT_TRACK_CLASS)]
    instances = [np.where(ty < 0, 1, 2)]

    bg = np.column_stack(
        [rng.uniform(0.0, 100.0, n_bg), rng.uniform(-15.0, 15.0, n_bg), rng.uniform(-1.5, 4.0, n_bg)]
    )
    parts.append(bg)
    labels.append(np.zeros(n_bg))
    instances.append(np.full(n_bg, -1))

    for k, (px, py) in enumerate(person_centroids):
        n = person_points
        cluster = np.column_stack(
            [rng.normal(px, 0.25, n), rng.normal(py, 0.25, n), rng.uniform(-1.5, 0.3, n)]
        )
        parts.append(cluster)
        labels.append(np.full(n, DEFAULT_PERSON_CLASS))
        instances.append(np.full(n, 100 + k))

    pts = np.concatenate(parts).astype(np.float32).astype(np.float64)
    n_total = len(pts)
    return LabeledFrame(
        frame_id,
        "lidar",
        pts,
        rng.uniform(0.0, 1.0, n_total).astype(np.float32).astype(np.float64),
        np.concatenate(labels).astype(np.int32),
        np.concatenate(instances).astype(np.int32),
    )


def write_dataset(root, rng, train_scenes, val_scenes=()):
    """Materialize scenes as a PCD + manifest dataset; returns the manifest path."""
    root.mkdir(parents=True, exist_ok=True)
    (root / "frames").mkdir(exist_ok=True)
    ClassMap.osdar23().to_json(root / "classes.json")
    refs = []
    for split, scenes in (("train", train_scenes), ("val", val_scenes)):
        for frame in scenes:
            rel = f"frames/{frame.frame_id}.pcd"
            write_frame(frame, root / rel, "binary")
            refs.append(FrameRef(frame.frame_id, split, rel, frame.sensor_id))
    manifest = DatasetManifest(frames=refs, class_map="classes.json", base_dir=root)
    manifest.save(root / "manifest.json")
    return root / "manifest.json"


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
