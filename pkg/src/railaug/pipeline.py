"""Pipeline orchestration: config, online hook, offline inflation, stats, evaluation.

Every frame gets its own random stream derived from (seed, purpose,
frame id, occurrence), so results are independent of processing order and
two runs with the same config and seed produce byte-identical artifacts.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DatasetManifest, FrameRef
from .frame import (
    DEFAULT_PERSON_CLASS,
    DEFAULT_TRACK_CLASS,
    ClassMap,
    LabeledFrame,
    extract_instances,
)
from .metrics import GridSpec, RangeBinning, RecallGrid, SegmentationEvaluator
from .paste import DensityProfile, InstanceRegistry, PasteParams, build_density_profile, build_registry, paste_instances
from .pcd import read_frame, write_frame
from .rng import derive_rng
from .sparsify import SparsifyParams, sparsify_frame


@dataclass
class PipelineConfig:
    """All tunables for a run. ``mode`` is online (per-frame probability,
    carried by each augmentation's params) or offline (inflation by alpha)."""

    seed: int = 0
    sparsify: SparsifyParams | None = None
    paste: PasteParams | None = None
    mode: str = "online"
    alpha: float = 0.0
    binning: RangeBinning = RangeBinning()
    grid: GridSpec = GridSpec()
    registry_path: str | None = None
    profile_path: str | None = None
    track_class_id: int = DEFAULT_TRACK_CLASS
    person_class_id: int = DEFAULT_PERSON_CLASS
    base_dir: Path = Path(".")

    def __post_init__(self):
        if self.mode not in ("online", "offline"):
            raise ValueError(f"mode must be 'online' or 'offline', got {self.mode!r}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


def load_config(path) -> PipelineConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    seed = int(data.get("seed", 0))
    sparsify = None
    if "sparsify" in data and data["sparsify"] is not None:
        s = data["sparsify"]
        sparsify = SparsifyParams(
            max_range=float(s.get("max_range", 80.0)),
            window=float(s.get("window", 10.0)),
            prob=float(s.get("prob", 1.0)),
            seed=seed,
        )
    paste = None
    if "paste" in data and data["paste"] is not None:
        p = dict(data["paste"])
        known = {f.name for f in dataclasses.fields(PasteParams)}
        unknown = set(p) - known
        if unknown:
            raise ValueError(f"unknown paste options: {sorted(unknown)}")
        p.setdefault("seed", seed)
        if "rotation_range" in p:
            p["rotation_range"] = tuple(p["rotation_range"])
        if "y_shift_range" in p:
            p["y_shift_range"] = tuple(p["y_shift_range"])
        paste = PasteParams(**p)
    return PipelineConfig(
        seed=seed,
        sparsify=sparsify,
        paste=paste,
        mode=data.get("mode", "online"),
        alpha=float(data.get("alpha", 0.0)),
        binning=RangeBinning(tuple(data["binning"])) if "binning" in data else RangeBinning(),
        grid=GridSpec(**data["grid"]) if "grid" in data else GridSpec(),
        registry_path=data.get("registry"),
        profile_path=data.get("profile"),
        track_class_id=int(data.get("track_class_id", DEFAULT_TRACK_CLASS)),
        person_class_id=int(data.get("person_class_id", DEFAULT_PERSON_CLASS)),
        base_dir=path.parent,
    )


def load_class_map(manifest: DatasetManifest) -> ClassMap | None:
    path = manifest.resolve_class_map()
    return ClassMap.from_json(path) if path is not None else None


def load_paste_resources(config: PipelineConfig, manifest: DatasetManifest):
    """Registry and density profile for pasting: from cache files when the
    config names them, otherwise rebuilt from the manifest's train split."""
    if config.paste is None:
        return None, None
    if config.registry_path is not None:
        registry = InstanceRegistry.load(config.base_dir / config.registry_path)
    else:
        train = manifest.split("train")
        frames = (read_frame(manifest.resolve(ref), ref.frame_id, ref.sensor_id) for ref in train)
        registry = build_registry(frames, class_id=config.person_class_id, min_points=config.paste.min_points)
    if config.profile_path is not None:
        profile = DensityProfile.from_json(config.base_dir / config.profile_path)
    else:
        profile = build_density_profile(
            registry, bin_width=config.paste.bin_width, max_range=config.paste.profile_max_range
        )
    return registry, profile


def online_augment_hook(
    frame: LabeledFrame,
    config: PipelineConfig,
    registry: InstanceRegistry | None = None,
    profile: DensityProfile | None = None,
    epoch: int = 0,
) -> LabeledFrame:
    """Apply the configured augmentations to one frame, each with its own
    probability. Sparsification runs before pasting; draws are independent.
    The input frame is never mutated."""
    out = frame
    if config.sparsify is not None:
        rng = derive_rng(config.seed, "sparsify", frame.frame_id, epoch)
        out = sparsify_frame(out, config.sparsify, rng, track_class_id=config.track_class_id)
    if config.paste is not None:
        if registry is None or profile is None:
            raise ValueError("pasting requires a registry and a density profile")
        rng = derive_rng(config.seed, "paste", frame.frame_id, epoch)
        if rng.random() < config.paste.prob:
            out = paste_instances(out, registry, profile, config.paste, rng)
    return out


def _augment_once(frame, config, registry, profile, context: tuple) -> LabeledFrame:
    """Unconditional application of the configured augmentations (offline)."""
    out = frame
    if config.sparsify is not None:
        rng = derive_rng(config.seed, "inflate", *context, "sparsify")
        out = sparsify_frame(
            out, dataclasses.replace(config.sparsify, prob=1.0), rng, track_class_id=config.track_class_id
        )
    if config.paste is not None:
        rng = derive_rng(config.seed, "inflate", *context, "paste")
        out = paste_instances(out, registry, profile, config.paste, rng)
    return out


def inflate_dataset(
    manifest: DatasetManifest,
    config: PipelineConfig,
    out_dir,
    force: bool = False,
    registry: InstanceRegistry | None = None,
    profile: DensityProfile | None = None,
) -> Path:
    """Grow the train split by round(alpha * n) augmented frames.

    A whole pass uses every train frame exactly once; the fractional
    remainder samples source frames uniformly without replacement. Original
    frames are referenced, not copied; augmented frames carry provenance
    (source id and seed) in the output manifest. Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_manifest = out_dir / "manifest.json"
    if out_manifest.exists() and not force:
        raise FileExistsError(f"{out_manifest} already exists (use force to overwrite)")
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)

    train = manifest.split("train")
    if not train:
        raise ValueError("manifest has no train frames")
    n = len(train)
    total = int(round(config.alpha * n))
    passes, rem = divmod(total, n)
    selections = []
    for j in range(passes):
        selections.extend((ref, j) for ref in train)
    if rem:
        rng = derive_rng(config.seed, "inflate-select")
        idx = np.sort(rng.choice(n, size=rem, replace=False))
        selections.extend((train[i], passes) for i in idx)

    refs = []
    for ref in manifest.frames:
        rel = os.path.relpath(manifest.resolve(ref), out_dir)
        refs.append(FrameRef(ref.frame_id, ref.split, rel, ref.sensor_id, ref.source, ref.seed))

    for ref, j in selections:
        frame = read_frame(manifest.resolve(ref), ref.frame_id, ref.sensor_id)
        aug_id = f"{ref.frame_id}__aug{j}"
        out = _augment_once(frame, config, registry, profile, (ref.frame_id, j))
        out = dataclasses.replace(out, frame_id=aug_id)
        rel = f"frames/{aug_id}.pcd"
        write_frame(out, out_dir / rel, "binary")
        refs.append(FrameRef(aug_id, "train", rel, ref.sensor_id, source=ref.frame_id, seed=config.seed))

    class_map_rel = None
    cm_path = manifest.resolve_class_map()
    if cm_path is not None:
        class_map_rel = os.path.relpath(cm_path, out_dir)
    DatasetManifest(frames=refs, class_map=class_map_rel, base_dir=out_dir).save(out_manifest)
    return out_manifest


def materialize_online(
    manifest: DatasetManifest,
    config: PipelineConfig,
    out_dir,
    epoch: int = 0,
    force: bool = False,
    registry: InstanceRegistry | None = None,
    profile: DensityProfile | None = None,
) -> Path:
    """Write one online-augmented view of the train split (frame ids kept).

    Equivalent to what a training loop would see at the given epoch. Val and
    test frames are referenced unchanged.
    """
    out_dir = Path(out_dir)
    out_manifest = out_dir / "manifest.json"
    if out_manifest.exists() and not force:
        raise FileExistsError(f"{out_manifest} already exists (use force to overwrite)")
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)

    refs = []
    for ref in manifest.frames:
        if ref.split != "train":
            rel = os.path.relpath(manifest.resolve(ref), out_dir)
            refs.append(FrameRef(ref.frame_id, ref.split, rel, ref.sensor_id, ref.source, ref.seed))
            continue
        frame = read_frame(manifest.resolve(ref), ref.frame_id, ref.sensor_id)
        out = online_augment_hook(frame, config, registry, profile, epoch)
        rel = f"frames/{ref.frame_id}.pcd"
        write_frame(out, out_dir / rel, "binary")
        refs.append(FrameRef(ref.frame_id, "train", rel, ref.sensor_id, source=ref.frame_id, seed=config.seed))

    class_map_rel = None
    cm_path = manifest.resolve_class_map()
    if cm_path is not None:
        class_map_rel = os.path.relpath(cm_path, out_dir)
    DatasetManifest(frames=refs, class_map=class_map_rel, base_dir=out_dir).save(out_manifest)
    return out_manifest


def dataset_stats(
    manifest: DatasetManifest,
    person_class_id: int = DEFAULT_PERSON_CLASS,
    bin_width: float = 20.0,
    max_range: float = 100.0,
    split: str = "train",
) -> dict:
    """Point counts per class, person instances per range bin, and the
    points-per-instance profile inputs. Unreadable frames are listed under
    "errors" and skipped."""
    refs = manifest.split(split)
    if not refs:
        raise ValueError(f"manifest has no {split} frames")
    class_map = load_class_map(manifest)
    n_bins = int(math.ceil(max_range / bin_width))
    edges = [i * bin_width for i in range(n_bins + 1)]
    bin_label = lambda i: f"{edges[i]:g}-{edges[i + 1]:g}m"

    per_class: dict = {}
    inst_bins = {bin_label(i): 0 for i in range(n_bins)}
    inst_counts: dict = {bin_label(i): [] for i in range(n_bins)}
    errors = []
    n_read = 0
    for ref in refs:
        try:
            frame = read_frame(manifest.resolve(ref), ref.frame_id, ref.sensor_id)
        except (OSError, ValueError) as exc:
            errors.append(f"{ref.path}: {exc}")
            continue
        n_read += 1
        ids, counts = np.unique(frame.labels, return_counts=True)
        for cid, cnt in zip(ids.tolist(), counts.tolist()):
            per_class[cid] = per_class.get(cid, 0) + cnt
        for inst in extract_instances(frame, person_class_id):
            b = min(int(inst.centroid_range // bin_width), n_bins - 1)
            inst_bins[bin_label(b)] += 1
            inst_counts[bin_label(b)].append(len(inst))

    def class_name(cid: int) -> str:
        if class_map is not None and 0 <= cid < class_map.num_classes:
            return class_map.names[cid]
        return str(cid)

    return {
        "split": split,
        "frames": n_read,
        "per_class_points": {class_name(cid): cnt for cid, cnt in sorted(per_class.items())},
        "person_instances_per_bin": inst_bins,
        "points_per_instance": {
            label: {
                "instances": len(vals),
                "median_points": float(np.median(vals)) if vals else None,
            }
            for label, vals in inst_counts.items()
        },
        "errors": errors,
    }


def evaluate_manifest(
    manifest: DatasetManifest,
    pred_dir,
    binning: RangeBinning,
    num_classes: int,
    split: str | None = None,
    grid_spec: GridSpec | None = None,
    grid_classes: tuple = (),
) -> tuple:
    """Evaluate predictions (one PCD per ground-truth frame id) against the manifest.

    Returns (evaluator, recall_grids, errors); frames with a missing
    prediction file or a point-count mismatch are reported in ``errors`` and
    skipped, the rest are still evaluated.
    """
    pred_dir = Path(pred_dir)
    ev = SegmentationEvaluator(num_classes, binning)
    grids = {cid: RecallGrid(grid_spec or GridSpec(), cid) for cid in grid_classes}
    errors = []
    refs = [r for r in manifest.frames if split is None or r.split == split]
    for ref in refs:
        pred_path = pred_dir / f"{ref.frame_id}.pcd"
        if not pred_path.exists():
            errors.append(f"{ref.frame_id}: missing prediction file {pred_path.name}")
            continue
        gt = read_frame(manifest.resolve(ref), ref.frame_id, ref.sensor_id)
        pred = read_frame(pred_path)
        if len(pred) != len(gt):
            errors.append(f"{ref.frame_id}: {len(gt)} points but {len(pred)} predictions")
            continue
        ev.update(gt, pred.labels)
        for grid in grids.values():
            grid.add(gt, pred.labels)
    return ev, grids, errors
