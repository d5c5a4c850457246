"""Command-line interface.

Exit codes: 0 success, 1 validation error, 2 I/O or parse error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import pipeline
from .dataset import DatasetManifest
from .frame import DEFAULT_PERSON_CLASS, DEFAULT_TRACK_CLASS
from .metrics import GridSpec, RangeBinning, miou, recall_diff
from .paste import DensityProfile, InstanceRegistry, PasteParams, build_density_profile, build_registry
from .pcd import PcdParseError, read_frame, write_frame
from .reports import diff_csv, diff_pgm, grid_from_json, iou_csv, iou_json, riou_csv, riou_json, write_grid_artifacts
from .sparsify import SparsifyParams


def _load_config(args) -> pipeline.PipelineConfig:
    if getattr(args, "config", None):
        config = pipeline.load_config(args.config)
    else:
        config = pipeline.PipelineConfig()
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(config, seed=args.seed)
    return config


def _class_ids(manifest):
    """(person_id, track_id, num_classes, names) from the manifest's class map."""
    class_map = pipeline.load_class_map(manifest)
    if class_map is None:
        return DEFAULT_PERSON_CLASS, DEFAULT_TRACK_CLASS, 8, tuple(str(i) for i in range(8))
    person = class_map.class_ids.get("person", DEFAULT_PERSON_CLASS)
    track = class_map.class_ids.get("track", DEFAULT_TRACK_CLASS)
    return person, track, class_map.num_classes, class_map.names


def _parse_class(value: str, names) -> int:
    if value.isdigit():
        return int(value)
    if value in names:
        return names.index(value)
    raise ValueError(f"unknown class {value!r}; expected one of {list(names)} or an id")


def _parse_floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.split(","))


def cmd_stats(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    person, _, _, _ = _class_ids(manifest)
    stats = pipeline.dataset_stats(manifest, person_class_id=person, split=args.split)
    text = json.dumps(stats, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if stats["errors"]:
        for line in stats["errors"]:
            print(f"unreadable: {line}", file=sys.stderr)
        return 2
    return 0


def cmd_profile(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    person, _, _, _ = _class_ids(manifest)
    train = manifest.split("train")
    if not train:
        raise ValueError("manifest has no train frames")
    frames = (pipeline.read_frame(manifest.resolve(ref), ref.frame_id, ref.sensor_id) for ref in train)
    registry = build_registry(frames, class_id=person, min_points=args.min_points)
    profile = build_density_profile(registry, bin_width=args.bin_width, max_range=args.max_range)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    registry.save(out / "registry.npz")
    profile.to_json(out / "profile.json")
    print(f"registry: {len(registry)} instances from {len(registry.frame_ids)} frames")
    return 0


def cmd_sparsify(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    config = _load_config(args)
    _, track, _, _ = _class_ids(manifest)
    params = config.sparsify or SparsifyParams(seed=config.seed)
    if args.dmax is not None:
        params = dataclasses.replace(params, max_range=args.dmax)
    if args.window is not None:
        params = dataclasses.replace(params, window=args.window)
    if args.prob is not None:
        params = dataclasses.replace(params, prob=args.prob)
    config = dataclasses.replace(config, sparsify=params, paste=None, track_class_id=track)
    out = pipeline.materialize_online(manifest, config, args.out, epoch=args.epoch, force=args.force)
    print(out)
    return 0


def cmd_paste(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    config = _load_config(args)
    person, track, _, _ = _class_ids(manifest)
    params = config.paste or PasteParams(seed=config.seed)
    if args.prob is not None:
        params = dataclasses.replace(params, prob=args.prob)
    if args.max_instances is not None:
        params = dataclasses.replace(params, max_per_frame=args.max_instances)
    params = dataclasses.replace(params, track_class_id=track)
    config = dataclasses.replace(
        config,
        paste=params,
        sparsify=None,
        mode=args.mode,
        person_class_id=person,
        track_class_id=track,
        registry_path=args.registry or config.registry_path,
        profile_path=args.profile or config.profile_path,
    )
    if args.alpha is not None:
        config = dataclasses.replace(config, alpha=args.alpha)
    registry, profile = pipeline.load_paste_resources(config, manifest)
    if args.mode == "offline":
        out = pipeline.inflate_dataset(manifest, config, args.out, force=args.force, registry=registry, profile=profile)
    else:
        out = pipeline.materialize_online(
            manifest, config, args.out, epoch=args.epoch, force=args.force, registry=registry, profile=profile
        )
    print(out)
    return 0


def cmd_inflate(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    config = _load_config(args)
    person, track, _, _ = _class_ids(manifest)
    config = dataclasses.replace(config, mode="offline", person_class_id=person, track_class_id=track)
    if args.alpha is not None:
        config = dataclasses.replace(config, alpha=args.alpha)
    if config.alpha > 0 and config.sparsify is None and config.paste is None:
        raise ValueError("inflation needs at least one augmentation configured (see --config)")
    registry, profile = pipeline.load_paste_resources(config, manifest)
    out = pipeline.inflate_dataset(manifest, config, args.out, force=args.force, registry=registry, profile=profile)
    print(out)
    return 0


def cmd_augment(args) -> int:
    config = _load_config(args)
    frame = read_frame(args.infile, frame_id=args.frame_id)
    registry = profile = None
    if config.paste is not None:
        if config.registry_path is None or config.profile_path is None:
            raise ValueError("augment with pasting needs registry and profile paths in the config")
        registry = InstanceRegistry.load(config.base_dir / config.registry_path)
        profile = DensityProfile.from_json(config.base_dir / config.profile_path)
    out = pipeline.online_augment_hook(frame, config, registry, profile, epoch=args.epoch)
    write_frame(out, args.out, args.format)
    return 0


def cmd_evaluate(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    config = _load_config(args)
    _, _, num_classes, names = _class_ids(manifest)
    binning = RangeBinning(_parse_floats(args.bins)) if args.bins else config.binning
    ev, _, errors = pipeline.evaluate_manifest(manifest, args.pred, binning, num_classes, split=args.split)
    if ev.cm.total == 0 and errors:
        for line in errors:
            print(f"error: {line}", file=sys.stderr)
        return 1

    ious = ev.ious()
    mean_value = miou(ious, strict=args.strict)
    reports = {names[c]: ev.riou_report(c, strict=args.strict) for c in range(num_classes)}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "iou.csv").write_text(iou_csv(ious, names, mean_value), encoding="utf-8")
    (out / "iou.json").write_text(iou_json(ious, names, mean_value), encoding="utf-8")
    (out / "riou.csv").write_text(riou_csv(reports), encoding="utf-8")
    (out / "riou.json").write_text(riou_json(reports), encoding="utf-8")
    for line in errors:
        print(f"error: {line}", file=sys.stderr)
    return 1 if errors else 0


def cmd_recall_map(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    _, _, num_classes, names = _class_ids(manifest)
    class_id = _parse_class(args.class_, names)
    spec = GridSpec(*_parse_floats(args.grid)) if args.grid else GridSpec()
    binning = RangeBinning()
    _, grids, errors = pipeline.evaluate_manifest(
        manifest, args.pred, binning, num_classes, split=args.split, grid_spec=spec, grid_classes=(class_id,)
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = names[class_id] if class_id < len(names) else str(class_id)
    write_grid_artifacts(grids[class_id], out, f"recall_{name}")
    for line in errors:
        print(f"error: {line}", file=sys.stderr)
    return 1 if errors else 0


def cmd_recall_diff(args) -> int:
    a = grid_from_json(args.grid_a)
    b = grid_from_json(args.grid_b)
    diff = recall_diff(a, b)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "diff.csv").write_text(diff_csv(diff), encoding="utf-8")
    (out / "diff.pgm").write_bytes(diff_pgm(diff))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="railaug", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, manifest=True):
        if manifest:
            p.add_argument("--in", dest="manifest", required=True, help="dataset manifest (JSON)")
        p.add_argument("--config", help="pipeline config (JSON); flags override it")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--in", dest="manifest", required=True)
    p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    p.add_argument("--split", default="train", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("profile", help="build the instance registry and density profile")
    p.add_argument("--in", dest="manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-points", type=int, default=5)
    p.add_argument("--bin-width", type=float, default=20.0)
    p.add_argument("--max-range", type=float, default=100.0)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("sparsify", help="apply track sparsification to the train split")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--dmax", type=float, default=None, help="density selection upper distance (m)")
    p.add_argument("--window", type=float, default=None, help="window width (m)")
    p.add_argument("--prob", type=float, default=None, help="per-frame probability")
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_sparsify)

    p = sub.add_parser("paste", help="apply person instance pasting")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("online", "offline"), default="online")
    p.add_argument("--prob", type=float, default=None, help="per-frame probability (online)")
    p.add_argument("--alpha", type=float, default=None, help="inflation ratio (offline)")
    p.add_argument("--registry", default=None, help="cached registry (.npz)")
    p.add_argument("--profile", default=None, help="cached density profile (.json)")
    p.add_argument("--max-instances", type=int, default=None)
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_paste)

    p = sub.add_parser("inflate", help="offline dataset inflation with the configured augmentations")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_inflate)

    p = sub.add_parser("augment", help="apply the online augmentation hook to one frame")
    p.add_argument("--in", dest="infile", required=True, help="input frame (PCD)")
    p.add_argument("--out", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--frame-id", default=None, help="override the frame id used for stream derivation")
    p.add_argument("--format", choices=("ascii", "binary"), default="binary")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("evaluate", help="IoU / range IoU evaluation of predictions")
    add_common(p)
    p.add_argument("--pred", required=True, help="directory of prediction PCDs named <frame_id>.pcd")
    p.add_argument("--out", required=True)
    p.add_argument("--split", default=None, choices=("train", "val", "test"))
    p.add_argument("--bins", default=None, help="comma-separated bin edges, e.g. 0,20,40,60,80,100")
    p.add_argument("--strict", action="store_true", help="average absent bins/classes as zero")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("recall-map", help="planar recall grid for one class")
    p.add_argument("--in", dest="manifest", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--class", dest="class_", required=True, help="class name or id")
    p.add_argument("--split", default=None, choices=("train", "val", "test"))
    p.add_argument("--grid", default=None, help="x_min,x_max,y_min,y_max,cell")
    p.set_defaults(func=cmd_recall_map)

    p = sub.add_parser("recall-diff", help="difference of two recall grids")
    p.add_argument("--a", dest="grid_a", required=True)
    p.add_argument("--b", dest="grid_b", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recall_diff)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PcdParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
