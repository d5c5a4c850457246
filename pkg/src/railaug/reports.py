"""Export of metric reports: CSV tables, JSON, and PGM heatmaps.

CSV files round to two decimals for reading; JSON carries full precision.
Recall grids additionally persist as JSON (spec plus raw tallies) so they
can be reloaded for differencing.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .metrics import GridSpec, RecallGrid

ABSENT_PGM = 255  # reserved grey for cells with no ground truth


def _fmt(value: float) -> str:
    return "" if np.isnan(value) else f"{value:.2f}"


def iou_csv(ious, class_names, mean_value: float) -> str:
    lines = ["class,iou"]
    for name, value in zip(class_names, ious):
        lines.append(f"{name},{_fmt(value)}")
    lines.append(f"mIoU,{_fmt(mean_value)}")
    return "\n".join(lines) + "\n"


def iou_json(ious, class_names, mean_value: float) -> str:
    data = {
        "iou": {name: (None if np.isnan(v) else float(v)) for name, v in zip(class_names, ious)},
        "miou": None if np.isnan(mean_value) else float(mean_value),
    }
    return json.dumps(data, indent=2) + "\n"


def riou_csv(reports: dict) -> str:
    """One row per class: mean rIoU then the per-bin values."""
    first = next(iter(reports.values()))
    header = ["class", "mean_riou"] + [f"r{lbl}" for lbl in first.binning.labels()]
    lines = [",".join(header)]
    for name, report in reports.items():
        row = [name, _fmt(report.mean)] + [_fmt(v) for v in report.riou]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def riou_json(reports: dict) -> str:
    data = {}
    for name, report in reports.items():
        data[name] = {
            "bins": list(report.binning.edges),
            "riou": [None if np.isnan(v) else float(v) for v in report.riou],
            "mean_riou": None if np.isnan(report.mean) else float(report.mean),
            "strict": report.strict,
        }
    return json.dumps(data, indent=2) + "\n"


def grid_csv(grid: RecallGrid) -> str:
    """Recall raster, one row per y cell (ascending y), empty where absent."""
    recall = grid.recall()
    lines = []
    for row in recall:
        lines.append(",".join("" if np.isnan(v) else f"{v:.4f}" for v in row))
    return "\n".join(lines) + "\n"


def grid_pgm(grid: RecallGrid) -> bytes:
    """8-bit PGM: recall scaled to 0..254, absent cells at 255."""
    recall = grid.recall()
    img = np.full(recall.shape, ABSENT_PGM, dtype=np.uint8)
    seen = ~np.isnan(recall)
    img[seen] = np.round(recall[seen] * 254.0).astype(np.uint8)
    return _pgm_bytes(img)


def diff_csv(diff: np.ndarray) -> str:
    lines = []
    for row in diff:
        lines.append(",".join("" if np.isnan(v) else f"{v:+.4f}" for v in row))
    return "\n".join(lines) + "\n"


def diff_pgm(diff: np.ndarray) -> bytes:
    """8-bit PGM with midpoint 128: -1 maps to 1, 0 to 128, +1 to 255; absent 0."""
    img = np.zeros(diff.shape, dtype=np.uint8)
    seen = ~np.isnan(diff)
    img[seen] = (128.0 + np.round(diff[seen] * 127.0)).astype(np.uint8)
    return _pgm_bytes(img)


def _pgm_bytes(img: np.ndarray) -> bytes:
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    return header + img.tobytes()


def grid_to_json(grid: RecallGrid) -> str:
    s = grid.spec
    data = {
        "spec": {"x_min": s.x_min, "x_max": s.x_max, "y_min": s.y_min, "y_max": s.y_max, "cell": s.cell},
        "class_id": grid.class_id,
        "tp": grid.tp.tolist(),
        "fn": grid.fn.tolist(),
    }
    return json.dumps(data) + "\n"


def grid_from_json(path) -> RecallGrid:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    spec = GridSpec(**data["spec"])
    return RecallGrid(spec, int(data["class_id"]), tp=np.array(data["tp"]), fn=np.array(data["fn"]))


def write_grid_artifacts(grid: RecallGrid, out_dir, stem: str) -> list:
    """Write <stem>.json/.csv/.pgm under out_dir; returns the paths."""
    out_dir = Path(out_dir)
    paths = [out_dir / f"{stem}.json", out_dir / f"{stem}.csv", out_dir / f"{stem}.pgm"]
    paths[0].write_text(grid_to_json(grid), encoding="utf-8")
    paths[1].write_text(grid_csv(grid), encoding="utf-8")
    paths[2].write_bytes(grid_pgm(grid))
    return paths
