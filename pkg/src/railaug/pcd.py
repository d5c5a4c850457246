"""PCD v0.7 reader/writer for labeled frames.

Layout is fixed: FIELDS x y z intensity [label instance], all SIZE 4, with
float32 coordinates/intensity and int32 label/instance columns, DATA ascii
or binary (little-endian, point-major). Frames written without label or
instance columns read back as UNLABELED / NO_INSTANCE. frame_id and
sensor_id ride in a leading comment line so a frame is a single file.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .frame import NO_INSTANCE, UNLABELED, LabeledFrame

_FLOAT_FIELDS = ("x", "y", "z", "intensity")
_INT_FIELDS = ("label", "instance")
_META_RE = re.compile(r"#\s*frame_id=(\S+)\s+sensor_id=(\S+)")


class PcdParseError(ValueError):
    """Malformed PCD input; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


def _header_lines(data: bytes):
    """Yield (offset, line) for each header line, stopping after DATA."""
    offset = 0
    while offset < len(data):
        end = data.find(b"\n", offset)
        if end == -1:
            end = len(data)
        line = data[offset:end].decode("ascii", errors="replace")
        yield offset, line
        offset = end + 1
        if line.split(maxsplit=1)[:1] == ["DATA"]:
            return
    raise PcdParseError("header has no DATA line", len(data))


def read_frame(path, frame_id: str | None = None, sensor_id: str | None = None) -> LabeledFrame:
    """Read one labeled frame from a PCD file.

    frame_id/sensor_id arguments override the values stored in the file
    comment; without either, frame_id defaults to the file stem and
    sensor_id to "lidar".
    """
    path = Path(path)
    data = path.read_bytes()

    meta: dict = {}
    file_frame_id = None
    file_sensor_id = None
    payload_start = 0
    for offset, line in _header_lines(data):
        payload_start = offset + len(line.encode("ascii", errors="replace")) + 1
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            m = _META_RE.match(stripped)
            if m:
                file_frame_id, file_sensor_id = m.group(1), m.group(2)
            continue
        parts = stripped.split()
        key, values = parts[0], parts[1:]
        if not values:
            raise PcdParseError(f"header line {key!r} has no value", offset)
        meta[key] = values
        meta[key + "@"] = offset

    for key in ("FIELDS", "SIZE", "TYPE", "POINTS", "DATA"):
        if key not in meta:
            raise PcdParseError(f"header is missing {key}", 0)

    fields = meta["FIELDS"]
    if tuple(fields[:4]) != _FLOAT_FIELDS or tuple(fields[4:]) not in (
        (),
        ("label",),
        ("label", "instance"),
    ):
        raise PcdParseError(f"unsupported field layout {fields}", meta["FIELDS@"])
    sizes = meta["SIZE"]
    types = meta["TYPE"]
    if len(sizes) != len(fields) or len(types) != len(fields):
        raise PcdParseError("SIZE/TYPE length does not match FIELDS", meta["SIZE@"])
    for i, name in enumerate(fields):
        want = "F" if name in _FLOAT_FIELDS else "I"
        if sizes[i] != "4" or types[i] != want:
            raise PcdParseError(f"field {name!r} must be {want}4, got {types[i]}{sizes[i]}", meta["TYPE@"])

    try:
        n_points = int(meta["POINTS"][0])
    except ValueError:
        raise PcdParseError(f"bad POINTS value {meta['POINTS'][0]!r}", meta["POINTS@"]) from None
    if n_points < 0:
        raise PcdParseError("negative POINTS", meta["POINTS@"])
    if "WIDTH" in meta and "HEIGHT" in meta:
        try:
            if int(meta["WIDTH"][0]) * int(meta["HEIGHT"][0]) != n_points:
                raise PcdParseError("WIDTH * HEIGHT != POINTS", meta["WIDTH@"])
        except ValueError:
            raise PcdParseError("bad WIDTH/HEIGHT value", meta["WIDTH@"]) from None

    mode = meta["DATA"][0].lower()
    dtype = np.dtype([(f, "<f4" if f in _FLOAT_FIELDS else "<i4") for f in fields])

    if mode == "binary":
        payload = data[payload_start:]
        expected = n_points * dtype.itemsize
        if len(payload) < expected:
            raise PcdParseError(
                f"binary payload truncated: need {expected} bytes, have {len(payload)}",
                payload_start + len(payload),
            )
        if len(payload) > expected:
            raise PcdParseError("trailing bytes after binary payload", payload_start + expected)
        rows = np.frombuffer(payload, dtype=dtype, count=n_points)
    elif mode == "ascii":
        rows = np.zeros(n_points, dtype=dtype)
        offset = payload_start
        filled = 0
        while offset < len(data) and filled < n_points:
            end = data.find(b"\n", offset)
            if end == -1:
                end = len(data)
            tokens = data[offset:end].split()
            if tokens:
                if len(tokens) != len(fields):
                    raise PcdParseError(
                        f"row has {len(tokens)} values, expected {len(fields)}", offset
                    )
                try:
                    for name, tok in zip(fields, tokens):
                        if name in _FLOAT_FIELDS:
                            rows[name][filled] = np.float32(float(tok))
                        else:
                            rows[name][filled] = int(tok)
                except ValueError:
                    raise PcdParseError("unparseable value in row", offset) from None
                filled += 1
            offset = end + 1
        if filled < n_points:
            raise PcdParseError(
                f"header promises {n_points} points but file holds {filled}", offset
            )
        if data[offset:].strip():
            raise PcdParseError("extra data rows after declared point count", offset)
    else:
        raise PcdParseError(f"unsupported DATA mode {mode!r}", meta["DATA@"])

    labels = rows["label"].astype(np.int32) if "label" in fields else np.full(n_points, UNLABELED, np.int32)
    instances = (
        rows["instance"].astype(np.int32) if "instance" in fields else np.full(n_points, NO_INSTANCE, np.int32)
    )
    return LabeledFrame(
        frame_id=frame_id or file_frame_id or path.stem,
        sensor_id=sensor_id or file_sensor_id or "lidar",
        points=np.stack([rows["x"], rows["y"], rows["z"]], axis=1).astype(np.float64),
        intensity=rows["intensity"].astype(np.float64),
        labels=labels,
        instance_ids=instances,
    )


def write_frame(frame: LabeledFrame, path, data_format: str = "binary") -> None:
    """Write a frame as PCD; readable back by :func:`read_frame`.

    Coordinates and intensity are stored as float32, so the binary roundtrip
    is bit-exact on the stored values; ASCII rows carry 9 significant digits,
    enough to recover every float32 exactly.
    """
    if data_format not in ("ascii", "binary"):
        raise ValueError(f"data_format must be 'ascii' or 'binary', got {data_format!r}")
    fields = list(_FLOAT_FIELDS) + list(_INT_FIELDS)
    n = len(frame)
    header = (
        f"# frame_id={frame.frame_id} sensor_id={frame.sensor_id}\n"
        "VERSION 0.7\n"
        f"FIELDS {' '.join(fields)}\n"
        f"SIZE {' '.join(['4'] * len(fields))}\n"
        f"TYPE {' '.join('F' if f in _FLOAT_FIELDS else 'I' for f in fields)}\n"
        f"COUNT {' '.join(['1'] * len(fields))}\n"
        f"WIDTH {n}\n"
        "HEIGHT 1\n"
        "VIEWPOINT 0 0 0 1 0 0 0\n"
        f"POINTS {n}\n"
        f"DATA {data_format}\n"
    )

    xyz = frame.points.astype(np.float32)
    inten = frame.intensity.astype(np.float32)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if data_format == "binary":
            rows = np.zeros(n, dtype=np.dtype([(f, "<f4" if f in _FLOAT_FIELDS else "<i4") for f in fields]))
            rows["x"], rows["y"], rows["z"] = xyz[:, 0], xyz[:, 1], xyz[:, 2]
            rows["intensity"] = inten
            rows["label"] = frame.labels
            rows["instance"] = frame.instance_ids
            fh.write(rows.tobytes())
        else:
            lines = []
            for i in range(n):
                lines.append(
                    "%.9g %.9g %.9g %.9g %d %d"
                    % (
                        xyz[i, 0],
                        xyz[i, 1],
                        xyz[i, 2],
                        inten[i],
                        frame.labels[i],
                        frame.instance_ids[i],
                    )
                )
            if lines:
                fh.write(("\n".join(lines) + "\n").encode("ascii"))
