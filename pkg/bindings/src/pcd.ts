/**
 * PCD v0.7 wire format, matching the railaug frame layout:
 * FIELDS x y z intensity label instance, all size 4 (F F F F I I),
 * little-endian binary or ascii payload, frame metadata in a leading
 * `# frame_id=... sensor_id=...` comment.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { FrameView, validateFrame } from "./frame.js";

const FIELDS = ["x", "y", "z", "intensity", "label", "instance"] as const;
const POINT_BYTES = 24;
const META_RE = /^#\s*frame_id=(\S+)\s+sensor_id=(\S+)/;

/** Serialize a frame as binary PCD; positions are written zero-copy from the view. */
export function writeFrame(frame: FrameView, filePath: string): void {
  const n = validateFrame(frame);
  const header =
    `# frame_id=${frame.frameId} sensor_id=${frame.sensorId}\n` +
    "VERSION 0.7\n" +
    `FIELDS ${FIELDS.join(" ")}\n` +
    "SIZE 4 4 4 4 4 4\n" +
    "TYPE F F F F I I\n" +
    "COUNT 1 1 1 1 1 1\n" +
    `WIDTH ${n}\n` +
    "HEIGHT 1\n" +
    "VIEWPOINT 0 0 0 1 0 0 0\n" +
    `POINTS ${n}\n` +
    "DATA binary\n";

  const payload = Buffer.allocUnsafe(n * POINT_BYTES);
  const pos = frame.positions;
  for (let i = 0; i < n; i++) {
    const off = i * POINT_BYTES;
    payload.writeFloatLE(pos[3 * i], off);
    payload.writeFloatLE(pos[3 * i + 1], off + 4);
    payload.writeFloatLE(pos[3 * i + 2], off + 8);
    payload.writeFloatLE(frame.intensity[i], off + 12);
    payload.writeInt32LE(frame.labels[i], off + 16);
    payload.writeInt32LE(frame.instanceIds[i], off + 20);
  }
  fs.writeFileSync(filePath, Buffer.concat([Buffer.from(header, "ascii"), payload]));
}

/** Parse a PCD file into freshly allocated arrays. */
export function readFrame(filePath: string): FrameView {
  const data = fs.readFileSync(filePath);
  let offset = 0;
  let frameId: string | null = null;
  let sensorId: string | null = null;
  const meta = new Map<string, string[]>();

  while (offset < data.length) {
    let end = data.indexOf(0x0a, offset);
    if (end === -1) end = data.length;
    const line = data.toString("ascii", offset, end).trim();
    offset = end + 1;
    if (line.startsWith("#")) {
      const m = META_RE.exec(line);
      if (m) {
        frameId = m[1];
        sensorId = m[2];
      }
      continue;
    }
    if (line.length === 0) continue;
    const parts = line.split(/\s+/);
    meta.set(parts[0], parts.slice(1));
    if (parts[0] === "DATA") break;
  }

  for (const key of ["FIELDS", "SIZE", "TYPE", "POINTS", "DATA"]) {
    if (!meta.has(key)) throw new Error(`pcd header is missing ${key}: ${filePath}`);
  }
  const fields = meta.get("FIELDS")!;
  const prefixOk = fields.slice(0, 4).join(" ") === "x y z intensity";
  const suffix = fields.slice(4).join(" ");
  if (!prefixOk || !["", "label", "label instance"].includes(suffix)) {
    throw new Error(`unsupported field layout [${fields.join(", ")}]: ${filePath}`);
  }
  const nPoints = Number(meta.get("POINTS")![0]);
  if (!Number.isInteger(nPoints) || nPoints < 0) {
    throw new Error(`bad POINTS value in ${filePath}`);
  }
  const mode = meta.get("DATA")![0];

  const positions = new Float32Array(3 * nPoints);
  const intensity = new Float32Array(nPoints);
  const labels = new Int32Array(nPoints).fill(-1);
  const instanceIds = new Int32Array(nPoints).fill(-1);
  const stride = fields.length * 4;

  if (mode === "binary") {
    const expected = nPoints * stride;
    const payload = data.subarray(offset);
    if (payload.length < expected) {
      throw new Error(
        `binary payload truncated: need ${expected} bytes, have ${payload.length} (byte ${data.length})`
      );
    }
    if (payload.length > expected) {
      throw new Error(`trailing bytes after binary payload (byte ${offset + expected})`);
    }
    for (let i = 0; i < nPoints; i++) {
      const off = i * stride;
      positions[3 * i] = payload.readFloatLE(off);
      positions[3 * i + 1] = payload.readFloatLE(off + 4);
      positions[3 * i + 2] = payload.readFloatLE(off + 8);
      intensity[i] = payload.readFloatLE(off + 12);
      if (fields.length > 4) labels[i] = payload.readInt32LE(off + 16);
      if (fields.length > 5) instanceIds[i] = payload.readInt32LE(off + 20);
    }
  } else if (mode === "ascii") {
    const rows = data
      .toString("ascii", offset)
      .split("\n")
      .map((r) => r.trim())
      .filter((r) => r.length > 0);
    if (rows.length !== nPoints) {
      throw new Error(`header promises ${nPoints} points but file holds ${rows.length}`);
    }
    for (let i = 0; i < nPoints; i++) {
      const tokens = rows[i].split(/\s+/);
      if (tokens.length !== fields.length) {
        throw new Error(`row ${i} has ${tokens.length} values, expected ${fields.length}`);
      }
      positions[3 * i] = Number(tokens[0]);
      positions[3 * i + 1] = Number(tokens[1]);
      positions[3 * i + 2] = Number(tokens[2]);
      intensity[i] = Number(tokens[3]);
      if (fields.length > 4) labels[i] = Number(tokens[4]);
      if (fields.length > 5) instanceIds[i] = Number(tokens[5]);
    }
  } else {
    throw new Error(`unsupported DATA mode ${mode}: ${filePath}`);
  }

  return {
    frameId: frameId ?? path.basename(filePath, path.extname(filePath)),
    sensorId: sensorId ?? "lidar",
    positions,
    intensity,
    labels,
    instanceIds,
  };
}
