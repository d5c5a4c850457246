import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { FrameView } from "../src/frame.js";
import { writeFrame } from "../src/pcd.js";

export const PERSON = 1;
export const TRACK = 4;

export const CLI = process.env.RAILAUG_CLI?.trim().split(/\s+/) ?? ["python3", "-m", "railaug.cli"];

export function runCli(args: string[]): void {
  const [cmd, ...prefix] = CLI;
  execFileSync(cmd, [...prefix, ...args], { stdio: ["ignore", "ignore", "pipe"] });
}

export function tmpDir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "railaug-ts-"));
}

/** Deterministic float generator in [0, 1). */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const uniform = (rand: () => number, lo: number, hi: number) => lo + (hi - lo) * rand();

/** Railway-like scene: track carpet near z=-1.5 plus person clusters. */
export function syntheticScene(
  rand: () => number,
  frameId: string,
  personCentroids: Array<[number, number]> = [],
  nTrack = 500,
  personPoints = 40
): FrameView {
  const clusters = personCentroids.length;
  const n = nTrack + clusters * personPoints;
  const positions = new Float32Array(3 * n);
  const intensity = new Float32Array(n);
  const labels = new Int32Array(n);
  const instanceIds = new Int32Array(n);

  for (let i = 0; i < nTrack; i++) {
    const y = uniform(rand, -8, 8);
    positions[3 * i] = uniform(rand, 0, 100);
    positions[3 * i + 1] = y;
    positions[3 * i + 2] = -1.5 + uniform(rand, -0.05, 0.05);
    intensity[i] = rand();
    labels[i] = TRACK;
    instanceIds[i] = y < 0 ? 1 : 2;
  }
  for (let k = 0; k < clusters; k++) {
    const [cx, cy] = personCentroids[k];
    for (let j = 0; j < personPoints; j++) {
      const i = nTrack + k * personPoints + j;
      positions[3 * i] = cx + uniform(rand, -0.4, 0.4);
      positions[3 * i + 1] = cy + uniform(rand, -0.4, 0.4);
      positions[3 * i + 2] = uniform(rand, -1.5, 0.3);
      intensity[i] = rand();
      labels[i] = PERSON;
      instanceIds[i] = 100 + k;
    }
  }
  return { frameId, sensorId: "lidar", positions, intensity, labels, instanceIds };
}

const CLASS_MAP = {
  entries: {
    person: "person",
    crowd: "person",
    train: "train",
    wagons: "train",
    bicycle: "background",
    animal: "background",
    signal_bridge: "background",
    transition: "track",
    track: "track",
    road_vehicle: "road_vehicle",
    catenary_pole: "catenary_pole",
    signal_pole: "signal",
    signal: "signal",
    buffer_stop: "buffer_stop",
    background: "background",
  },
  discard: ["switch"],
  ids: {
    background: 0,
    person: 1,
    train: 2,
    road_vehicle: 3,
    track: 4,
    catenary_pole: 5,
    signal: 6,
    buffer_stop: 7,
  },
};

export const CLASS_NAMES = Object.entries(CLASS_MAP.ids)
  .sort((a, b) => a[1] - b[1])
  .map(([name]) => name);

/** Materialize frames as a PCD + manifest dataset; returns the manifest path. */
export function writeDataset(root: string, frames: FrameView[], split = "train"): string {
  fs.mkdirSync(path.join(root, "frames"), { recursive: true });
  fs.writeFileSync(path.join(root, "classes.json"), JSON.stringify(CLASS_MAP, null, 2) + "\n");
  const refs = frames.map((frame) => {
    const rel = `frames/${frame.frameId}.pcd`;
    writeFrame(frame, path.join(root, rel));
    return { id: frame.frameId, split, path: rel, sensor: frame.sensorId };
  });
  const manifestPath = path.join(root, "manifest.json");
  fs.writeFileSync(manifestPath, JSON.stringify({ frames: refs, class_map: "classes.json" }, null, 2) + "\n");
  return manifestPath;
}

export function checksum(view: ArrayBufferView): string {
  const bytes = Buffer.from(view.buffer, view.byteOffset, view.byteLength);
  let h = 0;
  for (const b of bytes) h = (Math.imul(h, 31) + b) | 0;
  return `${view.byteLength}:${h}`;
}

export function sameArrays(a: FrameView, b: FrameView): boolean {
  const eq = (x: ArrayBufferView, y: ArrayBufferView) =>
    Buffer.from(x.buffer, x.byteOffset, x.byteLength).equals(
      Buffer.from(y.buffer, y.byteOffset, y.byteLength)
    );
  return (
    eq(a.positions, b.positions) &&
    eq(a.intensity, b.intensity) &&
    eq(a.labels, b.labels) &&
    eq(a.instanceIds, b.instanceIds)
  );
}
