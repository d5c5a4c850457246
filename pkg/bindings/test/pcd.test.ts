import assert from "node:assert/strict";
import * as fs from "node:fs";
import * as path from "node:path";
import { test } from "node:test";

import { readFrame, writeFrame } from "../src/pcd.js";
import { mulberry32, sameArrays, syntheticScene, tmpDir } from "./helpers.js";

test("binary roundtrip is bit-exact", () => {
  const dir = tmpDir();
  const frame = syntheticScene(mulberry32(1), "rt0", [[12, 1]]);
  const file = path.join(dir, "rt0.pcd");
  writeFrame(frame, file);
  const back = readFrame(file);
  assert.equal(back.frameId, "rt0");
  assert.equal(back.sensorId, "lidar");
  assert.ok(sameArrays(frame, back));
  fs.rmSync(dir, { recursive: true, force: true });
});

test("empty frame roundtrip", () => {
  const dir = tmpDir();
  const frame = {
    frameId: "empty",
    sensorId: "s",
    positions: new Float32Array(0),
    intensity: new Float32Array(0),
    labels: new Int32Array(0),
    instanceIds: new Int32Array(0),
  };
  const file = path.join(dir, "empty.pcd");
  writeFrame(frame, file);
  const back = readFrame(file);
  assert.equal(back.positions.length, 0);
  assert.equal(back.frameId, "empty");
  fs.rmSync(dir, { recursive: true, force: true });
});

test("truncated binary payload is rejected", () => {
  const dir = tmpDir();
  const frame = syntheticScene(mulberry32(2), "tr", []);
  const file = path.join(dir, "tr.pcd");
  writeFrame(frame, file);
  const bytes = fs.readFileSync(file);
  fs.writeFileSync(file, bytes.subarray(0, bytes.length - 8));
  assert.throws(() => readFrame(file), /truncated/);
  fs.rmSync(dir, { recursive: true, force: true });
});

test("ascii payload parses", () => {
  const dir = tmpDir();
  const file = path.join(dir, "a.pcd");
  fs.writeFileSync(
    file,
    "VERSION 0.7\nFIELDS x y z intensity label instance\nSIZE 4 4 4 4 4 4\n" +
      "TYPE F F F F I I\nCOUNT 1 1 1 1 1 1\nWIDTH 2\nHEIGHT 1\nPOINTS 2\nDATA ascii\n" +
      "1.5 2.5 -0.5 0.25 4 -1\n60 0 0 0.5 1 7\n"
  );
  const frame = readFrame(file);
  assert.deepEqual(Array.from(frame.labels), [4, 1]);
  assert.deepEqual(Array.from(frame.instanceIds), [-1, 7]);
  assert.ok(Math.abs(frame.positions[0] - 1.5) < 1e-9);
  fs.rmSync(dir, { recursive: true, force: true });
});

test("missing label columns fill with -1", () => {
  const dir = tmpDir();
  const file = path.join(dir, "bare.pcd");
  fs.writeFileSync(
    file,
    "VERSION 0.7\nFIELDS x y z intensity\nSIZE 4 4 4 4\nTYPE F F F F\n" +
      "COUNT 1 1 1 1\nWIDTH 1\nHEIGHT 1\nPOINTS 1\nDATA ascii\n1 2 3 0.5\n"
  );
  const frame = readFrame(file);
  assert.deepEqual(Array.from(frame.labels), [-1]);
  assert.deepEqual(Array.from(frame.instanceIds), [-1]);
  fs.rmSync(dir, { recursive: true, force: true });
});
