import assert from "node:assert/strict";
import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";
import { after, before, test } from "node:test";

import { augment } from "../src/augment.js";
import { ConfigHandle, loadConfig } from "../src/config.js";
import { readFrame, writeFrame } from "../src/pcd.js";
import { CLI, checksum, mulberry32, runCli, sameArrays, syntheticScene, tmpDir, writeDataset } from "./helpers.js";

let root: string;
let handle: ConfigHandle;
let identityHandle: ConfigHandle;

before(() => {
  root = tmpDir();
  const rand = mulberry32(99);
  const scenes = Array.from({ length: 6 }, (_, i) =>
    syntheticScene(rand, `tr${String(i).padStart(3, "0")}`, [
      [10 + 3 * i, 1],
      [28, -2],
    ])
  );
  const manifest = writeDataset(path.join(root, "data"), scenes);
  runCli(["profile", "--in", manifest, "--out", path.join(root, "cache")]);

  const configPath = path.join(root, "cache", "config.json");
  fs.writeFileSync(
    configPath,
    JSON.stringify({
      seed: 77,
      sparsify: { max_range: 60, window: 10, prob: 0.6 },
      paste: { prob: 0.8 },
      registry: "registry.npz",
      profile: "profile.json",
    }) + "\n"
  );
  handle = loadConfig(configPath);

  const identityPath = path.join(root, "identity.json");
  fs.writeFileSync(identityPath, JSON.stringify({ seed: 5, sparsify: { prob: 0.0 } }) + "\n");
  identityHandle = loadConfig(identityPath);
});

after(() => {
  fs.rmSync(root, { recursive: true, force: true });
});

function cliAugment(frame: ReturnType<typeof syntheticScene>, epoch: number) {
  // independent invocation of the pipeline CLI on the same serialized frame
  const dir = tmpDir();
  try {
    const inPath = path.join(dir, "in.pcd");
    const outPath = path.join(dir, "out.pcd");
    writeFrame(frame, inPath);
    const [cmd, ...prefix] = CLI;
    execFileSync(cmd, [
      ...prefix,
      "augment",
      "--in", inPath,
      "--out", outPath,
      "--config", handle.configPath,
      "--epoch", String(epoch),
      "--frame-id", frame.frameId,
    ]);
    return readFrame(outPath);
  } finally {
    fs.rmSync(dir, { recursive: true, force: true });
  }
}

test("augment output equals the CLI output for 20 random frames", () => {
  const rand = mulberry32(4242);
  for (let i = 0; i < 20; i++) {
    const frame = syntheticScene(rand, `probe${i}`, [[8 + 2 * i, -1]]);
    const epoch = i % 3;
    const got = augment(handle, frame, epoch);
    const expected = cliAugment(frame, epoch);
    assert.ok(sameArrays(got, expected), `frame probe${i} epoch ${epoch} differs from the CLI output`);
    assert.equal(got.frameId, `probe${i}`);
  }
});

test("probability zero config returns the inputs elementwise", () => {
  const frame = syntheticScene(mulberry32(7), "still", [[15, 0]]);
  const out = augment(identityHandle, frame, 0);
  assert.ok(sameArrays(out, frame));
  assert.notEqual(out.positions, frame.positions); // freshly allocated, not a view
});

test("same inputs and epoch give identical outputs", () => {
  const frame = syntheticScene(mulberry32(8), "twice", [[22, 2]]);
  const a = augment(handle, frame, 4);
  const b = augment(handle, frame, 4);
  assert.ok(sameArrays(a, b));
});

test("different epochs give different streams", () => {
  const frame = syntheticScene(mulberry32(9), "epochs", [[22, 2]]);
  const a = augment(handle, frame, 0);
  const b = augment(handle, frame, 1);
  assert.ok(!sameArrays(a, b));
});

test("caller arrays are never mutated", () => {
  const frame = syntheticScene(mulberry32(10), "readonly", [[18, 1]]);
  const before_ = [
    checksum(frame.positions),
    checksum(frame.intensity),
    checksum(frame.labels),
    checksum(frame.instanceIds),
  ];
  augment(handle, frame, 2);
  const after_ = [
    checksum(frame.positions),
    checksum(frame.intensity),
    checksum(frame.labels),
    checksum(frame.instanceIds),
  ];
  assert.deepEqual(after_, before_);
});

test("invalid array shapes name the offending field", () => {
  const frame = syntheticScene(mulberry32(11), "bad", []);
  const broken = { ...frame, intensity: new Float32Array(frame.intensity.length + 1) };
  assert.throws(() => augment(handle, broken, 0), /intensity/);
  const badPositions = { ...frame, positions: frame.positions.subarray(0, 4) };
  assert.throws(() => augment(handle, badPositions, 0), /positions/);
});

test("paste config without cached resources is rejected at load time", () => {
  const dir = tmpDir();
  const configPath = path.join(dir, "config.json");
  fs.writeFileSync(configPath, JSON.stringify({ seed: 1, paste: { prob: 1.0 } }) + "\n");
  assert.throws(() => loadConfig(configPath), /registry/);
  fs.rmSync(dir, { recursive: true, force: true });
});
