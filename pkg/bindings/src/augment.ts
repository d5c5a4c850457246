/**
 * Online augmentation hook. The frame crosses the boundary through the PCD
 * wire format and the pipeline CLI, so the returned arrays are exactly what
 * the pipeline would feed a training loop for the same (seed, frame id,
 * epoch). Caller arrays are only read, never modified; results come back
 * freshly allocated because augmentation changes point counts.
 */

import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { ConfigHandle } from "./config.js";
import { FrameView, validateFrame } from "./frame.js";
import { readFrame, writeFrame } from "./pcd.js";

export function augment(handle: ConfigHandle, frame: FrameView, epoch: number): FrameView {
  validateFrame(frame);
  if (!Number.isInteger(epoch) || epoch < 0) {
    throw new Error(`epoch: expected a non-negative integer, got ${epoch}`);
  }
  const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "railaug-bind-"));
  try {
    const inPath = path.join(tmp, "in.pcd");
    const outPath = path.join(tmp, "out.pcd");
    writeFrame(frame, inPath);
    const [cmd, ...prefix] = handle.cli;
    execFileSync(
      cmd,
      [
        ...prefix,
        "augment",
        "--in", inPath,
        "--out", outPath,
        "--config", handle.configPath,
        "--epoch", String(epoch),
        "--frame-id", frame.frameId,
        "--format", "binary",
      ],
      { stdio: ["ignore", "ignore", "pipe"] }
    );
    return readFrame(outPath);
  } finally {
    fs.rmSync(tmp, { recursive: true, force: true });
  }
}
