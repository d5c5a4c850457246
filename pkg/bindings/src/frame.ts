/** Borrowed views over caller-owned arrays describing one labeled frame. */
export interface FrameView {
  frameId: string;
  sensorId: string;
  /** xyz interleaved, length 3n, meters (x forward, y left, z up). */
  positions: Float32Array;
  /** length n, unitless reflectance. */
  intensity: Float32Array;
  /** length n, mapped class ids, -1 = unlabeled. */
  labels: Int32Array;
  /** length n, -1 = no instance. */
  instanceIds: Int32Array;
}

/** Validate array dtypes and lengths; returns the point count. */
export function validateFrame(frame: FrameView): number {
  if (!(frame.positions instanceof Float32Array)) {
    throw new Error("positions: expected a Float32Array");
  }
  if (frame.positions.length % 3 !== 0) {
    throw new Error(`positions: length ${frame.positions.length} is not a multiple of 3`);
  }
  const n = frame.positions.length / 3;
  if (!(frame.intensity instanceof Float32Array)) {
    throw new Error("intensity: expected a Float32Array");
  }
  if (frame.intensity.length !== n) {
    throw new Error(`intensity: length ${frame.intensity.length}, expected ${n}`);
  }
  if (!(frame.labels instanceof Int32Array)) {
    throw new Error("labels: expected an Int32Array");
  }
  if (frame.labels.length !== n) {
    throw new Error(`labels: length ${frame.labels.length}, expected ${n}`);
  }
  if (!(frame.instanceIds instanceof Int32Array)) {
    throw new Error("instanceIds: expected an Int32Array");
  }
  if (frame.instanceIds.length !== n) {
    throw new Error(`instanceIds: length ${frame.instanceIds.length}, expected ${n}`);
  }
  return n;
}
