/**
 * Streaming segmentation evaluator mirroring the pipeline's reports:
 * whole-cloud confusion plus one confusion matrix per planar range bin,
 * yielding per-class IoU, per-bin range IoU, and the equal-weight mean.
 * Counts stay below 2^53, so plain doubles hold them exactly.
 */

export const DEFAULT_BIN_EDGES = [0, 20, 40, 60, 80, 100];
const UNLABELED = -1;

export interface ClassRangeReport {
  /** Per-bin range IoU percentages; null where the class never appears. */
  riou: (number | null)[];
  /** Mean over present bins (strict: absent as 0 over all bins); null if none. */
  meanRiou: number | null;
}

export interface EvaluatorReport {
  iou: (number | null)[];
  miou: number | null;
  binEdges: number[];
  classes: ClassRangeReport[];
}

/** Arithmetic mean of range IoU values, weighting every range equally. */
export function meanRiou(values: number[]): number {
  if (values.length === 0) throw new Error("mean of zero range bins");
  let sum = 0;
  for (const v of values) sum += v;
  return sum / values.length;
}

function iouFromCounts(counts: Float64Array, k: number, c: number): number | null {
  const tp = counts[c * k + c];
  let row = 0;
  let col = 0;
  for (let j = 0; j < k; j++) {
    row += counts[c * k + j];
    col += counts[j * k + c];
  }
  const denom = tp + (row - tp) + (col - tp);
  return denom > 0 ? (100.0 * tp) / denom : null;
}

export class Evaluator {
  readonly numClasses: number;
  readonly binEdges: number[];
  private readonly cm: Float64Array;
  private readonly binCms: Float64Array[];

  constructor(numClasses = 8, binEdges: number[] = DEFAULT_BIN_EDGES) {
    if (numClasses < 1) throw new Error("numClasses must be positive");
    for (let i = 1; i < binEdges.length; i++) {
      if (!(binEdges[i] > binEdges[i - 1])) {
        throw new Error(`bin edges must be strictly increasing, got [${binEdges.join(", ")}]`);
      }
    }
    this.numClasses = numClasses;
    this.binEdges = [...binEdges];
    this.cm = new Float64Array(numClasses * numClasses);
    this.binCms = Array.from({ length: binEdges.length - 1 }, () => new Float64Array(numClasses * numClasses));
  }

  /** Fold one aligned (ground truth, prediction, positions) triple in.
   * Unlabeled ground-truth points are skipped; ids must lie in [0, K). */
  update(gt: Int32Array, pred: Int32Array, positions: Float32Array): this {
    if (gt.length !== pred.length) {
      throw new Error(`label length mismatch: ${gt.length} vs ${pred.length}`);
    }
    if (positions.length !== 3 * gt.length) {
      throw new Error(`positions: length ${positions.length}, expected ${3 * gt.length}`);
    }
    const k = this.numClasses;
    const edges = this.binEdges;
    for (let i = 0; i < gt.length; i++) {
      const g = gt[i];
      if (g === UNLABELED) continue;
      const q = pred[i];
      if (g < 0 || g >= k) throw new Error(`ground-truth label id ${g} outside 0..${k - 1}`);
      if (q < 0 || q >= k) throw new Error(`predicted label id ${q} outside 0..${k - 1}`);
      this.cm[g * k + q] += 1;
      const d = Math.hypot(positions[3 * i], positions[3 * i + 1]);
      for (let b = 0; b < edges.length - 1; b++) {
        if (d >= edges[b] && d < edges[b + 1]) {
          this.binCms[b][g * k + q] += 1;
          break;
        }
      }
    }
    return this;
  }

  merge(other: Evaluator): this {
    if (other.numClasses !== this.numClasses || other.binEdges.join() !== this.binEdges.join()) {
      throw new Error("cannot merge evaluators with different classes or binning");
    }
    for (let i = 0; i < this.cm.length; i++) this.cm[i] += other.cm[i];
    this.binCms.forEach((bin, b) => {
      for (let i = 0; i < bin.length; i++) bin[i] += other.binCms[b][i];
    });
    return this;
  }

  iou(): (number | null)[] {
    return Array.from({ length: this.numClasses }, (_, c) => iouFromCounts(this.cm, this.numClasses, c));
  }

  miou(strict = false): number | null {
    const values = this.iou();
    if (strict) {
      let sum = 0;
      for (const v of values) sum += v ?? 0;
      return sum / values.length;
    }
    const present = values.filter((v): v is number => v !== null);
    return present.length ? meanRiou(present) : null;
  }

  riou(classId: number, strict = false): ClassRangeReport {
    if (classId < 0 || classId >= this.numClasses) {
      throw new Error(`class id ${classId} outside 0..${this.numClasses - 1}`);
    }
    const riou = this.binCms.map((bin) => iouFromCounts(bin, this.numClasses, classId));
    let mean: number | null;
    if (strict) {
      let sum = 0;
      for (const v of riou) sum += v ?? 0;
      mean = sum / riou.length;
    } else {
      const present = riou.filter((v): v is number => v !== null);
      mean = present.length ? meanRiou(present) : null;
    }
    return { riou, meanRiou: mean };
  }

  report(strict = false): EvaluatorReport {
    return {
      iou: this.iou(),
      miou: this.miou(strict),
      binEdges: [...this.binEdges],
      classes: Array.from({ length: this.numClasses }, (_, c) => this.riou(c, strict)),
    };
  }
}
