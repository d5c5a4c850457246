export { FrameView, validateFrame } from "./frame.js";
export { readFrame, writeFrame } from "./pcd.js";
export { ConfigHandle, LoadConfigOptions, loadConfig } from "./config.js";
export { augment } from "./augment.js";
export {
  ClassRangeReport,
  DEFAULT_BIN_EDGES,
  Evaluator,
  EvaluatorReport,
  meanRiou,
} from "./evaluator.js";
