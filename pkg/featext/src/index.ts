export {
  buildConfig,
  ConfigError,
  configEcho,
  DataError,
  DEFAULTS,
  validateConfig,
} from "./config.js";
export type { ExtractConfig, ExtractMode } from "./config.js";
export { decodePng, encodePng, loadImageDir, splitHalves } from "./images.js";
export type { ImageSet, LoadedImage, SkippedFile } from "./images.js";
export { liftedStructuredLoss, pairwiseDistances } from "./lifted.js";
export { Backbone, EMBED_DIM, embedAll } from "./model.js";
export {
  extractImgnet,
  featuresToCsv,
  manifestPath,
  runExtract,
  trainSimnetAndExtract,
} from "./extract.js";
export type { ExtractResult, TrainOptions } from "./extract.js";
export { gaussian, mulberry32, shuffle } from "./rng.js";
