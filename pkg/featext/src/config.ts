/** Extraction configuration and its validation. */

export type ExtractMode = "imgnet" | "simnet";

export interface ExtractConfig {
  /** imgnet: fixed backbone embeddings; simnet: train on image-half pairs first. */
  mode: ExtractMode;
  /** Directory scanned (non-recursively) for decodable images. */
  imageDir: string;
  /** Destination feature CSV; a .manifest.json sidecar is written next to it. */
  outputPath: string;
  /** Images are resized to imageSize x imageSize before embedding. */
  imageSize: number;
  /** Training epochs for simnet mode. */
  simnetEpochs: number;
  /** Images per training batch for simnet mode. */
  simnetBatchSize: number;
  /** Seed for weight init and epoch shuffling. */
  rngSeed: number;
}

export const DEFAULTS = {
  imageSize: 64,
  simnetEpochs: 25,
  simnetBatchSize: 8,
  rngSeed: 0,
} as const;

/** Raised for invalid configuration (CLI exit code 2). */
export class ConfigError extends Error {}

/** Raised for unusable input data (CLI exit code 3). */
export class DataError extends Error {}

export function buildConfig(partial: Partial<ExtractConfig>): ExtractConfig {
  const config: ExtractConfig = {
    mode: partial.mode ?? "imgnet",
    imageDir: partial.imageDir ?? "",
    outputPath: partial.outputPath ?? "",
    imageSize: partial.imageSize ?? DEFAULTS.imageSize,
    simnetEpochs: partial.simnetEpochs ?? DEFAULTS.simnetEpochs,
    simnetBatchSize: partial.simnetBatchSize ?? DEFAULTS.simnetBatchSize,
    rngSeed: partial.rngSeed ?? DEFAULTS.rngSeed,
  };
  validateConfig(config);
  return config;
}

export function validateConfig(config: ExtractConfig): void {
  if (config.mode !== "imgnet" && config.mode !== "simnet") {
    throw new ConfigError(`mode must be "imgnet" or "simnet", got ${JSON.stringify(config.mode)}`);
  }
  if (!config.imageDir) {
    throw new ConfigError("imageDir is required");
  }
  if (!config.outputPath) {
    throw new ConfigError("outputPath is required");
  }
  if (!Number.isInteger(config.imageSize) || config.imageSize < 32) {
    throw new ConfigError(`imageSize must be an integer >= 32, got ${config.imageSize}`);
  }
  if (!Number.isInteger(config.simnetEpochs) || config.simnetEpochs < 1) {
    throw new ConfigError(`simnetEpochs must be an integer >= 1, got ${config.simnetEpochs}`);
  }
  if (!Number.isInteger(config.simnetBatchSize) || config.simnetBatchSize < 2) {
    throw new ConfigError(`simnetBatchSize must be an integer >= 2, got ${config.simnetBatchSize}`);
  }
  if (!Number.isInteger(config.rngSeed) || config.rngSeed < 0) {
    throw new ConfigError(`rngSeed must be a non-negative integer, got ${config.rngSeed}`);
  }
}

/** Plain-object echo embedded in the manifest sidecar. */
export function configEcho(config: ExtractConfig): Record<string, unknown> {
  return {
    mode: config.mode,
    image_dir: config.imageDir,
    output_path: config.outputPath,
    image_size: config.imageSize,
    simnet_epochs: config.simnetEpochs,
    simnet_batch_size: config.simnetBatchSize,
    rng_seed: config.rngSeed,
  };
}
