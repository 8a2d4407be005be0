/** Feature extraction pipelines and the CSV/manifest writers. */

import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";
import { ConfigError, configEcho, DataError, ExtractConfig } from "./config.js";
import { ImageSet, loadImageDir, splitHalves } from "./images.js";
import { liftedStructuredLoss } from "./lifted.js";
import { Backbone, embedAll } from "./model.js";
import { mulberry32, shuffle } from "./rng.js";

export interface ExtractResult {
  /** Rows written, in sorted-id order. */
  ids: string[];
  /** Embedding width. */
  dim: number;
  /** Files that could not be decoded. */
  skipped: { file: string; reason: string }[];
  /** Per-epoch mean training loss (simnet mode only). */
  lossTrace: number[];
}

function writeAtomic(filePath: string, content: string): void {
  const tmp = `${filePath}.tmp.${process.pid}`;
  fs.writeFileSync(tmp, content);
  fs.renameSync(tmp, filePath);
}

/** Serialize embeddings as the feature CSV: header id,f0..fD-1 then one
 * row per image in sorted-id order. Values use the shortest decimal
 * representation that round-trips. */
export function featuresToCsv(ids: string[], rows: number[][]): string {
  if (ids.length !== rows.length) {
    throw new DataError(`id/row count mismatch: ${ids.length} vs ${rows.length}`);
  }
  const dim = rows[0]?.length ?? 0;
  if (dim === 0) {
    throw new DataError("no feature columns to write");
  }
  const header = ["id", ...Array.from({ length: dim }, (_, i) => `f${i}`)];
  const lines = [header.join(",")];
  for (let r = 0; r < ids.length; r++) {
    const row = rows[r] as number[];
    if (row.length !== dim) {
      throw new DataError(`ragged feature row for id '${ids[r]}' (${row.length} vs ${dim})`);
    }
    for (const v of row) {
      if (!Number.isFinite(v)) {
        throw new DataError(`non-finite feature value for id '${ids[r]}'`);
      }
    }
    lines.push([ids[r], ...row.map((v) => v.toString())].join(","));
  }
  return lines.join("\n") + "\n";
}

export function manifestPath(outputPath: string): string {
  return `${outputPath}.manifest.json`;
}

function writeOutputs(config: ExtractConfig, result: ExtractResult, rows: number[][]): void {
  const outDir = path.dirname(config.outputPath);
  fs.mkdirSync(outDir, { recursive: true });
  writeAtomic(config.outputPath, featuresToCsv(result.ids, rows));
  const manifest = {
    config: configEcho(config),
    dim: result.dim,
    skipped: result.skipped,
    written: result.ids.length,
  };
  writeAtomic(manifestPath(config.outputPath), JSON.stringify(manifest, null, 2) + "\n");
}

function disposeSet(set: ImageSet): void {
  for (const img of set.images) img.tensor.dispose();
}

/** imgnet mode: embed every image with the frozen seeded backbone. */
export function extractImgnet(config: ExtractConfig): ExtractResult {
  const set = loadImageDir(config.imageDir, config.imageSize);
  const backbone = new Backbone(config.rngSeed);
  try {
    const rows = embedAll(backbone, set.images.map((img) => img.tensor));
    const result: ExtractResult = {
      ids: set.images.map((img) => img.id),
      dim: rows[0]?.length ?? 0,
      skipped: set.skipped,
      lossTrace: [],
    };
    writeOutputs(config, result, rows);
    return result;
  } finally {
    backbone.dispose();
    disposeSet(set);
  }
}

export interface TrainOptions {
  learningRate?: number;
  margin?: number;
  /** Called with the mean loss after each epoch. */
  onEpoch?: (epoch: number, loss: number) => void;
  /** Called with the trained backbone before extraction; the backbone is
   * disposed when trainSimnetAndExtract returns. */
  onTrained?: (backbone: Backbone) => void;
}

/** simnet mode: train the backbone so the two halves of an image embed
 * near each other, then export full-image embeddings. */
export function trainSimnetAndExtract(
  config: ExtractConfig,
  options: TrainOptions = {},
): ExtractResult {
  const set = loadImageDir(config.imageDir, config.imageSize);
  if (set.images.length < 2) {
    disposeSet(set);
    throw new DataError(`simnet training needs >= 2 images, got ${set.images.length}`);
  }
  const learningRate = options.learningRate ?? 0.01;
  const margin = options.margin ?? 1.0;
  const backbone = new Backbone(config.rngSeed);
  const optimizer = tf.train.adam(learningRate);
  const halves = set.images.map((img) => splitHalves(img.tensor));
  const lossTrace: number[] = [];
  try {
    const uniform = mulberry32(config.rngSeed + 0x9e37);
    const order = set.images.map((_, i) => i);
    for (let epoch = 0; epoch < config.simnetEpochs; epoch++) {
      shuffle(order, uniform);
      let epochLoss = 0;
      let batches = 0;
      for (let start = 0; start < order.length; start += config.simnetBatchSize) {
        const batchIdx = order.slice(start, start + config.simnetBatchSize);
        if (batchIdx.length < 2) continue; // a lone pair has no negatives
        const stacked = tf.tidy(() => {
          const parts: tf.Tensor3D[] = [];
          for (const i of batchIdx) {
            const [left, right] = halves[i] as [tf.Tensor3D, tf.Tensor3D];
            parts.push(left, right);
          }
          return tf.stack(parts) as tf.Tensor4D;
        });
        const lossScalar = optimizer.minimize(
          () => liftedStructuredLoss(backbone.embed(stacked), margin),
          true,
          backbone.variables(),
        ) as tf.Scalar;
        const lossValue = lossScalar.arraySync();
        lossScalar.dispose();
        stacked.dispose();
        if (!Number.isFinite(lossValue)) {
          throw new DataError(
            `training diverged: non-finite loss ${lossValue} in epoch ${epoch + 1}; ` +
              `lower the learning rate or change rngSeed`,
          );
        }
        epochLoss += lossValue;
        batches += 1;
      }
      const meanLoss = epochLoss / Math.max(1, batches);
      lossTrace.push(meanLoss);
      options.onEpoch?.(epoch + 1, meanLoss);
    }
    options.onTrained?.(backbone);
    const rows = embedAll(backbone, set.images.map((img) => img.tensor));
    const result: ExtractResult = {
      ids: set.images.map((img) => img.id),
      dim: rows[0]?.length ?? 0,
      skipped: set.skipped,
      lossTrace,
    };
    writeOutputs(config, result, rows);
    return result;
  } finally {
    optimizer.dispose();
    backbone.dispose();
    for (const [left, right] of halves) {
      left.dispose();
      right.dispose();
    }
    disposeSet(set);
  }
}

export function runExtract(config: ExtractConfig, options: TrainOptions = {}): ExtractResult {
  if (config.mode === "imgnet") return extractImgnet(config);
  if (config.mode === "simnet") return trainSimnetAndExtract(config, options);
  throw new ConfigError(`unknown mode ${JSON.stringify(config.mode)}`);
}
