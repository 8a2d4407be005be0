#!/usr/bin/env node
/** Command line front end: parse flags, run the extraction, report. */

import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";
import { buildConfig, ConfigError, DataError, DEFAULTS, ExtractMode } from "./config.js";
import { runExtract } from "./extract.js";

const USAGE = `usage: featext --mode <imgnet|simnet> --image-dir DIR --output FILE.csv
               [--image-size N] [--epochs N] [--batch-size N] [--rng-seed N]

Embeds every decodable PNG under --image-dir and writes a feature CSV
(header id,f0..fD-1; one sorted row per image) plus a .manifest.json
sidecar listing skipped files and the configuration.

modes:
  imgnet   frozen seeded convolutional backbone, no training
  simnet   train the backbone on left/right image-half pairs first

defaults: --image-size ${DEFAULTS.imageSize}  --epochs ${DEFAULTS.simnetEpochs}  --batch-size ${DEFAULTS.simnetBatchSize}  --rng-seed ${DEFAULTS.rngSeed}
`;

function parseIntFlag(name: string, raw: string | undefined): number | undefined {
  if (raw === undefined) return undefined;
  const value = Number(raw);
  if (!Number.isInteger(value)) {
    throw new ConfigError(`--${name} must be an integer, got ${JSON.stringify(raw)}`);
  }
  return value;
}

export async function main(argv: string[]): Promise<number> {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        mode: { type: "string" },
        "image-dir": { type: "string" },
        output: { type: "string" },
        "image-size": { type: "string" },
        epochs: { type: "string" },
        "batch-size": { type: "string" },
        "rng-seed": { type: "string" },
        quiet: { type: "boolean", default: false },
        help: { type: "boolean", default: false },
      },
      allowPositionals: false,
    });
  } catch (err) {
    console.error(`config error: ${(err as Error).message}`);
    return 2;
  }
  const flags = parsed.values;
  if (flags.help) {
    console.log(USAGE);
    return 0;
  }
  try {
    const config = buildConfig({
      mode: flags.mode as ExtractMode | undefined,
      imageDir: flags["image-dir"],
      outputPath: flags.output,
      imageSize: parseIntFlag("image-size", flags["image-size"]),
      simnetEpochs: parseIntFlag("epochs", flags.epochs),
      simnetBatchSize: parseIntFlag("batch-size", flags["batch-size"]),
      rngSeed: parseIntFlag("rng-seed", flags["rng-seed"]),
    });
    const onEpoch = flags.quiet
      ? undefined
      : (epoch: number, loss: number) => {
          console.log(`epoch ${epoch}/${config.simnetEpochs} loss=${loss.toFixed(6)}`);
        };
    const result = runExtract(config, { onEpoch });
    console.log(
      `extract: mode=${config.mode} images=${result.ids.length} dim=${result.dim} ` +
        `skipped=${result.skipped.length} output=${config.outputPath}`,
    );
    return 0;
  } catch (err) {
    if (err instanceof ConfigError) {
      console.error(`config error: ${err.message}`);
      return 2;
    }
    if (err instanceof DataError) {
      console.error(`data error: ${err.message}`);
      return 3;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href;
if (invokedDirectly) {
  main(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      console.error(err);
      process.exit(1);
    },
  );
}
