import { describe, expect, it } from "vitest";
import { buildConfig, ConfigError, configEcho, DEFAULTS } from "../dist/index.js";

const BASE = { mode: "imgnet" as const, imageDir: "imgs", outputPath: "out.csv" };

describe("buildConfig", () => {
  it("applies defaults", () => {
    const config = buildConfig(BASE);
    expect(config.imageSize).toBe(DEFAULTS.imageSize);
    expect(config.simnetEpochs).toBe(25);
    expect(config.simnetBatchSize).toBe(DEFAULTS.simnetBatchSize);
    expect(config.rngSeed).toBe(0);
  });

  it("keeps explicit values", () => {
    const config = buildConfig({ ...BASE, imageSize: 48, simnetEpochs: 3, rngSeed: 11 });
    expect(config.imageSize).toBe(48);
    expect(config.simnetEpochs).toBe(3);
    expect(config.rngSeed).toBe(11);
  });

  it.each([
    [{ ...BASE, mode: "resnet" as never }, /mode must be/],
    [{ ...BASE, imageDir: "" }, /imageDir is required/],
    [{ ...BASE, outputPath: "" }, /outputPath is required/],
    [{ ...BASE, imageSize: 31 }, /imageSize must be an integer >= 32/],
    [{ ...BASE, imageSize: 32.5 }, /imageSize must be an integer >= 32/],
    [{ ...BASE, simnetEpochs: 0 }, /simnetEpochs must be an integer >= 1/],
    [{ ...BASE, simnetBatchSize: 1 }, /simnetBatchSize must be an integer >= 2/],
    [{ ...BASE, rngSeed: -1 }, /rngSeed must be a non-negative integer/],
    [{ ...BASE, rngSeed: 0.5 }, /rngSeed must be a non-negative integer/],
  ])("rejects invalid config %#", (partial, pattern) => {
    expect(() => buildConfig(partial)).toThrow(ConfigError);
    expect(() => buildConfig(partial)).toThrow(pattern);
  });
});

describe("configEcho", () => {
  it("round-trips every knob", () => {
    const config = buildConfig({ ...BASE, mode: "simnet", imageSize: 40, rngSeed: 5 });
    expect(configEcho(config)).toEqual({
      mode: "simnet",
      image_dir: "imgs",
      output_path: "out.csv",
      image_size: 40,
      simnet_epochs: 25,
      simnet_batch_size: DEFAULTS.simnetBatchSize,
      rng_seed: 5,
    });
  });
});
