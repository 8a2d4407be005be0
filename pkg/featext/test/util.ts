/** Shared fixtures: deterministic toy PNGs written to temp directories. */

import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";
import { buildConfig, encodePng, ExtractConfig, mulberry32 } from "../dist/index.js";

export function tempDir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), `${prefix}-`));
}

/** Small fast config for toy extraction runs; csvName lands in a fresh
 * temp output directory. */
export function toyConfig(imageDir: string, csvName: string): ExtractConfig {
  return buildConfig({
    mode: "imgnet",
    imageDir,
    outputPath: path.join(tempDir("out"), csvName),
    imageSize: 32,
  });
}

/** A small image with a per-image base color plus pixel noise. The two
 * horizontal halves share the base color but carry independent noise, so
 * same-image halves resemble each other more than cross-image halves. */
export function toyImageTensor(seed: number, size = 24): tf.Tensor3D {
  const uniform = mulberry32(seed);
  const base = [uniform(), uniform(), uniform()];
  const pixels = new Float32Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const gradient = 0.15 * (y / size);
      for (let c = 0; c < 3; c++) {
        const value = (base[c] as number) * 0.8 + gradient + (uniform() - 0.5) * 0.2;
        pixels[(y * size + x) * 3 + c] = Math.min(1, Math.max(0, value));
      }
    }
  }
  return tf.tensor3d(pixels, [size, size, 3]);
}

/** Write count toy PNGs named img00.png .. into dir; returns their ids. */
export function writeToyImages(dir: string, count: number, size = 24): string[] {
  const ids: string[] = [];
  for (let i = 0; i < count; i++) {
    const id = `img${String(i).padStart(2, "0")}`;
    const tensor = toyImageTensor(1000 + i, size);
    fs.writeFileSync(path.join(dir, `${id}.png`), encodePng(tensor));
    tensor.dispose();
    ids.push(id);
  }
  return ids;
}

export interface ParsedCsv {
  header: string[];
  ids: string[];
  rows: number[][];
}

export function parseFeatureCsv(filePath: string): ParsedCsv {
  const text = fs.readFileSync(filePath, "utf-8");
  const lines = text.trimEnd().split("\n");
  const header = (lines[0] as string).split(",");
  const ids: string[] = [];
  const rows: number[][] = [];
  for (const line of lines.slice(1)) {
    const cells = line.split(",");
    ids.push(cells[0] as string);
    rows.push(cells.slice(1).map(Number));
  }
  return { header, ids, rows };
}
