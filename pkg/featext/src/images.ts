/** Image directory scanning and PNG decoding into float tensors. */

import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";
import { PNG } from "pngjs";
import { DataError } from "./config.js";

export interface LoadedImage {
  /** File stem (name without extension); the CSV row id. */
  id: string;
  /** Float32 [size, size, 3] in [0, 1]. */
  tensor: tf.Tensor3D;
}

export interface SkippedFile {
  file: string;
  reason: string;
}

export interface ImageSet {
  /** Sorted by id. */
  images: LoadedImage[];
  skipped: SkippedFile[];
}

/** Decode one PNG file into a [h, w, 3] float tensor in [0, 1]. */
export function decodePng(filePath: string): tf.Tensor3D {
  const buffer = fs.readFileSync(filePath);
  const png = PNG.sync.read(buffer);
  const { width, height, data } = png;
  const pixels = new Float32Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    pixels[i * 3] = (data[i * 4] as number) / 255;
    pixels[i * 3 + 1] = (data[i * 4 + 1] as number) / 255;
    pixels[i * 3 + 2] = (data[i * 4 + 2] as number) / 255;
  }
  return tf.tensor3d(pixels, [height, width, 3]);
}

/** Encode a [h, w, 3] float tensor in [0, 1] back to PNG bytes. */
export function encodePng(tensor: tf.Tensor3D): Buffer {
  const [height, width] = tensor.shape;
  const png = new PNG({ width, height });
  const values = tensor.dataSync();
  for (let i = 0; i < width * height; i++) {
    png.data[i * 4] = Math.round(Math.min(1, Math.max(0, values[i * 3] as number)) * 255);
    png.data[i * 4 + 1] = Math.round(Math.min(1, Math.max(0, values[i * 3 + 1] as number)) * 255);
    png.data[i * 4 + 2] = Math.round(Math.min(1, Math.max(0, values[i * 3 + 2] as number)) * 255);
    png.data[i * 4 + 3] = 255;
  }
  return PNG.sync.write(png);
}

/** Load every decodable image under dir, resized to size x size.
 *
 * Unreadable files are skipped with a warning on stderr and reported in
 * the returned skipped list. Rows come back sorted by id regardless of
 * filesystem enumeration order. Two decodable files sharing a stem would
 * produce duplicate CSV ids, so that is an error; an empty result set is
 * an error too.
 */
export function loadImageDir(dir: string, size: number): ImageSet {
  let entries: string[];
  try {
    entries = fs.readdirSync(dir);
  } catch (err) {
    throw new DataError(`cannot read image dir ${dir}: ${(err as Error).message}`);
  }
  const images: LoadedImage[] = [];
  const skipped: SkippedFile[] = [];
  const seen = new Map<string, string>();
  for (const name of entries.sort()) {
    const filePath = path.join(dir, name);
    if (!fs.statSync(filePath).isFile()) continue;
    const id = path.parse(name).name;
    let decoded: tf.Tensor3D;
    try {
      decoded = decodePng(filePath);
    } catch (err) {
      const reason = (err as Error).message;
      console.warn(`warning: skipping unreadable image ${filePath}: ${reason}`);
      skipped.push({ file: name, reason });
      continue;
    }
    const other = seen.get(id);
    if (other !== undefined) {
      decoded.dispose();
      throw new DataError(`files ${other} and ${name} would both produce feature id '${id}'`);
    }
    seen.set(id, name);
    const resized = tf.tidy(() =>
      tf.image.resizeBilinear(decoded, [size, size]).clipByValue(0, 1) as tf.Tensor3D,
    );
    decoded.dispose();
    images.push({ id, tensor: resized });
  }
  if (images.length === 0) {
    throw new DataError(`no decodable images in ${dir}`);
  }
  images.sort((a, b) => (a.id < b.id ? -1 : a.id > b.id ? 1 : 0));
  return { images, skipped };
}

/** Split an image into its left and right halves along the vertical
 * midline, each resized back to the full square input size. */
export function splitHalves(image: tf.Tensor3D): [tf.Tensor3D, tf.Tensor3D] {
  return tf.tidy(() => {
    const [h, w] = image.shape;
    const mid = Math.floor(w / 2);
    const left = image.slice([0, 0, 0], [h, mid, 3]);
    const right = image.slice([0, mid, 0], [h, w - mid, 3]);
    return [
      tf.image.resizeBilinear(left, [h, w]) as tf.Tensor3D,
      tf.image.resizeBilinear(right, [h, w]) as tf.Tensor3D,
    ];
  });
}
