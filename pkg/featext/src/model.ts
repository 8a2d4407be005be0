/** A small convolutional backbone with global average pooling.
 *
 * Weights are materialized from a seeded generator, so a fixed seed gives
 * the same network in every process. In imgnet mode the backbone is used
 * as-is as a frozen feature extractor; in simnet mode the same
 * architecture is trained on image-half pairs before extraction.
 */

import * as tf from "@tensorflow/tfjs";
import { gaussian, mulberry32 } from "./rng.js";

interface ConvSpec {
  kernel: number;
  inChannels: number;
  outChannels: number;
  stride: number;
}

const LAYERS: ConvSpec[] = [
  { kernel: 3, inChannels: 3, outChannels: 8, stride: 2 },
  { kernel: 3, inChannels: 8, outChannels: 16, stride: 2 },
  { kernel: 3, inChannels: 16, outChannels: 32, stride: 2 },
];

/** Embedding width: channel count of the last conv layer. */
export const EMBED_DIM = 32;

export class Backbone {
  readonly kernels: tf.Variable<tf.Rank.R4>[];
  readonly biases: tf.Variable<tf.Rank.R1>[];

  constructor(rngSeed: number) {
    const normal = gaussian(mulberry32(rngSeed));
    this.kernels = [];
    this.biases = [];
    for (const spec of LAYERS) {
      const fanIn = spec.kernel * spec.kernel * spec.inChannels;
      const scale = Math.sqrt(2.0 / fanIn);
      const size = spec.kernel * spec.kernel * spec.inChannels * spec.outChannels;
      const values = new Float32Array(size);
      for (let i = 0; i < size; i++) values[i] = normal() * scale;
      this.kernels.push(
        tf.variable(
          tf.tensor4d(values, [spec.kernel, spec.kernel, spec.inChannels, spec.outChannels]),
        ),
      );
      this.biases.push(tf.variable(tf.zeros([spec.outChannels])));
    }
  }

  /** All trainable variables, conv kernels then biases per layer. */
  variables(): tf.Variable[] {
    const out: tf.Variable[] = [];
    for (let i = 0; i < this.kernels.length; i++) {
      out.push(this.kernels[i] as tf.Variable, this.biases[i] as tf.Variable);
    }
    return out;
  }

  /** Forward pass: [batch, h, w, 3] -> [batch, EMBED_DIM] pooled embeddings. */
  embed(batch: tf.Tensor4D): tf.Tensor2D {
    return tf.tidy(() => {
      let x: tf.Tensor4D = batch;
      for (let i = 0; i < LAYERS.length; i++) {
        const spec = LAYERS[i] as ConvSpec;
        x = tf
          .conv2d(x, this.kernels[i] as tf.Tensor4D, spec.stride, "same")
          .add(this.biases[i] as tf.Tensor1D)
          .relu();
      }
      return x.mean([1, 2]) as tf.Tensor2D;
    });
  }

  dispose(): void {
    for (const v of this.variables()) v.dispose();
  }
}

/** Embed a list of [h, w, 3] tensors in fixed-size batches. */
export function embedAll(
  backbone: Backbone,
  tensors: tf.Tensor3D[],
  batchSize = 16,
): number[][] {
  const rows: number[][] = [];
  for (let start = 0; start < tensors.length; start += batchSize) {
    const chunk = tensors.slice(start, start + batchSize);
    const embedded = tf.tidy(() => backbone.embed(tf.stack(chunk) as tf.Tensor4D));
    const values = embedded.arraySync() as number[][];
    embedded.dispose();
    rows.push(...values);
  }
  return rows;
}
