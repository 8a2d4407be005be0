/** Structured lifted loss over batches of positive pairs.
 *
 * Embeddings arrive in pair layout [a0, b0, a1, b1, ...] where (a_k, b_k)
 * is a positive pair and every cross-pair combination is a negative. For
 * each positive pair (i, j) the raw term is
 *
 *   J_ij = log( sum_k exp(margin - d_ik) + sum_l exp(margin - d_jl) ) + d_ij
 *
 * with the sums running over the negatives of i and of j, and the loss is
 * the mean of max(0, J_ij)^2 over pairs divided by two.
 */

import * as tf from "@tensorflow/tfjs";

/** Pairwise Euclidean distances for rows of a [n, d] matrix. */
export function pairwiseDistances(embeddings: tf.Tensor2D): tf.Tensor2D {
  return tf.tidy(() => {
    const squared = embeddings.square().sum(1).reshape([-1, 1]);
    const cross = embeddings.matMul(embeddings, false, true);
    const d2 = squared.add(squared.transpose()).sub(cross.mul(2)).maximum(0);
    // small epsilon keeps the sqrt gradient finite at zero distance
    return d2.add(1e-12).sqrt() as tf.Tensor2D;
  });
}

export function liftedStructuredLoss(
  embeddings: tf.Tensor2D,
  margin = 1.0,
): tf.Scalar {
  const n = embeddings.shape[0];
  if (n < 4 || n % 2 !== 0) {
    throw new Error(`lifted loss needs an even batch of >= 4 halves, got ${n}`);
  }
  return tf.tidy(() => {
    const distances = pairwiseDistances(embeddings);
    const pairCount = n / 2;

    // owner[i] = source image of half i; negatives are cross-image entries
    const owner = tf.tensor1d(
      Array.from({ length: n }, (_, i) => Math.floor(i / 2)),
      "int32",
    );
    const negativeMask = tf
      .notEqual(owner.reshape([-1, 1]), owner.reshape([1, -1]))
      .cast("float32");

    const negExp = tf.exp(tf.scalar(margin).sub(distances)).mul(negativeMask);
    const negSums = negExp.sum(1);

    const evens = tf.range(0, n, 2, "int32");
    const odds = tf.range(1, n, 2, "int32");
    const sumsA = negSums.gather(evens);
    const sumsB = negSums.gather(odds);

    // d(a_k, b_k) sits at flat index (2k)*n + (2k+1) = k*(2n+2) + 1
    const flatIdx = tf
      .range(0, pairCount, 1, "int32")
      .mul(tf.scalar(2 * n + 2, "int32"))
      .add(tf.scalar(1, "int32"));
    const positiveDist = distances.reshape([-1]).gather(flatIdx);

    const raw = tf.log(sumsA.add(sumsB)).add(positiveDist);
    const hinged = raw.relu();
    return hinged.square().mean().div(2) as tf.Scalar;
  });
}
