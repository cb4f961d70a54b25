/** Deterministic pseudo-encoder vectors.
 *
 * Values are a pure function of (surface, position, layer, seed): a SHA-256
 * digest seeds a splitmix64 stream mapped to [-1, 1] and rounded to f32.
 * Position dependence makes repeated words get distinct vectors, mimicking
 * a real contextual encoder without any model weights.
 */

import { createHash } from "node:crypto";

function splitmix64(state: bigint): () => bigint {
  let s = state & 0xffffffffffffffffn;
  return () => {
    s = (s + 0x9e3779b97f4a7c15n) & 0xffffffffffffffffn;
    let z = s;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & 0xffffffffffffffffn;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & 0xffffffffffffffffn;
    return z ^ (z >> 31n);
  };
}

export function pseudoVector(
  surface: string,
  position: number,
  layer: number,
  dim: number,
  seed: number,
): Float32Array {
  const key = `${surface}\x1f${position}\x1f${layer}\x1f${seed}`;
  const digest = createHash("sha256").update(key, "utf-8").digest();
  const next = splitmix64(digest.readBigUInt64LE(0));
  const out = new Float32Array(dim);
  for (let i = 0; i < dim; i++) {
    // 53 high bits -> double in [0, 1) -> [-1, 1)
    const u = Number(next() >> 11n) / 2 ** 53;
    out[i] = Math.fround(2 * u - 1);
  }
  return out;
}

export function pseudoStack(
  surface: string,
  position: number,
  layers: number,
  dim: number,
  seed: number,
): Float32Array[] {
  const out: Float32Array[] = [];
  for (let l = 0; l < layers; l++) {
    out.push(pseudoVector(surface, position, l, dim, seed));
  }
  return out;
}
