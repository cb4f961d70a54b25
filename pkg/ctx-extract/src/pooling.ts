/** Sub-word piece pooling: collapse per-piece vectors to one vector per
 * corpus token. Mean pooling is the default (order-independent and robust
 * to piece count); first-piece pooling is available behind a flag.
 */

export type Pooling = "mean" | "first";

export function poolPieces(pieces: Float32Array[], mode: Pooling): Float32Array {
  if (pieces.length === 0) {
    throw new Error("cannot pool zero pieces");
  }
  if (mode === "first" || pieces.length === 1) {
    return pieces[0];
  }
  const dim = pieces[0].length;
  const acc = new Float64Array(dim);
  for (const p of pieces) {
    if (p.length !== dim) {
      throw new Error(`piece dimension mismatch: ${p.length} vs ${dim}`);
    }
    for (let i = 0; i < dim; i++) acc[i] += p[i];
  }
  const out = new Float32Array(dim);
  for (let i = 0; i < dim; i++) out[i] = Math.fround(acc[i] / pieces.length);
  return out;
}

/** Deterministic mock word-piece splitter used to exercise pooling: tokens
 * longer than `chunk` characters split into successive chunks. */
export function mockPieces(token: string, chunk = 4): string[] {
  if (token.length <= chunk) return [token];
  const out: string[] = [];
  for (let i = 0; i < token.length; i += chunk) {
    out.push((i === 0 ? "" : "##") + token.slice(i, i + chunk));
  }
  return out;
}
