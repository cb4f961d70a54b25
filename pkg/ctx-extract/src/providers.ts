/** Encoder providers.
 *
 * Each named variant pins the (layer count, dimension) contract of its
 * released encoder family; BERT variants pre-concatenate their four top
 * hidden layers at extraction time (so the store carries a single layer),
 * while the ELMo variant keeps 3 layers for downstream learned mixing.
 *
 * Only the deterministic pseudo backend can run in this repository; real
 * encoder weights are not bundled. The provider interface is the seam
 * where an ONNX/transformers.js backend would plug in.
 */

import { mockPieces, Pooling, poolPieces } from "./pooling.js";
import { pseudoStack, pseudoVector } from "./pseudo.js";

export interface VariantSpec {
  layerCount: number;
  dim: number;
}

export const VARIANTS: Record<string, VariantSpec> = {
  BERT_base: { layerCount: 1, dim: 3072 },
  BERT_large: { layerCount: 1, dim: 4096 },
  ELMo: { layerCount: 3, dim: 1024 },
  Flair: { layerCount: 1, dim: 4096 },
};

export interface Provider {
  /** provider_kind string written into the store header */
  kind: string;
  layerCount: number;
  dim: number;
  /** One (L, d) stack per token of the sentence. */
  encodeSentence(tokens: string[]): Float32Array[][];
}

export interface PseudoOptions {
  seed: number;
  pooling: Pooling;
  /** Simulate word-piece splitting to exercise the pooling path. */
  simulatePieces?: boolean;
}

/** Deterministic stand-in encoder with a variant's exact shape. */
export function pseudoProvider(spec: VariantSpec, opts: PseudoOptions): Provider {
  const { layerCount, dim } = spec;
  return {
    kind: "Pseudo",
    layerCount,
    dim,
    encodeSentence(tokens: string[]): Float32Array[][] {
      return tokens.map((tok, pos) => {
        if (!opts.simulatePieces) {
          return pseudoStack(tok, pos, layerCount, dim, opts.seed);
        }
        const pieces = mockPieces(tok);
        const stacks: Float32Array[] = [];
        for (let l = 0; l < layerCount; l++) {
          const pieceVecs = pieces.map((piece, pi) =>
            pseudoVector(`${piece}#${pi}`, pos, l, dim, opts.seed),
          );
          stacks.push(poolPieces(pieceVecs, opts.pooling));
        }
        return stacks;
      });
    },
  };
}

export function makeProvider(
  variant: string,
  backend: string,
  opts: PseudoOptions & { layerCount?: number; dim?: number },
): Provider {
  const spec =
    variant === "custom"
      ? { layerCount: opts.layerCount ?? 1, dim: opts.dim ?? 32 }
      : VARIANTS[variant];
  if (!spec) {
    throw new Error(
      `unknown variant ${JSON.stringify(variant)}; expected one of ${Object.keys(VARIANTS).join(", ")} or "custom"`,
    );
  }
  if (backend === "pseudo") {
    return pseudoProvider(spec, opts);
  }
  throw new Error(
    `backend ${JSON.stringify(backend)} is not available in this build: ` +
      "pretrained encoder weights are not bundled. Use --backend pseudo, or " +
      "plug an encoder into the Provider interface in providers.ts",
  );
}
