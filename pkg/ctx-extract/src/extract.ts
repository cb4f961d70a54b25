/** Extraction pipeline: corpus in, CTXSTORE out, with a sidecar skip-log
 * for sentences over the encoder token limit.
 */

import * as fs from "node:fs";
import { CorpusSentence } from "./corpus.js";
import { Provider } from "./providers.js";
import { StoreEntry, StoreHeader, writeStore } from "./store.js";

export interface ExtractionResult {
  header: StoreHeader;
  entries: StoreEntry[];
  skipped: { sid: string; reason: string }[];
}

export function extractEntries(
  corpus: CorpusSentence[],
  provider: Provider,
  maxTokens: number,
): ExtractionResult {
  const entries: StoreEntry[] = [];
  const skipped: { sid: string; reason: string }[] = [];
  for (const sent of corpus) {
    if (sent.tokens.length > maxTokens) {
      skipped.push({
        sid: sent.sid,
        reason: `sentence has ${sent.tokens.length} tokens, limit ${maxTokens}`,
      });
      continue;
    }
    const stacks = provider.encodeSentence(sent.tokens);
    stacks.forEach((layers, index) => {
      entries.push({ sid: sent.sid, index, layers });
    });
  }
  return {
    header: { layerCount: provider.layerCount, dim: provider.dim, providerKind: provider.kind },
    entries,
    skipped,
  };
}

export function runExtraction(
  corpus: CorpusSentence[],
  provider: Provider,
  outPath: string,
  maxTokens: number,
): ExtractionResult {
  const result = extractEntries(corpus, provider, maxTokens);
  writeStore(outPath, result.header, result.entries);
  const skipLog = outPath + ".skipped";
  if (result.skipped.length > 0) {
    fs.writeFileSync(
      skipLog,
      result.skipped.map((s) => `${s.sid}\t${s.reason}`).join("\n") + "\n",
    );
  } else if (fs.existsSync(skipLog)) {
    fs.unlinkSync(skipLog);
  }
  return result;
}

/** JSON-lines dump of every value (exact float32 as JSON numbers); used to
 * cross-check the store against independent readers. */
export function dumpValues(entries: StoreEntry[], path: string): void {
  const lines = entries.map((e) =>
    JSON.stringify({
      sid: e.sid,
      index: e.index,
      layers: e.layers.map((v) => Array.from(v)),
    }),
  );
  fs.writeFileSync(path, lines.join("\n") + "\n");
}
