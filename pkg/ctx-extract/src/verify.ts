/** Store verification: coverage against a corpus, dimension and finiteness
 * checks. Report-only; never throws on content problems.
 */

import { CorpusSentence } from "./corpus.js";
import { entryKey, ReadStore } from "./store.js";

export interface VerifyReport {
  missing: { sid: string; index: number }[];
  nonFinite: { sid: string; index: number; layer: number; offset: number }[];
  extraEntries: number;
  checkedTokens: number;
  ok: boolean;
}

export function verifyStore(store: ReadStore, corpus: CorpusSentence[]): VerifyReport {
  const missing: VerifyReport["missing"] = [];
  const nonFinite: VerifyReport["nonFinite"] = [];
  let checked = 0;
  const needed = new Set<string>();
  for (const sent of corpus) {
    for (let i = 0; i < sent.tokens.length; i++) {
      checked += 1;
      const key = entryKey(sent.sid, i);
      needed.add(key);
      const layers = store.entries.get(key);
      if (!layers) {
        missing.push({ sid: sent.sid, index: i });
        continue;
      }
      layers.forEach((vec, layer) => {
        for (let off = 0; off < vec.length; off++) {
          if (!Number.isFinite(vec[off])) {
            nonFinite.push({ sid: sent.sid, index: i, layer, offset: off });
            return;
          }
        }
      });
    }
  }
  let extra = 0;
  for (const key of store.entries.keys()) {
    if (!needed.has(key)) extra += 1;
  }
  return {
    missing,
    nonFinite,
    extraEntries: extra,
    checkedTokens: checked,
    ok: missing.length === 0 && nonFinite.length === 0,
  };
}

export function renderReport(report: VerifyReport, header: { layerCount: number; dim: number; providerKind: string }): string {
  const lines = [
    `provider: ${header.providerKind} (${header.layerCount} layers x ${header.dim} dims)`,
    `tokens checked: ${report.checkedTokens}`,
    `${report.missing.length} missing`,
    `${report.nonFinite.length} non-finite`,
    `${report.extraEntries} extra store entries`,
  ];
  for (const m of report.missing.slice(0, 20)) {
    lines.push(`  missing: ${m.sid} token ${m.index}`);
  }
  for (const n of report.nonFinite.slice(0, 20)) {
    lines.push(`  non-finite: ${n.sid} token ${n.index} layer ${n.layer} offset ${n.offset}`);
  }
  lines.push(report.ok ? "OK" : "PROBLEMS FOUND");
  return lines.join("\n") + "\n";
}
