/** Reader for the sid-prefixed tokenized corpus format.
 *
 * One sentence per line: a sentence id, a tab (or the first space when no
 * tab is present), then whitespace-separated tokens.
 */

import * as fs from "node:fs";

export interface CorpusSentence {
  sid: string;
  tokens: string[];
}

export function parseCorpus(text: string): CorpusSentence[] {
  const out: CorpusSentence[] = [];
  const seen = new Set<string>();
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trimEnd();
    if (line === "") continue;
    const cut = line.includes("\t") ? line.indexOf("\t") : line.indexOf(" ");
    if (cut <= 0) {
      throw new Error(`line ${i + 1}: expected "<sid><TAB><tokens>", got ${JSON.stringify(line)}`);
    }
    const sid = line.slice(0, cut);
    const tokens = line.slice(cut + 1).split(/\s+/).filter((t) => t !== "");
    if (tokens.length === 0) {
      throw new Error(`line ${i + 1}: sentence ${sid} has no tokens`);
    }
    if (seen.has(sid)) {
      throw new Error(`line ${i + 1}: duplicate sentence id ${sid}`);
    }
    seen.add(sid);
    out.push({ sid, tokens });
  }
  return out;
}

export function readCorpus(path: string): CorpusSentence[] {
  return parseCorpus(fs.readFileSync(path, "utf-8"));
}
