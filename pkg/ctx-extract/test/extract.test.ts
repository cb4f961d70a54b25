import assert from "node:assert/strict";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { test } from "node:test";
import { parseCorpus } from "../src/corpus.js";
import { extractEntries, runExtraction } from "../src/extract.js";
import { makeProvider, pseudoProvider, VARIANTS } from "../src/providers.js";
import { mockPieces, poolPieces } from "../src/pooling.js";
import { pseudoVector } from "../src/pseudo.js";
import { entryKey, readStore } from "../src/store.js";
import { verifyStore } from "../src/verify.js";
import { main } from "../src/cli.js";

const tmp = () => fs.mkdtempSync(path.join(os.tmpdir(), "ctxx-"));

test("variant shape contracts", () => {
  assert.deepEqual(VARIANTS.BERT_base, { layerCount: 1, dim: 3072 });
  assert.deepEqual(VARIANTS.BERT_large, { layerCount: 1, dim: 4096 });
  assert.deepEqual(VARIANTS.ELMo, { layerCount: 3, dim: 1024 });
  assert.deepEqual(VARIANTS.Flair, { layerCount: 1, dim: 4096 });
});

test("entry counting: 2 sentences x 3 tokens, 3-layer variant", () => {
  const corpus = parseCorpus("s1\ta b c\ns2\td e f\n");
  const provider = pseudoProvider({ layerCount: 3, dim: 8 }, { seed: 0, pooling: "mean" });
  const result = extractEntries(corpus, provider, 512);
  assert.equal(result.entries.length, 6);
  for (const e of result.entries) {
    assert.equal(e.layers.length, 3);
    assert.equal(e.layers[0].length, 8);
  }
});

test("real backends are unavailable with a clear message", () => {
  assert.throws(
    () => makeProvider("ELMo", "elmo", { seed: 0, pooling: "mean" }),
    /not available/,
  );
  assert.throws(() => makeProvider("nope", "pseudo", { seed: 0, pooling: "mean" }), /unknown variant/);
});

test("piece simulation pools to the mean of piece vectors", () => {
  const provider = pseudoProvider(
    { layerCount: 1, dim: 4 },
    { seed: 3, pooling: "mean", simulatePieces: true },
  );
  const [stack] = provider.encodeSentence(["wonderful"]);
  const pieces = mockPieces("wonderful").map((piece, pi) =>
    pseudoVector(`${piece}#${pi}`, 0, 0, 4, 3),
  );
  assert.deepEqual(Array.from(stack[0]), Array.from(poolPieces(pieces, "mean")));
});

test("token limit skips sentences into the skip-log", () => {
  const dir = tmp();
  const corpusPath = path.join(dir, "c.txt");
  fs.writeFileSync(corpusPath, "s1\ta b c d e\ns2\ta b\n");
  const out = path.join(dir, "s.ctx");
  const provider = pseudoProvider({ layerCount: 1, dim: 4 }, { seed: 0, pooling: "mean" });
  const result = runExtraction(parseCorpus(fs.readFileSync(corpusPath, "utf-8")), provider, out, 3);
  assert.equal(result.skipped.length, 1);
  assert.equal(result.skipped[0].sid, "s1");
  const log = fs.readFileSync(out + ".skipped", "utf-8");
  assert.match(log, /^s1\t/);
  // the store still contains the short sentence
  const store = readStore(out);
  assert.equal(store.entries.size, 2);
});

test("verify: complete, missing and non-finite stores", () => {
  const corpus = parseCorpus("s1\ta b\ns2\tc\n");
  const provider = pseudoProvider({ layerCount: 2, dim: 4 }, { seed: 1, pooling: "mean" });
  const result = extractEntries(corpus, provider, 100);
  const dir = tmp();
  const out = path.join(dir, "s.ctx");
  runExtraction(corpus, provider, out, 100);
  const full = readStore(out);

  const okReport = verifyStore(full, corpus);
  assert.equal(okReport.missing.length, 0);
  assert.equal(okReport.nonFinite.length, 0);
  assert.ok(okReport.ok);

  const holed = { header: full.header, entries: new Map(full.entries) };
  holed.entries.delete(entryKey("s1", 1));
  const holeReport = verifyStore(holed, corpus);
  assert.deepEqual(holeReport.missing, [{ sid: "s1", index: 1 }]);
  assert.ok(!holeReport.ok);

  const poisoned = { header: full.header, entries: new Map(full.entries) };
  const stack = poisoned.entries.get(entryKey("s2", 0))!.map((v) => Float32Array.from(v));
  stack[1][2] = NaN;
  poisoned.entries.set(entryKey("s2", 0), stack);
  const nanReport = verifyStore(poisoned, corpus);
  assert.deepEqual(nanReport.nonFinite, [{ sid: "s2", index: 0, layer: 1, offset: 2 }]);
});

test("cli extract + verify end to end", () => {
  const dir = tmp();
  const corpusPath = path.join(dir, "c.txt");
  fs.writeFileSync(corpusPath, "s1\tthe cat sat\ns2\tbirds fly\n");
  const out = path.join(dir, "elmo.ctx");
  const dump = path.join(dir, "values.jsonl");
  const rc = main([
    "extract", "--corpus", corpusPath, "--out", out,
    "--variant", "custom", "--layers", "3", "--dim", "16",
    "--seed", "5", "--dump-json", dump,
  ]);
  assert.equal(rc, 0);
  const store = readStore(out);
  assert.equal(store.entries.size, 5);
  assert.equal(store.header.layerCount, 3);

  // dump matches the store exactly at float32 precision
  const lines = fs.readFileSync(dump, "utf-8").trim().split("\n").map((l) => JSON.parse(l));
  for (const rec of lines) {
    const got = store.entries.get(entryKey(rec.sid, rec.index))!;
    rec.layers.forEach((vals: number[], l: number) => {
      assert.deepEqual(Array.from(got[l]), vals);
    });
  }

  assert.equal(main(["verify", "--corpus", corpusPath, "--store", out, "--strict"]), 0);
});
