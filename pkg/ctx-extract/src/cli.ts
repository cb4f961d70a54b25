/** Command-line entry point.
 *
 *   ctx-extract extract --corpus c.txt --out store.ctx --variant ELMo
 *       [--backend pseudo] [--seed N] [--max-tokens N]
 *       [--pooling mean|first] [--simulate-pieces] [--dump-json values.jsonl]
 *       [--layers L --dim D]           (variant "custom" only)
 *   ctx-extract verify --corpus c.txt --store store.ctx [--strict]
 */

import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";
import { readCorpus } from "./corpus.js";
import { dumpValues, runExtraction } from "./extract.js";
import { makeProvider } from "./providers.js";
import { readStore } from "./store.js";
import { renderReport, verifyStore } from "./verify.js";

function cmdExtract(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      corpus: { type: "string" },
      out: { type: "string" },
      variant: { type: "string", default: "custom" },
      backend: { type: "string", default: "pseudo" },
      seed: { type: "string", default: "0" },
      "max-tokens": { type: "string", default: "512" },
      pooling: { type: "string", default: "mean" },
      "simulate-pieces": { type: "boolean", default: false },
      "dump-json": { type: "string" },
      layers: { type: "string" },
      dim: { type: "string" },
    },
  });
  if (!values.corpus || !values.out) {
    console.error("extract needs --corpus and --out");
    return 2;
  }
  const pooling = values.pooling as "mean" | "first";
  if (pooling !== "mean" && pooling !== "first") {
    console.error(`bad --pooling ${values.pooling}`);
    return 2;
  }
  const corpus = readCorpus(values.corpus);
  const provider = makeProvider(values.variant!, values.backend!, {
    seed: Number(values.seed),
    pooling,
    simulatePieces: values["simulate-pieces"],
    layerCount: values.layers ? Number(values.layers) : undefined,
    dim: values.dim ? Number(values.dim) : undefined,
  });
  const result = runExtraction(corpus, provider, values.out, Number(values["max-tokens"]));
  if (values["dump-json"]) {
    dumpValues(result.entries, values["dump-json"]);
  }
  console.log(
    `wrote ${result.entries.length} entries ` +
      `(${result.header.layerCount} layers x ${result.header.dim} dims) to ${values.out}`,
  );
  if (result.skipped.length > 0) {
    console.log(`skipped ${result.skipped.length} sentence(s); see ${values.out}.skipped`);
  }
  return 0;
}

function cmdVerify(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      corpus: { type: "string" },
      store: { type: "string" },
      strict: { type: "boolean", default: false },
    },
  });
  if (!values.corpus || !values.store) {
    console.error("verify needs --corpus and --store");
    return 2;
  }
  const store = readStore(values.store);
  const report = verifyStore(store, readCorpus(values.corpus));
  process.stdout.write(renderReport(report, store.header));
  return values.strict && !report.ok ? 1 : 0;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "extract") return cmdExtract(rest);
    if (command === "verify") return cmdVerify(rest);
    console.error("usage: ctx-extract <extract|verify> [options]");
    return 2;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exitCode = main(process.argv.slice(2));
}
