#!/usr/bin/env node
/**
 * lgemb-export: run a local document encoder over a corpus store and emit
 * the LGEMB embedding file plus its manifest.
 *
 *   lgemb-export --corpus runs/b6/corpus.jsonl --out embeddings.lgemb \
 *                [--encoder hashed-local] [--dim 768] \
 *                [--window 512] [--stride 128] [--max-chunks 4]
 */

import { makeEncoder } from "./encoder.js";
import { exportEmbeddings } from "./export.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`expected --flag value pairs, got ${JSON.stringify(argv)}`);
    }
    out.set(key.slice(2), argv[i + 1]);
  }
  return out;
}

function main(): number {
  let args: Map<string, string>;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (err) {
    console.error((err as Error).message);
    return 2;
  }
  const corpus = args.get("corpus");
  const out = args.get("out");
  if (!corpus || !out) {
    console.error("usage: lgemb-export --corpus corpus.jsonl --out embeddings.lgemb");
    return 2;
  }
  try {
    const encoder = makeEncoder(
      args.get("encoder") ?? "hashed-local",
      parseInt(args.get("dim") ?? "768", 10),
    );
    const manifest = exportEmbeddings(encoder, corpus, out, {
      window: parseInt(args.get("window") ?? "512", 10),
      stride: parseInt(args.get("stride") ?? "128", 10),
      maxChunks: parseInt(args.get("max-chunks") ?? "4", 10),
    });
    console.log(
      `exported ${manifest.record_count} records, dim ${manifest.dimension}, ` +
        `encoder ${manifest.encoder} v${manifest.encoder_version}`,
    );
    return 0;
  } catch (err) {
    console.error((err as Error).message);
    return 1;
  }
}

process.exit(main());
