/**
 * Export pipeline: corpus store (JSONL) -> per-record chunking -> chunk
 * encoding -> mean pooling -> LGEMB file + manifest.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { chunkWindows, DEFAULT_MAX_CHUNKS, DEFAULT_STRIDE, DEFAULT_WINDOW } from "./chunking.js";
import { ChunkEncoder } from "./encoder.js";
import { EmbeddingRecord, writeEmbeddings } from "./format.js";

export interface CorpusRecord {
  id: number;
  transcription: string;
}

export interface ExportOptions {
  window?: number;
  stride?: number;
  maxChunks?: number;
}

export interface ExportManifest {
  encoder: string;
  encoder_version: string;
  dimension: number;
  record_count: number;
  window: number;
  stride: number;
  max_chunks: number;
  token_unit: string;
}

export function readCorpusJsonl(path: string): CorpusRecord[] {
  const records: CorpusRecord[] = [];
  const seen = new Set<number>();
  const text = readFileSync(path, "utf-8");
  text.split("\n").forEach((line, lineno) => {
    if (!line.trim()) return;
    let row: unknown;
    try {
      row = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path}:${lineno + 1}: invalid JSON (${(err as Error).message})`);
    }
    const rec = row as { id?: unknown; transcription?: unknown };
    if (typeof rec.id !== "number" || typeof rec.transcription !== "string") {
      throw new Error(`${path}:${lineno + 1}: record needs numeric id and string transcription`);
    }
    if (seen.has(rec.id)) throw new Error(`${path}:${lineno + 1}: duplicate record id ${rec.id}`);
    seen.add(rec.id);
    records.push({ id: rec.id, transcription: rec.transcription });
  });
  return records;
}

/** Encode one record: windows over its tokens, leading-token vector per
 * chunk, arithmetic mean across chunks. */
export function encodeRecord(
  encoder: ChunkEncoder,
  transcription: string,
  opts: Required<ExportOptions>,
): Float32Array {
  const tokens = encoder.tokenize(transcription);
  const windows = chunkWindows(tokens.length, opts.window, opts.stride, opts.maxChunks);
  const pooled = new Float64Array(encoder.dim);
  for (const w of windows) {
    const chunkVec = encoder.encodeChunk(tokens.slice(w.start, w.end));
    for (let i = 0; i < encoder.dim; i++) pooled[i] += chunkVec[i];
  }
  const out = new Float32Array(encoder.dim);
  for (let i = 0; i < encoder.dim; i++) out[i] = pooled[i] / windows.length;
  return out;
}

export function exportEmbeddings(
  encoder: ChunkEncoder,
  corpusPath: string,
  outPath: string,
  options: ExportOptions = {},
): ExportManifest {
  const opts: Required<ExportOptions> = {
    window: options.window ?? DEFAULT_WINDOW,
    stride: options.stride ?? DEFAULT_STRIDE,
    maxChunks: options.maxChunks ?? DEFAULT_MAX_CHUNKS,
  };
  const corpus = readCorpusJsonl(corpusPath).sort((a, b) => a.id - b.id);
  const records: EmbeddingRecord[] = corpus.map((rec) => ({
    id: rec.id,
    vector: encodeRecord(encoder, rec.transcription, opts),
  }));
  writeFileSync(outPath, writeEmbeddings(records));
  const manifest: ExportManifest = {
    encoder: encoder.name,
    encoder_version: encoder.version,
    dimension: encoder.dim,
    record_count: records.length,
    window: opts.window,
    stride: opts.stride,
    max_chunks: opts.maxChunks,
    token_unit: "encoder tokenizer tokens",
  };
  writeFileSync(`${outPath}.manifest.json`, JSON.stringify(manifest, null, 2) + "\n");
  return manifest;
}
