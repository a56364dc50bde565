/**
 * LGEMB embedding file format (shared byte-exact contract).
 *
 * header: magic "LGEMB" (5 bytes), u16 version, u64 record count, u32
 * dimension, all little-endian; payload: repeated (u64 record id,
 * dimension * f32 little-endian).
 */

const MAGIC = Buffer.from("LGEMB", "ascii");
const VERSION = 1;
const HEADER_SIZE = 5 + 2 + 8 + 4;

export interface EmbeddingRecord {
  id: number;
  vector: Float32Array;
}

export function writeEmbeddings(records: EmbeddingRecord[]): Buffer {
  const dims = new Set(records.map((r) => r.vector.length));
  if (dims.size > 1) {
    throw new Error(`inconsistent embedding dimensions: ${[...dims].sort().join(", ")}`);
  }
  const dim = records.length === 0 ? 0 : records[0].vector.length;
  const sorted = [...records].sort((a, b) => a.id - b.id);
  const buf = Buffer.alloc(HEADER_SIZE + sorted.length * (8 + 4 * dim));
  MAGIC.copy(buf, 0);
  buf.writeUInt16LE(VERSION, 5);
  buf.writeBigUInt64LE(BigInt(sorted.length), 7);
  buf.writeUInt32LE(dim, 15);
  let offset = HEADER_SIZE;
  for (const rec of sorted) {
    buf.writeBigUInt64LE(BigInt(rec.id), offset);
    offset += 8;
    for (let i = 0; i < dim; i++) {
      buf.writeFloatLE(rec.vector[i], offset);
      offset += 4;
    }
  }
  return buf;
}

export function readEmbeddings(buf: Buffer): Map<number, Float32Array> {
  if (buf.length < HEADER_SIZE) throw new Error("embedding file truncated: header incomplete");
  if (!buf.subarray(0, 5).equals(MAGIC)) {
    throw new Error(`bad magic ${JSON.stringify(buf.subarray(0, 5).toString("latin1"))}`);
  }
  const version = buf.readUInt16LE(5);
  if (version !== VERSION) throw new Error(`unsupported embedding format version ${version}`);
  const count = Number(buf.readBigUInt64LE(7));
  const dim = buf.readUInt32LE(15);
  const expected = HEADER_SIZE + count * (8 + 4 * dim);
  if (buf.length !== expected) {
    throw new Error(`embedding payload truncated: ${buf.length} bytes, expected ${expected}`);
  }
  const out = new Map<number, Float32Array>();
  let offset = HEADER_SIZE;
  for (let r = 0; r < count; r++) {
    const id = Number(buf.readBigUInt64LE(offset));
    offset += 8;
    const vec = new Float32Array(dim);
    for (let i = 0; i < dim; i++) {
      vec[i] = buf.readFloatLE(offset);
      offset += 4;
    }
    if (out.has(id)) throw new Error(`duplicate record id ${id} in embedding file`);
    for (const v of vec) {
      if (!Number.isFinite(v)) throw new Error(`non-finite embedding entry for record id ${id}`);
    }
    out.set(id, vec);
  }
  return out;
}
