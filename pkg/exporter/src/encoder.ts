/**
 * Chunk encoders. Each encoder owns its tokenizer and returns the
 * leading-token vector for a window of tokens (the analog of a contextual
 * encoder's first-position output). The deterministic local encoder keeps
 * the adapter testable offline; a real pretrained encoder plugs in through
 * the same interface.
 */

export interface ChunkEncoder {
  readonly name: string;
  readonly version: string;
  readonly dim: number;
  tokenize(text: string): string[];
  /** Leading-token vector for one window of tokens (float64 accumulation). */
  encodeChunk(tokens: string[]): Float64Array;
}

/** FNV-1a 32-bit hash. */
function fnv1a(data: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < data.length; i++) {
    h ^= data.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

/** mulberry32: tiny deterministic PRNG. */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/**
 * Deterministic offline encoder: each token hashes to a fixed pseudo-random
 * direction and the leading vector is the positionally decayed sum
 * (earlier tokens dominate, mimicking a leading-token readout), then
 * L2-normalized.
 */
export class HashedLocalEncoder implements ChunkEncoder {
  readonly name = "hashed-local";
  readonly version = "1";
  readonly dim: number;
  private cache = new Map<string, Float64Array>();

  constructor(dim = 768) {
    this.dim = dim;
  }

  tokenize(text: string): string[] {
    return text
      .toLowerCase()
      .split(/\s+/u)
      .map((t) => t.replace(/^[\p{P}]+|[\p{P}]+$/gu, ""))
      .filter((t) => t.length > 0);
  }

  private tokenVector(token: string): Float64Array {
    let vec = this.cache.get(token);
    if (!vec) {
      const rand = mulberry32(fnv1a(token));
      vec = new Float64Array(this.dim);
      for (let i = 0; i < this.dim; i++) vec[i] = 2 * rand() - 1;
      this.cache.set(token, vec);
    }
    return vec;
  }

  encodeChunk(tokens: string[]): Float64Array {
    const acc = new Float64Array(this.dim);
    tokens.forEach((tok, pos) => {
      const vec = this.tokenVector(tok);
      const weight = 1 / (1 + pos);
      for (let i = 0; i < this.dim; i++) acc[i] += weight * vec[i];
    });
    let norm = 0;
    for (let i = 0; i < this.dim; i++) norm += acc[i] * acc[i];
    norm = Math.sqrt(norm);
    if (norm > 0) {
      for (let i = 0; i < this.dim; i++) acc[i] /= norm;
    }
    return acc;
  }
}

export function makeEncoder(id: string, dim: number): ChunkEncoder {
  if (id === "hashed-local") return new HashedLocalEncoder(dim);
  throw new Error(`unknown encoder id ${JSON.stringify(id)} (available: hashed-local)`);
}
