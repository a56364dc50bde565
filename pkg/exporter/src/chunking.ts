/**
 * Sliding-window chunking, byte-for-byte the same contract as the
 * classifier side: windows start at 0, stride, 2*stride, ... each spanning
 * min(window, remaining) tokens; generation stops once a window reaches
 * the end of the sequence or maxChunks windows exist.
 */

export interface ChunkWindow {
  start: number;
  end: number; // exclusive
}

export const DEFAULT_WINDOW = 512;
export const DEFAULT_STRIDE = 128;
export const DEFAULT_MAX_CHUNKS = 4;

export function chunkWindows(
  length: number,
  window: number = DEFAULT_WINDOW,
  stride: number = DEFAULT_STRIDE,
  maxChunks: number = DEFAULT_MAX_CHUNKS,
): ChunkWindow[] {
  if (window <= 0) throw new Error("window must be positive");
  if (stride <= 0 || stride > window) throw new Error("stride must be in (0, window]");
  const windows: ChunkWindow[] = [];
  let start = 0;
  while (windows.length < maxChunks) {
    const end = Math.min(start + window, length);
    windows.push({ start, end });
    if (end >= length) break;
    start += stride;
  }
  return windows;
}

/** Closed form for the window count (capped). */
export function chunkCount(
  length: number,
  window: number = DEFAULT_WINDOW,
  stride: number = DEFAULT_STRIDE,
  maxChunks: number = DEFAULT_MAX_CHUNKS,
): number {
  if (length <= window) return 1;
  return Math.min(maxChunks, 1 + Math.ceil((length - window) / stride));
}
