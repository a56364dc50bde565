import { describe, expect, test } from "vitest";

import { chunkCount, chunkWindows } from "../src/chunking.js";

describe("chunkWindows", () => {
  test("short sequence fits one window", () => {
    expect(chunkWindows(400)).toEqual([{ start: 0, end: 400 }]);
  });

  test("600 tokens give two windows at starts 0 and 128", () => {
    expect(chunkWindows(600).map((w) => w.start)).toEqual([0, 128]);
    expect(chunkWindows(600).at(-1)).toEqual({ start: 128, end: 600 });
  });

  test("1200 tokens cap at four windows", () => {
    const windows = chunkWindows(1200);
    expect(windows.map((w) => w.start)).toEqual([0, 128, 256, 384]);
    expect(Math.max(...windows.map((w) => w.end))).toBe(896);
  });

  test("invalid stride rejected", () => {
    expect(() => chunkWindows(10, 4, 0, 2)).toThrow();
    expect(() => chunkWindows(10, 4, 5, 2)).toThrow();
  });

  test("chunk starts equal the shared formula for every length in [1, 5000]", () => {
    for (let length = 1; length <= 5000; length++) {
      const windows = chunkWindows(length, 512, 128, 4);
      const expected: number[] = [];
      let start = 0;
      while (expected.length < 4) {
        expected.push(start);
        if (start + 512 >= length) break;
        start += 128;
      }
      expect(windows.map((w) => w.start)).toEqual(expected);
      expect(windows.length).toBe(chunkCount(length, 512, 128, 4));
      const last = windows[windows.length - 1];
      expect(last.end).toBe(Math.min(last.start + 512, length));
    }
  });
});
