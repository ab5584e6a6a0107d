import { describe, expect, it } from "vitest";

import {
  displayToSlice,
  rectCenter,
  rectContains,
  rectToDisplay,
  sliceToDisplay,
  ViewTransform,
} from "../src/transform.js";

function randomTransform(rand: () => number): ViewTransform {
  return {
    scale: 0.5 + rand() * 15.5,
    offsetX: (rand() - 0.5) * 600,
    offsetY: (rand() - 0.5) * 600,
  };
}

// deterministic LCG so failures reproduce
function lcg(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (s * 1664525 + 1013904223) >>> 0;
    return s / 2 ** 32;
  };
}

describe("coordinate round trip", () => {
  it("maps a pixel to display and back exactly, over random transforms", () => {
    const rand = lcg(42);
    for (let trial = 0; trial < 500; trial++) {
      const t = randomTransform(rand);
      const p = { row: Math.floor(rand() * 352), col: Math.floor(rand() * 352) };
      const d = sliceToDisplay(t, p);
      const back = displayToSlice(t, d.x, d.y);
      expect(back).toEqual(p);
    }
  });

  it("region center posts the exact center pixel at any zoom", () => {
    const rect = { row0: 44, col0: 88, height: 44, width: 44 };
    const center = rectCenter(rect);
    for (const scale of [1, 2, 3, 5.5, 13]) {
      const t = { scale, offsetX: 7.25, offsetY: -3.5 };
      const d = sliceToDisplay(t, center);
      expect(displayToSlice(t, d.x, d.y)).toEqual({ row: 66, col: 110 });
    }
  });
});

describe("rect helpers", () => {
  const rect = { row0: 10, col0: 20, height: 4, width: 8 };

  it("contains its interior, excludes the outside", () => {
    expect(rectContains(rect, { row: 10, col: 20 })).toBe(true);
    expect(rectContains(rect, { row: 13, col: 27 })).toBe(true);
    expect(rectContains(rect, { row: 14, col: 20 })).toBe(false);
    expect(rectContains(rect, { row: 9, col: 20 })).toBe(false);
    expect(rectContains(rect, { row: -1, col: 0 })).toBe(false);
  });

  it("display rect matches the transform", () => {
    const t = { scale: 2, offsetX: 5, offsetY: 7 };
    expect(rectToDisplay(t, rect)).toEqual({ x: 45, y: 27, width: 16, height: 8 });
  });
});
