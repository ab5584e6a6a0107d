/**
 * Display <-> slice coordinate mapping for the annotation canvas.
 *
 * The slice is drawn scaled by `scale` and shifted by `(offsetX, offsetY)`
 * display pixels. Clicks map back through the exact inverse, so the posted
 * point is always the integer slice pixel under the cursor.
 */

export interface ViewTransform {
  scale: number; // display pixels per slice pixel, > 0
  offsetX: number;
  offsetY: number;
}

export interface Rect {
  row0: number;
  col0: number;
  height: number;
  width: number;
}

export interface SlicePoint {
  row: number;
  col: number;
}

export function sliceToDisplay(t: ViewTransform, p: SlicePoint): { x: number; y: number } {
  // centre of the pixel, so a round trip lands on the same integer pixel
  return {
    x: (p.col + 0.5) * t.scale + t.offsetX,
    y: (p.row + 0.5) * t.scale + t.offsetY,
  };
}

export function displayToSlice(t: ViewTransform, x: number, y: number): SlicePoint {
  return {
    row: Math.floor((y - t.offsetY) / t.scale),
    col: Math.floor((x - t.offsetX) / t.scale),
  };
}

export function rectContains(rect: Rect, p: SlicePoint): boolean {
  return (
    p.row >= rect.row0 &&
    p.row < rect.row0 + rect.height &&
    p.col >= rect.col0 &&
    p.col < rect.col0 + rect.width
  );
}

export function rectCenter(rect: Rect): SlicePoint {
  return {
    row: rect.row0 + Math.floor(rect.height / 2),
    col: rect.col0 + Math.floor(rect.width / 2),
  };
}

/** Display-space rectangle of a slice-space rect, for drawing the red frame. */
export function rectToDisplay(t: ViewTransform, rect: Rect) {
  return {
    x: rect.col0 * t.scale + t.offsetX,
    y: rect.row0 * t.scale + t.offsetY,
    width: rect.width * t.scale,
    height: rect.height * t.scale,
  };
}
