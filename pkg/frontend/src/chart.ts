/**
 * Cost-vs-Dice curve: CSV parsing and the pure scaling math for the canvas
 * polyline. Drawing is separated from the math so tests run without a DOM.
 */

export interface CurveRow {
  cycle: number;
  costSeconds: number;
  dice: number;
}

export function parseCurveCsv(text: string): CurveRow[] {
  const lines = text.trim().split("\n");
  if (lines.length < 2) return [];
  const header = lines[0].split(",");
  const iCycle = header.indexOf("cycle");
  const iCost = header.indexOf("cost_seconds");
  const iDice = header.indexOf("dice");
  return lines.slice(1).map((line) => {
    const cells = line.split(",");
    return {
      cycle: Number(cells[iCycle]),
      costSeconds: Number(cells[iCost]),
      dice: Number(cells[iDice]),
    };
  });
}

export interface ChartPoint {
  x: number;
  y: number;
}

/** Map curve rows into a width x height box, y inverted for canvas coords. */
export function scaleToBox(rows: CurveRow[], width: number, height: number): ChartPoint[] {
  if (rows.length === 0) return [];
  const xs = rows.map((r) => r.costSeconds);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const xSpan = xMax - xMin || 1;
  return rows.map((r) => ({
    x: ((r.costSeconds - xMin) / xSpan) * width,
    y: height - Math.min(Math.max(r.dice, 0), 1) * height,
  }));
}

export function drawCurve(canvas: HTMLCanvasElement, rows: CurveRow[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(0.5, 0.5, canvas.width - 1, canvas.height - 1);
  const pts = scaleToBox(rows, canvas.width, canvas.height);
  if (pts.length === 0) return;
  ctx.strokeStyle = "#c0392b";
  ctx.lineWidth = 2;
  ctx.beginPath();
  pts.forEach((p, i) => (i === 0 ? ctx.moveTo(p.x, p.y) : ctx.lineTo(p.x, p.y)));
  ctx.stroke();
}
