// Hand-rolled SVG line chart for the R2-per-iteration series. The chart is
// produced as a string so tests can assert on exact plotted values.

import type { ChartSeries } from "./view.js";

export interface ChartOptions {
  width?: number;
  height?: number;
  yMin?: number;
  yMax?: number;
}

const MARGIN = { top: 12, right: 14, bottom: 26, left: 46 };

function points(
  xs: number[],
  ys: (number | null)[],
  xScale: (x: number) => number,
  yScale: (y: number) => number,
): string {
  return xs
    .map((x, i) => {
      const y = ys[i];
      return y === null ? null : `${xScale(x).toFixed(1)},${yScale(y).toFixed(1)}`;
    })
    .filter((p): p is string => p !== null)
    .join(" ");
}

export function renderR2Chart(series: ChartSeries, options: ChartOptions = {}): string {
  const width = options.width ?? 560;
  const height = options.height ?? 220;
  const innerW = width - MARGIN.left - MARGIN.right;
  const innerH = height - MARGIN.top - MARGIN.bottom;

  const values = [...series.bestSoFar, ...series.perIterationBest].filter(
    (v): v is number => v !== null,
  );
  const yMin = options.yMin ?? Math.min(0, ...values);
  const yMax = options.yMax ?? Math.max(1, ...values);
  const xMin = Math.min(...series.iterations, 1);
  const xMax = Math.max(...series.iterations, xMin + 1);

  const xScale = (x: number) => MARGIN.left + ((x - xMin) / (xMax - xMin)) * innerW;
  const yScale = (y: number) =>
    MARGIN.top + innerH - ((y - yMin) / (yMax - yMin || 1)) * innerH;

  const gridLines: string[] = [];
  for (const level of [0, 0.5, 0.9, 0.99, 1]) {
    if (level < yMin || level > yMax) continue;
    const y = yScale(level).toFixed(1);
    gridLines.push(
      `<line x1="${MARGIN.left}" y1="${y}" x2="${width - MARGIN.right}" y2="${y}" class="grid"/>`,
      `<text x="${MARGIN.left - 6}" y="${y}" class="tick" text-anchor="end" dominant-baseline="middle">${level}</text>`,
    );
  }
  const xTicks = series.iterations
    .map(
      (k) =>
        `<text x="${xScale(k).toFixed(1)}" y="${height - 8}" class="tick" text-anchor="middle">${k}</text>`,
    )
    .join("");

  const bestPath = points(series.iterations, series.bestSoFar, xScale, yScale);
  const iterPath = points(series.iterations, series.perIterationBest, xScale, yScale);
  const markers = series.iterations
    .map((k, i) => {
      const value = series.bestSoFar[i];
      if (value === null) return "";
      return `<circle cx="${xScale(k).toFixed(1)}" cy="${yScale(value).toFixed(1)}" r="3" class="dot" data-iteration="${k}" data-value="${value}"/>`;
    })
    .join("");

  return [
    `<svg viewBox="0 0 ${width} ${height}" class="r2-chart" role="img" aria-label="best test R2 per iteration">`,
    gridLines.join(""),
    xTicks,
    iterPath ? `<polyline points="${iterPath}" class="line-iteration" fill="none"/>` : "",
    bestPath ? `<polyline points="${bestPath}" class="line-best" fill="none"/>` : "",
    markers,
    `</svg>`,
  ].join("");
}
