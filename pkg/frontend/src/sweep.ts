// Heatmap model for the parameter sweep: grid values map straight onto
// colored cells; clicking a cell yields its (n, w) for the timeline.

import type { SweepCell, SweepGrid } from "./api.js";

export type SweepMetric = "sensitivity" | "events_per_hour" | "flagged_fraction";

export interface HeatmapCell {
  n: number;
  w: number;
  row: number; // n index (ascending)
  col: number; // w index (ascending)
  value: number | null;
}

export interface HeatmapModel {
  nValues: number[];
  wValues: number[];
  metric: SweepMetric;
  cells: HeatmapCell[];
  min: number;
  max: number;
}

export function heatmapModel(grid: SweepGrid, metric: SweepMetric): HeatmapModel {
  const nValues = [...grid.n_values];
  const wValues = [...grid.w_values];
  const cells: HeatmapCell[] = grid.cells.map((cell: SweepCell) => ({
    n: cell.n,
    w: cell.w,
    row: nValues.indexOf(cell.n),
    col: wValues.indexOf(cell.w),
    value: metric === "sensitivity" ? cell.sensitivity : cell[metric],
  }));
  const defined = cells.map((c) => c.value).filter((v): v is number => v !== null);
  const min = defined.length ? Math.min(...defined) : 0;
  const max = defined.length ? Math.max(...defined) : 1;
  return { nValues, wValues, metric, cells, min, max };
}

/** 0..1 position of a value inside the model's range. */
export function normalized(model: HeatmapModel, value: number | null): number | null {
  if (value === null) return null;
  if (model.max === model.min) return 1;
  return (value - model.min) / (model.max - model.min);
}

export function cellColor(model: HeatmapModel, value: number | null): string {
  const t = normalized(model, value);
  if (t === null) return "#d0d7de";
  // white -> blue ramp
  const channel = Math.round(235 - 150 * t);
  return `rgb(${channel}, ${Math.round(242 - 100 * t)}, 255)`;
}

export interface HeatmapLayout {
  cellWidth: number;
  cellHeight: number;
  padLeft: number;
  padTop: number;
}

export const DEFAULT_HEATMAP_LAYOUT: HeatmapLayout = {
  cellWidth: 64,
  cellHeight: 32,
  padLeft: 56,
  padTop: 24,
};

/** Map a click position back to the cell's parameters. */
export function cellAtPixel(
  model: HeatmapModel,
  layout: HeatmapLayout,
  px: number,
  py: number,
): { n: number; w: number } | null {
  const col = Math.floor((px - layout.padLeft) / layout.cellWidth);
  const row = Math.floor((py - layout.padTop) / layout.cellHeight);
  if (row < 0 || row >= model.nValues.length || col < 0 || col >= model.wValues.length) {
    return null;
  }
  return { n: model.nValues[row], w: model.wValues[col] };
}

export function renderHeatmap(
  ctx: CanvasRenderingContext2D,
  model: HeatmapModel,
  layout: HeatmapLayout = DEFAULT_HEATMAP_LAYOUT,
): void {
  const width = layout.padLeft + layout.cellWidth * model.wValues.length + 8;
  const height = layout.padTop + layout.cellHeight * model.nValues.length + 8;
  ctx.clearRect(0, 0, width, height);
  ctx.font = "11px sans-serif";
  ctx.fillStyle = "#57606a";
  for (const cell of model.cells) {
    const x = layout.padLeft + cell.col * layout.cellWidth;
    const y = layout.padTop + cell.row * layout.cellHeight;
    ctx.fillStyle = cellColor(model, cell.value);
    ctx.fillRect(x, y, layout.cellWidth - 2, layout.cellHeight - 2);
    ctx.fillStyle = "#24292f";
    const text = cell.value === null ? "-" : cell.value.toFixed(model.metric === "sensitivity" ? 2 : 1);
    ctx.fillText(text, x + 6, y + layout.cellHeight / 2 + 4);
  }
  ctx.fillStyle = "#57606a";
  model.wValues.forEach((w, col) => {
    ctx.fillText(`w=${w}`, layout.padLeft + col * layout.cellWidth + 6, layout.padTop - 8);
  });
  model.nValues.forEach((n, row) => {
    ctx.fillText(`n=${n}`, 6, layout.padTop + row * layout.cellHeight + layout.cellHeight / 2 + 4);
  });
}
