// Timeline geometry and canvas painting.
//
// All numbers (traces, window means, mu/sigma, events) come from API
// payloads; this module only maps them to pixels. The geometry half is
// pure so it can be tested without a canvas.

import type { AngleStats, AngleTrace, Detection, LabelSpan, PredictedEvent } from "./api.js";
import type { OverlayToggles, TimeRange } from "./state.js";

export interface Span {
  start: number;
  end: number;
}

export interface Band {
  lo: number;
  hi: number;
}

/** mu +/- n*sigma straight from server-side statistics. */
export function thresholdBand(stats: AngleStats, n: number): Band {
  return { lo: stats.mu - n * stats.sigma, hi: stats.mu + n * stats.sigma };
}

export function clipSpans(spans: Span[], range: TimeRange): Span[] {
  const out: Span[] = [];
  for (const span of spans) {
    const start = Math.max(span.start, range.start);
    const end = Math.min(span.end, range.end);
    if (end > start) out.push({ start, end });
  }
  return out;
}

export function totalSpanDuration(spans: Span[]): number {
  return spans.reduce((acc, s) => acc + (s.end - s.start), 0);
}

export function predictedSpans(detection: Detection | null): Span[] {
  if (!detection) return [];
  return detection.events.map((e) => ({ start: e.start_s, end: e.end_s }));
}

export function truthSpans(labels: LabelSpan[], targetLabel: string): Span[] {
  return labels
    .filter((l) => l.label === targetLabel)
    .map((l) => ({ start: l.start_s, end: l.end_s }));
}

export function eventAt(detection: Detection | null, t: number): PredictedEvent | null {
  if (!detection) return null;
  for (const event of detection.events) {
    if (t >= event.start_s && t < event.end_s) return event;
  }
  return null;
}

export interface Layout {
  width: number;
  height: number;
  padLeft: number;
  padRight: number;
  padTop: number;
  padBottom: number;
}

export const DEFAULT_LAYOUT: Layout = {
  width: 900,
  height: 260,
  padLeft: 48,
  padRight: 12,
  padTop: 10,
  padBottom: 22,
};

export interface Scales {
  x: (t: number) => number;
  y: (v: number) => number;
  invertX: (px: number) => number;
  plotWidth: number;
}

export function makeScales(range: TimeRange, values: Band, layout: Layout): Scales {
  const plotWidth = layout.width - layout.padLeft - layout.padRight;
  const plotHeight = layout.height - layout.padTop - layout.padBottom;
  const dt = range.end - range.start || 1;
  const dv = values.hi - values.lo || 1;
  return {
    x: (t) => layout.padLeft + ((t - range.start) / dt) * plotWidth,
    y: (v) => layout.padTop + (1 - (v - values.lo) / dv) * plotHeight,
    invertX: (px) => range.start + ((px - layout.padLeft) / plotWidth) * dt,
    plotWidth,
  };
}

/** Value extent of everything visible, padded a little for breathing room. */
export function valueExtent(
  series: (number | null)[],
  band: Band | null,
  pad = 0.08,
): Band {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of series) {
    if (v === null || Number.isNaN(v)) continue;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (band) {
    lo = Math.min(lo, band.lo);
    hi = Math.max(hi, band.hi);
  }
  if (!Number.isFinite(lo) || !Number.isFinite(hi)) return { lo: -1, hi: 1 };
  const margin = (hi - lo || 1) * pad;
  return { lo: lo - margin, hi: hi + margin };
}

/** How many trace points to request: about two per pixel of plot width. */
export function downsampleForViewport(
  totalFrames: number,
  plotWidthPx: number,
  pointsPerPixel = 2,
): number {
  const wanted = Math.max(1, plotWidthPx * pointsPerPixel);
  return Math.max(1, Math.floor(totalFrames / wanted));
}

export function zoomRange(range: TimeRange, focus: number, factor: number, full: TimeRange): TimeRange {
  const width = (range.end - range.start) * factor;
  const ratio = (focus - range.start) / (range.end - range.start || 1);
  let start = focus - width * ratio;
  let end = start + width;
  if (start < full.start) {
    start = full.start;
    end = Math.min(full.end, start + width);
  }
  if (end > full.end) {
    end = full.end;
    start = Math.max(full.start, end - width);
  }
  return { start, end };
}

// ---------------------------------------------------------------------------
// painting
// ---------------------------------------------------------------------------

const ANGLE_NAMES = ["yaw", "pitch", "roll"] as const;
export type AngleName = (typeof ANGLE_NAMES)[number];

export interface TimelineModel {
  trace: AngleTrace;
  detection: Detection | null;
  angle: AngleName;
  n: number;
  range: TimeRange;
  overlays: OverlayToggles;
  targetLabel: string;
  selected: PredictedEvent | null;
  decisionByEvent: Map<string, string>; // "start:end" -> verdict or "pending"
}

export function eventKey(event: { start_s: number; end_s: number }): string {
  return `${event.start_s}:${event.end_s}`;
}

function drawPolyline(
  ctx: CanvasRenderingContext2D,
  xs: number[],
  ys: (number | null)[],
  scales: Scales,
  color: string,
  width: number,
  dash: number[] = [],
): void {
  ctx.save();
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.setLineDash(dash);
  ctx.beginPath();
  let pen = false;
  for (let i = 0; i < xs.length; i++) {
    const v = ys[i];
    if (v === null || Number.isNaN(v)) {
      pen = false;
      continue;
    }
    const px = scales.x(xs[i]);
    const py = scales.y(v);
    if (pen) ctx.lineTo(px, py);
    else ctx.moveTo(px, py);
    pen = true;
  }
  ctx.stroke();
  ctx.restore();
}

export function renderTimeline(
  ctx: CanvasRenderingContext2D,
  model: TimelineModel,
  layout: Layout = DEFAULT_LAYOUT,
): Scales {
  const { trace, detection, angle, overlays } = model;
  const stats = detection?.stats?.[angle] ?? trace.stats?.[angle] ?? null;
  const band = stats && overlays.thresholdBand ? thresholdBand(stats, model.n) : null;
  const raw = trace[angle] as number[];
  const extent = valueExtent(raw, band ?? (stats ? thresholdBand(stats, model.n) : null));
  const scales = makeScales(model.range, extent, layout);

  ctx.clearRect(0, 0, layout.width, layout.height);
  ctx.save();
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, layout.width, layout.height);
  ctx.restore();

  // shaded regions first so curves stay readable
  if (overlays.groundTruth) {
    for (const span of clipSpans(truthSpans(trace.labels, model.targetLabel), model.range)) {
      ctx.fillStyle = "rgba(46, 160, 67, 0.18)";
      ctx.fillRect(scales.x(span.start), layout.padTop, scales.x(span.end) - scales.x(span.start),
        layout.height - layout.padTop - layout.padBottom);
    }
  }
  if (overlays.predicted && detection) {
    for (const event of detection.events) {
      const span = clipSpans([{ start: event.start_s, end: event.end_s }], model.range);
      if (!span.length) continue;
      const key = eventKey(event);
      const verdict = model.decisionByEvent.get(key);
      const selected = model.selected && eventKey(model.selected) === key;
      ctx.fillStyle =
        verdict === "accepted"
          ? "rgba(31, 111, 235, 0.25)"
          : verdict === "rejected"
            ? "rgba(110, 118, 129, 0.25)"
            : "rgba(248, 81, 73, 0.25)";
      const x0 = scales.x(span[0].start);
      const x1 = scales.x(span[0].end);
      ctx.fillRect(x0, layout.padTop, x1 - x0, layout.height - layout.padTop - layout.padBottom);
      if (selected) {
        ctx.strokeStyle = "#f85149";
        ctx.lineWidth = 2;
        ctx.strokeRect(x0, layout.padTop, x1 - x0, layout.height - layout.padTop - layout.padBottom);
      }
    }
  }

  if (band) {
    ctx.fillStyle = "rgba(9, 105, 218, 0.08)";
    const top = scales.y(band.hi);
    ctx.fillRect(layout.padLeft, top, scales.plotWidth, scales.y(band.lo) - top);
    ctx.strokeStyle = "rgba(9, 105, 218, 0.7)";
    ctx.setLineDash([4, 4]);
    for (const edge of [band.lo, band.hi]) {
      ctx.beginPath();
      ctx.moveTo(layout.padLeft, scales.y(edge));
      ctx.lineTo(layout.padLeft + scales.plotWidth, scales.y(edge));
      ctx.stroke();
    }
    ctx.setLineDash([]);
  }
  if (stats && overlays.globalMean) {
    ctx.strokeStyle = "rgba(9, 105, 218, 0.9)";
    ctx.setLineDash([8, 4]);
    ctx.beginPath();
    ctx.moveTo(layout.padLeft, scales.y(stats.mu));
    ctx.lineTo(layout.padLeft + scales.plotWidth, scales.y(stats.mu));
    ctx.stroke();
    ctx.setLineDash([]);
  }

  if (overlays.raw) {
    drawPolyline(ctx, trace.timestamps, raw, scales, "#1f6feb", 1);
  }
  if (overlays.localAverage && trace.local_average) {
    drawPolyline(
      ctx,
      trace.local_average.timestamps,
      trace.local_average[angle],
      scales,
      "#fb8500",
      1.6,
    );
  }

  // axes
  ctx.strokeStyle = "#57606a";
  ctx.strokeRect(layout.padLeft, layout.padTop, scales.plotWidth,
    layout.height - layout.padTop - layout.padBottom);
  ctx.fillStyle = "#57606a";
  ctx.font = "11px sans-serif";
  ctx.fillText(`${model.range.start.toFixed(1)} s`, layout.padLeft, layout.height - 6);
  const endLabel = `${model.range.end.toFixed(1)} s`;
  ctx.fillText(endLabel, layout.padLeft + scales.plotWidth - ctx.measureText(endLabel).width,
    layout.height - 6);
  if (stats) {
    ctx.fillText(`${angle} (deg)`, 4, layout.padTop + 12);
  }
  return scales;
}
