// DOM wiring: sliders and overlays drive the store, the store drives the
// canvas, and the URL always mirrors the current view for deep links.

import { ApiClient, type AngleTrace, type PredictedEvent, type SweepGrid } from "./api.js";
import { DecisionQueue } from "./review.js";
import {
  ViewStore,
  stateFromParams,
  stateToParams,
  type OverlayToggles,
  type TimeRange,
} from "./state.js";
import {
  DEFAULT_LAYOUT,
  downsampleForViewport,
  eventAt,
  eventKey,
  makeScales,
  renderTimeline,
  thresholdBand,
  valueExtent,
  zoomRange,
  type AngleName,
} from "./timeline.js";
import {
  DEFAULT_HEATMAP_LAYOUT,
  cellAtPixel,
  heatmapModel,
  renderHeatmap,
  type SweepMetric,
} from "./sweep.js";

const TARGET_LABEL = "phone";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

async function boot(): Promise<void> {
  const api = new ApiClient("");
  const store = new ViewStore(api);
  const decisions = new DecisionQueue(api);

  const sessionSelect = byId<HTMLSelectElement>("session-select");
  const angleSelect = byId<HTMLSelectElement>("angle-select");
  const nSlider = byId<HTMLInputElement>("n-slider");
  const nLabel = byId<HTMLSpanElement>("n-value");
  const wSlider = byId<HTMLInputElement>("w-slider");
  const wLabel = byId<HTMLSpanElement>("w-value");
  const unitSelect = byId<HTMLSelectElement>("unit-select");
  const strideInput = byId<HTMLInputElement>("stride-input");
  const statusLine = byId<HTMLDivElement>("status-line");
  const canvas = byId<HTMLCanvasElement>("timeline");
  const reviewPanel = byId<HTMLDivElement>("review-panel");
  const reviewInfo = byId<HTMLDivElement>("review-info");
  const reviewerInput = byId<HTMLInputElement>("reviewer-input");
  const acceptButton = byId<HTMLButtonElement>("accept-button");
  const rejectButton = byId<HTMLButtonElement>("reject-button");
  const flushButton = byId<HTMLButtonElement>("flush-button");
  const pendingBadge = byId<HTMLSpanElement>("pending-badge");
  const sweepButton = byId<HTMLButtonElement>("sweep-button");
  const sweepStatus = byId<HTMLSpanElement>("sweep-status");
  const sweepMetricSelect = byId<HTMLSelectElement>("sweep-metric");
  const sweepCanvas = byId<HTMLCanvasElement>("sweep-canvas");
  const resetZoomButton = byId<HTMLButtonElement>("reset-zoom");

  const ctx = canvas.getContext("2d")!;
  const sweepCtx = sweepCanvas.getContext("2d")!;

  let trace: AngleTrace | null = null;
  let selectedEvent: PredictedEvent | null = null;
  let selectedSpan: { start_s: number; end_s: number } | null = null;
  let sweepGrid: SweepGrid | null = null;
  let traceSeq = 0;

  store.state = stateFromParams(new URLSearchParams(window.location.search));

  function syncUrl(): void {
    const params = stateToParams(store.state);
    history.replaceState(null, "", `${window.location.pathname}?${params}`);
  }

  function syncControls(): void {
    const { query, overlays } = store.state;
    nSlider.value = String(query.n);
    nLabel.textContent = query.n.toFixed(2);
    wSlider.value = String(query.w);
    wLabel.textContent = `${query.w} ${query.windowUnit}`;
    unitSelect.value = query.windowUnit;
    strideInput.value = String(query.stride);
    for (const key of Object.keys(overlays) as (keyof OverlayToggles)[]) {
      const box = document.querySelector<HTMLInputElement>(`input[data-overlay="${key}"]`);
      if (box) box.checked = overlays[key];
    }
  }

  function fullRange(): TimeRange {
    const duration = trace?.duration_s ?? store.detection?.duration_s ?? 1;
    return { start: 0, end: duration };
  }

  function visibleRange(): TimeRange {
    return store.state.range ?? fullRange();
  }

  async function refreshTrace(): Promise<void> {
    const sessionId = store.state.sessionId;
    if (!sessionId) return;
    const seq = ++traceSeq;
    const { query } = store.state;
    try {
      const downsample = trace
        ? downsampleForViewport(trace.frames.length * trace.downsample, DEFAULT_LAYOUT.width)
        : 30;
      const fresh = await api.angleTrace(sessionId, downsample, {
        w: query.w,
        windowUnit: query.windowUnit,
        stride: query.stride,
      });
      if (seq === traceSeq && fresh.session_id === store.state.sessionId) {
        trace = fresh;
        render();
      }
    } catch (err) {
      statusLine.textContent = `trace fetch failed: ${err instanceof Error ? err.message : err}`;
      statusLine.appendChild(makeRetryButton(() => void refreshTrace()));
    }
  }

  function makeRetryButton(onClick: () => void): HTMLButtonElement {
    const button = document.createElement("button");
    button.textContent = "retry";
    button.addEventListener("click", onClick, { once: true });
    return button;
  }

  function renderReviewPanel(): void {
    const sessionId = store.state.sessionId;
    pendingBadge.textContent = decisions.pending.length
      ? `${decisions.pending.length} pending`
      : "";
    if (!selectedEvent || !selectedSpan || !sessionId) {
      reviewPanel.classList.add("hidden");
      return;
    }
    reviewPanel.classList.remove("hidden");
    const verdict = decisions.verdictForSpan(sessionId, selectedSpan);
    const nudged =
      selectedSpan.start_s !== selectedEvent.start_s || selectedSpan.end_s !== selectedEvent.end_s;
    reviewInfo.textContent =
      `event ${selectedSpan.start_s.toFixed(2)}–${selectedSpan.end_s.toFixed(2)} s ` +
      `[${selectedEvent.attribution.join(", ")}]` +
      (nudged ? " (nudged)" : "") +
      (verdict ? ` — ${verdict}` : "");
  }

  function nudgeSpan(edge: "start_s" | "end_s", delta: number): void {
    if (!selectedSpan) return;
    const next = { ...selectedSpan, [edge]: selectedSpan[edge] + delta };
    if (next.start_s >= 0 && next.start_s < next.end_s) {
      selectedSpan = next;
      render();
    }
  }

  function render(): void {
    syncControls();
    const sessionId = store.state.sessionId;
    if (!trace || !sessionId) return;
    renderTimeline(ctx, {
      trace,
      detection: store.detection,
      angle: angleSelect.value as AngleName,
      n: store.state.query.n,
      range: visibleRange(),
      overlays: store.state.overlays,
      targetLabel: TARGET_LABEL,
      selected: selectedEvent,
      decisionByEvent: new Map(
        (store.detection?.events ?? []).flatMap((event) => {
          const verdict = decisions.verdictForSpan(sessionId, event);
          return verdict ? [[eventKey(event), verdict] as [string, string]] : [];
        }),
      ),
    });
    const detection = store.detection;
    statusLine.textContent = detection
      ? `${detection.event_count} predicted events, ${detection.flagged_window_count} flagged windows` +
        (store.lastError ? ` — ${store.lastError}` : "")
      : (store.lastError ?? "loading…");
    renderReviewPanel();
  }

  store.subscribe(() => {
    syncUrl();
    render();
  });

  // -- controls ------------------------------------------------------------

  sessionSelect.addEventListener("change", () => {
    trace = null;
    selectedEvent = null;
    selectedSpan = null;
    store.selectSession(sessionSelect.value || null);
    void refreshTrace();
    void decisions.loadSaved(sessionSelect.value).then(render);
  });
  angleSelect.addEventListener("change", render);
  nSlider.addEventListener("input", () => store.setQuery({ n: Number(nSlider.value) }));
  wSlider.addEventListener("input", () => {
    store.setQuery({ w: Number(wSlider.value) });
    void refreshTrace();
  });
  unitSelect.addEventListener("change", () => {
    store.setQuery({ windowUnit: unitSelect.value as "frames" | "seconds" });
    void refreshTrace();
  });
  strideInput.addEventListener("change", () => {
    store.setQuery({ stride: Math.max(1, Number(strideInput.value) || 1) });
    void refreshTrace();
  });
  for (const box of document.querySelectorAll<HTMLInputElement>("input[data-overlay]")) {
    box.addEventListener("change", () => {
      store.toggleOverlay(box.dataset.overlay as keyof OverlayToggles);
    });
  }

  // -- timeline interaction --------------------------------------------------

  canvas.addEventListener("click", (ev) => {
    if (!trace) return;
    const rect = canvas.getBoundingClientRect();
    const scales = makeScales(
      visibleRange(),
      valueExtent(
        trace[angleSelect.value as AngleName] as number[],
        trace.stats ? thresholdBand(trace.stats[angleSelect.value], store.state.query.n) : null,
      ),
      DEFAULT_LAYOUT,
    );
    const t = scales.invertX(ev.clientX - rect.left);
    selectedEvent = eventAt(store.detection, t);
    selectedSpan = selectedEvent
      ? { start_s: selectedEvent.start_s, end_s: selectedEvent.end_s }
      : null;
    render();
  });

  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    if (!trace) return;
    const rect = canvas.getBoundingClientRect();
    const scales = makeScales(visibleRange(), { lo: 0, hi: 1 }, DEFAULT_LAYOUT);
    const focus = scales.invertX(ev.clientX - rect.left);
    const factor = ev.deltaY > 0 ? 1.25 : 0.8;
    store.setRange(zoomRange(visibleRange(), focus, factor, fullRange()));
  });

  let dragStart: { px: number; range: TimeRange } | null = null;
  canvas.addEventListener("mousedown", (ev) => {
    dragStart = { px: ev.clientX, range: visibleRange() };
  });
  window.addEventListener("mouseup", () => (dragStart = null));
  window.addEventListener("mousemove", (ev) => {
    if (!dragStart || !trace) return;
    const span = dragStart.range.end - dragStart.range.start;
    const dt = ((dragStart.px - ev.clientX) / DEFAULT_LAYOUT.width) * span;
    const full = fullRange();
    let start = dragStart.range.start + dt;
    let end = dragStart.range.end + dt;
    if (start < full.start) {
      start = full.start;
      end = start + span;
    }
    if (end > full.end) {
      end = full.end;
      start = end - span;
    }
    store.setRange({ start, end });
  });
  resetZoomButton.addEventListener("click", () => store.setRange(null));

  // -- review ----------------------------------------------------------------

  async function decide(verdict: "accepted" | "rejected"): Promise<void> {
    const sessionId = store.state.sessionId;
    if (!sessionId || !selectedSpan) return;
    const outcome = await decisions.submit(sessionId, {
      start_s: selectedSpan.start_s,
      end_s: selectedSpan.end_s,
      verdict,
      reviewer: reviewerInput.value || "anonymous",
      params: { ...store.state.query },
    });
    statusLine.textContent = outcome === "saved" ? `decision ${verdict} saved` : "offline: decision queued";
    render();
  }

  acceptButton.addEventListener("click", () => void decide("accepted"));
  rejectButton.addEventListener("click", () => void decide("rejected"));
  for (const button of document.querySelectorAll<HTMLButtonElement>("button[data-nudge]")) {
    button.addEventListener("click", () => {
      const [edge, delta] = button.dataset.nudge!.split(":");
      nudgeSpan(edge as "start_s" | "end_s", Number(delta));
    });
  }
  flushButton.addEventListener("click", () => void decisions.flush().then(render));

  // -- sweep -----------------------------------------------------------------

  function paintSweep(): void {
    if (!sweepGrid) return;
    renderHeatmap(sweepCtx, heatmapModel(sweepGrid, sweepMetricSelect.value as SweepMetric));
  }

  sweepButton.addEventListener("click", async () => {
    sweepStatus.textContent = "running…";
    sweepButton.disabled = true;
    try {
      sweepGrid = await api.runSweep([1.5, 2.0, 2.5, 3.0, 3.5], [1, 2, 3, 4, 5], {
        windowUnit: store.state.query.windowUnit,
      });
      sweepStatus.textContent = "done";
      paintSweep();
    } catch (err) {
      sweepStatus.textContent = `failed: ${err instanceof Error ? err.message : err}`;
    } finally {
      sweepButton.disabled = false;
    }
  });
  sweepMetricSelect.addEventListener("change", paintSweep);
  sweepCanvas.addEventListener("click", (ev) => {
    if (!sweepGrid) return;
    const rect = sweepCanvas.getBoundingClientRect();
    const model = heatmapModel(sweepGrid, sweepMetricSelect.value as SweepMetric);
    const hit = cellAtPixel(model, DEFAULT_HEATMAP_LAYOUT, ev.clientX - rect.left, ev.clientY - rect.top);
    if (hit) {
      store.setQuery({ n: hit.n, w: hit.w });
      void refreshTrace();
    }
  });

  // -- boot ------------------------------------------------------------------

  const sessions = await api.listSessions();
  for (const session of sessions) {
    const option = document.createElement("option");
    option.value = session.session_id;
    option.textContent = session.readable
      ? `${session.session_id} (${session.n_labels} labels)`
      : `${session.session_id} (unreadable)`;
    option.disabled = !session.readable;
    sessionSelect.appendChild(option);
  }
  const initial =
    store.state.sessionId && sessions.some((s) => s.session_id === store.state.sessionId)
      ? store.state.sessionId
      : (sessions.find((s) => s.readable)?.session_id ?? null);
  if (initial) {
    sessionSelect.value = initial;
    const wanted = { ...store.state.query };
    store.state = { ...store.state, sessionId: null };
    store.selectSession(initial);
    store.setQuery(wanted);
    void refreshTrace();
    void decisions.loadSaved(initial).then(render);
  } else {
    statusLine.textContent = "no readable sessions in the corpus";
  }
}

void boot();
