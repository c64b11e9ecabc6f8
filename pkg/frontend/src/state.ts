// View state, URL (de)serialization and the detection-fetch scheduler.
//
// Parameter edits are debounced so at most one events request is ever in
// flight; when a response lands it is applied only if no newer parameters
// were requested meanwhile (stale responses are dropped on the floor).

import type { ApiClient, Detection, DetectorQuery } from "./api.js";

export interface OverlayToggles {
  raw: boolean;
  localAverage: boolean;
  globalMean: boolean;
  thresholdBand: boolean;
  predicted: boolean;
  groundTruth: boolean;
}

export interface TimeRange {
  start: number;
  end: number;
}

export interface ViewState {
  sessionId: string | null;
  query: DetectorQuery;
  range: TimeRange | null; // null means the full session
  overlays: OverlayToggles;
}

export const DEFAULT_QUERY: DetectorQuery = { n: 2, w: 5, windowUnit: "frames", stride: 1 };

export const DEFAULT_OVERLAYS: OverlayToggles = {
  raw: true,
  localAverage: true,
  globalMean: true,
  thresholdBand: true,
  predicted: true,
  groundTruth: true,
};

export function defaultState(): ViewState {
  return {
    sessionId: null,
    query: { ...DEFAULT_QUERY },
    range: null,
    overlays: { ...DEFAULT_OVERLAYS },
  };
}

const OVERLAY_KEYS: (keyof OverlayToggles)[] = [
  "raw",
  "localAverage",
  "globalMean",
  "thresholdBand",
  "predicted",
  "groundTruth",
];

/** Serialize everything needed to reproduce a view into URL params. */
export function stateToParams(state: ViewState): URLSearchParams {
  const params = new URLSearchParams();
  if (state.sessionId) params.set("session", state.sessionId);
  params.set("n", String(state.query.n));
  params.set("w", String(state.query.w));
  params.set("unit", state.query.windowUnit);
  params.set("stride", String(state.query.stride));
  if (state.range) {
    params.set("t0", String(state.range.start));
    params.set("t1", String(state.range.end));
  }
  const hidden = OVERLAY_KEYS.filter((key) => !state.overlays[key]);
  if (hidden.length) params.set("hide", hidden.join(","));
  return params;
}

export function stateFromParams(params: URLSearchParams): ViewState {
  const state = defaultState();
  state.sessionId = params.get("session");
  const n = Number(params.get("n"));
  if (Number.isFinite(n) && n > 0) state.query.n = n;
  const w = Number(params.get("w"));
  if (Number.isInteger(w) && w >= 1) state.query.w = w;
  const unit = params.get("unit");
  if (unit === "frames" || unit === "seconds") state.query.windowUnit = unit;
  const stride = Number(params.get("stride"));
  if (Number.isInteger(stride) && stride >= 1) state.query.stride = stride;
  const t0 = Number(params.get("t0"));
  const t1 = Number(params.get("t1"));
  if (params.has("t0") && params.has("t1") && Number.isFinite(t0) && Number.isFinite(t1) && t0 < t1) {
    state.range = { start: t0, end: t1 };
  }
  for (const key of (params.get("hide") ?? "").split(",")) {
    if (OVERLAY_KEYS.includes(key as keyof OverlayToggles)) {
      state.overlays[key as keyof OverlayToggles] = false;
    }
  }
  return state;
}

function sameQuery(a: DetectorQuery, b: DetectorQuery): boolean {
  return a.n === b.n && a.w === b.w && a.windowUnit === b.windowUnit && a.stride === b.stride;
}

export type StoreListener = (store: ViewStore) => void;

/** Holds the view state and keeps the current Detection in sync with it. */
export class ViewStore {
  state: ViewState = defaultState();
  detection: Detection | null = null;
  lastError: string | null = null;
  requestsIssued = 0;

  private listeners: StoreListener[] = [];
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private wanted: { sessionId: string; query: DetectorQuery } | null = null;
  private idleResolvers: (() => void)[] = [];

  constructor(
    private api: ApiClient,
    private debounceMs = 150,
  ) {}

  subscribe(listener: StoreListener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener(this);
  }

  /** Resolves once no request is in flight or scheduled. */
  whenIdle(): Promise<void> {
    if (!this.inFlight && this.timer === null && this.wanted === null) return Promise.resolve();
    return new Promise((resolve) => this.idleResolvers.push(resolve));
  }

  private settleIfIdle(): void {
    if (!this.inFlight && this.timer === null && this.wanted === null) {
      const resolvers = this.idleResolvers;
      this.idleResolvers = [];
      for (const resolve of resolvers) resolve();
    }
  }

  selectSession(sessionId: string | null): void {
    if (this.state.sessionId === sessionId) return;
    this.state = { ...this.state, sessionId, range: null };
    this.detection = null;
    this.notify();
    this.scheduleFetch();
  }

  setQuery(partial: Partial<DetectorQuery>): void {
    const query = { ...this.state.query, ...partial };
    if (sameQuery(query, this.state.query)) return;
    this.state = { ...this.state, query };
    this.notify();
    this.scheduleFetch();
  }

  setRange(range: TimeRange | null): void {
    this.state = { ...this.state, range };
    this.notify(); // pure view change, no refetch
  }

  toggleOverlay(key: keyof OverlayToggles): void {
    this.state = {
      ...this.state,
      overlays: { ...this.state.overlays, [key]: !this.state.overlays[key] },
    };
    this.notify(); // overlays never refetch
  }

  /** Debounce edits into at most one in-flight events request. */
  private scheduleFetch(): void {
    if (!this.state.sessionId) return;
    this.wanted = { sessionId: this.state.sessionId, query: { ...this.state.query } };
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.runFetch();
    }, this.debounceMs);
  }

  private async runFetch(): Promise<void> {
    if (this.inFlight || this.wanted === null) return;
    const target = this.wanted;
    this.wanted = null;
    this.inFlight = true;
    this.requestsIssued += 1;
    try {
      const detection = await this.api.detections(target.sessionId, target.query);
      // discard stale responses: parameters may have moved on
      if (
        this.state.sessionId === target.sessionId &&
        sameQuery(this.state.query, target.query)
      ) {
        this.detection = detection;
        this.lastError = null;
        this.notify();
      }
    } catch (err) {
      if (this.state.sessionId === target.sessionId && sameQuery(this.state.query, target.query)) {
        this.lastError = err instanceof Error ? err.message : String(err);
        this.notify();
      }
    } finally {
      this.inFlight = false;
      if (this.wanted !== null) {
        void this.runFetch(); // newer parameters arrived while we were busy
      } else {
        this.settleIfIdle();
      }
    }
  }
}
