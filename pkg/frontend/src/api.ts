// Typed client for the review service HTTP API. The UI never computes
// detection values itself; everything it displays comes through here.

export interface AngleStats {
  mu: number;
  sigma: number;
  valid_count: number;
}

export interface ValidationSummary {
  excluded: boolean;
  invalid_frame_fraction: number;
  label_coverage: number;
  signal_gap_s: Record<string, number>;
}

export interface SessionEntry {
  session_id: string;
  readable: boolean;
  error: string | null;
  fps: number | null;
  duration_s: number | null;
  gender: string | null;
  n_labels: number | null;
  validation: ValidationSummary | null;
}

export interface LabelSpan {
  label: string;
  start_s: number;
  end_s: number;
}

export interface LocalAverage {
  w: number;
  window_unit: string;
  stride: number;
  timestamps: number[];
  yaw: (number | null)[];
  pitch: (number | null)[];
  roll: (number | null)[];
}

export interface AngleTrace {
  session_id: string;
  fps: number;
  duration_s: number;
  downsample: number;
  frames: number[];
  timestamps: number[];
  yaw: number[];
  pitch: number[];
  roll: number[];
  stats: Record<string, AngleStats> | null;
  labels: LabelSpan[];
  local_average: LocalAverage | null;
}

export interface DetectorQuery {
  n: number;
  w: number;
  windowUnit: "frames" | "seconds";
  stride: number;
}

export interface PredictedEvent {
  start_s: number;
  end_s: number;
  attribution: string[];
}

export interface Detection {
  session_id: string;
  duration_s: number;
  params: { n: number; w: number; window_unit: string; stride: number; min_window_coverage: number };
  stats: Record<string, AngleStats>;
  flagged_window_count: number;
  event_count: number;
  events: PredictedEvent[];
}

export interface DecisionInput {
  start_s: number;
  end_s: number;
  verdict: "accepted" | "rejected";
  reviewer: string;
  params?: Record<string, unknown> | null;
}

export interface DecisionRecord extends DecisionInput {
  session_id: string;
  decided_at: string;
}

export interface SweepCell {
  n: number;
  w: number;
  sensitivity: number | null;
  events_per_hour: number;
  flagged_fraction: number;
  sessions_used: number;
  sessions_with_truth: number;
}

export interface SweepGrid {
  n_values: number[];
  w_values: number[];
  window_unit: string;
  stride: number;
  target_label: string;
  cells: SweepCell[];
}

export interface SweepJob {
  job_id: string;
  status: "pending" | "running" | "done" | "failed";
  poll: string;
  error: string | null;
  grid: SweepGrid | null;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<never> {
  let code = "error";
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const body = await resp.json();
    if (body?.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(resp.status, code, message);
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as T;
  }

  async listSessions(): Promise<SessionEntry[]> {
    const body = await this.getJson<{ sessions: SessionEntry[] }>("/api/sessions");
    return body.sessions;
  }

  async angleTrace(
    sessionId: string,
    downsample: number,
    query?: Pick<DetectorQuery, "w" | "windowUnit" | "stride">,
  ): Promise<AngleTrace> {
    const params = new URLSearchParams({ downsample: String(downsample) });
    if (query) {
      params.set("w", String(query.w));
      params.set("window_unit", query.windowUnit);
      params.set("stride", String(query.stride));
    }
    return this.getJson(`/api/sessions/${encodeURIComponent(sessionId)}/angles?${params}`);
  }

  async detections(sessionId: string, query: DetectorQuery): Promise<Detection> {
    const params = new URLSearchParams({
      n: String(query.n),
      w: String(query.w),
      window_unit: query.windowUnit,
      stride: String(query.stride),
    });
    return this.getJson(`/api/sessions/${encodeURIComponent(sessionId)}/events?${params}`);
  }

  async postDecision(sessionId: string, decision: DecisionInput): Promise<DecisionRecord> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/api/sessions/${encodeURIComponent(sessionId)}/decisions`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(decision),
      },
    );
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as DecisionRecord;
  }

  async decisions(sessionId: string): Promise<DecisionRecord[]> {
    const body = await this.getJson<{ decisions: DecisionRecord[] }>(
      `/api/sessions/${encodeURIComponent(sessionId)}/decisions`,
    );
    return body.decisions;
  }

  async decisionsCsv(): Promise<string> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/export/decisions.csv`);
    if (!resp.ok) await parseError(resp);
    return resp.text();
  }

  async requestSweep(nGrid: number[], wGrid: number[], windowUnit = "frames"): Promise<SweepJob> {
    const params = new URLSearchParams({
      n_grid: nGrid.join(","),
      w_grid: wGrid.join(","),
      window_unit: windowUnit,
    });
    return this.getJson(`/api/sweep?${params}`);
  }

  async pollSweep(jobId: string): Promise<SweepJob> {
    return this.getJson(`/api/sweep/jobs/${encodeURIComponent(jobId)}`);
  }

  /** Request a sweep and poll until it settles. */
  async runSweep(
    nGrid: number[],
    wGrid: number[],
    options: { windowUnit?: string; intervalMs?: number; timeoutMs?: number } = {},
  ): Promise<SweepGrid> {
    const { windowUnit = "frames", intervalMs = 300, timeoutMs = 120_000 } = options;
    let job = await this.requestSweep(nGrid, wGrid, windowUnit);
    const deadline = Date.now() + timeoutMs;
    while (job.status !== "done") {
      if (job.status === "failed") throw new ApiError(500, "sweep_failed", job.error ?? "sweep failed");
      if (Date.now() > deadline) throw new ApiError(504, "timeout", "sweep did not finish in time");
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
      job = await this.pollSweep(job.job_id);
    }
    return job.grid!;
  }
}
