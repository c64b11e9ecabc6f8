// Accept/reject decisions with an offline queue: a failed POST keeps the
// decision locally (visible as pending) and is retried on the next flush.

import type { ApiClient, DecisionInput, DecisionRecord } from "./api.js";
import { eventKey } from "./timeline.js";

export interface QueuedDecision {
  sessionId: string;
  decision: DecisionInput;
}

export type SubmitOutcome = "saved" | "queued";

export class DecisionQueue {
  pending: QueuedDecision[] = [];
  saved: DecisionRecord[] = [];

  constructor(private api: ApiClient) {}

  /** Latest verdict per event, queued decisions shown as "pending". */
  verdictByEvent(sessionId: string): Map<string, string> {
    const map = new Map<string, string>();
    for (const rec of this.saved) {
      if (rec.session_id === sessionId) {
        map.set(eventKey(rec), rec.verdict);
      }
    }
    for (const item of this.pending) {
      if (item.sessionId === sessionId) {
        map.set(eventKey(item.decision), "pending");
      }
    }
    return map;
  }

  /** Verdict for a span, matching decisions by positive overlap so nudged
   * bounds still resolve to the flagged region they came from. */
  verdictForSpan(sessionId: string, span: { start_s: number; end_s: number }): string | undefined {
    const overlaps = (a: { start_s: number; end_s: number }) =>
      Math.min(a.end_s, span.end_s) > Math.max(a.start_s, span.start_s);
    let verdict: string | undefined;
    for (const rec of this.saved) {
      if (rec.session_id === sessionId && overlaps(rec)) verdict = rec.verdict;
    }
    for (const item of this.pending) {
      if (item.sessionId === sessionId && overlaps(item.decision)) verdict = "pending";
    }
    return verdict;
  }

  async loadSaved(sessionId: string): Promise<void> {
    this.saved = await this.api.decisions(sessionId);
  }

  async submit(sessionId: string, decision: DecisionInput): Promise<SubmitOutcome> {
    try {
      const record = await this.api.postDecision(sessionId, decision);
      this.saved.push(record);
      return "saved";
    } catch {
      this.pending.push({ sessionId, decision });
      return "queued";
    }
  }

  /** Retry queued decisions; returns how many were delivered. */
  async flush(): Promise<number> {
    const queue = this.pending;
    this.pending = [];
    let delivered = 0;
    for (const item of queue) {
      try {
        const record = await this.api.postDecision(item.sessionId, item.decision);
        this.saved.push(record);
        delivered += 1;
      } catch {
        this.pending.push(item);
      }
    }
    return delivered;
  }
}
