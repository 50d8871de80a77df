/**
 * HTTP client for the workspace service: one method per operation family,
 * plus a server-push event stream with since-revision reconnection.
 */

import type { Delta, Friend, ServerEvent, Snapshot } from "./types.js";

export class ApiError extends Error {
  constructor(public code: string, message: string, public status: number) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  /** Counts round trips so tests can assert interaction budgets. */
  requestCount = 0;

  constructor(private base: string, private fetchImpl: FetchLike = fetch) {}

  private async request(method: string, path: string, body?: unknown): Promise<any> {
    this.requestCount += 1;
    const response = await this.fetchImpl(`${this.base}${path}`, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json();
    if (!response.ok) {
      throw new ApiError(payload.error ?? "error",
        payload.message ?? response.statusText, response.status);
    }
    return payload;
  }

  health(): Promise<{ ok: boolean; backend: string }> {
    return this.request("GET", "/health");
  }

  openSession(workspace: string): Promise<{ session_id: string; revision: number }> {
    return this.request("POST", "/sessions", { workspace });
  }

  closeSession(sid: string): Promise<void> {
    return this.request("DELETE", `/sessions/${sid}`);
  }

  async snapshot(sid: string): Promise<Snapshot> {
    const body = await this.request("GET", `/sessions/${sid}/snapshot`);
    return body.snapshot as Snapshot;
  }

  snapshotSince(sid: string, since: number): Promise<Delta | { kind: "full"; snapshot: Snapshot }> {
    return this.request("GET", `/sessions/${sid}/snapshot?since=${since}`);
  }

  async friends(sid: string): Promise<Friend[]> {
    const body = await this.request("GET", `/sessions/${sid}/friends`);
    return body.friends as Friend[];
  }

  /** Invoke one named engine operation (see docs/api.md for bodies). */
  op(sid: string, name: string, body: Record<string, unknown> = {}): Promise<any> {
    return this.request("POST", `/sessions/${sid}/ops/${name}`, body);
  }
}

export interface EventStreamOptions {
  onEvent: (event: ServerEvent) => void;
  onStatus?: (status: "open" | "reconnecting" | "closed") => void;
  reconnectDelayMs?: number;
}

/**
 * Server-push consumer. Parses `data:` frames off a streaming fetch and
 * reconnects automatically; after a drop the store owner is expected to
 * fetch a since-revision delta to close any gap.
 */
export class EventStream {
  private stopped = false;

  constructor(private base: string, private sid: string,
              private options: EventStreamOptions,
              private fetchImpl: FetchLike = fetch) {}

  async run(): Promise<void> {
    while (!this.stopped) {
      try {
        const response = await this.fetchImpl(
          `${this.base}/sessions/${this.sid}/events`);
        if (!response.ok || !response.body) throw new Error(`status ${response.status}`);
        this.options.onStatus?.("open");
        await this.consume(response.body);
      } catch {
        if (this.stopped) break;
      }
      if (this.stopped) break;
      this.options.onStatus?.("reconnecting");
      await new Promise((resolve) =>
        setTimeout(resolve, this.options.reconnectDelayMs ?? 1000));
    }
    this.options.onStatus?.("closed");
  }

  private async consume(body: ReadableStream<Uint8Array>): Promise<void> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    while (!this.stopped) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let boundary = buffer.indexOf("\n\n");
      while (boundary >= 0) {
        const frame = buffer.slice(0, boundary);
        buffer = buffer.slice(boundary + 2);
        for (const line of frame.split("\n")) {
          if (line.startsWith("data: ")) {
            this.options.onEvent(JSON.parse(line.slice(6)) as ServerEvent);
          }
        }
        boundary = buffer.indexOf("\n\n");
      }
    }
    reader.cancel().catch(() => undefined);
  }

  stop(): void {
    this.stopped = true;
  }
}

/** Parse raw SSE text into events (exposed for tests). */
export function parseSseChunk(text: string): ServerEvent[] {
  const events: ServerEvent[] = [];
  for (const frame of text.split("\n\n")) {
    for (const line of frame.split("\n")) {
      if (line.startsWith("data: ")) {
        events.push(JSON.parse(line.slice(6)) as ServerEvent);
      }
    }
  }
  return events;
}
