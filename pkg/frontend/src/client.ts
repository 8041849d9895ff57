/** Thin client for the engine's session-control API and SSE event stream. */

import type { EngineEvent, SessionSnapshot } from "./types.js";

export class TurnInFlightError extends Error {
  constructor() {
    super("a turn is already in flight");
  }
}

export class EngineApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

/** Client-side validation; returns a message or null when acceptable. */
export function validateInstruction(text: string): string | null {
  if (!text.trim()) {
    return "instruction must not be empty";
  }
  return null;
}

/** Incremental SSE parser: consumes complete blocks, returns the remainder. */
export function parseSseBuffer(buffer: string): { events: EngineEvent[]; rest: string } {
  const events: EngineEvent[] = [];
  let rest = buffer;
  for (;;) {
    const cut = rest.indexOf("\n\n");
    if (cut < 0) {
      break;
    }
    const block = rest.slice(0, cut);
    rest = rest.slice(cut + 2);
    for (const line of block.split("\n")) {
      if (line.startsWith("data: ")) {
        try {
          events.push(JSON.parse(line.slice("data: ".length)) as EngineEvent);
        } catch {
          // ignore malformed keep-alive noise
        }
      }
    }
  }
  return { events, rest };
}

export class EngineClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async post(path: string, body: unknown): Promise<unknown> {
    const response = await this.fetchImpl(this.url(path), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (response.status === 409) {
      throw new TurnInFlightError();
    }
    if (!response.ok) {
      throw new EngineApiError(response.status, await response.text());
    }
    return response.json();
  }

  async health(): Promise<boolean> {
    try {
      const response = await this.fetchImpl(this.url("/v1/health"));
      return response.ok;
    } catch {
      return false;
    }
  }

  async startSession(scene: string, instruction: string): Promise<{ sessionId: string }> {
    const body = (await this.post("/v1/sessions", { scene, instruction })) as {
      session_id: string;
    };
    return { sessionId: body.session_id };
  }

  async nextTurn(sessionId: string, instruction: string): Promise<void> {
    await this.post(`/v1/sessions/${sessionId}/turns`, { instruction });
  }

  async fetchSession(sessionId: string): Promise<SessionSnapshot> {
    const response = await this.fetchImpl(this.url(`/v1/sessions/${sessionId}`));
    if (!response.ok) {
      throw new EngineApiError(response.status, await response.text());
    }
    return (await response.json()) as SessionSnapshot;
  }

  async fetchState(sessionId: string): Promise<string> {
    const response = await this.fetchImpl(this.url(`/v1/sessions/${sessionId}/state`));
    if (!response.ok) {
      throw new EngineApiError(response.status, await response.text());
    }
    const body = (await response.json()) as { scene: string };
    return body.scene;
  }

  /** Stream events from `after` until the server reports the stream idle. */
  async *streamEvents(sessionId: string, after = 0): AsyncGenerator<EngineEvent> {
    const response = await this.fetchImpl(
      this.url(`/v1/sessions/${sessionId}/events?after=${after}`),
    );
    if (!response.ok || response.body === null) {
      throw new EngineApiError(response.status, "event stream unavailable");
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        return;
      }
      buffer += decoder.decode(value, { stream: true });
      const { events, rest } = parseSseBuffer(buffer);
      buffer = rest;
      for (const event of events) {
        if (event.kind === "stream_idle") {
          return;
        }
        yield event;
      }
    }
  }
}
