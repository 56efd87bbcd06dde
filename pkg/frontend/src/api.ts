// Thin client for the engine's HTTP API. Works in the browser and under
// node's built-in fetch, so the integration tests drive the same code the
// studio ships.

import type { SessionSnapshot } from "./store.js";

export interface StartSessionOptions {
  speed?: number;
  config?: Record<string, unknown>;
}

export interface StartSessionResponse {
  session_id: string;
  state: SessionSnapshot;
}

export interface ControlAck {
  ok: boolean;
  state: SessionSnapshot;
}

export interface SessionListing {
  sessions: Array<{
    session_id: string;
    active: boolean;
    finished: boolean;
    clips: number;
  }>;
}

async function expectJson<T>(response: Response): Promise<T> {
  const body = await response.text();
  if (!response.ok) {
    let message = body;
    try {
      const parsed = JSON.parse(body) as { error?: string };
      if (typeof parsed.error === "string") {
        message = parsed.error;
      }
    } catch {
      // Non-JSON error body; surface it verbatim.
    }
    throw new Error(`${response.status}: ${message}`);
  }
  return JSON.parse(body) as T;
}

export class StudioApi {
  constructor(readonly baseUrl: string) {}

  eventsUrl(): string {
    return `${this.baseUrl}/events`;
  }

  imageUrl(imageRef: string): string {
    return `${this.baseUrl}/${imageRef}`;
  }

  async startSession(
    midiFile: string,
    options: StartSessionOptions = {},
  ): Promise<StartSessionResponse> {
    const payload: Record<string, unknown> = { midi_file: midiFile };
    if (options.speed !== undefined) {
      payload.speed = options.speed;
    }
    if (options.config !== undefined) {
      payload.config = options.config;
    }
    const response = await fetch(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    return expectJson<StartSessionResponse>(response);
  }

  async control(command: Record<string, unknown>): Promise<ControlAck> {
    const response = await fetch(`${this.baseUrl}/control`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(command),
    });
    return expectJson<ControlAck>(response);
  }

  async sessions(): Promise<SessionListing> {
    const response = await fetch(`${this.baseUrl}/sessions`);
    return expectJson<SessionListing>(response);
  }

  async exportRecord(sessionId: string): Promise<string> {
    const response = await fetch(`${this.baseUrl}/sessions/${sessionId}/export`);
    const body = await response.text();
    if (!response.ok) {
      throw new Error(`${response.status}: ${body}`);
    }
    return body;
  }
}
