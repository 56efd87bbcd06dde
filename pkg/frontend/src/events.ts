// Incremental parser for the engine's server-sent event stream, plus typed
// views of the event payloads it carries.
//
// The parser is transport-agnostic: feed it decoded text in whatever chunks
// the network hands you and it returns every complete message, buffering
// partial lines until the rest arrives. Comment lines (the server's
// keepalives) are counted but never surface as messages.

export interface SseMessage {
  event: string | null;
  data: string;
}

export class SseParser {
  private buffer = "";
  private dataLines: string[] = [];
  private eventName: string | null = null;
  keepalives = 0;

  /** Consume a chunk of stream text and return the messages it completed. */
  push(chunk: string): SseMessage[] {
    this.buffer += chunk;
    const messages: SseMessage[] = [];
    for (;;) {
      const newline = this.buffer.indexOf("\n");
      if (newline < 0) {
        break;
      }
      let line = this.buffer.slice(0, newline);
      this.buffer = this.buffer.slice(newline + 1);
      if (line.endsWith("\r")) {
        line = line.slice(0, -1);
      }
      const message = this.consumeLine(line);
      if (message !== null) {
        messages.push(message);
      }
    }
    return messages;
  }

  private consumeLine(line: string): SseMessage | null {
    if (line === "") {
      // Blank line: dispatch the accumulated message, if any.
      if (this.dataLines.length === 0) {
        this.eventName = null;
        return null;
      }
      const message = { event: this.eventName, data: this.dataLines.join("\n") };
      this.dataLines = [];
      this.eventName = null;
      return message;
    }
    if (line.startsWith(":")) {
      this.keepalives += 1;
      return null;
    }
    const colon = line.indexOf(":");
    const field = colon < 0 ? line : line.slice(0, colon);
    let value = colon < 0 ? "" : line.slice(colon + 1);
    if (value.startsWith(" ")) {
      value = value.slice(1);
    }
    if (field === "data") {
      this.dataLines.push(value);
    } else if (field === "event") {
      this.eventName = value;
    }
    // Other fields (id, retry) are irrelevant to this stream.
    return null;
  }
}

// ---------------------------------------------------------------------------
// Engine event payloads
// ---------------------------------------------------------------------------

export interface KeyInfo {
  tonic: string;
  mode: string;
  confidence: number;
}

export interface EmotionInfo {
  valence: number;
  arousal: number;
  words: string[];
}

export interface VisualParamsInfo {
  brightness: number;
  warmth: number;
  motion: number;
  openness: number;
}

export interface HelloEvent {
  type: "hello";
  schema: string;
  session_id: string | null;
  server_time_ms: number;
}

/** One window's analysis results; skipped windows carry only the bounds and a reason. */
export interface TelemetryEvent {
  type: "telemetry";
  session_id: string;
  clip_index: number;
  window_start_us: number;
  window_end_us: number;
  skipped: boolean;
  reason?: string;
  key?: KeyInfo;
  tempo_bpm?: number;
  meter?: string;
  contour?: string;
  emotion?: EmotionInfo;
  abc?: string;
  prompt?: string;
  fallback?: boolean;
  mode?: string;
  temperature?: number;
  style?: string;
  visual_params?: VisualParamsInfo;
  clauses?: string[];
  flags?: string[];
}

export interface ImageEvent {
  type: "image";
  session_id: string;
  clip_index: number;
  prompt: string;
  image_ref: string;
  digest: string;
  gen_latency_ms: number;
  displayed_at: number | null;
  displayed: boolean;
  error: boolean;
  fallback: boolean;
}

export interface ModeEvent {
  type: "mode";
  session_id: string;
  mode: string;
  temperature: number;
}

export type EngineEvent = HelloEvent | TelemetryEvent | ImageEvent | ModeEvent;

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

/**
 * Decode one SSE data payload into a typed engine event.
 *
 * Returns null for payloads that are not JSON objects or that carry an
 * unrecognised type, so a newer server can add event kinds without breaking
 * older studios.
 */
export function parseEngineEvent(data: string): EngineEvent | null {
  let raw: unknown;
  try {
    raw = JSON.parse(data);
  } catch {
    return null;
  }
  if (!isRecord(raw) || typeof raw.type !== "string") {
    return null;
  }
  switch (raw.type) {
    case "hello":
    case "telemetry":
    case "image":
    case "mode":
      return raw as unknown as EngineEvent;
    default:
      return null;
  }
}
