// Pure state container for the studio.
//
// The engine broadcasts every session's events on one stream, so the store
// pins itself to a single session: whichever one it is told about first
// (usually the one the studio just started) or, failing that, the first
// session that shows up on the wire. Events from other sessions are ignored.
//
// All transitions are pure — apply(state, event) returns a new state — which
// keeps the whole session lifecycle testable without a DOM or a network.

import type { EngineEvent, ImageEvent, TelemetryEvent } from "./events.js";

export interface StudioState {
  connected: boolean;
  schema: string | null;
  sessionId: string | null;
  mode: string | null;
  temperature: number | null;
  paused: boolean;
  style: string | null;
  cadence: Record<string, unknown> | null;
  finished: boolean;
  /** Last image the engine actually displayed; frozen while paused. */
  currentImage: ImageEvent | null;
  /** One image per window, ascending clip order, duplicates replaced. */
  images: ImageEvent[];
  /** One telemetry row per window (skipped windows included), ascending. */
  telemetry: TelemetryEvent[];
  eventCount: number;
}

export function initialState(): StudioState {
  return {
    connected: false,
    schema: null,
    sessionId: null,
    mode: null,
    temperature: null,
    paused: false,
    style: null,
    cadence: null,
    finished: false,
    currentImage: null,
    images: [],
    telemetry: [],
    eventCount: 0,
  };
}

/** Pin the store to a session (called with the id from POST /sessions). */
export function withSession(state: StudioState, sessionId: string): StudioState {
  if (state.sessionId === sessionId) {
    return state;
  }
  return {
    ...initialState(),
    connected: state.connected,
    schema: state.schema,
    sessionId,
  };
}

/** The `state` object inside a control acknowledgement or session response. */
export interface SessionSnapshot {
  session_id: string;
  mode: string;
  temperature: number;
  paused: boolean;
  style: string;
  cadence: Record<string, unknown>;
  clips: number;
  finished: boolean;
}

export function applySnapshot(state: StudioState, snapshot: SessionSnapshot): StudioState {
  const pinned = state.sessionId === null ? withSession(state, snapshot.session_id) : state;
  if (pinned.sessionId !== snapshot.session_id) {
    return pinned;
  }
  return {
    ...pinned,
    mode: snapshot.mode,
    temperature: snapshot.temperature,
    paused: snapshot.paused,
    style: snapshot.style,
    cadence: snapshot.cadence,
    finished: snapshot.finished,
  };
}

/** Insert by clip index, ascending; a second event for a window replaces the first. */
function upsertByClip<T extends { clip_index: number }>(items: T[], item: T): T[] {
  const next = items.filter((existing) => existing.clip_index !== item.clip_index);
  next.push(item);
  next.sort((a, b) => a.clip_index - b.clip_index);
  return next;
}

export function apply(state: StudioState, event: EngineEvent): StudioState {
  if (event.type === "hello") {
    const connected: StudioState = {
      ...state,
      connected: true,
      schema: event.schema,
      eventCount: state.eventCount + 1,
    };
    if (connected.sessionId === null && event.session_id !== null) {
      return { ...withSession(connected, event.session_id), eventCount: connected.eventCount };
    }
    return connected;
  }

  if (state.sessionId === null) {
    state = withSession(state, event.session_id);
  } else if (event.session_id !== state.sessionId) {
    return state;
  }

  switch (event.type) {
    case "telemetry":
      return applyTelemetry(state, event);
    case "image":
      return applyImage(state, event);
    case "mode":
      return {
        ...state,
        mode: event.mode,
        temperature: event.temperature,
        eventCount: state.eventCount + 1,
      };
  }
}

function applyTelemetry(state: StudioState, event: TelemetryEvent): StudioState {
  const next: StudioState = {
    ...state,
    telemetry: upsertByClip(state.telemetry, event),
    eventCount: state.eventCount + 1,
  };
  if (!event.skipped && event.mode !== undefined && event.temperature !== undefined) {
    next.mode = event.mode;
    next.temperature = event.temperature;
  }
  return next;
}

function applyImage(state: StudioState, event: ImageEvent): StudioState {
  return {
    ...state,
    images: upsertByClip(state.images, event),
    currentImage: event.displayed ? event : state.currentImage,
    eventCount: state.eventCount + 1,
  };
}

/** Clip indices of the rendered history strip, in display order. */
export function imageOrder(state: StudioState): number[] {
  return state.images.map((image) => image.clip_index);
}
