import { describe, expect, it } from "vitest";

import type { HelloEvent, ImageEvent, TelemetryEvent } from "../src/events.js";
import {
  apply,
  applySnapshot,
  imageOrder,
  initialState,
  withSession,
} from "../src/store.js";
import type { SessionSnapshot, StudioState } from "../src/store.js";

const SESSION = "s-one";

function hello(sessionId: string | null = SESSION): HelloEvent {
  return { type: "hello", schema: "tonecanvas.event/1", session_id: sessionId, server_time_ms: 1 };
}

function telemetry(clip: number, over: Partial<TelemetryEvent> = {}): TelemetryEvent {
  return {
    type: "telemetry",
    session_id: SESSION,
    clip_index: clip,
    window_start_us: clip * 10_000_000,
    window_end_us: (clip + 1) * 10_000_000,
    skipped: false,
    key: { tonic: "E", mode: "minor", confidence: 0.9 },
    tempo_bpm: 96,
    meter: "4/4",
    contour: "descending",
    emotion: { valence: -0.4, arousal: -0.3, words: ["melancholic", "reflective"] },
    mode: "divergent",
    temperature: 0.8,
    fallback: false,
    style: "painterly",
    ...over,
  };
}

function image(clip: number, over: Partial<ImageEvent> = {}): ImageEvent {
  const digest = `d${clip}`.padEnd(8, "0");
  return {
    type: "image",
    session_id: SESSION,
    clip_index: clip,
    prompt: `prompt ${clip}`,
    image_ref: `images/${digest}.png`,
    digest,
    gen_latency_ms: 2.0,
    displayed_at: (clip + 1) * 10_000_000,
    displayed: true,
    error: false,
    fallback: false,
    ...over,
  };
}

function pinned(): StudioState {
  return apply(initialState(), hello());
}

describe("hello handling", () => {
  it("marks the stream connected and records the schema", () => {
    const state = apply(initialState(), hello(null));
    expect(state.connected).toBe(true);
    expect(state.schema).toBe("tonecanvas.event/1");
    expect(state.sessionId).toBeNull();
  });

  it("adopts the advertised session when none is pinned", () => {
    const state = pinned();
    expect(state.sessionId).toBe(SESSION);
  });

  it("does not re-pin an already pinned store", () => {
    let state = withSession(initialState(), "mine");
    state = apply(state, hello("other"));
    expect(state.sessionId).toBe("mine");
  });
});

describe("telemetry handling", () => {
  it("keeps rows in clip order even when they arrive shuffled", () => {
    let state = pinned();
    for (const clip of [2, 0, 1]) {
      state = apply(state, telemetry(clip));
    }
    expect(state.telemetry.map((row) => row.clip_index)).toEqual([0, 1, 2]);
  });

  it("replaces a row delivered twice for the same window", () => {
    let state = pinned();
    state = apply(state, telemetry(0, { contour: "ascending" }));
    state = apply(state, telemetry(0, { contour: "descending" }));
    expect(state.telemetry).toHaveLength(1);
    expect(state.telemetry[0].contour).toBe("descending");
  });

  it("tracks the mode and temperature the engine actually used", () => {
    let state = pinned();
    state = apply(state, telemetry(0));
    expect(state.mode).toBe("divergent");
    expect(state.temperature).toBe(0.8);
    state = apply(state, telemetry(1, { mode: "convergent", temperature: 0.4 }));
    expect(state.mode).toBe("convergent");
    expect(state.temperature).toBe(0.4);
  });

  it("keeps skipped windows without disturbing mode tracking", () => {
    let state = pinned();
    state = apply(state, telemetry(0));
    state = apply(
      state,
      {
        type: "telemetry",
        session_id: SESSION,
        clip_index: 1,
        window_start_us: 10_000_000,
        window_end_us: 20_000_000,
        skipped: true,
        reason: "busy",
      },
    );
    expect(state.telemetry.map((row) => row.skipped)).toEqual([false, true]);
    expect(state.mode).toBe("divergent");
  });

  it("ignores telemetry from other sessions", () => {
    let state = pinned();
    state = apply(state, telemetry(0, { session_id: "someone-else" }));
    expect(state.telemetry).toEqual([]);
  });
});

describe("image handling", () => {
  it("collects every image in clip order", () => {
    let state = pinned();
    for (const clip of [0, 2, 1, 3]) {
      state = apply(state, image(clip));
    }
    expect(imageOrder(state)).toEqual([0, 1, 2, 3]);
  });

  it("replaces a duplicate image for the same window instead of appending", () => {
    let state = pinned();
    state = apply(state, image(0, { digest: "aaaa0000" }));
    state = apply(state, image(0, { digest: "bbbb0000", image_ref: "images/bbbb0000.png" }));
    expect(state.images).toHaveLength(1);
    expect(state.images[0].digest).toBe("bbbb0000");
  });

  it("promotes displayed images to the stage", () => {
    let state = pinned();
    state = apply(state, image(0));
    expect(state.currentImage?.clip_index).toBe(0);
    state = apply(state, image(1));
    expect(state.currentImage?.clip_index).toBe(1);
  });

  it("freezes the stage while paused but keeps collecting", () => {
    let state = pinned();
    state = apply(state, image(0));
    state = apply(state, telemetry(0));

    // Engine paused: images keep arriving with displayed=false.
    state = apply(state, image(1, { displayed: false, displayed_at: null }));
    state = apply(state, telemetry(1));
    state = apply(state, image(2, { displayed: false, displayed_at: null }));
    state = apply(state, telemetry(2));

    expect(state.currentImage?.clip_index).toBe(0);
    expect(imageOrder(state)).toEqual([0, 1, 2]);
    expect(state.telemetry).toHaveLength(3);

    // Resume: the next displayed image takes the stage again.
    state = apply(state, image(3));
    expect(state.currentImage?.clip_index).toBe(3);
  });
});

describe("mode events and snapshots", () => {
  it("applies a mode broadcast immediately", () => {
    let state = pinned();
    state = apply(state, { type: "mode", session_id: SESSION, mode: "convergent", temperature: 0.4 });
    expect(state.mode).toBe("convergent");
    expect(state.temperature).toBe(0.4);
  });

  it("applies control acknowledgement snapshots", () => {
    const snapshot: SessionSnapshot = {
      session_id: SESSION,
      mode: "divergent",
      temperature: 0.8,
      paused: true,
      style: "abstract",
      cadence: { kind: "manual" },
      clips: 2,
      finished: false,
    };
    const state = applySnapshot(pinned(), snapshot);
    expect(state.paused).toBe(true);
    expect(state.style).toBe("abstract");
    expect(state.cadence).toEqual({ kind: "manual" });
  });

  it("ignores snapshots for other sessions once pinned", () => {
    const snapshot: SessionSnapshot = {
      session_id: "someone-else",
      mode: "convergent",
      temperature: 0.4,
      paused: true,
      style: "geometric",
      cadence: { kind: "manual" },
      clips: 9,
      finished: true,
    };
    const state = applySnapshot(pinned(), snapshot);
    expect(state.paused).toBe(false);
    expect(state.mode).toBeNull();
  });
});

describe("withSession", () => {
  it("clears accumulated state but keeps the connection", () => {
    let state = pinned();
    state = apply(state, image(0));
    state = apply(state, telemetry(0));
    const fresh = withSession(state, "s-two");
    expect(fresh.sessionId).toBe("s-two");
    expect(fresh.images).toEqual([]);
    expect(fresh.telemetry).toEqual([]);
    expect(fresh.currentImage).toBeNull();
    expect(fresh.connected).toBe(true);
  });

  it("is a no-op for the already pinned session", () => {
    const state = pinned();
    expect(withSession(state, SESSION)).toBe(state);
  });
});
