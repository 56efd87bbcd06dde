// Markup for the studio, as pure functions of the store state.
//
// Everything here returns strings, so the full page — stage, history strip,
// telemetry feed, controls — can be asserted on in tests without a browser.
// main.ts owns the one impure step of assigning innerHTML and wiring events.

import type { ImageEvent, TelemetryEvent } from "./events.js";
import type { StudioState } from "./store.js";

export const STYLE_TAGS = ["photorealistic", "abstract", "geometric", "painterly"] as const;

export const CADENCE_CHOICES: Array<{ label: string; cadence: Record<string, unknown> }> = [
  { label: "every 10s", cadence: { kind: "fixed", interval_s: 10.0 } },
  { label: "every 5s", cadence: { kind: "fixed", interval_s: 5.0 } },
  { label: "every 4 bars", cadence: { kind: "bar_aligned", bars: 4 } },
  { label: "manual", cadence: { kind: "manual" } },
];

export function esc(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

type ImageUrl = (imageRef: string) => string;

function renderStage(state: StudioState, imageUrl: ImageUrl): string {
  const image = state.currentImage;
  if (image === null) {
    return `
      <div class="stage stage-empty" id="stage">
        <p>No image yet — start a session and play.</p>
      </div>`;
  }
  return `
    <div class="stage" id="stage">
      <img class="stage-image" src="${imageUrl(image.image_ref)}"
           data-digest="${image.digest}" data-clip="${image.clip_index}"
           alt="window ${image.clip_index}" />
      <p class="stage-caption">${esc(image.prompt)}</p>
    </div>`;
}

function renderThumb(image: ImageEvent, imageUrl: ImageUrl): string {
  const classes = ["thumb"];
  if (!image.displayed) {
    classes.push("thumb-held");
  }
  if (image.fallback) {
    classes.push("thumb-fallback");
  }
  if (image.error) {
    classes.push("thumb-error");
  }
  return `
    <figure class="${classes.join(" ")}" data-clip="${image.clip_index}" data-digest="${image.digest}">
      <img src="${imageUrl(image.image_ref)}" alt="window ${image.clip_index}" />
      <figcaption>#${image.clip_index}${image.displayed ? "" : " (held)"}</figcaption>
    </figure>`;
}

function renderHistory(state: StudioState, imageUrl: ImageUrl): string {
  const thumbs = state.images.map((image) => renderThumb(image, imageUrl)).join("\n");
  return `<div class="history" id="history">${thumbs}</div>`;
}

function renderTelemetryRow(row: TelemetryEvent): string {
  const windowLabel = `${(row.window_start_us / 1e6).toFixed(1)}s–${(row.window_end_us / 1e6).toFixed(1)}s`;
  if (row.skipped) {
    return `
      <li class="telemetry-row telemetry-skipped" data-clip="${row.clip_index}">
        <span class="clip">#${row.clip_index}</span>
        <span class="window">${windowLabel}</span>
        <span class="skip-reason">skipped (${esc(row.reason ?? "unknown")})</span>
      </li>`;
  }
  const key = row.key ? `${row.key.tonic} ${row.key.mode}` : "?";
  const words = row.emotion ? row.emotion.words.join(", ") : "";
  const tags: string[] = [];
  if (row.fallback) {
    tags.push('<span class="tag tag-fallback">fallback</span>');
  }
  return `
    <li class="telemetry-row" data-clip="${row.clip_index}" data-temperature="${row.temperature}">
      <span class="clip">#${row.clip_index}</span>
      <span class="window">${windowLabel}</span>
      <span class="key">${esc(key)}</span>
      <span class="tempo">${Math.round(row.tempo_bpm ?? 0)} BPM</span>
      <span class="contour">${esc(row.contour ?? "")}</span>
      <span class="words">${esc(words)}</span>
      <span class="mode-temp">${esc(row.mode ?? "")} @ ${row.temperature}</span>
      ${tags.join(" ")}
    </li>`;
}

function renderTelemetry(state: StudioState): string {
  const rows = [...state.telemetry]
    .sort((a, b) => b.clip_index - a.clip_index)
    .map(renderTelemetryRow)
    .join("\n");
  return `<ol class="telemetry" id="telemetry">${rows}</ol>`;
}

function renderControls(state: StudioState): string {
  const mode = state.mode ?? "divergent";
  const other = mode === "divergent" ? "convergent" : "divergent";
  const styleOptions = STYLE_TAGS.map(
    (tag) =>
      `<option value="${tag}"${tag === state.style ? " selected" : ""}>${tag}</option>`,
  ).join("");
  const cadenceOptions = CADENCE_CHOICES.map(
    (choice, index) => `<option value="${index}">${choice.label}</option>`,
  ).join("");
  return `
    <div class="controls" id="controls">
      <button id="mode-toggle" data-next-mode="${other}">
        mode: ${mode} @ ${state.temperature ?? "?"} — switch to ${other}
      </button>
      <button id="pause-toggle" data-next-command="${state.paused ? "resume" : "pause"}">
        ${state.paused ? "resume" : "pause"}
      </button>
      <button id="advance">advance</button>
      <label>style
        <select id="style-select">${styleOptions}</select>
      </label>
      <label>cadence
        <select id="cadence-select">${cadenceOptions}</select>
      </label>
    </div>`;
}

function renderHeader(state: StudioState): string {
  const dot = state.connected ? "●" : "○";
  const session = state.sessionId ?? "no session";
  const badges: string[] = [];
  if (state.paused) {
    badges.push('<span class="badge badge-paused">paused</span>');
  }
  if (state.finished) {
    badges.push('<span class="badge badge-finished">finished</span>');
  }
  return `
    <header class="topbar">
      <h1>tonecanvas studio</h1>
      <span class="conn" data-connected="${state.connected}">${dot}</span>
      <span class="session-id">${esc(session)}</span>
      ${badges.join(" ")}
    </header>`;
}

function renderSessionForm(): string {
  return `
    <form class="session-form" id="session-form">
      <input type="text" id="midi-path" placeholder="path to a .mid file on the server"
             value="tests/fixtures/chopin_prelude.mid" />
      <input type="number" id="speed" value="4" min="0.1" step="0.1" title="replay speed factor" />
      <button type="submit">start session</button>
    </form>`;
}

export function renderApp(state: StudioState, imageUrl: ImageUrl): string {
  return `
    ${renderHeader(state)}
    ${renderSessionForm()}
    ${renderControls(state)}
    <main class="layout">
      <section class="left">
        ${renderStage(state, imageUrl)}
        ${renderHistory(state, imageUrl)}
      </section>
      <section class="right">
        <h2>telemetry</h2>
        ${renderTelemetry(state)}
      </section>
    </main>`;
}
