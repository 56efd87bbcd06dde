// Browser entry point: connects the event stream to the store and the store
// to the page, and turns clicks into control commands.

import { parseEngineEvent } from "./events.js";
import { StudioApi } from "./api.js";
import { apply, applySnapshot, initialState, withSession } from "./store.js";
import type { StudioState } from "./store.js";
import { CADENCE_CHOICES, renderApp } from "./ui.js";

const params = new URLSearchParams(location.search);
const base = params.get("api") ?? "http://127.0.0.1:8765";
const api = new StudioApi(base);

const app = document.querySelector<HTMLDivElement>("#app")!;
let state: StudioState = initialState();

const FORM_FIELDS = ["#midi-path", "#speed", "#cadence-select"] as const;

function render(): void {
  // Re-rendering replaces the inputs, so carry their values across.
  const saved = new Map<string, string>();
  for (const selector of FORM_FIELDS) {
    const field = document.querySelector<HTMLInputElement | HTMLSelectElement>(selector);
    if (field !== null) {
      saved.set(selector, field.value);
    }
  }
  app.innerHTML = renderApp(state, (ref) => api.imageUrl(ref));
  for (const [selector, value] of saved) {
    const field = document.querySelector<HTMLInputElement | HTMLSelectElement>(selector);
    if (field !== null) {
      field.value = value;
    }
  }
}

function update(next: StudioState): void {
  if (next !== state) {
    state = next;
    render();
  }
}

async function sendControl(command: Record<string, unknown>): Promise<void> {
  try {
    const ack = await api.control(command);
    update(applySnapshot(state, ack.state));
  } catch (error) {
    console.error("control failed:", error);
  }
}

app.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const button = target.closest("button");
  if (button === null) {
    return;
  }
  if (button.id === "mode-toggle") {
    void sendControl({ command: "set_mode", kind: button.dataset.nextMode });
  } else if (button.id === "pause-toggle") {
    void sendControl({ command: button.dataset.nextCommand });
  } else if (button.id === "advance") {
    void sendControl({ command: "advance" });
  }
});

app.addEventListener("change", (event) => {
  const target = event.target as HTMLSelectElement;
  if (target.id === "style-select") {
    void sendControl({ command: "set_style", style: target.value });
  } else if (target.id === "cadence-select") {
    const choice = CADENCE_CHOICES[Number(target.value)];
    if (choice !== undefined) {
      void sendControl({ command: "set_cadence", cadence: choice.cadence });
    }
  }
});

app.addEventListener("submit", (event) => {
  const form = event.target as HTMLElement;
  if (form.id !== "session-form") {
    return;
  }
  event.preventDefault();
  const midiPath = document.querySelector<HTMLInputElement>("#midi-path")?.value ?? "";
  const speedText = document.querySelector<HTMLInputElement>("#speed")?.value ?? "";
  const speed = speedText === "" ? undefined : Number(speedText);
  void (async () => {
    try {
      const started = await api.startSession(midiPath, speed === undefined ? {} : { speed });
      update(applySnapshot(withSession(state, started.session_id), started.state));
    } catch (error) {
      console.error("start session failed:", error);
    }
  })();
});

const source = new EventSource(api.eventsUrl());
source.onmessage = (message) => {
  const engineEvent = parseEngineEvent(message.data);
  if (engineEvent !== null) {
    update(apply(state, engineEvent));
  }
};
source.onerror = () => {
  update({ ...state, connected: false });
};

// The engine does not broadcast session completion, so poll for it.
setInterval(() => {
  if (state.sessionId === null || state.finished) {
    return;
  }
  void api
    .sessions()
    .then((listing) => {
      const mine = listing.sessions.find((s) => s.session_id === state.sessionId);
      if (mine !== undefined && mine.finished !== state.finished) {
        update({ ...state, finished: mine.finished });
      }
    })
    .catch(() => undefined);
}, 2000);

render();
