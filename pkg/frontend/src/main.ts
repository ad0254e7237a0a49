/** DOM wiring for the probe console: sliders in, frames and gauges out. */

import { ConsoleClient } from "./client.js";
import { decodeFrame, frameToRgba } from "./frames.js";
import { ServerMessage, SuggestionResponse } from "./protocol.js";
import {
  clampControls,
  Controls,
  controlsToPayload,
  controlsTowards,
  FOLLOW_DURATION_MS,
  initialState,
  suggestionToControls,
} from "./state.js";

const state = initialState();

const $ = (id: string) => document.getElementById(id)!;

const SLIDERS: Array<{ id: string; get(): number; set(v: number): void }> = [
  { id: "roll", get: () => state.controls.euler.roll,
    set: (v) => (state.controls.euler.roll = v) },
  { id: "pitch", get: () => state.controls.euler.pitch,
    set: (v) => (state.controls.euler.pitch = v) },
  { id: "yaw", get: () => state.controls.euler.yaw,
    set: (v) => (state.controls.euler.yaw = v) },
  ...[0, 1, 2, 3, 4, 5].map((i) => ({
    id: ["fx", "fy", "fz", "tx", "ty", "tz"][i],
    get: () => state.controls.wrench[i],
    set: (v: number) => (state.controls.wrench[i] = v),
  })),
];

function setBanner(text: string | null, kind = "error"): void {
  const el = $("banner");
  el.textContent = text ?? "";
  el.className = text ? `banner ${kind}` : "banner hidden";
}

function setStatus(text: string): void {
  $("status").textContent = text;
}

function syncSliders(): void {
  for (const s of SLIDERS) {
    const input = $(s.id) as HTMLInputElement;
    input.value = s.get().toFixed(3);
    $(`${s.id}-val`).textContent = s.get().toFixed(2);
  }
}

function pushControls(): void {
  const { controls, clamped } = clampControls(state.controls);
  state.controls = controls;
  syncSliders();
  setBanner(clamped ? "value clamped to the slider range" : null, "warn");
  client.pushState(controlsToPayload(controls));
}

function drawFrame(b64: string): void {
  const [h, w, c] = client.imageSize;
  const pixels = decodeFrame(b64, h * w * c);
  const canvas = $("frame") as HTMLCanvasElement;
  canvas.width = w;
  canvas.height = h;
  const ctx = canvas.getContext("2d")!;
  ctx.putImageData(new ImageData(frameToRgba(pixels, h, w, c), w, h), 0, 0);
}

function showSuggestion(s: SuggestionResponse): void {
  state.lastSuggestion = s;
  $("sug-q").textContent = s.q_best.toFixed(3);
  $("sug-pose").textContent = s.pose.map((v) => v.toFixed(3)).join(", ");
  $("sug-wrench").textContent = s.wrench.map((v) => v.toFixed(2)).join(", ");
  $("sug-meta").textContent =
    `${s.n_feasible}/${s.n_evaluated} feasible, ${s.elapsed_ms.toFixed(0)} ms`;
  // delta overlay: where the suggestion wants the probe to go
  const target = suggestionToControls(s);
  const droll = target.euler.roll - state.controls.euler.roll;
  const dfz = target.wrench[2] - state.controls.wrench[2];
  $("sug-delta").textContent =
    `rotate ${droll >= 0 ? "+" : ""}${droll.toFixed(2)} rad, ` +
    `force ${dfz >= 0 ? "+" : ""}${dfz.toFixed(1)} N`;
  $("suggestion").classList.remove("hidden");
}

function applySuggestion(animate: boolean): void {
  if (!state.lastSuggestion) return;
  const target = suggestionToControls(state.lastSuggestion);
  if (!animate) {
    state.controls = target;
    pushControls();
    return;
  }
  // follow mode: walk the controls to the target so the direction is visible
  const from = structuredClone(state.controls) as Controls;
  const t0 = performance.now();
  const step = () => {
    const t = (performance.now() - t0) / FOLLOW_DURATION_MS;
    state.controls = controlsTowards(from, target, t);
    pushControls();
    if (t < 1) requestAnimationFrame(step);
  };
  requestAnimationFrame(step);
}

function onMessage(msg: ServerMessage): void {
  switch (msg.type) {
    case "hello":
      break;
    case "update":
      state.lastUpdate = msg;
      drawFrame(msg.frame);
      $("quality").textContent = msg.quality.toFixed(3);
      ($("quality-bar") as HTMLProgressElement).value = msg.quality;
      $("oracle").textContent = msg.oracle.label === 1 ? "good" : "poor";
      $("oracle").className = msg.oracle.label === 1 ? "badge good" : "badge poor";
      break;
    case "suggestion":
      showSuggestion(msg);
      break;
    case "error":
      if (msg.code === "guidance_infeasible") {
        setBanner(`no feasible suggestion: ${msg.message}`, "warn");
      } else {
        setBanner(`${msg.code}: ${msg.message}`);
      }
      break;
  }
}

const client = new ConsoleClient(window.location.origin, {
  onStatus: (status, banner) => {
    state.connection = status;
    setStatus(status);
    if (banner) setBanner(banner);
    else if (status === "connected") setBanner(null);
  },
  onMessage,
});

for (const s of SLIDERS) {
  ($(s.id) as HTMLInputElement).addEventListener("input", (ev) => {
    s.set(parseFloat((ev.target as HTMLInputElement).value));
    pushControls();
  });
}
$("suggest").addEventListener("click", () => client.requestSuggestion());
$("apply").addEventListener("click", () =>
  applySuggestion(state.mode === "follow-suggestion"));
($("mode") as HTMLSelectElement).addEventListener("change", (ev) => {
  state.mode = (ev.target as HTMLSelectElement).value as typeof state.mode;
});

client
  .connect()
  .then(() => pushControls())
  .catch(() => {
    /* banner already shown by the client */
  });
