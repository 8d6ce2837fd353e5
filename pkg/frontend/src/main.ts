// Wiring: session lifecycle, lockstep keyboard input, the WS stream, and the
// render loop. Input is disabled while an action request is in flight so the
// recording equals exactly the action sequence the simulator executed.

import {
  createSession,
  fetchGraph,
  listMazes,
  saveRecording,
  sendAction,
  startNavigation,
  streamUrl,
} from "./api.js";
import { drawFirstPerson, drawMap } from "./render.js";
import type { Mode, ServerMessage } from "./types.js";
import {
  ViewModel,
  applyMessage,
  initialViewModel,
  lockInput,
  setConnection,
  setGraph,
  startSession,
} from "./viewmodel.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const fpCanvas = $<HTMLCanvasElement>("fp");
const mapCanvas = $<HTMLCanvasElement>("map");
const fpCtx = fpCanvas.getContext("2d")!;
const mapCtx = mapCanvas.getContext("2d")!;
const mazeSelect = $<HTMLSelectElement>("maze");
const modeSelect = $<HTMLSelectElement>("mode");
const startBtn = $<HTMLButtonElement>("start");
const saveBtn = $<HTMLButtonElement>("save");
const goalButtons = Array.from(document.querySelectorAll<HTMLButtonElement>(".goal"));
const statusEl = $<HTMLSpanElement>("status");
const recEl = $<HTMLSpanElement>("recorded");
const bannerEl = $<HTMLDivElement>("banner");

let vm: ViewModel = initialViewModel();
let ws: WebSocket | null = null;
const frameImg = new Image();

const KEYMAP: Record<string, string> = {
  ArrowUp: "MOVE_FORWARD", KeyW: "MOVE_FORWARD",
  ArrowDown: "MOVE_BACKWARD", KeyS: "MOVE_BACKWARD",
  KeyA: "MOVE_LEFT", KeyD: "MOVE_RIGHT",
  ArrowLeft: "TURN_LEFT", ArrowRight: "TURN_RIGHT",
  Space: "DO_NOTHING",
};

function redraw(): void {
  drawFirstPerson(fpCtx, frameImg.complete ? frameImg : null);
  drawMap(mapCtx, vm);
  statusEl.textContent = vm.connection;
  statusEl.className = vm.connection === "open" ? "ok" : "bad";
  recEl.textContent = vm.mode === "explore" ? `recorded: ${vm.recordingLength}` : "";
  saveBtn.disabled = vm.mode !== "explore" || vm.session === null;
  for (const b of goalButtons) b.disabled = vm.mode !== "navigate" || vm.session === null;
  if (vm.banner) {
    bannerEl.textContent = vm.banner.success
      ? `goal ${vm.banner.goalId + 1} reached in ${vm.banner.steps} steps`
      : `episode ended without reaching goal ${vm.banner.goalId + 1} (${vm.banner.steps} steps)`;
    bannerEl.className = vm.banner.success ? "banner ok" : "banner bad";
  } else {
    bannerEl.textContent = "";
    bannerEl.className = "banner";
  }
}

function update(next: ViewModel): void {
  vm = next;
  redraw();
}

function handleMessage(msg: ServerMessage): void {
  const next = applyMessage(vm, msg);
  if (next.framePng !== vm.framePng && next.framePng) {
    frameImg.onload = redraw;
    frameImg.src = `data:image/png;base64,${next.framePng}`;
  }
  update(next);
}

async function begin(): Promise<void> {
  const maze = mazeSelect.value;
  const mode = modeSelect.value as Mode;
  const res = await createSession(maze, mode);
  update(startSession(vm, res.session, res.mode, res.geometry, res.pose));
  if (ws) ws.close();
  ws = new WebSocket(streamUrl(res.session));
  ws.onopen = () => update(lockInput(setConnection(vm, "open"), false));
  ws.onclose = () => update(setConnection(vm, "closed"));
  ws.onmessage = (ev) => handleMessage(JSON.parse(ev.data) as ServerMessage);
  const graph = mode === "navigate" ? await fetchGraph(maze) : null;
  update(setGraph(vm, graph));
}

window.addEventListener("keydown", async (ev) => {
  const action = KEYMAP[ev.code];
  if (!action || vm.session === null || vm.mode === "navigate") return;
  ev.preventDefault();
  if (vm.inputLocked || vm.connection !== "open") return;
  update(lockInput(vm, true));
  try {
    await sendAction(vm.session, action);
  } finally {
    update(lockInput(vm, vm.connection !== "open"));
  }
});

startBtn.addEventListener("click", () => {
  begin().catch((e) => {
    statusEl.textContent = String(e);
    statusEl.className = "bad";
  });
});

saveBtn.addEventListener("click", async () => {
  if (vm.session === null) return;
  const res = await saveRecording(vm.session);
  bannerEl.textContent = `saved ${res.saved}`;
  bannerEl.className = "banner ok";
});

for (const b of goalButtons) {
  b.addEventListener("click", async () => {
    if (vm.session === null) return;
    update({ ...vm, banner: null });
    await startNavigation(vm.session, Number(b.dataset.goal));
  });
}

listMazes()
  .then((names) => {
    mazeSelect.innerHTML = names
      .map((n) => `<option value="${n}">${n}</option>`)
      .join("");
  })
  .catch(() => {
    mazeSelect.innerHTML = '<option value="val-1">val-1</option>';
  });

redraw();
