import { describe, expect, it } from "vitest";

import type { ServerMessage, StepMessage } from "../src/types.js";
import {
  applyMessage,
  initialViewModel,
  lockInput,
  overlayVisible,
  setConnection,
  setGraph,
  startSession,
} from "../src/viewmodel.js";

const GEO = {
  rows: 3,
  cols: 3,
  cell_size: 1,
  walls: [
    [1, 1, 1],
    [1, 0, 1],
    [1, 1, 1],
  ],
  goals: [
    { id: 0, col: 1, row: 1 },
    { id: 1, col: 1, row: 1 },
    { id: 2, col: 1, row: 1 },
    { id: 3, col: 1, row: 1 },
  ],
  spawns: [{ col: 1, row: 1 }],
};

const pose = (step: number) => ({ x: 1.5, y: 1.5, heading: 0, step });

function freshExplore() {
  const vm = startSession(initialViewModel(), "s1", "explore", GEO, pose(0));
  return setConnection(vm, "open");
}

function stepMsg(step: number, extra: Partial<StepMessage> = {}): StepMessage {
  return { type: "step", frame_png: `png${step}`, pose: pose(step), step, ...extra };
}

describe("explore session", () => {
  it("grows the recording by exactly one per action message", () => {
    let vm = freshExplore();
    for (let i = 1; i <= 100; i++) {
      vm = applyMessage(vm, stepMsg(i, { recorded: i }));
      expect(vm.recordingLength).toBe(i);
    }
    expect(vm.stepIndex).toBe(100);
  });

  it("keeps recording length non-decreasing", () => {
    let vm = freshExplore();
    vm = applyMessage(vm, stepMsg(1, { recorded: 5 }));
    vm = applyMessage(vm, stepMsg(2, { recorded: 3 }));
    expect(vm.recordingLength).toBe(5);
  });

  it("disables input when the connection drops", () => {
    let vm = freshExplore();
    vm = lockInput(vm, false);
    expect(vm.inputLocked).toBe(false);
    vm = setConnection(vm, "closed");
    expect(vm.connection).toBe("closed");
    expect(vm.inputLocked).toBe(true);
  });
});

describe("protocol capture: displayed values mirror message fields", () => {
  it("copies frame, pose and step verbatim from step messages", () => {
    const msg = stepMsg(7);
    const vm = applyMessage(freshExplore(), msg);
    expect(vm.framePng).toBe(msg.frame_png);
    expect(vm.pose).toEqual(msg.pose);
    expect(vm.stepIndex).toBe(msg.step);
  });

  it("copies every navigation overlay quantity from msg.nav untouched", () => {
    const nav = {
      vertex: 42,
      waypoint: 45,
      goal_vertex: 99,
      remaining_hops: 12,
      path: [42, 43, 44, 45, 60, 99],
      action: 1,
    };
    const vm = applyMessage(freshExplore(), stepMsg(3, { nav }));
    // identical object content; the client added or derived nothing
    expect(vm.nav).toEqual(nav);
    expect(vm.nav!.path).toEqual(nav.path);
  });

  it("clears nav overlay when a message carries none", () => {
    let vm = applyMessage(freshExplore(), stepMsg(1, { nav: {
      vertex: 1, waypoint: 2, goal_vertex: 3, remaining_hops: 2, path: [1, 2, 3], action: 0,
    }}));
    vm = applyMessage(vm, stepMsg(2));
    expect(vm.nav).toBeNull();
  });

  it("banner reflects episode_end exactly", () => {
    const end: ServerMessage = { type: "episode_end", success: true, steps: 123, goal_id: 2 };
    const vm = applyMessage(freshExplore(), end);
    expect(vm.banner).toEqual({ success: true, steps: 123, goalId: 2 });
  });

  it("hello message sets the first frame and mode", () => {
    const vm = applyMessage(initialViewModel(), {
      type: "hello", frame_png: "abc", pose: pose(0), mode: "navigate",
    });
    expect(vm.framePng).toBe("abc");
    expect(vm.mode).toBe("navigate");
  });
});

describe("overlay gating", () => {
  it("shows the graph overlay only once graph data is loaded", () => {
    let vm = freshExplore();
    expect(overlayVisible(vm)).toBe(false);
    vm = setGraph(vm, { vertices: [{ v: 0, x: 1, y: 1 }], edges: [] });
    expect(overlayVisible(vm)).toBe(true);
    vm = setGraph(vm, null);
    expect(overlayVisible(vm)).toBe(false);
  });

  it("session restart resets per-session state but keeps the graph gating sound", () => {
    let vm = freshExplore();
    vm = setGraph(vm, { vertices: [], edges: [] });
    vm = startSession(vm, "s2", "navigate", GEO, pose(0));
    expect(vm.graph).toBeNull();
    expect(vm.recordingLength).toBe(0);
    expect(vm.trail).toHaveLength(1);
  });
});
