// Pure client state. Every displayed quantity is copied out of a server
// message or endpoint response; applyMessage never computes graph state.

import type {
  GraphOverlayData,
  MazeGeometry,
  Mode,
  NavInfo,
  Pose,
  ServerMessage,
} from "./types.js";

export type Connection = "idle" | "open" | "closed";

export interface Banner {
  success: boolean;
  steps: number;
  goalId: number;
}

export interface ViewModel {
  session: string | null;
  mode: Mode | null;
  geometry: MazeGeometry | null;
  framePng: string | null;
  pose: Pose | null;
  stepIndex: number;
  recordingLength: number;
  connection: Connection;
  graph: GraphOverlayData | null;
  nav: NavInfo | null;
  trail: Pose[];
  banner: Banner | null;
  inputLocked: boolean;
}

export function initialViewModel(): ViewModel {
  return {
    session: null,
    mode: null,
    geometry: null,
    framePng: null,
    pose: null,
    stepIndex: 0,
    recordingLength: 0,
    connection: "idle",
    graph: null,
    nav: null,
    trail: [],
    banner: null,
    inputLocked: false,
  };
}

export function startSession(
  vm: ViewModel,
  session: string,
  mode: Mode,
  geometry: MazeGeometry,
  pose: Pose,
): ViewModel {
  return {
    ...initialViewModel(),
    session,
    mode,
    geometry,
    pose,
    trail: [pose],
    connection: vm.connection,
  };
}

export function applyMessage(vm: ViewModel, msg: ServerMessage): ViewModel {
  switch (msg.type) {
    case "hello":
      return { ...vm, framePng: msg.frame_png, pose: msg.pose, mode: msg.mode };
    case "step": {
      const next: ViewModel = {
        ...vm,
        framePng: msg.frame_png,
        stepIndex: msg.step,
        nav: msg.nav ?? null,
      };
      if (msg.pose) {
        next.pose = msg.pose;
        next.trail = vm.trail.length > 5000 ? [...vm.trail.slice(-4000), msg.pose]
          : [...vm.trail, msg.pose];
      }
      if (typeof msg.recorded === "number") {
        // recording length only ever grows while exploring
        next.recordingLength = Math.max(vm.recordingLength, msg.recorded);
      }
      return next;
    }
    case "episode_end":
      return {
        ...vm,
        banner: { success: msg.success, steps: msg.steps, goalId: msg.goal_id },
      };
  }
}

export function setConnection(vm: ViewModel, connection: Connection): ViewModel {
  // inputs stay locked whenever the socket is not open
  return { ...vm, connection, inputLocked: connection !== "open" ? true : vm.inputLocked };
}

export function setGraph(vm: ViewModel, graph: GraphOverlayData | null): ViewModel {
  return { ...vm, graph };
}

export function lockInput(vm: ViewModel, locked: boolean): ViewModel {
  return { ...vm, inputLocked: locked };
}

/** Overlay is rendered only when graph data has been loaded. */
export function overlayVisible(vm: ViewModel): boolean {
  return vm.graph !== null;
}
