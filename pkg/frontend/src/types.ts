// Wire types mirroring the service's JSON messages. The client displays
// these verbatim; it never derives graph state on its own.

export type Mode = "explore" | "navigate" | "replay";

export interface Pose {
  x: number;
  y: number;
  heading: number;
  step: number;
}

export interface GoalCell {
  id: number;
  col: number;
  row: number;
}

export interface MazeGeometry {
  rows: number;
  cols: number;
  cell_size: number;
  walls: number[][];
  goals: GoalCell[];
  spawns: { col: number; row: number }[];
}

export interface SessionResponse {
  session: string;
  mode: Mode;
  geometry: MazeGeometry;
  pose: Pose;
}

export interface NavInfo {
  vertex: number;
  waypoint: number;
  goal_vertex: number;
  remaining_hops: number;
  path: number[];
  action: number;
}

export interface StepMessage {
  type: "step";
  frame_png: string;
  pose: Pose | null;
  step: number;
  recorded?: number;
  nav?: NavInfo;
}

export interface HelloMessage {
  type: "hello";
  frame_png: string;
  pose: Pose;
  mode: Mode;
}

export interface EpisodeEndMessage {
  type: "episode_end";
  success: boolean;
  steps: number;
  goal_id: number;
}

export type ServerMessage = StepMessage | HelloMessage | EpisodeEndMessage;

export interface GraphVertex {
  v: number;
  x: number;
  y: number;
}

export interface GraphEdge {
  u: number;
  v: number;
  kind: "temporal" | "shortcut";
}

export interface GraphOverlayData {
  vertices: GraphVertex[];
  edges: GraphEdge[];
}
