// Thin wrappers over the service endpoints.

import type { GraphOverlayData, Pose, SessionResponse } from "./types.js";

export async function createSession(maze: string, mode: string): Promise<SessionResponse> {
  const r = await fetch("/api/session", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ maze, mode }),
  });
  if (!r.ok) throw new Error(`session failed: ${r.status} ${await r.text()}`);
  return r.json();
}

export async function sendAction(
  session: string,
  action: string,
): Promise<{ pose: Pose; step: number; recorded?: number }> {
  const r = await fetch(`/api/session/${session}/action`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ action }),
  });
  if (!r.ok) throw new Error(`action failed: ${r.status}`);
  return r.json();
}

export async function saveRecording(session: string, path?: string): Promise<{ saved: string }> {
  const r = await fetch(`/api/session/${session}/save`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(path ? { path } : {}),
  });
  if (!r.ok) throw new Error(`save failed: ${r.status}`);
  return r.json();
}

export async function startNavigation(session: string, goalId: number): Promise<void> {
  const r = await fetch(`/api/session/${session}/navigate`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ goal_id: goalId }),
  });
  if (!r.ok) throw new Error(`navigate failed: ${r.status} ${await r.text()}`);
}

export async function fetchGraph(maze: string): Promise<GraphOverlayData | null> {
  const r = await fetch(`/api/maze/${maze}/graph`);
  if (r.status === 404 || r.status === 409) return null;
  if (!r.ok) throw new Error(`graph fetch failed: ${r.status}`);
  return r.json();
}

export async function listMazes(): Promise<string[]> {
  const r = await fetch("/api/mazes");
  if (!r.ok) throw new Error(`maze list failed: ${r.status}`);
  return (await r.json()).mazes;
}

export function streamUrl(session: string): string {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  return `${proto}://${location.host}/api/session/${session}/stream`;
}
