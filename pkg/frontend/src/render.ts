// Canvas drawing: the first-person frame (scaled pixel-art style) and the
// top-down map with trail and graph overlay. Colors follow the usual scheme:
// agent vertex blue, goal orange, planned path red, waypoint yellow.

import type { ViewModel } from "./viewmodel.js";

const COLORS = {
  wall: "#3b3b46",
  floor: "#15151c",
  grid: "#24242e",
  trail: "#3fa7ff",
  agent: "#3fa7ff",
  goalCell: "#ff9f1c",
  temporal: "rgba(140,150,170,0.35)",
  shortcut: "rgba(255,60,60,0.8)",
  pathEdge: "#ff3c3c",
  currentVertex: "#3f6cff",
  waypoint: "#ffd400",
  goalVertex: "#ff9f1c",
};

export function drawFirstPerson(
  ctx: CanvasRenderingContext2D,
  img: HTMLImageElement | null,
): void {
  const { width, height } = ctx.canvas;
  ctx.imageSmoothingEnabled = false;
  ctx.fillStyle = "#000";
  ctx.fillRect(0, 0, width, height);
  if (img && img.complete && img.naturalWidth > 0) {
    ctx.drawImage(img, 0, 0, width, height);
  }
}

export function drawMap(ctx: CanvasRenderingContext2D, vm: ViewModel): void {
  const { width, height } = ctx.canvas;
  ctx.fillStyle = COLORS.floor;
  ctx.fillRect(0, 0, width, height);
  const geo = vm.geometry;
  if (!geo) return;
  const s = Math.min(width / geo.cols, height / geo.rows);
  const toX = (wx: number) => (wx / geo.cell_size) * s;
  const toY = (wy: number) => (wy / geo.cell_size) * s;

  for (let r = 0; r < geo.rows; r++) {
    for (let c = 0; c < geo.cols; c++) {
      if (geo.walls[r][c]) {
        ctx.fillStyle = COLORS.wall;
        ctx.fillRect(c * s, r * s, s, s);
      }
    }
  }
  ctx.fillStyle = COLORS.goalCell;
  for (const g of geo.goals) {
    ctx.fillRect(g.col * s + s * 0.2, g.row * s + s * 0.2, s * 0.6, s * 0.6);
    ctx.fillStyle = "#111";
    ctx.font = `${Math.floor(s * 0.5)}px monospace`;
    ctx.fillText(String(g.id + 1), g.col * s + s * 0.35, g.row * s + s * 0.7);
    ctx.fillStyle = COLORS.goalCell;
  }

  if (vm.graph) {
    const pos = new Map(vm.graph.vertices.map((v) => [v.v, v]));
    for (const e of vm.graph.edges) {
      const a = pos.get(e.u);
      const b = pos.get(e.v);
      if (!a || !b) continue;
      ctx.strokeStyle = e.kind === "shortcut" ? COLORS.shortcut : COLORS.temporal;
      ctx.lineWidth = e.kind === "shortcut" ? 1.5 : 1;
      ctx.beginPath();
      ctx.moveTo(toX(a.x), toY(a.y));
      ctx.lineTo(toX(b.x), toY(b.y));
      ctx.stroke();
    }
    if (vm.nav) {
      // planned path in red
      ctx.strokeStyle = COLORS.pathEdge;
      ctx.lineWidth = 2;
      ctx.beginPath();
      let started = false;
      for (const v of vm.nav.path) {
        const p = pos.get(v);
        if (!p) continue;
        if (!started) {
          ctx.moveTo(toX(p.x), toY(p.y));
          started = true;
        } else {
          ctx.lineTo(toX(p.x), toY(p.y));
        }
      }
      ctx.stroke();
      const marks: [number, string][] = [
        [vm.nav.goal_vertex, COLORS.goalVertex],
        [vm.nav.waypoint, COLORS.waypoint],
        [vm.nav.vertex, COLORS.currentVertex],
      ];
      for (const [v, color] of marks) {
        const p = pos.get(v);
        if (!p) continue;
        ctx.fillStyle = color;
        ctx.beginPath();
        ctx.arc(toX(p.x), toY(p.y), Math.max(3, s * 0.22), 0, Math.PI * 2);
        ctx.fill();
      }
    }
  }

  if (vm.trail.length > 1) {
    ctx.strokeStyle = COLORS.trail;
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.moveTo(toX(vm.trail[0].x), toY(vm.trail[0].y));
    for (const p of vm.trail) ctx.lineTo(toX(p.x), toY(p.y));
    ctx.stroke();
  }
  if (vm.pose) {
    const px = toX(vm.pose.x);
    const py = toY(vm.pose.y);
    ctx.fillStyle = COLORS.agent;
    ctx.beginPath();
    ctx.arc(px, py, Math.max(3, s * 0.25), 0, Math.PI * 2);
    ctx.fill();
    ctx.strokeStyle = "#fff";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(px, py);
    ctx.lineTo(px + Math.cos(vm.pose.heading) * s * 0.6, py + Math.sin(vm.pose.heading) * s * 0.6);
    ctx.stroke();
  }
}
