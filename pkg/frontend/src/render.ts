// Scene rendering: 3D grids as a strip of z-slices, arm tasks top-down.
// Layout math is separated from canvas calls so it can be unit tested.

import { Cell, GridSnapshot } from "./types.js";
import { ViewState } from "./state.js";

export const AGENT_COLORS = ["#2b7de9", "#e98a2b", "#2be9a0", "#c92be9", "#e92b5f", "#8a8a2b"];

export interface SliceLayout {
  cols: number; // slices per row
  cell: number; // pixel size of one grid cell
  slice: number; // pixel size of one z-slice (with padding)
  pad: number;
}

export function gridLayout(size: Cell, canvasW: number): SliceLayout {
  const [sx, , sz] = size;
  const cols = Math.min(sz, 5);
  const pad = 8;
  const slice = Math.floor((canvasW - pad) / cols);
  const cell = Math.floor((slice - pad) / sx);
  return { cols, cell, slice, pad };
}

/** Top-left pixel of a cell inside the slice strip. */
export function cellOrigin(c: Cell, layout: SliceLayout): { x: number; y: number } {
  const [cx, cy, cz] = c;
  const col = cz % layout.cols;
  const row = Math.floor(cz / layout.cols);
  return {
    x: layout.pad + col * layout.slice + cx * layout.cell,
    y: layout.pad + row * layout.slice + cy * layout.cell,
  };
}

function key(c: Cell): string {
  return `${c[0]},${c[1]},${c[2]}`;
}

export function drawGrid(
  ctx: CanvasRenderingContext2D,
  canvasW: number,
  snapshot: GridSnapshot,
  state: ViewState,
): void {
  const layout = gridLayout(snapshot.size, canvasW);
  const [sx, sy, sz] = snapshot.size;
  const rows = Math.ceil(sz / layout.cols);
  ctx.clearRect(0, 0, canvasW, layout.pad + rows * layout.slice + layout.pad);

  const violating = new Set(state.violationCells.map(key));
  const obstacles = new Set(snapshot.obstacles.map((c) => key(c as Cell)));

  for (let z = 0; z < sz; z++) {
    for (let x = 0; x < sx; x++) {
      for (let y = 0; y < sy; y++) {
        const cell: Cell = [x, y, z];
        const o = cellOrigin(cell, layout);
        const k = key(cell);
        if (violating.has(k)) {
          ctx.fillStyle = "#ff3333";
        } else if (obstacles.has(k)) {
          ctx.fillStyle = "#555555";
        } else {
          ctx.fillStyle = "#f4f1ea";
        }
        ctx.fillRect(o.x, o.y, layout.cell - 1, layout.cell - 1);
      }
    }
    const origin = cellOrigin([0, 0, z], layout);
    ctx.fillStyle = "#333";
    ctx.font = "10px sans-serif";
    ctx.fillText(`z=${z}`, origin.x, origin.y - 2);
  }

  // agent paths, then start/goal markers on top
  snapshot.agents.forEach((agent, i) => {
    const color = AGENT_COLORS[i % AGENT_COLORS.length];
    const path = state.latestPaths?.[agent.name] ?? [];
    ctx.fillStyle = color;
    for (const c of path) {
      const o = cellOrigin(c as Cell, layout);
      ctx.globalAlpha = 0.45;
      ctx.fillRect(o.x, o.y, layout.cell - 1, layout.cell - 1);
      ctx.globalAlpha = 1.0;
    }
    for (const [marker, cell] of [
      ["S", agent.init],
      ["G", agent.goal],
    ] as const) {
      const o = cellOrigin(cell as Cell, layout);
      ctx.fillStyle = color;
      ctx.fillRect(o.x, o.y, layout.cell - 1, layout.cell - 1);
      ctx.fillStyle = "#fff";
      ctx.font = `${Math.max(8, layout.cell - 3)}px sans-serif`;
      ctx.fillText(marker, o.x + 1, o.y + layout.cell - 2);
    }
  });
}

const TABLE_SCALE = 320; // pixels per meter
const TABLE_CX = 340;
const TABLE_CY = 260;

export function tableToScreen(x: number, y: number): { px: number; py: number } {
  // world x to the right, world y upward on screen
  return { px: TABLE_CX + x * TABLE_SCALE, py: TABLE_CY - y * TABLE_SCALE };
}

export function drawTabletop(ctx: CanvasRenderingContext2D, snapshot: any, state: ViewState): void {
  ctx.clearRect(0, 0, 680, 520);
  ctx.fillStyle = "#efe8d8";
  ctx.fillRect(0, 0, 680, 520);

  const reach = snapshot.reach_regions ?? {};
  const zoneOwners: Record<string, number[]> = {};
  Object.keys(reach).forEach((agent, i) => {
    for (const z of reach[agent]) {
      (zoneOwners[z] = zoneOwners[z] ?? []).push(i);
    }
  });

  // fixtures (axis-aligned boxes only; spheres drawn as circles)
  for (const f of snapshot.fixtures ?? []) {
    ctx.fillStyle = "#b4a284";
    if (f.kind === "aabb") {
      const a = tableToScreen(f.min[0], f.max[1]);
      const b = tableToScreen(f.max[0], f.min[1]);
      ctx.fillRect(a.px, a.py, b.px - a.px, b.py - a.py);
    } else if (f.kind === "sphere") {
      const c = tableToScreen(f.center[0], f.center[1]);
      ctx.beginPath();
      ctx.arc(c.px, c.py, f.radius * TABLE_SCALE, 0, Math.PI * 2);
      ctx.fill();
    }
  }

  // arm bases
  (snapshot.arm_bases ?? []).forEach((b: any, i: number) => {
    const c = tableToScreen(b.pos[0], b.pos[1]);
    ctx.fillStyle = AGENT_COLORS[i % AGENT_COLORS.length];
    ctx.beginPath();
    ctx.arc(c.px, c.py, 12, 0, Math.PI * 2);
    ctx.fill();
  });

  // objects
  for (const o of snapshot.objects ?? []) {
    const c = tableToScreen(o.pose[0], o.pose[1]);
    ctx.fillStyle = colorForObject(o.name);
    ctx.fillRect(c.px - 8, c.py - 8, 16, 16);
    ctx.fillStyle = "#222";
    ctx.font = "10px sans-serif";
    ctx.fillText(o.name, c.px - 8, c.py - 12);
  }
}

export function colorForObject(name: string): string {
  const prefix = name.split("_")[0];
  const table: Record<string, string> = {
    red: "#d43a3a",
    blue: "#3a6bd4",
    green: "#3ad465",
    yellow: "#e7d53a",
    pink: "#e78ad4",
    purple: "#9a3ad4",
    orange: "#e7983a",
  };
  return table[prefix] ?? "#888";
}
