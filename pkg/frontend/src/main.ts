// DOM wiring: join an episode, watch the stream, speak when it's your turn.
// All planning/validation lives server-side; this file only renders state.

import { createEpisode, EpisodeClient } from "./client.js";
import { drawGrid, drawTabletop } from "./render.js";
import { ViewState } from "./state.js";

const $ = (id: string) => document.getElementById(id)!;

let client: EpisodeClient | null = null;

function render(state: ViewState): void {
  const statusEl = $("status");
  const parts = [`state: ${state.status.state}`];
  if (state.status.agent) parts.push(`turn: ${state.status.agent}`);
  if (state.done) parts.push(state.success ? "SUCCESS" : "FAILED");
  if (state.spectator) parts.push("(spectator)");
  statusEl.textContent = parts.join("  |  ");

  const transcriptEl = $("transcript");
  transcriptEl.innerHTML = "";
  for (const m of state.transcript) {
    const div = document.createElement("div");
    div.className = "msg";
    const who = document.createElement("b");
    who.textContent = `[${m.speaker}] `;
    div.appendChild(who);
    div.appendChild(document.createTextNode(m.text));
    transcriptEl.appendChild(div);
  }
  transcriptEl.scrollTop = transcriptEl.scrollHeight;

  const feedbackEl = $("feedback");
  feedbackEl.textContent = state.pendingFeedback ?? "";
  (feedbackEl as HTMLElement).style.display = state.pendingFeedback ? "block" : "none";

  const banner = $("banner");
  banner.textContent = state.errorBanner ?? "";
  (banner as HTMLElement).style.display = state.errorBanner ? "block" : "none";

  ($("say") as HTMLButtonElement).disabled = !state.myTurn;
  ($("input") as HTMLTextAreaElement).disabled = !state.myTurn;

  const canvas = $("scene") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d");
  if (!ctx || !state.snapshot) return;
  try {
    if (state.snapshot.grid) {
      drawGrid(ctx, canvas.width, state.snapshot.grid, state);
    } else if (state.snapshot.objects) {
      drawTabletop(ctx, state.snapshot, state);
    }
  } catch (e) {
    state.errorBanner = `render error: ${e}`;
    banner.textContent = state.errorBanner;
    (banner as HTMLElement).style.display = "block";
  }
}

async function join(): Promise<void> {
  const id = ($("episode-id") as HTMLInputElement).value.trim();
  const agent = ($("agent-name") as HTMLInputElement).value.trim();
  if (!id || !agent) return;
  client?.stop();
  client = new EpisodeClient("", id, agent, render);
  try {
    await client.join();
  } catch (e) {
    $("banner").textContent = String(e);
    ($("banner") as HTMLElement).style.display = "block";
    return;
  }
  void client.run();
}

async function demoGrid(): Promise<void> {
  const id = await createEpisode("", {
    task: "grid",
    seed: Math.floor(Math.random() * 1000),
    grid: { n_agents: 3, n_obstacles: 12 },
    roster: { planner: { kind: "human", channel_id: "ui" } },
  });
  ($("episode-id") as HTMLInputElement).value = id;
  ($("agent-name") as HTMLInputElement).value = "planner";
  await join();
}

function wire(): void {
  $("join").addEventListener("click", () => void join());
  $("demo-grid").addEventListener("click", () => void demoGrid());
  $("say").addEventListener("click", () => {
    const box = $("input") as HTMLTextAreaElement;
    if (client && box.value.trim()) {
      void client.submit(box.value).then((ok) => {
        if (ok) box.value = "";
      });
    }
  });
}

if (typeof document !== "undefined") {
  wire();
}
