// View state: a pure reducer over the event stream. The transcript is always
// exactly the message-event prefix received so far; nothing is reordered or
// synthesized locally.

import { Cell, EpisodeEvent, EpisodeInfo, Status } from "./types.js";

export interface Message {
  speaker: string;
  text: string;
}

export interface ViewState {
  episodeId: string;
  myAgent: string;
  spectator: boolean;
  kind: "arm" | "grid" | "unknown";
  cursor: number;
  transcript: Message[];
  status: Status;
  snapshot: any;
  myTurn: boolean;
  pendingFeedback: string | null;
  violationCells: Cell[];
  latestPaths: Record<string, Cell[]> | null;
  errorBanner: string | null;
  done: boolean;
  success: boolean | null;
}

export function initialState(episodeId: string, myAgent: string): ViewState {
  return {
    episodeId,
    myAgent,
    spectator: false,
    kind: "unknown",
    cursor: 0,
    transcript: [],
    status: { state: "created" },
    snapshot: null,
    myTurn: false,
    pendingFeedback: null,
    violationCells: [],
    latestPaths: null,
    errorBanner: null,
    done: false,
    success: null,
  };
}

export function applyInfo(state: ViewState, info: EpisodeInfo): void {
  state.kind = info.kind;
  state.snapshot = state.snapshot ?? info.snapshot ?? null;
  state.spectator = info.human !== state.myAgent;
  applyStatus(state, info.status);
}

export function applyStatus(state: ViewState, status: Status): void {
  state.status = status;
  state.myTurn =
    !state.spectator && status.state === "awaiting_human" && status.agent === state.myAgent;
  if (status.state === "done") {
    state.done = true;
    state.success = status.success ?? null;
  }
}

function violationCellsOf(structured: any): Cell[] {
  const cells: Cell[] = [];
  const violations = structured?.violations ?? [];
  for (const v of violations) {
    for (const c of v.cells ?? []) {
      if (Array.isArray(c) && c.length === 3) {
        cells.push([c[0], c[1], c[2]]);
      }
    }
  }
  return cells;
}

export function applyEvent(state: ViewState, event: EpisodeEvent): void {
  switch (event.type) {
    case "scene":
      state.snapshot = event.payload;
      break;
    case "message":
      state.transcript.push({ speaker: event.payload.speaker, text: event.payload.text });
      break;
    case "plan":
      if (event.payload.paths) {
        state.latestPaths = event.payload.paths;
      }
      break;
    case "feedback":
      state.pendingFeedback = event.payload.text;
      state.violationCells = violationCellsOf(event.payload.structured);
      break;
    case "reward":
      if (event.payload.value > 0) {
        state.pendingFeedback = null;
        state.violationCells = [];
      }
      break;
    case "error":
      state.errorBanner = String(event.payload.detail ?? "episode error");
      break;
    default:
      break; // dialog / trajectory / metrics / violation need no view change
  }
}

/** Rebuild from scratch (server restarted or cursor out of sync): no duplication. */
export function resetForReplay(state: ViewState): void {
  state.cursor = 0;
  state.transcript = [];
  state.latestPaths = null;
  state.pendingFeedback = null;
  state.violationCells = [];
}
