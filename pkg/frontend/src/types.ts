// Wire types mirroring the service's JSON payloads.

export type Cell = [number, number, number];

export interface EpisodeEvent {
  type: string;
  payload: any;
  round: number;
  timestamp: number;
}

export interface Status {
  state: string; // created | awaiting_agent | awaiting_human | planning | executing | done
  agent?: string;
  success?: boolean;
}

export interface EpisodeInfo {
  id: string;
  kind: "arm" | "grid";
  task: string;
  roster: string[];
  human: string | null;
  status: Status;
  snapshot: any;
}

export interface EventsResponse {
  events: EpisodeEvent[];
  next: number;
  status: Status;
}

export interface GridAgent {
  name: string;
  init: Cell;
  goal: Cell;
}

export interface GridSnapshot {
  size: Cell;
  obstacles: Cell[];
  agents: GridAgent[];
}
