// Long-poll client: one in-flight poll at a time, cursor-only local state, so
// a page refresh or server restart just replays the stream.

import { applyEvent, applyInfo, applyStatus, initialState, resetForReplay, ViewState } from "./state.js";
import { EpisodeInfo, EventsResponse } from "./types.js";

export type FetchLike = (url: string, init?: any) => Promise<{
  status: number;
  json(): Promise<any>;
}>;

export class EpisodeClient {
  state: ViewState;
  private stopped = false;
  private fetchFn: FetchLike;
  private onChange: (state: ViewState) => void;
  private base: string;

  constructor(
    base: string,
    episodeId: string,
    agent: string,
    onChange: (state: ViewState) => void = () => {},
    fetchFn: FetchLike = fetch as unknown as FetchLike,
  ) {
    this.base = base.replace(/\/$/, "");
    this.state = initialState(episodeId, agent);
    this.onChange = onChange;
    this.fetchFn = fetchFn;
  }

  async join(): Promise<ViewState> {
    const r = await this.fetchFn(`${this.base}/episodes/${this.state.episodeId}`);
    if (r.status !== 200) {
      throw new Error(`episode not found (${r.status})`);
    }
    const info = (await r.json()) as EpisodeInfo;
    applyInfo(this.state, info);
    this.onChange(this.state);
    return this.state;
  }

  /** One poll cycle; returns the number of new events. */
  async pollOnce(timeoutS = 25): Promise<number> {
    const url =
      `${this.base}/episodes/${this.state.episodeId}/events` +
      `?since=${this.state.cursor}&timeout=${timeoutS}`;
    const r = await this.fetchFn(url);
    if (r.status !== 200) {
      this.state.errorBanner = `event poll failed (${r.status})`;
      this.onChange(this.state);
      return 0;
    }
    const body = (await r.json()) as EventsResponse;
    if (body.next < this.state.cursor) {
      // the server knows fewer events than we do: restarted; replay cleanly
      resetForReplay(this.state);
      this.onChange(this.state);
      return 0;
    }
    for (const event of body.events) {
      applyEvent(this.state, event);
    }
    this.state.cursor = body.next;
    applyStatus(this.state, body.status);
    this.onChange(this.state);
    return body.events.length;
  }

  async run(timeoutS = 25): Promise<void> {
    while (!this.stopped && !this.state.done) {
      try {
        await this.pollOnce(timeoutS);
      } catch (e) {
        this.state.errorBanner = String(e);
        this.onChange(this.state);
        await new Promise((resolve) => setTimeout(resolve, 500));
      }
    }
  }

  stop(): void {
    this.stopped = true;
  }

  /** Submit a dialog response; surfaces a 409 in the error banner. */
  async submit(text: string): Promise<boolean> {
    const r = await this.fetchFn(`${this.base}/episodes/${this.state.episodeId}/human`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ agent: this.state.myAgent, text }),
    });
    if (r.status === 200) {
      this.state.errorBanner = null;
      this.onChange(this.state);
      return true;
    }
    const body = await r.json().catch(() => ({}));
    this.state.errorBanner =
      r.status === 409
        ? `not your turn (server status: ${body?.status?.state ?? "unknown"})`
        : `submit failed (${r.status})`;
    this.onChange(this.state);
    return false;
  }
}

export async function createEpisode(
  base: string,
  spec: any,
  fetchFn: FetchLike = fetch as unknown as FetchLike,
): Promise<string> {
  const r = await fetchFn(`${base.replace(/\/$/, "")}/episodes`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(spec),
  });
  if (r.status !== 200) {
    throw new Error(`create failed (${r.status})`);
  }
  const body = await r.json();
  return body.id;
}
