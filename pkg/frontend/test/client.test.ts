import { describe, expect, it } from "vitest";

import { EpisodeClient } from "../src/client.js";
import { gridLayout, cellOrigin } from "../src/render.js";

type Responder = (url: string, init?: any) => { status: number; body: any };

function fakeFetch(responder: Responder) {
  return async (url: string, init?: any) => {
    const { status, body } = responder(url, init);
    return { status, json: async () => body };
  };
}

const INFO = {
  id: "e1",
  kind: "grid",
  task: "grid",
  roster: ["planner"],
  human: "planner",
  status: { state: "awaiting_human", agent: "planner" },
  snapshot: { grid: { size: [5, 5, 5], obstacles: [], agents: [] } },
};

describe("episode client", () => {
  it("join picks up info and status", async () => {
    const client = new EpisodeClient("http://x", "e1", "planner", () => {}, fakeFetch(() => ({ status: 200, body: INFO })));
    const state = await client.join();
    expect(state.kind).toBe("grid");
    expect(state.myTurn).toBe(true);
  });

  it("poll advances the cursor and applies events", async () => {
    const pages: Record<number, any> = {
      0: { events: [{ type: "message", payload: { speaker: "planner", text: "a" }, round: 0, timestamp: 0 }], next: 1, status: { state: "planning" } },
      1: { events: [], next: 1, status: { state: "done", success: true } },
    };
    const client = new EpisodeClient(
      "http://x",
      "e1",
      "planner",
      () => {},
      fakeFetch((url) => {
        const since = Number(new URL(url).searchParams.get("since"));
        return { status: 200, body: pages[since] };
      }),
    );
    expect(await client.pollOnce()).toBe(1);
    expect(client.state.cursor).toBe(1);
    expect(client.state.transcript).toHaveLength(1);
    await client.pollOnce();
    expect(client.state.done).toBe(true);
  });

  it("resyncs from zero when the server forgot our events", async () => {
    let call = 0;
    const client = new EpisodeClient(
      "http://x",
      "e1",
      "planner",
      () => {},
      fakeFetch(() => {
        call += 1;
        if (call === 1) {
          return { status: 200, body: { events: [], next: 0, status: { state: "created" } } };
        }
        return {
          status: 200,
          body: {
            events: [{ type: "message", payload: { speaker: "p", text: "x" }, round: 0, timestamp: 0 }],
            next: 1,
            status: { state: "planning" },
          },
        };
      }),
    );
    client.state.cursor = 7;
    client.state.transcript.push({ speaker: "stale", text: "stale" });
    await client.pollOnce(); // next(0) < cursor(7): reset
    expect(client.state.cursor).toBe(0);
    expect(client.state.transcript).toEqual([]);
    await client.pollOnce(); // replay without duplication
    expect(client.state.transcript).toEqual([{ speaker: "p", text: "x" }]);
  });

  it("surfaces a 409 in the error banner", async () => {
    const client = new EpisodeClient(
      "http://x",
      "e1",
      "planner",
      () => {},
      fakeFetch((url, init) => {
        if (init?.method === "POST") {
          return { status: 409, body: { error: "not your turn", status: { state: "awaiting_agent", agent: "Bob" } } };
        }
        return { status: 200, body: INFO };
      }),
    );
    const ok = await client.submit("hello");
    expect(ok).toBe(false);
    expect(client.state.errorBanner).toContain("not your turn");
    expect(client.state.errorBanner).toContain("awaiting_agent");
  });
});

describe("grid layout math", () => {
  it("maps cells into distinct slice tiles", () => {
    const layout = gridLayout([10, 10, 10], 680);
    const a = cellOrigin([0, 0, 0], layout);
    const b = cellOrigin([0, 0, 1], layout);
    const c = cellOrigin([1, 0, 0], layout);
    expect(b.x - a.x).toBe(layout.slice);
    expect(c.x - a.x).toBe(layout.cell);
    // second row of slices
    const d = cellOrigin([0, 0, layout.cols], layout);
    expect(d.y - a.y).toBe(layout.slice);
    expect(d.x).toBe(a.x);
  });
});
