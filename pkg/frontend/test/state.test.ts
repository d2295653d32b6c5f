import { describe, expect, it } from "vitest";

import { applyEvent, applyInfo, applyStatus, initialState, resetForReplay } from "../src/state.js";
import { EpisodeEvent } from "../src/types.js";

function ev(type: string, payload: any, ts = 0): EpisodeEvent {
  return { type, payload, round: 0, timestamp: ts };
}

describe("view state reducer", () => {
  it("transcript equals the message-event prefix, in order", () => {
    const s = initialState("e1", "Alice");
    applyEvent(s, ev("message", { speaker: "Alice", text: "hi" }));
    applyEvent(s, ev("dialog", { attempt: 1 }));
    applyEvent(s, ev("message", { speaker: "Bob", text: "yo" }));
    expect(s.transcript).toEqual([
      { speaker: "Alice", text: "hi" },
      { speaker: "Bob", text: "yo" },
    ]);
  });

  it("my_turn only when awaiting this human", () => {
    const s = initialState("e1", "Alice");
    s.spectator = false;
    applyStatus(s, { state: "awaiting_human", agent: "Alice" });
    expect(s.myTurn).toBe(true);
    applyStatus(s, { state: "awaiting_human", agent: "Bob" });
    expect(s.myTurn).toBe(false);
    applyStatus(s, { state: "awaiting_agent", agent: "Alice" });
    expect(s.myTurn).toBe(false);
  });

  it("joining with the wrong name yields spectator mode", () => {
    const s = initialState("e1", "Mallory");
    applyInfo(s, {
      id: "e1",
      kind: "grid",
      task: "grid",
      roster: ["planner"],
      human: "planner",
      status: { state: "awaiting_human", agent: "planner" },
      snapshot: {},
    });
    expect(s.spectator).toBe(true);
    expect(s.myTurn).toBe(false);
  });

  it("extracts violation cells from feedback events", () => {
    const s = initialState("e1", "planner");
    applyEvent(
      s,
      ev("feedback", {
        text: "Some steps...",
        structured: {
          violations: [
            { rule: "spacing", agent: "Bob", cells: [[7, 4, 5], [7, 1, 5]] },
            { rule: "obstacle", agent: "Alice", cells: [[1, 2, 3]] },
          ],
        },
      }),
    );
    expect(s.violationCells).toEqual([
      [7, 4, 5],
      [7, 1, 5],
      [1, 2, 3],
    ]);
    expect(s.pendingFeedback).toContain("Some steps");
  });

  it("clears feedback highlights after a success reward", () => {
    const s = initialState("e1", "planner");
    applyEvent(s, ev("feedback", { text: "bad", structured: { violations: [{ cells: [[0, 0, 0]] }] } }));
    applyEvent(s, ev("reward", { value: 1 }));
    expect(s.violationCells).toEqual([]);
    expect(s.pendingFeedback).toBeNull();
  });

  it("done status carries success", () => {
    const s = initialState("e1", "Alice");
    applyStatus(s, { state: "done", success: true });
    expect(s.done).toBe(true);
    expect(s.success).toBe(true);
  });

  it("replay reset drops derived state but keeps identity", () => {
    const s = initialState("e1", "Alice");
    applyEvent(s, ev("message", { speaker: "Alice", text: "hi" }));
    s.cursor = 5;
    resetForReplay(s);
    expect(s.cursor).toBe(0);
    expect(s.transcript).toEqual([]);
    expect(s.myAgent).toBe("Alice");
  });
});
