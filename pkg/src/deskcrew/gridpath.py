"""3D-grid multi-agent path toy: generation, validation, feedback, BFS oracle.

Paths must move exactly one cell along one axis per step (no waiting mid-path);
an agent that has reached its goal is treated as parked there for all later
timesteps when checking conflicts between agents.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

Cell = tuple[int, int, int]

AGENT_NAMES = ("Alice", "Bob", "Chad", "Dave", "Eve", "Fred", "Gina", "Hank")

RETRY_INSTRUCTION = (
    "Use this information to try again, update this plan so it has "
    "collision-free, strictly one-step-apart paths."
)

_RULE_HEADERS = {
    "endpoints": "Some paths in this plan do not start at the agent's init position and end at its goal position",
    "spacing": "Some steps in this plan are not exactly 1 step away from each other",
    "bounds": "Some steps in this plan are outside the grid bounds",
    "obstacle": "Some steps in this plan collide with an obstacle",
    "vertex": "Some agents in this plan collide with each other",
    "swap": "Some agents in this plan swap positions with each other",
}
_RULE_ORDER = ("endpoints", "spacing", "bounds", "obstacle", "vertex", "swap")


def fmt_cell(cell: Cell) -> str:
    return f"({cell[0]}, {cell[1]}, {cell[2]})"


@dataclass(frozen=True)
class GridInstance:
    size: tuple[int, int, int]
    obstacles: frozenset[Cell]
    agents: tuple[tuple[str, Cell, Cell], ...]  # (name, init, goal)

    @property
    def names(self) -> list[str]:
        return [a[0] for a in self.agents]

    def in_bounds(self, cell: Cell) -> bool:
        return all(0 <= c < s for c, s in zip(cell, self.size))

    def to_dict(self) -> dict:
        return {
            "size": list(self.size),
            "obstacles": sorted(list(c) for c in self.obstacles),
            "agents": [{"name": n, "init": list(i), "goal": list(g)} for n, i, g in self.agents],
        }

    @staticmethod
    def from_dict(d: dict) -> "GridInstance":
        return GridInstance(
            size=tuple(d["size"]),
            obstacles=frozenset(tuple(c) for c in d["obstacles"]),
            agents=tuple((a["name"], tuple(a["init"]), tuple(a["goal"])) for a in d["agents"]),
        )


# MultiPath: agent name -> ordered cells
MultiPath = dict[str, list[Cell]]


def multipath_to_dict(paths: MultiPath) -> dict:
    return {name: [list(c) for c in cells] for name, cells in paths.items()}


def multipath_from_dict(d: dict) -> MultiPath:
    return {name: [tuple(c) for c in cells] for name, cells in d.items()}


@dataclass(frozen=True)
class GridViolation:
    rule: str
    agent: str
    cells: tuple[Cell, ...]
    other: str = ""
    time: int = -1

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "agent": self.agent,
            "cells": [list(c) for c in self.cells],
            "other": self.other,
            "time": self.time,
        }


@dataclass
class GridReport:
    instance: GridInstance
    violations: list[GridViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_dict() for v in self.violations]}


def _padded(paths: MultiPath, names: list[str]) -> tuple[dict[str, list[Cell]], int]:
    horizon = max(len(paths[n]) for n in names)
    out = {}
    for n in names:
        p = list(paths[n])
        out[n] = p + [p[-1]] * (horizon - len(p))
    return out, horizon


def validate_paths(instance: GridInstance, paths: MultiPath) -> GridReport:
    """Check every rule and collect all violations (never stops at the first).

    Rules: (a) endpoints match init/goal; (b) consecutive cells exactly one
    unit apart along one axis; (c) in bounds; (d) off obstacles; (e) no two
    agents share a cell at a timestep and no adjacent swap, with shorter paths
    padded at their final cell.
    """
    report = GridReport(instance)
    names = instance.names
    missing = [n for n in names if n not in paths or not paths[n]]
    if missing:
        for n in missing:
            report.violations.append(GridViolation("endpoints", n, ()))
        return report

    for name, init, goal in instance.agents:
        p = paths[name]
        if p[0] != init or p[-1] != goal:
            report.violations.append(GridViolation("endpoints", name, (p[0], p[-1])))
        for a, b in zip(p, p[1:]):
            if sum(abs(x - y) for x, y in zip(a, b)) != 1:
                report.violations.append(GridViolation("spacing", name, (a, b)))
        for c in p:
            if not instance.in_bounds(c):
                report.violations.append(GridViolation("bounds", name, (c,)))
        for c in p:
            if c in instance.obstacles:
                report.violations.append(GridViolation("obstacle", name, (c,)))

    padded, horizon = _padded(paths, names)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            pa, pb = padded[a], padded[b]
            for t in range(horizon):
                if pa[t] == pb[t]:
                    report.violations.append(GridViolation("vertex", a, (pa[t],), other=b, time=t))
            for t in range(horizon - 1):
                if pa[t] == pb[t + 1] and pa[t + 1] == pb[t]:
                    report.violations.append(
                        GridViolation("swap", a, (pa[t], pa[t + 1]), other=b, time=t)
                    )
    return report


def _entry_text(v: GridViolation) -> str:
    cells = ", ".join(fmt_cell(c) for c in v.cells)
    if v.rule == "endpoints":
        if not v.cells:
            return f"{v.agent}: no path given"
        return f"{v.agent}: starts at {fmt_cell(v.cells[0])}, ends at {fmt_cell(v.cells[1])}"
    if v.rule == "vertex":
        return f"{v.agent} and {v.other} at {fmt_cell(v.cells[0])} at timestep {v.time}"
    if v.rule == "swap":
        return (
            f"{v.agent} and {v.other} between {fmt_cell(v.cells[0])} "
            f"and {fmt_cell(v.cells[1])} at timestep {v.time}"
        )
    return f"{v.agent}: {cells}"


def feedback_text(report: GridReport) -> str:
    """Render violations as the fixed feedback sentences plus the retry line.

    Within each rule, agents appear in the instance's roster order; an agent's
    offending cells are listed in path order.
    """
    if report.ok:
        raise ValueError("feedback_text called on a report with no violations")
    order = {n: i for i, n in enumerate(report.instance.names)}
    lines = []
    for rule in _RULE_ORDER:
        vs = [v for v in report.violations if v.rule == rule]
        if not vs:
            continue
        vs.sort(key=lambda v: (order.get(v.agent, 99), v.time))
        if rule in ("spacing", "bounds", "obstacle"):
            # merge each agent's offending cells into one entry
            merged: dict[str, list[Cell]] = {}
            for v in vs:
                merged.setdefault(v.agent, []).extend(v.cells)
            entries = [
                f"{agent}: " + ", ".join(fmt_cell(c) for c in cells)
                for agent, cells in sorted(merged.items(), key=lambda kv: order.get(kv[0], 99))
            ]
        else:
            entries = [_entry_text(v) for v in vs]
        lines.append(_RULE_HEADERS[rule] + ": " + "".join(e + "; " for e in entries))
    lines.append(RETRY_INSTRUCTION)
    return "\n".join(lines)


_NEIGHBOR_OFFSETS = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]


def bfs_oracle(instance: GridInstance, horizon: int | None = None) -> MultiPath | None:
    """Prioritized planning: per-agent BFS over (cell, time) around earlier paths.

    Earlier agents' cells (including parking at their goal) are dynamic
    obstacles; swaps are forbidden. Incomplete by construction; returns None
    when the prioritized search fails.
    """
    if horizon is None:
        horizon = sum(instance.size) + 4 * len(instance.agents) + 8
    vertex_res: set[tuple[Cell, int]] = set()
    edge_res: set[tuple[Cell, Cell, int]] = set()  # (frm, to, t): move frm@t -> to@t+1
    last_blocked: dict[Cell, int] = {}
    paths: MultiPath = {}

    for name, init, goal in instance.agents:
        if (init, 0) in vertex_res:
            return None
        best = _space_time_bfs(instance, init, goal, horizon, vertex_res, edge_res, last_blocked)
        if best is None:
            return None
        paths[name] = best
        t_arr = len(best) - 1
        for t, cell in enumerate(best):
            vertex_res.add((cell, t))
            last_blocked[cell] = max(last_blocked.get(cell, -1), t)
        for t in range(len(best) - 1):
            edge_res.add((best[t], best[t + 1], t))
        for t in range(t_arr, horizon + 1):
            vertex_res.add((goal, t))
        last_blocked[goal] = horizon
    return paths


def _space_time_bfs(instance, init, goal, horizon, vertex_res, edge_res, last_blocked):
    from collections import deque

    start = (init, 0)
    parents: dict[tuple[Cell, int], tuple[Cell, int] | None] = {start: None}
    queue = deque([start])
    while queue:
        cell, t = queue.popleft()
        if cell == goal and last_blocked.get(goal, -1) < t:
            out = []
            cur: tuple[Cell, int] | None = (cell, t)
            while cur is not None:
                out.append(cur[0])
                cur = parents[cur]
            return out[::-1]
        if t >= horizon:
            continue
        for off in _NEIGHBOR_OFFSETS:
            nb = (cell[0] + off[0], cell[1] + off[1], cell[2] + off[2])
            state = (nb, t + 1)
            if state in parents:
                continue
            if not instance.in_bounds(nb) or nb in instance.obstacles:
                continue
            if state in vertex_res:
                continue
            if (nb, cell, t) in edge_res:  # an earlier agent moves nb -> cell here
                continue
            parents[state] = (cell, t)
            queue.append(state)
    return None


def generate_instance(
    seed: int,
    size: tuple[int, int, int] = (10, 10, 10),
    n_obstacles: int = 20,
    n_agents: int = 4,
    max_resamples: int = 50,
) -> GridInstance:
    """Uniform random obstacles and start/goal pairs; resampled until solvable.

    Deterministic per seed. All sampled cells (obstacles, inits, goals) are
    mutually distinct.
    """
    if n_agents > len(AGENT_NAMES):
        raise ValueError(f"at most {len(AGENT_NAMES)} agents supported")
    total = size[0] * size[1] * size[2]
    need = n_obstacles + 2 * n_agents
    if need > total:
        raise ValueError("grid too small for requested obstacles and agents")
    rng = np.random.default_rng(seed)
    for _ in range(max_resamples):
        flat = rng.choice(total, size=need, replace=False)
        cells = [
            (int(f) // (size[1] * size[2]), (int(f) // size[2]) % size[1], int(f) % size[2])
            for f in flat
        ]
        obstacles = frozenset(cells[:n_obstacles])
        agents = []
        for i in range(n_agents):
            init = cells[n_obstacles + 2 * i]
            goal = cells[n_obstacles + 2 * i + 1]
            agents.append((AGENT_NAMES[i], init, goal))
        instance = GridInstance(size=size, obstacles=obstacles, agents=tuple(agents))
        if bfs_oracle(instance) is not None:
            return instance
    raise ValueError(f"could not generate a solvable instance for seed {seed}")


# ---------------------------------------------------------------------------
# Prompting and the attempt loop

GRID_SYSTEM_PROMPT = """Plan paths for agents to navigate a 3D grid to reach their respective goals and avoid collision.
You are given:
1) a list of obstacle coordinates (x, y, z): locations of the obstacle grid cells, agents must avoid them.
2) a list of (name, init, goal) tuples: the initial position and goal position of the agent named name.
3) a previous plan, if any, and why it failed. Analyze this information and re-plan a collision-free path.
How to plan a path:
1) Make sure each path does not touch any obstacle, and does not collide with another agent's path at the same timestep.
2) Each step must move to an adjacent cell: exactly one step along exactly one axis.
3) Each path must start at the agent's init position and end at its goal position.
Output format: first output 'PLAN', then give one line per agent: NAME [agent name] PATH [a list of (x, y, z) coordinates]."""


def grid_user_prompt(instance: GridInstance, feedback_blocks: list[str]) -> str:
    x, y, z = instance.size
    lines = [f"At the current step: Grid size: {x} x {y} x {z}"]
    lines.append("Obstacles:" + " ".join(fmt_cell(c) for c in sorted(instance.obstacles)))
    for name, init, goal in instance.agents:
        lines.append(f"Agent {name} init: {fmt_cell(init)} goal: {fmt_cell(goal)}")
    for block in feedback_blocks:
        lines.append("Feedback: this previous plan failed:")
        lines.append(block)
    lines.append("Your reasoning and plan is:")
    return "\n".join(lines)


_PATH_LINE = re.compile(r"NAME\s+(\w+)\s+PATH\s*\[(.*?)\]", re.DOTALL)
_TUPLE = re.compile(r"\(\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\)")


def parse_grid_response(text: str, instance: GridInstance) -> MultiPath | str:
    """Extract NAME/PATH lines; returns an error description string on failure."""
    if "PLAN" not in text:
        return "response does not contain the keyword PLAN"
    paths: MultiPath = {}
    for m in _PATH_LINE.finditer(text):
        name = m.group(1)
        cells = [(int(a), int(b), int(c)) for a, b, c in _TUPLE.findall(m.group(2))]
        paths[name] = cells
    missing = [n for n in instance.names if n not in paths or not paths[n]]
    if missing:
        return "missing PATH lines for: " + ", ".join(missing)
    return paths


@dataclass
class GridAttempt:
    response: str
    paths: MultiPath | None
    parse_error: str | None
    report_dict: dict | None
    feedback: str | None


@dataclass
class AttemptLog:
    instance: GridInstance
    attempts: list[GridAttempt] = field(default_factory=list)
    success: bool = False

    @property
    def n_attempts(self) -> int:
        return len(self.attempts)

    def to_dict(self) -> dict:
        return {
            "instance": self.instance.to_dict(),
            "success": self.success,
            "n_attempts": self.n_attempts,
            "attempts": [
                {
                    "response": a.response,
                    "paths": multipath_to_dict(a.paths) if a.paths else None,
                    "parse_error": a.parse_error,
                    "report": a.report_dict,
                    "feedback": a.feedback,
                }
                for a in self.attempts
            ],
        }


def run_grid_attempts(
    instance: GridInstance, backend, max_attempts: int = 5, on_attempt=None
) -> AttemptLog:
    """Prompt, parse, validate, and retry with appended feedback.

    Each failed attempt appends a feedback block (the failed plan plus why it
    failed) to the user prompt of subsequent attempts. ``on_attempt`` is called
    with each GridAttempt as it completes (for live event streaming).
    """
    from .agents import QueryContext, query

    log = AttemptLog(instance)
    feedback_blocks: list[str] = []
    for _ in range(max_attempts):
        user = grid_user_prompt(instance, feedback_blocks)
        ctx = QueryContext(system=GRID_SYSTEM_PROMPT, user=user, agent="planner", grid_instance=instance)
        response = query(backend, ctx)
        parsed = parse_grid_response(response, instance)
        if isinstance(parsed, str):
            fb = parsed + "\n" + RETRY_INSTRUCTION
            attempt = GridAttempt(response, None, parsed, None, fb)
            feedback_blocks.append(response.strip() + "\n" + fb)
        else:
            report = validate_paths(instance, parsed)
            if report.ok:
                attempt = GridAttempt(response, parsed, None, report.to_dict(), None)
                log.attempts.append(attempt)
                log.success = True
                if on_attempt:
                    on_attempt(attempt)
                return log
            fb = feedback_text(report)
            attempt = GridAttempt(response, parsed, None, report.to_dict(), fb)
            feedback_blocks.append(_plan_text(parsed) + "\n" + fb)
        log.attempts.append(attempt)
        if on_attempt:
            on_attempt(attempt)
    return log


def _plan_text(paths: MultiPath) -> str:
    lines = ["PLAN"]
    for name, cells in paths.items():
        lines.append(f"NAME {name} PATH [" + ", ".join(fmt_cell(c) for c in cells) + "]")
    return "\n".join(lines)


def load_instance(path: str) -> GridInstance:
    with open(path) as f:
        return GridInstance.from_dict(json.load(f))


def load_paths(path: str) -> MultiPath:
    with open(path) as f:
        return multipath_from_dict(json.load(f))
