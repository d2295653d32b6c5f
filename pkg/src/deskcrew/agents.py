"""Prompt assembly and response backends.

Backends answer prompts: over HTTP chat-completion, from deterministic
scripted policies, or from a human relayed through the service. Scripted
policies receive the full query context (scene, observation, dialog state) so
test oracles can act without a language model.
"""

from __future__ import annotations

import os
import queue
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import requests

from . import world
from .actions import ActionSpec, SubTaskPlan, Verb, WaypointPath
from .kinematics import forward_kinematics
from .plan import Feedback
from .world import Observation, Scene, TaskDef

API_KEY_ENV = "ROCO_API_KEY"


class BackendUnavailable(RuntimeError):
    """Transport kept failing after retries."""


class BackendMalformed(RuntimeError):
    """The backend answered, but not in the expected shape."""


@dataclass
class QueryContext:
    """Everything a backend may look at when producing a response."""

    system: str
    user: str
    agent: str
    scene: Scene | None = None
    observation: Observation | None = None
    feedback: list[Feedback] = field(default_factory=list)
    dialog: list[tuple[str, str]] = field(default_factory=list)
    roster: tuple[str, ...] = ()
    eligible: bool = False
    current_config: np.ndarray | None = None
    round_index: int = 0
    grid_instance: object | None = None


@dataclass
class ChatHttpBackend:
    endpoint: str
    model: str
    temperature: float = 0.6
    timeout_s: float = 60.0
    max_retries: int = 3
    backoff_s: float = 0.5

    def respond(self, ctx: QueryContext) -> str:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": ctx.system},
                {"role": "user", "content": ctx.user},
            ],
            "temperature": self.temperature,
        }
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout_s)
                if resp.status_code >= 500 or resp.status_code == 429:
                    last_error = RuntimeError(f"HTTP {resp.status_code}")
                    raise last_error
                if resp.status_code != 200:
                    raise BackendMalformed(f"HTTP {resp.status_code}: {resp.text[:200]}")
                body = resp.json()
                try:
                    content = body["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError) as e:
                    raise BackendMalformed(f"unexpected response body: {e}") from e
                if not isinstance(content, str):
                    raise BackendMalformed("assistant content is not a string")
                return content
            except (requests.RequestException, RuntimeError) as e:
                if isinstance(e, BackendMalformed):
                    raise
                last_error = e
                if attempt < self.max_retries - 1:
                    time.sleep(self.backoff_s * (2**attempt))
        raise BackendUnavailable(f"giving up after {self.max_retries} attempts: {last_error}")


@dataclass
class ScriptedBackend:
    policy: Callable[[QueryContext], str]
    policy_id: str = "scripted"

    def respond(self, ctx: QueryContext) -> str:
        return self.policy(ctx)


class HumanBackend:
    """Blocking rendezvous: respond() waits until the service delivers a message."""

    def __init__(self, channel_id: str, timeout_s: float = 3600.0):
        self.channel_id = channel_id
        self.timeout_s = timeout_s
        self.inbox: queue.Queue[str] = queue.Queue()

    def deliver(self, text: str) -> None:
        self.inbox.put(text)

    def respond(self, ctx: QueryContext) -> str:
        try:
            return self.inbox.get(timeout=self.timeout_s)
        except queue.Empty:
            raise BackendUnavailable(f"no human input on channel {self.channel_id}")


def query(backend, ctx: QueryContext) -> str:
    """Dispatch a prompt to a backend; raises BackendUnavailable/BackendMalformed."""
    return backend.respond(ctx)


def make_backend(config: dict):
    kind = config.get("kind")
    if kind == "chat_http":
        return ChatHttpBackend(
            endpoint=config["endpoint"],
            model=config["model"],
            temperature=float(config.get("temperature", 0.6)),
        )
    if kind == "scripted":
        return scripted_backend(config["policy_id"])
    if kind == "human":
        return HumanBackend(config["channel_id"])
    raise ValueError(f"unknown backend kind {kind!r}")


# ---------------------------------------------------------------------------
# Prompt assembly


@dataclass(frozen=True)
class AgentProfile:
    name: str
    capability_text: str
    observation_scope: str
    role_reminder_text: str


@dataclass
class PromptBundle:
    """The six prompt sections, in their fixed order."""

    task_context: str
    round_history: str
    agent_capability: str
    communication_instruction: str
    current_observation: str
    plan_feedback: str

    def sections(self) -> list[tuple[str, str]]:
        return [
            ("task_context", self.task_context),
            ("round_history", self.round_history),
            ("agent_capability", self.agent_capability),
            ("communication_instruction", self.communication_instruction),
            ("current_observation", self.current_observation),
            ("plan_feedback", self.plan_feedback),
        ]


def _action_options(task: TaskDef) -> str:
    if task.combined_grammar:
        return (
            "[Action Options]\n"
            "1) PICK <object> PLACE <zone>: pick an object from a zone you reach and place it on a free zone you reach.\n"
            "2) WAIT: do nothing this round."
        )
    if task.waypoints_required:
        return (
            "[Action Options]\n"
            "1) PICK <object> PATH [(x,y,z), ...]: pick up an object; the PATH lists evenly spaced gripper waypoints from your current gripper position to the object.\n"
            "2) PLACE <object> <slot> PATH [(x,y,z), ...]: place the held object into a crate slot; the PATH lists evenly spaced gripper waypoints from your current gripper position to the slot.\n"
            "3) WAIT: do nothing this round."
        )
    return (
        "[Action Options]\n"
        "1) PICK <object>: pick up an object within your reach (your gripper must be empty).\n"
        "2) PLACE <object> <target>: put the held object on a target you reach.\n"
        "3) WAIT: do nothing this round."
    )


def comm_instruction(task: TaskDef) -> str:
    """Fixed communication instruction per task family (golden-pinned)."""
    roster = ", ".join(task.roster)
    return (
        f"{_action_options(task)}\n"
        "[Action Output Instruction]\n"
        "First output 'EXECUTE', then give exactly one action line per robot: "
        "'NAME <robot> ACTION <action>'.\n"
        f"The plan must contain one line for each of: {roster}.\n"
        "Discuss with the other robots and respond very concisely. End your response by "
        "choosing exactly one option: 1) output PROCEED if the plan needs more discussion; "
        "2) output the final plan starting with EXECUTE, allowed only after every robot has "
        "spoken at least once in the current dialog."
    )


def build_profiles(task: TaskDef) -> dict[str, AgentProfile]:
    profiles = {}
    for agent in task.roster:
        zones = ", ".join(task.reach[agent])
        capability = (
            f"only reach {zones}: this means you can only pick objects from these zones "
            f"and can only place objects on these zones"
        )
        scope = "you see the whole table" if task.shared_observation else "you only see your own side of the table and the shared board"
        profiles[agent] = AgentProfile(
            name=agent,
            capability_text=capability,
            observation_scope=scope,
            role_reminder_text=f"Never forget you are {agent}!",
        )
    return profiles


def central_profile(task: TaskDef) -> AgentProfile:
    caps = []
    for agent in task.roster:
        caps.append(f"{agent} can reach {', '.join(task.reach[agent])}")
    return AgentProfile(
        name="Central",
        capability_text="plan for every robot at once; " + "; ".join(caps),
        observation_scope="you see the whole table",
        role_reminder_text="Never forget you are the central planner!",
    )


@dataclass
class RoundRecord:
    transcript: list[tuple[str, str]]
    executed_text: str | None


def _history_text(history: list[RoundRecord]) -> str:
    chunks = []
    for t, rec in enumerate(history):
        lines = [f"Round#{t}:"]
        for speaker, text in rec.transcript:
            lines.append(f"[{speaker}]: {text}")
        lines.append(f"[Executed]: {rec.executed_text if rec.executed_text else 'none'}")
        chunks.append("\n".join(lines))
    return "\n".join(chunks)


def build_bundle(
    task: TaskDef,
    profile: AgentProfile,
    history: list[RoundRecord],
    feedbacks: list[Feedback],
    observation_text: str,
    no_history: bool = False,
    no_feedback: bool = False,
) -> PromptBundle:
    others = ", ".join(n for n in task.roster if n != profile.name) or "the team"
    context = f"You are robot {profile.name}, collaborating with {others} to {task.task_context}."
    hist = "" if (no_history or not history) else "Previously:\n" + _history_text(history)
    fb = ""
    if feedbacks and not no_feedback:
        fb = "\n".join(f.text for f in feedbacks)
    return PromptBundle(
        task_context=context,
        round_history=hist,
        agent_capability=f"You can {profile.capability_text}. {profile.observation_scope.capitalize()}.",
        communication_instruction=f"{comm_instruction(task)}\n{profile.role_reminder_text}",
        current_observation="At current round:\n" + observation_text,
        plan_feedback=fb,
    )


def compose_prompt(
    bundle: PromptBundle,
    dialog_so_far: list[tuple[str, str]],
    prior_chat: list[tuple[str, str]] | None = None,
    reminder: str = "",
) -> str:
    """Deterministic concatenation of the prompt sections, ending 'Your response is:'."""
    parts = [text for _, text in bundle.sections() if text]
    if reminder:
        parts.append(reminder)
    if prior_chat:
        parts.append("Previous chat:\n" + "\n".join(f"[{s}]: {t}" for s, t in prior_chat))
    chat = "\n".join(f"[{s}]: {t}" for s, t in dialog_so_far)
    parts.append("Current chat:\n" + chat if chat else "Current chat:")
    parts.append("Your response is:")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# Scripted policies


def _resample_even(points: list[tuple[float, float, float]], target_gap: float = 0.18) -> list[tuple[float, float, float]]:
    """Resample a polyline at uniform arc-length spacing (equal gaps)."""
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    n = max(2, int(np.ceil(total / target_gap)) + 1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    samples = np.linspace(0.0, total, n)
    out = []
    for s in samples:
        i = int(np.searchsorted(cum, s, side="right") - 1)
        i = min(i, len(seg) - 1)
        frac = 0.0 if seg[i] == 0 else (s - cum[i]) / seg[i]
        out.append(tuple(pts[i] + frac * (pts[i + 1] - pts[i])))
    return out


def hover_path(start, target, hover_z: float = 0.22) -> WaypointPath:
    """Top-down approach: lift from start, traverse at hover height, descend to target."""
    s = tuple(float(v) for v in start)
    t = tuple(float(v) for v in target)
    knees = [s, (s[0], s[1], hover_z), (t[0], t[1], hover_z), t]
    return WaypointPath(tuple(_resample_even(knees)))


def _speak(name: str, note: str) -> str:
    return f"I am {name}. {note} PROCEED"


def _sort_next_move(scene: Scene) -> tuple[str, str, str] | None:
    """BFS over symbolic block positions; returns (agent, block, target_zone)."""
    task = scene.task
    state0 = tuple(sorted((o.name, o.support.ref) for o in scene.objects))
    goal = tuple(sorted((o, task.goals[o]) for o in task.objects))
    if state0 == goal:
        return None
    from collections import deque

    parents: dict[tuple, tuple | None] = {state0: None}
    first_move: dict[tuple, tuple[str, str, str]] = {}
    q = deque([state0])
    while q:
        state = q.popleft()
        occupied = {z for _, z in state}
        positions = dict(state)
        for agent in task.roster:
            reach = set(task.reach[agent])
            for obj, zone in positions.items():
                if zone not in reach:
                    continue
                for target in task.reach[agent]:
                    if target in occupied or target == zone:
                        continue
                    nxt = tuple(sorted((o, target if o == obj else z) for o, z in positions.items()))
                    if nxt in parents:
                        continue
                    parents[nxt] = state
                    first_move[nxt] = first_move.get(state, (agent, obj, target))
                    if nxt == goal:
                        return first_move[nxt]
                    q.append(nxt)
    return None


def _wait_plan(roster: tuple[str, ...]) -> SubTaskPlan:
    return SubTaskPlan({a: ActionSpec(Verb.WAIT) for a in roster})


def _sort_oracle_plan(scene: Scene) -> SubTaskPlan:
    move = _sort_next_move(scene)
    plan = _wait_plan(scene.task.roster)
    if move:
        agent, obj, target = move
        plan.actions[agent] = ActionSpec(Verb.PLACE, (obj, target), pick_first=True)
    return plan


def _stack_oracle_plan(scene: Scene) -> SubTaskPlan:
    task = scene.task
    stack = scene.board_stack()
    remaining = list(task.recipe[len(stack) :])
    plan = _wait_plan(task.roster)
    placing = False
    for agent in task.roster:
        held = scene.held_by(agent)
        if held and remaining and held == remaining[0] and not placing:
            plan.actions[agent] = ActionSpec(Verb.PLACE, (held, task.board_zone))
            placing = True
    for agent in task.roster:
        if plan.actions[agent].verb is not Verb.WAIT or scene.held_by(agent):
            continue
        # pick the earliest outstanding recipe item on this agent's side
        for item in remaining:
            obj = scene.object(item)
            if obj.support.kind != "table_zone":
                continue
            if obj.support.ref in task.reach[agent] and item != (remaining[0] if placing else None):
                plan.actions[agent] = ActionSpec(Verb.PICK, (item,))
                break
    return plan


_PACK_SLOT_FOR = {"blue_block": "slot1", "green_block": "slot2", "red_block": "slot3", "yellow_block": "slot4"}


def _pack_oracle_plan(scene: Scene, current_config: np.ndarray) -> SubTaskPlan:
    task = scene.task
    plan = _wait_plan(task.roster)
    placing = False
    for i, agent in enumerate(task.roster):
        arm = task.arm_for(agent)
        ee, _ = forward_kinematics(arm, current_config[i])
        held = scene.held_by(agent)
        if held and not placing:
            slot = _PACK_SLOT_FOR[held]
            target = world.place_point(task, scene, slot)
            plan.actions[agent] = ActionSpec(
                Verb.PLACE, (held, slot), waypoints=hover_path(ee, target)
            )
            placing = True
        elif not held:
            for obj in scene.objects:
                if obj.support.kind == "table_zone" and obj.support.ref in task.reach[agent]:
                    target = world.pick_point(scene, obj.name)
                    plan.actions[agent] = ActionSpec(
                        Verb.PICK, (obj.name,), waypoints=hover_path(ee, target)
                    )
                    break
    return plan


def oracle_plan(scene: Scene, current_config: np.ndarray) -> SubTaskPlan:
    if scene.task_id == "sort_blocks":
        return _sort_oracle_plan(scene)
    if scene.task_id == "stack_order":
        return _stack_oracle_plan(scene)
    if scene.task_id == "pack_boxes":
        return _pack_oracle_plan(scene, current_config)
    raise KeyError(scene.task_id)


class OraclePolicy:
    """Deterministic scripted agent: speaks once, then proposes a one-step-solving plan.

    Reads the full scene (a test oracle's privilege); never proposes before
    every agent has spoken.
    """

    def __init__(self, task_id: str):
        self.task_id = task_id

    def __call__(self, ctx: QueryContext) -> str:
        if ctx.grid_instance is not None:
            return grid_oracle_response(ctx)
        if not ctx.eligible:
            return _speak(ctx.agent, "I looked at the table; let's plan this round.")
        plan = oracle_plan(ctx.scene, ctx.current_config)
        return plan.serialize(ctx.scene.task.roster)


class PrematureProposerPolicy:
    """Adversarial: emits EXECUTE immediately, then behaves like the oracle."""

    def __init__(self, task_id: str):
        self.oracle = OraclePolicy(task_id)

    def __call__(self, ctx: QueryContext) -> str:
        if not ctx.eligible and not any(s == ctx.agent for s, _ in ctx.dialog):
            plan = oracle_plan(ctx.scene, ctx.current_config)
            return plan.serialize(ctx.scene.task.roster)
        return self.oracle(ctx)


class ChatterboxPolicy:
    """Adversarial: never proposes, so dialogs overflow their message budget."""

    def __call__(self, ctx: QueryContext) -> str:
        return _speak(ctx.agent, "Let me think about this a bit more.")


class InvalidProposerPolicy:
    """Adversarial: always proposes an action on a nonexistent object."""

    def __call__(self, ctx: QueryContext) -> str:
        if not ctx.eligible:
            return _speak(ctx.agent, "I have a plan in mind.")
        task = ctx.scene.task
        plan = _wait_plan(task.roster)
        if task.combined_grammar:
            plan.actions[ctx.agent] = ActionSpec(Verb.PLACE, ("ghost_block", task.reach[ctx.agent][0]), pick_first=True)
        else:
            plan.actions[ctx.agent] = ActionSpec(Verb.PICK, ("ghost_block",))
            if task.waypoints_required:
                plan.actions[ctx.agent] = ActionSpec(
                    Verb.PICK, ("ghost_block",), waypoints=hover_path((0.0, -0.3, 0.2), (0.0, -0.3, 0.06))
                )
        return plan.serialize(task.roster)


class CorrectingPolicy:
    """Fails task constraints once per round, then corrects by reading the feedback."""

    def __init__(self, task_id: str):
        self.oracle = OraclePolicy(task_id)

    def __call__(self, ctx: QueryContext) -> str:
        if not ctx.eligible:
            return _speak(ctx.agent, "Let me try something.")
        if not ctx.feedback:
            bad = InvalidProposerPolicy()
            return bad(ctx)
        if "ghost_block" not in ctx.feedback[-1].text:
            # the feedback did not name the offending object; stay invalid
            return InvalidProposerPolicy()(ctx)
        return self.oracle(ctx)


def grid_oracle_response(ctx: QueryContext) -> str:
    from .gridpath import bfs_oracle

    paths = bfs_oracle(ctx.grid_instance)
    if paths is None:
        return "PLAN\nno feasible plan found"
    lines = ["PLAN"]
    for name, cells in paths.items():
        body = ", ".join(f"({x}, {y}, {z})" for x, y, z in cells)
        lines.append(f"NAME {name} PATH [{body}]")
    return "\n".join(lines)


class GridOraclePolicy:
    def __call__(self, ctx: QueryContext) -> str:
        return grid_oracle_response(ctx)


class GridNoisyPolicy:
    """First answers with a deliberately broken plan, then defers to the BFS oracle."""

    def __init__(self):
        self.calls = 0

    def __call__(self, ctx: QueryContext) -> str:
        self.calls += 1
        if self.calls == 1:
            inst = ctx.grid_instance
            lines = ["PLAN"]
            for name, init, goal in inst.agents:
                body = f"({init[0]}, {init[1]}, {init[2]}), ({goal[0]}, {goal[1]}, {goal[2]})"
                lines.append(f"NAME {name} PATH [{body}]")
            return "\n".join(lines)
        return grid_oracle_response(ctx)


def oracle_policy(task_id: str):
    """Deterministic scripted policy solving one step of the task per round."""
    if task_id == "grid":
        return GridOraclePolicy()
    if task_id not in world.TASKS:
        raise KeyError(f"no oracle policy for task {task_id!r}")
    return OraclePolicy(task_id)


def scripted_backend(policy_id: str) -> ScriptedBackend:
    """Resolve a policy id like 'oracle:sort_blocks' into a scripted backend."""
    kind, _, arg = policy_id.partition(":")
    if kind == "oracle":
        return ScriptedBackend(oracle_policy(arg), policy_id)
    if kind == "premature":
        return ScriptedBackend(PrematureProposerPolicy(arg), policy_id)
    if kind == "chatterbox":
        return ScriptedBackend(ChatterboxPolicy(), policy_id)
    if kind == "invalid":
        return ScriptedBackend(InvalidProposerPolicy(), policy_id)
    if kind == "correcting":
        return ScriptedBackend(CorrectingPolicy(arg), policy_id)
    if kind == "grid_noisy":
        return ScriptedBackend(GridNoisyPolicy(), policy_id)
    raise ValueError(f"unknown policy id {policy_id!r}")
