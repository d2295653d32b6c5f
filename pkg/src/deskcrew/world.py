"""Kinematic desk-scale task environments.

Three tabletop tasks span the collaboration axes the framework cares about:

* ``sort_blocks``: 3 agents, sequential help, shared observation, low
  workspace overlap. Seven zones in a line; each agent owns a target zone and
  can reach only a 3-zone window, so agents must relay blocks.
* ``stack_order``: 2 agents, sequential, asymmetric observation. Items live
  on each agent's side of the table and must be stacked on a shared board in
  recipe order.
* ``pack_boxes``: 2 arms, parallel, shared observation, high overlap. Items
  from both sides go into a central open-top crate; actions carry task-space
  waypoint paths.

Transitions are symbolic (PICK/PLACE/WAIT re-parent objects); geometry exists
for IK and collision checking, not physics.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .kinematics import ArmModel, Obstacle

if TYPE_CHECKING:  # pragma: no cover
    from .plan import SubTaskPlan, ValidationReport

BLOCK_HEIGHT = 0.04
PICK_CLEARANCE = 0.04  # grasp point above an object's center
PLACE_CLEARANCE = 0.06  # drop point above a zone surface
CRATE_DROP_HEIGHT = 0.14  # drop point above a crate slot (clears the rim)

WORKSPACE_MIN = (-0.9, -0.9, -0.01)
WORKSPACE_MAX = (0.9, 0.9, 0.7)

HOME_CONFIG = (0.0, 1.3, -2.35, 2.35)  # tucked "cobra" pose, clear of neighbors


class ContractViolation(RuntimeError):
    """Raised when an operation is called outside its contract."""


@dataclass(frozen=True)
class Support:
    """Where an object rests: a table zone, another object, a container, or a gripper."""

    kind: str  # table_zone | stacked_on | in_container | held_by
    ref: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ref": self.ref}

    @staticmethod
    def from_dict(d: dict) -> "Support":
        return Support(d["kind"], d["ref"])


@dataclass
class ObjectState:
    name: str
    pose: tuple[float, float, float]
    support: Support

    def to_dict(self) -> dict:
        return {"name": self.name, "pose": list(self.pose), "support": self.support.to_dict()}

    @staticmethod
    def from_dict(d: dict) -> "ObjectState":
        return ObjectState(d["name"], tuple(d["pose"]), Support.from_dict(d["support"]))


@dataclass(frozen=True)
class TaskDef:
    task_id: str
    roster: tuple[str, ...]
    arms: tuple[ArmModel, ...]
    zones: dict[str, tuple[float, float, float]]
    reach: dict[str, tuple[str, ...]]
    objects: tuple[str, ...]
    fixtures: tuple[Obstacle, ...] = ()
    goals: dict[str, str] = field(default_factory=dict)  # object -> goal zone
    recipe: tuple[str, ...] = ()
    board_zone: str = ""
    container: str = ""
    container_slots: tuple[str, ...] = ()
    object_home_sides: dict[str, tuple[str, ...]] = field(default_factory=dict)  # agent -> its slot zones
    combined_grammar: bool = False
    waypoints_required: bool = False
    shared_observation: bool = True
    horizon: int = 15
    task_context: str = ""

    def arm_for(self, agent: str) -> ArmModel:
        return self.arms[self.roster.index(agent)]


@dataclass
class Observation:
    agent: str
    visible_objects: list[ObjectState]
    own_gripper: str  # "" when empty, else held object's name
    reach: tuple[str, ...]
    shared: bool
    gripper_summary: tuple[tuple[str, str], ...] = ()  # (agent, held) in shared tasks

    def to_dict(self) -> dict:
        return {
            "agent": self.agent,
            "visible_objects": [o.to_dict() for o in sorted(self.visible_objects, key=lambda o: o.name)],
            "own_gripper": self.own_gripper,
            "reach": list(self.reach),
            "shared": self.shared,
            "gripper_summary": [list(g) for g in self.gripper_summary],
        }


@dataclass
class Scene:
    task_id: str
    objects: list[ObjectState]
    fixtures: list[Obstacle]
    arm_bases: list[tuple[tuple[float, float, float], float]]
    reach_regions: dict[str, tuple[str, ...]]
    round_index: int
    rng_seed: int

    @property
    def task(self) -> TaskDef:
        return TASKS[self.task_id]

    def object(self, name: str) -> ObjectState:
        for o in self.objects:
            if o.name == name:
                return o
        raise KeyError(f"no object named {name!r} in scene")

    def held_by(self, agent: str) -> str:
        for o in self.objects:
            if o.support == Support("held_by", agent):
                return o.name
        return ""

    def zone_occupant(self, zone: str) -> str:
        for o in self.objects:
            if o.support.kind == "table_zone" and o.support.ref == zone:
                return o.name
        return ""

    def stacked_on(self, name: str) -> str:
        for o in self.objects:
            if o.support == Support("stacked_on", name):
                return o.name
        return ""

    def board_stack(self) -> list[str]:
        """Bottom-to-top chain of objects on the task's board zone."""
        board = self.task.board_zone
        if not board:
            return []
        base = self.zone_occupant(board)
        stack = []
        cur = base
        while cur:
            stack.append(cur)
            cur = self.stacked_on(cur)
        return stack

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "objects": [o.to_dict() for o in self.objects],
            "fixtures": [f.to_dict() for f in self.fixtures],
            "arm_bases": [{"pos": list(p), "yaw": y} for p, y in self.arm_bases],
            "reach_regions": {a: list(z) for a, z in self.reach_regions.items()},
            "round_index": self.round_index,
            "rng_seed": self.rng_seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# ---------------------------------------------------------------------------
# Task definitions


def _line_zones() -> dict[str, tuple[float, float, float]]:
    # 7 zones in a straight line, 0.15 m apart
    return {f"zone{k}": (-0.45 + 0.15 * (k - 1), 0.0, 0.0) for k in range(1, 8)}


_SORT = TaskDef(
    task_id="sort_blocks",
    roster=("Alice", "Bob", "Chad"),
    arms=(
        ArmModel("Alice", base_pos=(-0.30, -0.40, 0.0), base_yaw=np.pi / 2),
        ArmModel("Bob", base_pos=(0.0, -0.40, 0.0), base_yaw=np.pi / 2),
        ArmModel("Chad", base_pos=(0.30, -0.40, 0.0), base_yaw=np.pi / 2),
    ),
    zones=_line_zones(),
    reach={
        "Alice": ("zone1", "zone2", "zone3"),
        "Bob": ("zone3", "zone4", "zone5"),
        "Chad": ("zone5", "zone6", "zone7"),
    },
    objects=("blue_block", "pink_block", "yellow_block"),
    goals={"blue_block": "zone2", "pink_block": "zone4", "yellow_block": "zone6"},
    combined_grammar=True,
    shared_observation=True,
    task_context=(
        "sort blocks onto their target zones: blue_block on zone2, pink_block on zone4, "
        "yellow_block on zone6. The 7 zones form a straight line from zone1 to zone7. "
        "The task is NOT done until all three blocks are sorted"
    ),
)

_STACK_ZONES = {
    "right1": (0.22, -0.14, 0.0),
    "right2": (0.22, 0.0, 0.0),
    "right3": (0.22, 0.14, 0.0),
    "left1": (-0.22, -0.14, 0.0),
    "left2": (-0.22, 0.0, 0.0),
    "left3": (-0.22, 0.14, 0.0),
    "board": (0.0, 0.0, 0.0),
}

_STACK = TaskDef(
    task_id="stack_order",
    roster=("Chad", "Dave"),
    arms=(
        ArmModel("Chad", base_pos=(0.55, 0.0, 0.0), base_yaw=np.pi),
        ArmModel("Dave", base_pos=(-0.55, 0.0, 0.0), base_yaw=0.0),
    ),
    zones=_STACK_ZONES,
    reach={
        "Chad": ("right1", "right2", "right3", "board"),
        "Dave": ("left1", "left2", "left3", "board"),
    },
    objects=("red_block", "green_block", "yellow_block", "blue_block", "purple_block", "orange_block"),
    recipe=("red_block", "green_block", "yellow_block", "blue_block"),
    board_zone="board",
    object_home_sides={
        "Chad": ("right1", "right2", "right3"),
        "Dave": ("left1", "left2", "left3"),
    },
    combined_grammar=False,
    shared_observation=False,
    task_context=(
        "stack blocks on the board in this exact order from bottom to top: red_block, "
        "green_block, yellow_block, blue_block. Only one block may be placed on the board "
        "per round. The task is NOT done until the full stack is built in order"
    ),
)

_CRATE_WALL_T = 0.02
_CRATE_HALF = 0.12
_CRATE_WALL_H = 0.08


def _crate_fixtures() -> tuple[Obstacle, ...]:
    h, t, z = _CRATE_HALF, _CRATE_WALL_T, _CRATE_WALL_H
    return (
        Obstacle.aabb((-h - t, h, 0.0), (h + t, h + t, z), name="crate_wall_n"),
        Obstacle.aabb((-h - t, -h - t, 0.0), (h + t, -h, z), name="crate_wall_s"),
        Obstacle.aabb((h, -h, 0.0), (h + t, h, z), name="crate_wall_e"),
        Obstacle.aabb((-h - t, -h, 0.0), (-h, h, z), name="crate_wall_w"),
    )


_PACK_ZONES = {
    "table_a1": (-0.15, -0.30, 0.0),
    "table_a2": (0.15, -0.30, 0.0),
    "table_b1": (-0.15, 0.30, 0.0),
    "table_b2": (0.15, 0.30, 0.0),
    "slot1": (-0.06, -0.06, 0.0),
    "slot2": (0.06, -0.06, 0.0),
    "slot3": (-0.06, 0.06, 0.0),
    "slot4": (0.06, 0.06, 0.0),
}

_PACK = TaskDef(
    task_id="pack_boxes",
    roster=("Alice", "Bob"),
    arms=(
        ArmModel("Alice", base_pos=(0.0, -0.55, 0.0), base_yaw=np.pi / 2),
        ArmModel("Bob", base_pos=(0.0, 0.55, 0.0), base_yaw=-np.pi / 2),
    ),
    zones=_PACK_ZONES,
    reach={
        "Alice": ("table_a1", "table_a2", "slot1", "slot2", "slot3", "slot4"),
        "Bob": ("table_b1", "table_b2", "slot1", "slot2", "slot3", "slot4"),
    },
    objects=("red_block", "blue_block", "green_block", "yellow_block"),
    fixtures=_crate_fixtures(),
    container="crate",
    container_slots=("slot1", "slot2", "slot3", "slot4"),
    combined_grammar=False,
    waypoints_required=True,
    shared_observation=True,
    task_context=(
        "pack all four blocks from the table into the central crate, one block per slot. "
        "Every PICK and PLACE must include a PATH of task-space waypoints. The task is NOT "
        "done until all blocks are inside the crate"
    ),
)

TASKS: dict[str, TaskDef] = {t.task_id: t for t in (_SORT, _STACK, _PACK)}


# ---------------------------------------------------------------------------
# Operations


def reset(task_id: str, seed: int) -> Scene:
    """Deterministic initial scene for (task_id, seed)."""
    if task_id not in TASKS:
        raise KeyError(f"unknown task_id {task_id!r}")
    task = TASKS[task_id]
    rng = np.random.default_rng(seed)
    objects: list[ObjectState] = []

    if task_id == "sort_blocks":
        # each block on a random zone, no zone repeated, never starting on its goal
        zones = list(task.zones)
        while True:
            picks = [zones[i] for i in rng.choice(len(zones), size=len(task.objects), replace=False)]
            if all(z != task.goals[o] for o, z in zip(task.objects, picks)):
                break
        for name, zone in zip(task.objects, picks):
            objects.append(_on_zone(task, name, zone))
    elif task_id == "stack_order":
        for agent, slots in task.object_home_sides.items():
            side_items = [o for o in task.objects if _home_agent(task, o) == agent]
            order = rng.permutation(len(slots))
            for item, idx in zip(side_items, order):
                objects.append(_on_zone(task, item, slots[int(idx)]))
    elif task_id == "pack_boxes":
        table_slots = ("table_a1", "table_a2", "table_b1", "table_b2")
        order = rng.permutation(len(table_slots))
        for item, idx in zip(task.objects, order):
            objects.append(_on_zone(task, item, table_slots[int(idx)]))

    objects.sort(key=lambda o: o.name)
    return Scene(
        task_id=task_id,
        objects=objects,
        fixtures=list(task.fixtures),
        arm_bases=[(a.base_pos, a.base_yaw) for a in task.arms],
        reach_regions=dict(task.reach),
        round_index=0,
        rng_seed=int(seed),
    )


def _home_agent(task: TaskDef, obj: str) -> str:
    # recipe items alternate sides; distractors fill the remaining slots
    sides = {"red_block": "Chad", "green_block": "Dave", "yellow_block": "Chad",
             "blue_block": "Dave", "purple_block": "Chad", "orange_block": "Dave"}
    return sides[obj]


def _on_zone(task: TaskDef, name: str, zone: str) -> ObjectState:
    zx, zy, zz = task.zones[zone]
    return ObjectState(name, (zx, zy, zz + BLOCK_HEIGHT / 2), Support("table_zone", zone))


def observe(scene: Scene, agent: str) -> Observation:
    task = scene.task
    if agent not in task.roster:
        raise KeyError(f"unknown agent {agent!r} for task {task.task_id}")
    if task.shared_observation:
        visible = [copy.deepcopy(o) for o in scene.objects]
        summary = tuple((a, scene.held_by(a)) for a in task.roster)
        return Observation(
            agent=agent,
            visible_objects=visible,
            own_gripper=scene.held_by(agent),
            reach=task.reach[agent],
            shared=True,
            gripper_summary=summary,
        )
    visible_zones = set(task.reach[agent])
    visible = []
    for o in scene.objects:
        root = _root_support(scene, o)
        if root.kind == "table_zone" and root.ref in visible_zones:
            visible.append(copy.deepcopy(o))
        elif root.kind == "held_by" and root.ref == agent:
            visible.append(copy.deepcopy(o))
    return Observation(
        agent=agent,
        visible_objects=visible,
        own_gripper=scene.held_by(agent),
        reach=task.reach[agent],
        shared=False,
    )


def _root_support(scene: Scene, obj: ObjectState) -> Support:
    cur = obj
    seen = set()
    while cur.support.kind == "stacked_on":
        if cur.name in seen:
            raise ContractViolation(f"support cycle at {cur.name}")
        seen.add(cur.name)
        cur = scene.object(cur.support.ref)
    return cur.support


def describe(observation: Observation) -> str:
    """Deterministic templated text: one line per object plus a gripper line."""
    lines = []
    for o in sorted(observation.visible_objects, key=lambda o: o.name):
        s = o.support
        if s.kind == "table_zone":
            lines.append(f"{o.name} is on {s.ref}")
        elif s.kind == "stacked_on":
            lines.append(f"{o.name} is atop {s.ref}")
        elif s.kind == "in_container":
            lines.append(f"{o.name} is in {s.ref}")
        else:
            lines.append(f"{o.name} is held by {s.ref}")
    if not lines:
        lines.append("You see nothing.")
    if observation.shared:
        parts = [f"{a} holding {held}" if held else f"{a} empty" for a, held in observation.gripper_summary]
        lines.append("Grippers: " + "; ".join(parts) + ".")
    else:
        if observation.own_gripper:
            lines.append(f"Your gripper is holding {observation.own_gripper}.")
        else:
            lines.append("Your gripper is empty.")
    return "\n".join(lines)


def place_point(task: TaskDef, scene: Scene, target: str) -> tuple[float, float, float]:
    """Task-space drop point for placing onto a zone, stack, or crate slot."""
    if task.container and target in task.container_slots:
        zx, zy, zz = task.zones[target]
        return (zx, zy, zz + CRATE_DROP_HEIGHT)
    if task.board_zone and target == task.board_zone:
        stack = scene.board_stack()
        zx, zy, zz = task.zones[target]
        return (zx, zy, zz + PLACE_CLEARANCE + BLOCK_HEIGHT * len(stack))
    zx, zy, zz = task.zones[target]
    return (zx, zy, zz + PLACE_CLEARANCE)


def pick_point(scene: Scene, obj_name: str) -> tuple[float, float, float]:
    o = scene.object(obj_name)
    return (o.pose[0], o.pose[1], o.pose[2] + PICK_CLEARANCE)


def success(scene: Scene) -> bool:
    task = scene.task
    if task.task_id == "sort_blocks":
        return all(
            scene.object(o).support == Support("table_zone", task.goals[o]) for o in task.objects
        )
    if task.task_id == "stack_order":
        return scene.board_stack() == list(task.recipe)
    if task.task_id == "pack_boxes":
        return all(
            scene.object(o).support == Support("in_container", task.container) for o in task.objects
        )
    raise KeyError(task.task_id)


def apply(scene: Scene, plan: "SubTaskPlan", report: "ValidationReport") -> tuple[Scene, int]:
    """Apply a fully validated plan's symbolic effects; reward 1 iff the task succeeds.

    Rejects plans whose validation report is missing or not all-pass: applying
    an unvalidated plan is a contract violation, not a recoverable failure.
    """
    if report is None or not getattr(report, "ok", False):
        raise ContractViolation("apply() requires a plan that passed full validation")
    task = scene.task
    new = copy.deepcopy(scene)
    new.round_index += 1
    for agent in task.roster:
        action = plan.actions.get(agent)
        if action is None:
            continue
        verb = str(action.verb)
        if verb == "WAIT":
            continue
        if verb == "PICK":
            _do_pick(new, agent, action.args[0])
        elif verb == "PLACE":
            if action.pick_first:
                _do_pick(new, agent, action.args[0])
            _do_place(new, task, agent, action.args[0], action.args[1])
    reward = 1 if success(new) else 0
    return new, reward


def _do_pick(scene: Scene, agent: str, obj_name: str) -> None:
    obj = scene.object(obj_name)
    obj.support = Support("held_by", agent)
    # pose stays at the grasp location until the object is placed


def _do_place(scene: Scene, task: TaskDef, agent: str, obj_name: str, target: str) -> None:
    obj = scene.object(obj_name)
    if task.container and target in task.container_slots:
        zx, zy, zz = task.zones[target]
        obj.support = Support("in_container", task.container)
        obj.pose = (zx, zy, zz + BLOCK_HEIGHT / 2)
    elif task.board_zone and target == task.board_zone:
        stack = [s for s in scene.board_stack() if s != obj_name]
        zx, zy, zz = task.zones[target]
        if stack:
            obj.support = Support("stacked_on", stack[-1])
        else:
            obj.support = Support("table_zone", target)
        obj.pose = (zx, zy, zz + BLOCK_HEIGHT / 2 + BLOCK_HEIGHT * len(stack))
    else:
        zx, zy, zz = task.zones[target]
        obj.support = Support("table_zone", target)
        obj.pose = (zx, zy, zz + BLOCK_HEIGHT / 2)


def check_scene_invariants(scene: Scene) -> list[str]:
    """Invariant audit used by tests; returns human-readable problems."""
    problems = []
    task = scene.task
    for o in scene.objects:
        if not all(lo <= c <= hi for c, lo, hi in zip(o.pose, WORKSPACE_MIN, WORKSPACE_MAX)):
            problems.append(f"{o.name} outside workspace at {o.pose}")
    zones_used: dict[str, str] = {}
    for o in scene.objects:
        if o.support.kind == "table_zone":
            if o.support.ref in zones_used:
                problems.append(f"zone {o.support.ref} shared by {zones_used[o.support.ref]} and {o.name}")
            zones_used[o.support.ref] = o.name
    tops: dict[str, str] = {}
    for o in scene.objects:
        if o.support.kind == "stacked_on":
            if o.support.ref in tops:
                problems.append(f"{o.support.ref} supports both {tops[o.support.ref]} and {o.name}")
            tops[o.support.ref] = o.name
    holders: dict[str, str] = {}
    for o in scene.objects:
        if o.support.kind == "held_by":
            if o.support.ref in holders:
                problems.append(f"{o.support.ref} holds both {holders[o.support.ref]} and {o.name}")
            holders[o.support.ref] = o.name
    for o in scene.objects:
        try:
            _root_support(scene, o)
        except ContractViolation as e:
            problems.append(str(e))
    for agent, zones in scene.reach_regions.items():
        for z in zones:
            if z not in task.zones:
                problems.append(f"reach region {z} of {agent} is not a task zone")
    return problems
