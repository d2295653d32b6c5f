"""Proposal parsing and the ordered validation pipeline.

A proposal is validated in five stages -- parse, task constraints, IK,
collision, waypoints -- and each stage runs only if every earlier stage
passed. Failures are data (reports and feedback), never exceptions, so the
dialog loop can hand them back to the agents.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .actions import ActionSpec, SubTaskPlan, Verb, WaypointPath
from .kinematics import ArmModel, collides, forward_kinematics, solve_ik_clear
from .world import (
    HOME_CONFIG,
    Scene,
    Support,
    TaskDef,
    pick_point,
    place_point,
)

STAGES = ("parse", "task_constraints", "ik", "collision", "waypoints")

MAX_WAYPOINT_GAP = 0.25  # meters
EVEN_SPACING_RATIO = 1.6  # max gap over mean gap
ENDPOINT_TOL = 0.02  # waypoint endpoints vs gripper/target


def fmt_point(p) -> str:
    return f"({p[0]:.2f},{p[1]:.2f},{p[2]:.2f})"


@dataclass(frozen=True)
class ParseError:
    kind: str  # missing_keyword | unknown_agent | bad_arity | malformed_path | duplicate_agent
    details: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.details}"


@dataclass(frozen=True)
class TaskGrammar:
    roster: tuple[str, ...]
    combined: bool  # accept "PICK x PLACE y" single-line actions
    allow_paths: bool

    @staticmethod
    def for_task(task: TaskDef) -> "TaskGrammar":
        return TaskGrammar(
            roster=task.roster,
            combined=task.combined_grammar,
            allow_paths=task.waypoints_required,
        )


_NAME_LINE = re.compile(r"^NAME\s+(\S+)\s+ACTION\s+(.+)$")
_POINT = re.compile(r"\(\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\)")


def parse_proposal(text: str, grammar: TaskGrammar) -> SubTaskPlan | ParseError:
    """Parse an EXECUTE proposal into a plan, or report the first defect."""
    lines = [ln.strip() for ln in text.splitlines()]
    try:
        start = next(i for i, ln in enumerate(lines) if ln.startswith("EXECUTE"))
    except StopIteration:
        return ParseError("missing_keyword", "response contains no EXECUTE line")

    plan = SubTaskPlan()
    for ln in lines[start + 1 :]:
        if not ln:
            continue
        m = _NAME_LINE.match(ln)
        if not m:
            return ParseError("missing_keyword", f"expected 'NAME <agent> ACTION ...', got {ln!r}")
        agent, rest = m.group(1), m.group(2).strip()
        if agent not in grammar.roster:
            return ParseError("unknown_agent", f"{agent} is not part of this task")
        if agent in plan.actions:
            return ParseError("duplicate_agent", f"{agent} appears more than once")
        parsed = _parse_action(rest, grammar, agent)
        if isinstance(parsed, ParseError):
            return parsed
        plan.actions[agent] = parsed

    missing = [a for a in grammar.roster if a not in plan.actions]
    if missing:
        return ParseError("missing_keyword", "no action given for: " + ", ".join(missing))
    return plan


def _parse_action(rest: str, grammar: TaskGrammar, agent: str) -> ActionSpec | ParseError:
    waypoints = None
    if " PATH " in rest or rest.endswith(" PATH"):
        head, _, tail = rest.partition(" PATH ")
        if not grammar.allow_paths:
            return ParseError("malformed_path", f"{agent}: PATH is not used in this task")
        pts = [(float(a), float(b), float(c)) for a, b, c in _POINT.findall(tail)]
        if len(pts) < 2:
            return ParseError("malformed_path", f"{agent}: PATH needs at least 2 (x,y,z) points")
        waypoints = WaypointPath(tuple(pts))
        rest = head.strip()

    tokens = rest.split()
    verb = tokens[0] if tokens else ""
    args = tokens[1:]
    if verb == "WAIT":
        if args:
            return ParseError("bad_arity", f"{agent}: WAIT takes no arguments")
        if waypoints is not None:
            return ParseError("malformed_path", f"{agent}: WAIT does not take a PATH")
        return ActionSpec(Verb.WAIT)
    if verb == "PICK":
        if grammar.combined:
            if len(args) == 3 and args[1] == "PLACE":
                return ActionSpec(Verb.PLACE, (args[0], args[2]), waypoints, pick_first=True)
            return ParseError(
                "bad_arity", f"{agent}: this task uses 'PICK <object> PLACE <target>'"
            )
        if len(args) != 1:
            return ParseError("bad_arity", f"{agent}: PICK takes exactly one object")
        return ActionSpec(Verb.PICK, (args[0],), waypoints)
    if verb == "PLACE":
        if grammar.combined:
            return ParseError(
                "bad_arity", f"{agent}: this task uses 'PICK <object> PLACE <target>'"
            )
        if len(args) != 2:
            return ParseError("bad_arity", f"{agent}: PLACE takes an object and a target")
        return ActionSpec(Verb.PLACE, (args[0], args[1]), waypoints)
    return ParseError("bad_arity", f"{agent}: unknown verb {verb!r}")


# ---------------------------------------------------------------------------
# Validation


@dataclass
class StageResult:
    stage: str
    status: str  # passed | failed | not_run
    details: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"stage": self.stage, "status": self.status, "details": list(self.details)}


@dataclass
class ValidationReport:
    stages: list[StageResult]
    # IK solutions cached for the motion planner
    goal_configs: dict[str, np.ndarray] = field(default_factory=dict)
    pick_configs: dict[str, np.ndarray] = field(default_factory=dict)
    waypoint_configs: dict[str, list[np.ndarray]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(s.status == "passed" for s in self.stages)

    @property
    def first_failure(self) -> tuple[str, list[str]] | None:
        for s in self.stages:
            if s.status == "failed":
                return (s.stage, s.details)
        return None

    def stage(self, name: str) -> StageResult:
        for s in self.stages:
            if s.stage == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "stages": [s.to_dict() for s in self.stages],
            "first_failure": list(self.first_failure) if self.first_failure else None,
        }


def _fresh_stages(parse_status: str = "passed", parse_details: list[str] | None = None) -> list[StageResult]:
    stages = [StageResult("parse", parse_status, parse_details or [])]
    later = "not_run" if parse_status == "failed" else "not_run"
    for name in STAGES[1:]:
        stages.append(StageResult(name, later))
    return stages


def report_for_parse_error(err: ParseError) -> ValidationReport:
    stages = _fresh_stages("failed", [str(err)])
    return ValidationReport(stages)


def validate(
    plan: SubTaskPlan,
    scene: Scene,
    arms: list[ArmModel],
    current_config=None,
    seed: int = 0,
) -> ValidationReport:
    """Run stages 2..5 on a parsed plan; stops recording at the first failing stage.

    ``current_config`` is the composite joint configuration the arms hold when
    the plan is proposed (home pose by default); WAIT agents keep it, and
    waypoint paths must start at its end-effector positions.
    """
    task = scene.task
    if current_config is None:
        current_config = np.array([HOME_CONFIG] * len(arms))
    current_config = np.asarray(current_config, dtype=float)
    report = ValidationReport(_fresh_stages())

    problems = _check_task_constraints(task, scene, plan)
    stage = report.stage("task_constraints")
    if problems:
        stage.status = "failed"
        stage.details = problems
        return report
    stage.status = "passed"

    ik_problems = _solve_action_targets(task, scene, arms, plan, report, seed)
    stage = report.stage("ik")
    if ik_problems:
        stage.status = "failed"
        stage.details = ik_problems
        return report
    stage.status = "passed"

    composite = _goal_composite(task, arms, plan, report, current_config)
    col = collides(arms, composite, scene.fixtures)
    stage = report.stage("collision")
    if col.pairs:
        stage.status = "failed"
        stage.details = [f"{a} and {b} would collide" for a, b in col.pairs]
        return report
    stage.status = "passed"

    stage = report.stage("waypoints")
    if not task.waypoints_required:
        stage.status = "passed"
        return report
    wp_problems = _check_waypoints(task, scene, arms, plan, report, current_config, seed)
    if wp_problems:
        stage.status = "failed"
        stage.details = wp_problems
        return report
    stage.status = "passed"
    return report


def _agent_actions(task: TaskDef, plan: SubTaskPlan):
    return [(a, plan.actions[a]) for a in task.roster if a in plan.actions]


def _check_task_constraints(task: TaskDef, scene: Scene, plan: SubTaskPlan) -> list[str]:
    problems: list[str] = []
    targeted_objects: dict[str, str] = {}
    targeted_places: dict[str, str] = {}
    board_places = 0

    for agent, action in _agent_actions(task, plan):
        if action.verb is Verb.WAIT:
            continue
        obj_name = action.args[0]
        picks = action.verb is Verb.PICK or action.pick_first

        if obj_name not in task.objects:
            problems.append(f"{agent}: there is no object named {obj_name}")
            continue
        if obj_name in targeted_objects:
            problems.append(f"{obj_name} is targeted by both {targeted_objects[obj_name]} and {agent}")
            continue
        targeted_objects[obj_name] = agent

        obj = scene.object(obj_name)
        if picks:
            if scene.held_by(agent):
                problems.append(f"{agent}'s gripper is already holding {scene.held_by(agent)}")
            if obj.support.kind == "held_by":
                problems.append(f"{obj_name} is already held by {obj.support.ref}")
            elif obj.support.kind == "in_container":
                problems.append(f"{obj_name} is already inside the {obj.support.ref}")
            elif scene.stacked_on(obj_name):
                problems.append(f"{obj_name} has {scene.stacked_on(obj_name)} on top of it")
            else:
                root = obj.support
                if root.kind == "stacked_on":
                    # picking from the top of the board stack is allowed when reachable
                    root = _root_zone(scene, obj_name)
                if root.kind == "table_zone" and root.ref not in task.reach[agent]:
                    problems.append(f"{agent} cannot reach {root.ref} to pick {obj_name}")
        if action.verb is Verb.PLACE:
            if not action.pick_first and obj.support != Support("held_by", agent):
                problems.append(f"{agent} is not holding {obj_name}")
            target = action.args[1]
            if target not in task.zones:
                problems.append(f"{agent}: there is no target named {target}")
                continue
            if target not in task.reach[agent]:
                problems.append(f"{agent} cannot reach {target}")
            if target in targeted_places:
                problems.append(f"{target} is targeted by both {targeted_places[target]} and {agent}")
            targeted_places[target] = agent
            problems.extend(_check_place_target(task, scene, agent, obj_name, target))
            if task.board_zone and target == task.board_zone:
                board_places += 1

        if task.waypoints_required and action.waypoints is None:
            problems.append(f"{agent} must include a PATH of waypoints for {action.verb}")

    if task.board_zone and board_places > 1:
        problems.append("at most one block may be placed on the board per round")
    return problems


def _root_zone(scene: Scene, obj_name: str) -> Support:
    cur = scene.object(obj_name)
    while cur.support.kind == "stacked_on":
        cur = scene.object(cur.support.ref)
    return cur.support


def _check_place_target(task: TaskDef, scene: Scene, agent: str, obj_name: str, target: str) -> list[str]:
    problems = []
    if task.task_id == "sort_blocks":
        occ = scene.zone_occupant(target)
        if occ and occ != obj_name:
            problems.append(f"{target} is already occupied by {occ}")
    elif task.task_id == "stack_order":
        if target == task.board_zone:
            stack = scene.board_stack()
            expected = task.recipe[len(stack)] if len(stack) < len(task.recipe) else None
            if expected is None:
                problems.append("the stack is already complete")
            elif obj_name != expected:
                problems.append(f"{obj_name} is not the next block in the stacking order, {expected} is")
        else:
            occ = scene.zone_occupant(target)
            if occ and occ != obj_name:
                problems.append(f"{target} is already occupied by {occ}")
    elif task.task_id == "pack_boxes":
        if target not in task.container_slots:
            problems.append(f"{target} is not a crate slot")
        else:
            occ = _slot_occupant(task, scene, target)
            if occ and occ != obj_name:
                problems.append(f"{target} is already occupied by {occ}")
    return problems


def _slot_occupant(task: TaskDef, scene: Scene, slot: str) -> str:
    zx, zy, _ = task.zones[slot]
    for o in scene.objects:
        if o.support.kind == "in_container" and (o.pose[0], o.pose[1]) == (zx, zy):
            return o.name
    return ""


def _action_targets(task: TaskDef, scene: Scene, agent: str, action: ActionSpec):
    """Labeled task-space targets for an action: [(label, point), ...], final last."""
    if action.verb is Verb.WAIT:
        return []
    if action.verb is Verb.PICK:
        return [("pick", pick_point(scene, action.args[0]))]
    targets = []
    if action.pick_first:
        targets.append(("pick", pick_point(scene, action.args[0])))
    targets.append(("place", place_point(task, scene, action.args[1])))
    return targets


def _solve_action_targets(task, scene, arms, plan, report: ValidationReport, seed: int) -> list[str]:
    problems = []
    for agent, action in _agent_actions(task, plan):
        arm = task.arm_for(agent)
        for label, point in _action_targets(task, scene, agent, action):
            q = solve_ik_clear(arm, point, scene.fixtures, seed=seed)
            if q is None:
                problems.append(f"{agent}: target {fmt_point(point)} is not reachable")
                continue
            if label == "pick":
                report.pick_configs[agent] = q
            report.goal_configs[agent] = q  # final target overwrites
    return problems


def _goal_composite(task, arms, plan, report: ValidationReport, current_config) -> np.ndarray:
    composite = np.array(current_config, dtype=float, copy=True)
    for i, agent in enumerate(task.roster):
        q = report.goal_configs.get(agent)
        if q is not None:
            composite[i] = q
    return composite


def _check_waypoints(task, scene, arms, plan, report: ValidationReport, current_config, seed) -> list[str]:
    problems = []
    per_agent_configs: dict[str, list[np.ndarray]] = {}

    for agent, action in _agent_actions(task, plan):
        if action.verb is Verb.WAIT or action.waypoints is None:
            continue
        arm = task.arm_for(agent)
        idx = task.roster.index(agent)
        pts = action.waypoints.points

        ee, _ = forward_kinematics(arm, current_config[idx])
        if float(np.linalg.norm(np.asarray(pts[0]) - ee)) > ENDPOINT_TOL:
            problems.append(
                f"{agent}: the path must start at the current gripper position {fmt_point(ee)}"
            )
        final = _action_targets(task, scene, agent, action)[-1][1]
        if float(np.linalg.norm(np.asarray(pts[-1]) - np.asarray(final))) > ENDPOINT_TOL:
            problems.append(f"{agent}: the path must end at the action target {fmt_point(final)}")

        gaps = action.waypoints.gaps()
        mean_gap = sum(gaps) / len(gaps)
        for i, g in enumerate(gaps):
            if g > MAX_WAYPOINT_GAP or (mean_gap > 0 and g > EVEN_SPACING_RATIO * mean_gap):
                problems.append(
                    "steps in this path are not exactly evenly spaced: "
                    f"{agent}: {fmt_point(pts[i])}, {fmt_point(pts[i + 1])}"
                )

        configs = []
        for i, p in enumerate(pts):
            q = solve_ik_clear(arm, p, scene.fixtures, seed=seed)
            if q is None:
                problems.append(f"{agent}: waypoint {i} {fmt_point(p)} is not reachable")
            else:
                configs.append(q)
        if len(configs) == len(pts):
            per_agent_configs[agent] = configs

    if problems:
        return problems

    # per-index composite collision check; shorter paths hold their final config
    n_steps = max((len(c) for c in per_agent_configs.values()), default=0)
    for k in range(n_steps):
        composite = np.array(current_config, dtype=float, copy=True)
        for agent, configs in per_agent_configs.items():
            composite[task.roster.index(agent)] = configs[min(k, len(configs) - 1)]
        col = collides(arms, composite, scene.fixtures)
        if col.pairs:
            pairs = ", ".join(f"{a} and {b}" for a, b in col.pairs)
            problems.append(f"waypoint {k} causes collision: {pairs}")
    if not problems:
        report.waypoint_configs.update(per_agent_configs)
    return problems


# ---------------------------------------------------------------------------
# Feedback


@dataclass(frozen=True)
class Feedback:
    text: str
    structured: dict

    def to_dict(self) -> dict:
        return {"text": self.text, "structured": self.structured}


def render_feedback(report: ValidationReport) -> Feedback:
    """Deterministic failure text re-injected into the agents' prompts."""
    failure = report.first_failure
    if failure is None:
        raise ValueError("render_feedback called on an all-pass report")
    stage, details = failure
    text = f"This proposed plan failed: {stage}: " + "; ".join(details)
    return Feedback(text=text, structured={"stage": stage, "details": list(details)})


def run_pipeline(
    text: str,
    scene: Scene,
    arms: list[ArmModel],
    current_config=None,
    seed: int = 0,
) -> tuple[SubTaskPlan | None, ValidationReport]:
    """Parse then validate; the report's parse stage records the outcome."""
    grammar = TaskGrammar.for_task(scene.task)
    parsed = parse_proposal(text, grammar)
    if isinstance(parsed, ParseError):
        return None, report_for_parse_error(parsed)
    report = validate(parsed, scene, arms, current_config=current_config, seed=seed)
    return parsed, report
