"""Shared action vocabulary: verbs, waypoint paths, and per-round sub-task plans."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Verb(str, Enum):
    PICK = "PICK"
    PLACE = "PLACE"
    WAIT = "WAIT"

    def __str__(self) -> str:  # str(Verb.PICK) == "PICK"
        return self.value


@dataclass(frozen=True)
class WaypointPath:
    """Ordered task-space points; first is the current gripper position, last the action target."""

    points: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("a waypoint path needs at least 2 points")
        if not all(np.isfinite(p).all() for p in map(np.asarray, self.points)):
            raise ValueError("waypoint coordinates must be finite")

    def gaps(self) -> list[float]:
        pts = np.asarray(self.points, dtype=float)
        return [float(np.linalg.norm(b - a)) for a, b in zip(pts, pts[1:])]

    def to_list(self) -> list[list[float]]:
        return [list(p) for p in self.points]


@dataclass(frozen=True)
class ActionSpec:
    """One agent's action for the round.

    ``pick_first`` marks an action desugared from the combined
    ``PICK <object> PLACE <target>`` line: the agent grabs the object and sets
    it down at the target within the same round.
    """

    verb: Verb
    args: tuple[str, ...] = ()
    waypoints: WaypointPath | None = None
    pick_first: bool = False

    def __post_init__(self):
        arity = {Verb.PICK: 1, Verb.PLACE: 2, Verb.WAIT: 0}[self.verb]
        if len(self.args) != arity:
            raise ValueError(f"{self.verb} takes {arity} argument(s), got {self.args}")
        if self.pick_first and self.verb is not Verb.PLACE:
            raise ValueError("pick_first only applies to PLACE")

    def to_dict(self) -> dict:
        return {
            "verb": self.verb.value,
            "args": list(self.args),
            "waypoints": self.waypoints.to_list() if self.waypoints else None,
            "pick_first": self.pick_first,
        }


def _fmt_point(p: tuple[float, float, float]) -> str:
    return f"({p[0]:.2f},{p[1]:.2f},{p[2]:.2f})"


def action_text(action: ActionSpec) -> str:
    if action.verb is Verb.WAIT:
        body = "WAIT"
    elif action.verb is Verb.PICK:
        body = f"PICK {action.args[0]}"
    elif action.pick_first:
        body = f"PICK {action.args[0]} PLACE {action.args[1]}"
    else:
        body = f"PLACE {action.args[0]} {action.args[1]}"
    if action.waypoints is not None:
        body += " PATH [" + ", ".join(_fmt_point(p) for p in action.waypoints.points) + "]"
    return body


@dataclass
class SubTaskPlan:
    """Exactly one action per participating agent."""

    actions: dict[str, ActionSpec] = field(default_factory=dict)

    def serialize(self, roster: tuple[str, ...] | None = None) -> str:
        """Canonical proposal text (agents in roster order)."""
        names = list(roster) if roster else sorted(self.actions)
        lines = ["EXECUTE"]
        for name in names:
            lines.append(f"NAME {name} ACTION {action_text(self.actions[name])}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {agent: a.to_dict() for agent, a in self.actions.items()}
