"""Turn-taking dialog orchestration: rounds, replans, budgets, and episode logs.

One environment round: agents exchange messages in fixed round-robin order
until an eligible speaker proposes an EXECUTE plan; the plan runs through the
validation pipeline; on failure the feedback is buffered and a fresh dialog
starts, up to K attempts. A validated plan is motion-planned and applied, the
round's transcript is appended to the history buffer, and the episode
continues until reward or the horizon.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import world
from .agents import (
    AgentProfile,
    BackendMalformed,
    BackendUnavailable,
    QueryContext,
    RoundRecord,
    build_bundle,
    build_profiles,
    central_profile,
    compose_prompt,
    query,
)
from .plan import Feedback, render_feedback, run_pipeline
from .planner import Exhausted, PlanningProblem, Trajectory, goals_from_plan, plan_rrt_connect
from .world import ContractViolation, Scene

PROTOCOL_REMINDER = (
    "Reminder: a final EXECUTE plan is allowed only after every robot has spoken "
    "at least once in the current dialog. Continue the discussion first."
)


@dataclass
class ProtocolParams:
    K: int = 5  # max validation attempts per round
    M: int | None = None  # max messages per dialog; default 2N
    T: int = 15  # episode horizon in rounds
    no_history: bool = False
    no_feedback: bool = False
    planner_iterations: int = 50_000
    planner_time_s: float = 300.0

    def resolved_m(self, n_speakers: int) -> int:
        m = self.M if self.M is not None else 2 * n_speakers
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if m < n_speakers:
            raise ValueError("M must be at least the number of speakers")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        return m


@dataclass
class DialogState:
    roster: tuple[str, ...]
    max_messages: int
    messages: list[tuple[str, str]] = field(default_factory=list)
    spoken: set[str] = field(default_factory=set)


@dataclass
class Ingest:
    kind: str  # continue | proposal | violation
    detail: str = ""


def next_speaker(state: DialogState, roster: tuple[str, ...]) -> str:
    """Fixed round-robin in roster order, resuming after the last speaker."""
    if not state.messages:
        return roster[0]
    last = state.messages[-1][0]
    idx = roster.index(last)
    return roster[(idx + 1) % len(roster)]


def ingest_response(state: DialogState, agent: str, text: str) -> Ingest:
    """Classify a response: proposal, plain message, or protocol violation.

    The message consumes a slot either way. A proposal is any text containing a
    line that starts with EXECUTE; proposing is allowed only once every roster
    agent has spoken in this dialog (counting the current message).
    """
    expected = next_speaker(state, state.roster)
    if agent != expected:
        raise ContractViolation(f"out-of-turn response from {agent}, expected {expected}")
    state.messages.append((agent, text))
    state.spoken.add(agent)
    is_proposal = any(ln.strip().startswith("EXECUTE") for ln in text.splitlines())
    if is_proposal:
        if state.spoken == set(state.roster):
            return Ingest("proposal", text)
        return Ingest("violation", "premature_proposal")
    if len(state.messages) >= state.max_messages:
        return Ingest("violation", "dialog_overflow")
    return Ingest("continue")


@dataclass
class RoundOutcome:
    result: str  # executed | replan_exhausted | protocol_timeout
    plan: object | None = None
    report: object | None = None
    trajectory: Trajectory | None = None
    feedbacks: list[Feedback] = field(default_factory=list)
    transcripts: list[list[tuple[str, str]]] = field(default_factory=list)
    proposal_text: str | None = None
    error: str = ""


class EventSink:
    """Collects episode events; optionally streams them to JSONL and listeners."""

    def __init__(self, path: str | None = None, listener=None):
        self.events: list[dict] = []
        self.path = path
        self.listener = listener
        self._fh = open(path, "w") if path else None

    def emit(self, type_: str, payload, round_: int) -> dict:
        event = {"type": type_, "payload": payload, "round": round_, "timestamp": len(self.events)}
        self.events.append(event)
        if self._fh:
            self._fh.write(json.dumps(event) + "\n")
            self._fh.flush()
        if self.listener:
            self.listener(event)
        return event

    def close(self):
        if self._fh:
            self._fh.close()
            self._fh = None


@dataclass
class EpisodeLog:
    task_id: str
    seed: int
    condition: str
    events: list[dict]
    metrics: dict
    history: list = field(default_factory=list, repr=False)  # RoundRecords, not serialized

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "seed": self.seed,
            "condition": self.condition,
            "events": self.events,
            "metrics": self.metrics,
        }


def _speakers_for(condition: str, task) -> tuple[str, ...]:
    if condition == "central":
        return ("Central",)
    return task.roster


def run_round(
    scene: Scene,
    speakers: tuple[str, ...],
    backends: dict,
    params: ProtocolParams,
    *,
    profiles: dict[str, AgentProfile],
    history: list[RoundRecord],
    current_config: np.ndarray,
    sink: EventSink,
    round_index: int,
    seed: int,
    status_cb=None,
) -> RoundOutcome:
    """One environment round: dialogs and replans until a plan executes or K is spent."""
    task = scene.task
    arms = list(task.arms)
    feedbacks: list[Feedback] = []
    transcripts: list[list[tuple[str, str]]] = []
    reminders: dict[str, str] = {}
    k_budget = 1 if params.no_feedback else params.K
    max_messages = params.resolved_m(len(speakers))

    while len(feedbacks) < k_budget:
        state = DialogState(roster=speakers, max_messages=max_messages)
        sink.emit("dialog", {"attempt": len(feedbacks) + 1, "max_messages": max_messages}, round_index)
        proposal_text: str | None = None
        while True:
            speaker = next_speaker(state, speakers)
            backend = backends[speaker]
            obs_text, observation = _observation_for(scene, speaker)
            bundle = build_bundle(
                task,
                profiles[speaker],
                history,
                feedbacks,
                obs_text,
                no_history=params.no_history,
                no_feedback=params.no_feedback,
            )
            prior_chat = [m for t in transcripts for m in t]
            prompt = compose_prompt(
                bundle, state.messages, prior_chat, reminder=reminders.pop(speaker, "")
            )
            eligible = (state.spoken | {speaker}) == set(speakers)
            ctx = QueryContext(
                system=f"You are {speaker}, one robot arm in a multi-robot tabletop team.",
                user=prompt,
                agent=speaker,
                scene=scene,
                observation=observation,
                feedback=list(feedbacks),
                dialog=list(state.messages),
                roster=speakers,
                eligible=eligible,
                current_config=current_config,
                round_index=round_index,
            )
            if status_cb:
                status_cb("awaiting", speaker)
            try:
                text = query(backend, ctx)
            except (BackendUnavailable, BackendMalformed) as e:
                transcripts.append(list(state.messages))
                return RoundOutcome(
                    "protocol_timeout",
                    feedbacks=feedbacks,
                    transcripts=transcripts,
                    error=str(e),
                )
            outcome = ingest_response(state, speaker, text)
            sink.emit("message", {"speaker": speaker, "text": text}, round_index)
            if outcome.kind == "proposal":
                proposal_text = text
                break
            if outcome.kind == "violation" and outcome.detail == "premature_proposal":
                reminders[speaker] = PROTOCOL_REMINDER
                sink.emit("violation", {"agent": speaker, "kind": "premature_proposal"}, round_index)
                if len(state.messages) >= state.max_messages:
                    sink.emit("violation", {"kind": "dialog_overflow"}, round_index)
                    break
                continue
            if outcome.kind == "violation" and outcome.detail == "dialog_overflow":
                sink.emit("violation", {"kind": "dialog_overflow"}, round_index)
                break

        transcripts.append(list(state.messages))
        if proposal_text is None:
            fb = Feedback(
                text="This dialog exceeded its message budget without a proposal.",
                structured={"stage": "protocol", "details": ["dialog_overflow"]},
            )
            feedbacks.append(fb)
            sink.emit("feedback", fb.to_dict(), round_index)
            continue

        if status_cb:
            status_cb("planning", None)
        plan, report = run_pipeline(proposal_text, scene, arms, current_config=current_config, seed=seed)
        sink.emit(
            "plan",
            {"text": proposal_text, "report": report.to_dict(), "proposer": state.messages[-1][0]},
            round_index,
        )
        if not report.ok:
            fb = render_feedback(report)
            feedbacks.append(fb)
            sink.emit("feedback", fb.to_dict(), round_index)
            continue

        goals = goals_from_plan(plan, scene, arms, report, current_config)
        problem = PlanningProblem(
            arms=arms,
            obstacles=list(scene.fixtures),
            x_init=current_config,
            goals=goals,
            iteration_budget=params.planner_iterations,
            time_budget_s=params.planner_time_s,
            rng_seed=seed * 1000 + round_index,
        )
        result = plan_rrt_connect(problem)
        if isinstance(result, Exhausted):
            fb = Feedback(
                text="This proposed plan failed: motion: no collision-free trajectory found within budget.",
                structured={"stage": "motion", "details": ["planner_exhausted"], "stats": result.stats},
            )
            feedbacks.append(fb)
            sink.emit("feedback", fb.to_dict(), round_index)
            continue
        sink.emit(
            "trajectory",
            {
                # wall_time is intentionally omitted: logs are byte-reproducible
                "stats": {"iterations": result.stats["iterations"], "nodes": result.stats["nodes"]},
                "n_waypoints": len(result.waypoints),
            },
            round_index,
        )
        return RoundOutcome(
            "executed",
            trajectory=result,
            feedbacks=feedbacks,
            transcripts=transcripts,
            proposal_text=proposal_text,
            plan=plan,
            report=report,
        )
    return RoundOutcome("replan_exhausted", feedbacks=feedbacks, transcripts=transcripts)


def _observation_for(scene: Scene, speaker: str):
    if speaker == "Central":
        if scene.task.shared_observation:
            obs = world.observe(scene, scene.task.roster[0])
            return world.describe(obs), obs
        # asymmetric tasks: the central planner still sees everything
        lines = []
        for o in sorted(scene.objects, key=lambda o: o.name):
            s = o.support
            rel = {"table_zone": "on", "stacked_on": "atop", "in_container": "in"}.get(s.kind, "held by")
            lines.append(f"{o.name} is {rel} {s.ref}")
        grippers = "; ".join(
            f"{a} holding {scene.held_by(a)}" if scene.held_by(a) else f"{a} empty"
            for a in scene.task.roster
        )
        lines.append("Grippers: " + grippers + ".")
        return "\n".join(lines), None
    obs = world.observe(scene, speaker)
    return world.describe(obs), obs


def run_episode(
    task_id: str,
    backends: dict,
    params: ProtocolParams | None = None,
    seed: int = 0,
    condition: str = "dialog",
    log_path: str | None = None,
    listener=None,
    status_cb=None,
) -> EpisodeLog:
    """Full episode loop: rounds until reward > 0 or the horizon runs out."""
    params = params or ProtocolParams()
    task = world.TASKS[task_id]
    speakers = _speakers_for(condition, task)
    missing = [s for s in speakers if s not in backends]
    if missing:
        raise ValueError(f"no backend configured for: {', '.join(missing)}")

    profiles = build_profiles(task)
    if condition == "central":
        profiles = {"Central": central_profile(task)}

    horizon = params.T * 2 if condition == "no_feedback" or params.no_feedback else params.T
    eff_params = ProtocolParams(
        K=params.K,
        M=params.M,
        T=horizon,
        no_history=params.no_history or condition == "no_history",
        no_feedback=params.no_feedback or condition == "no_feedback",
        planner_iterations=params.planner_iterations,
        planner_time_s=params.planner_time_s,
    )

    scene = world.reset(task_id, seed)
    current_config = np.array([world.HOME_CONFIG] * len(task.arms))
    sink = EventSink(log_path, listener)
    sink.emit("scene", scene.to_dict(), 0)

    history: list[RoundRecord] = []
    success = False
    executed_rounds = 0
    replans_per_round: list[int] = []
    failed = False

    t = 0
    while t < horizon:
        outcome = run_round(
            scene,
            speakers,
            backends,
            eff_params,
            profiles=profiles,
            history=history,
            current_config=current_config,
            sink=sink,
            round_index=t,
            seed=seed,
            status_cb=status_cb,
        )
        replans_per_round.append(1 + len(outcome.feedbacks))
        transcript = [m for tr in outcome.transcripts for m in tr]
        if outcome.result == "protocol_timeout":
            sink.emit("error", {"kind": "protocol_timeout", "detail": outcome.error}, t)
            history.append(RoundRecord(transcript, None))
            failed = True
            break
        if outcome.result == "executed":
            if status_cb:
                status_cb("executing", None)
            scene, reward = world.apply(scene, outcome.plan, outcome.report)
            executed_rounds += 1
            sink.emit("reward", {"value": reward}, t)
            history.append(RoundRecord(transcript, outcome.plan.serialize(task.roster)))
            if reward > 0:
                success = True
                t += 1
                break
        else:
            history.append(RoundRecord(transcript, None))
        t += 1

    metrics = {
        "success": success,
        "steps": executed_rounds,
        "rounds": t,
        "mean_replans": (sum(replans_per_round) / len(replans_per_round)) if replans_per_round else 0.0,
        "failed_on_error": failed,
    }
    sink.emit("metrics", metrics, t)
    sink.close()
    if status_cb:
        status_cb("done", success)
    return EpisodeLog(
        task_id=task_id, seed=seed, condition=condition,
        events=sink.events, metrics=metrics, history=history,
    )


def recompute_metrics(events: list[dict]) -> dict:
    """Recompute episode metrics from raw events (independent of the runner)."""
    rounds_seen: dict[int, dict] = {}
    success = False
    for e in events:
        r = e["round"]
        if e["type"] in ("plan", "feedback", "reward", "message"):
            rounds_seen.setdefault(r, {"feedbacks": 0, "executed": False})
        if e["type"] == "feedback":
            rounds_seen[r]["feedbacks"] += 1
        if e["type"] == "reward":
            rounds_seen[r]["executed"] = True
            if e["payload"]["value"] > 0:
                success = True
    executed = sum(1 for v in rounds_seen.values() if v["executed"])
    replans = [1 + v["feedbacks"] for v in rounds_seen.values()]
    return {
        "success": success,
        "steps": executed,
        "rounds": len(rounds_seen),
        "mean_replans": (sum(replans) / len(replans)) if replans else 0.0,
    }
