"""HTTP service hosting live episodes for human-in-the-loop runs and the UI.

Endpoints (JSON over HTTP, no auth -- local tool):

* ``POST /episodes``                   create an episode, returns its handle
* ``GET  /episodes/{id}``              status plus latest scene/grid snapshot
* ``GET  /episodes/{id}/events``       incremental events, long-poll via ?since=n
* ``POST /episodes/{id}/human``        submit the human agent's message

Episode state is only ever mutated by the episode driver thread running the
dialog loop; the HTTP layer reads events under a lock and delivers human
messages through the blocking human backend.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from . import gridpath, world
from .agents import HumanBackend, make_backend
from .dialog import EventSink, ProtocolParams, run_episode

LONG_POLL_MAX_S = 25.0


@dataclass
class EpisodeRuntime:
    id: str
    kind: str  # "arm" | "grid"
    task_id: str
    roster: tuple[str, ...]
    human_agent: str | None
    backends: dict
    events: list[dict] = field(default_factory=list)
    status: dict = field(default_factory=lambda: {"state": "created"})
    snapshot: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)
    cond: threading.Condition = None  # type: ignore[assignment]
    thread: threading.Thread | None = None

    def __post_init__(self):
        self.cond = threading.Condition(self.lock)

    def push_event(self, event: dict) -> None:
        with self.cond:
            self.events.append(event)
            if event["type"] == "scene":
                self.snapshot = event["payload"]
            self.cond.notify_all()

    def set_status(self, status: dict) -> None:
        with self.cond:
            self.status = status
            self.cond.notify_all()


class EpisodeManager:
    def __init__(self, log_dir: str = "service_logs"):
        self.log_dir = log_dir
        self.episodes: dict[str, EpisodeRuntime] = {}
        self._lock = threading.Lock()
        os.makedirs(log_dir, exist_ok=True)

    def create_episode(self, spec: dict) -> EpisodeRuntime:
        task_id = spec.get("task")
        roster_spec: dict = spec.get("roster", {})
        humans = [a for a, cfg in roster_spec.items() if cfg.get("kind") == "human"]
        if len(humans) > 1:
            raise ValueError("at most one human agent per episode")

        eid = uuid.uuid4().hex[:12]
        if task_id == "grid":
            runtime = self._create_grid(eid, spec, roster_spec, humans)
        else:
            runtime = self._create_arm(eid, spec, roster_spec, humans)
        with self._lock:
            self.episodes[eid] = runtime
        runtime.thread.start()
        return runtime

    def _backends_for(self, roster_spec: dict) -> dict:
        backends = {}
        for agent, cfg in roster_spec.items():
            if cfg.get("kind") == "human":
                backends[agent] = HumanBackend(cfg.get("channel_id", agent))
            else:
                backends[agent] = make_backend(cfg)
        return backends

    def _create_arm(self, eid: str, spec: dict, roster_spec: dict, humans: list[str]) -> EpisodeRuntime:
        task_id = spec.get("task")
        if task_id not in world.TASKS:
            raise ValueError(f"unknown task {task_id!r}")
        task = world.TASKS[task_id]
        missing = [a for a in task.roster if a not in roster_spec]
        if missing:
            raise ValueError(f"roster missing backends for: {', '.join(missing)}")
        backends = self._backends_for(roster_spec)
        params_spec = spec.get("params", {})
        params = ProtocolParams(
            K=int(params_spec.get("K", 5)),
            M=params_spec.get("M"),
            T=int(params_spec.get("T", 15)),
        )
        seed = int(spec.get("seed", 0))
        condition = spec.get("condition", "dialog")
        runtime = EpisodeRuntime(
            id=eid, kind="arm", task_id=task_id, roster=task.roster,
            human_agent=humans[0] if humans else None, backends=backends,
        )

        def status_cb(state, detail):
            if state == "awaiting":
                agent = detail
                kind = "awaiting_human" if isinstance(backends.get(agent), HumanBackend) else "awaiting_agent"
                runtime.set_status({"state": kind, "agent": agent})
            elif state == "planning":
                runtime.set_status({"state": "planning"})
            elif state == "executing":
                runtime.set_status({"state": "executing"})
            elif state == "done":
                runtime.set_status({"state": "done", "success": bool(detail)})

        log_path = os.path.join(self.log_dir, f"{eid}.jsonl")

        def drive():
            try:
                run_episode(
                    task_id, backends, params, seed=seed, condition=condition,
                    log_path=log_path, listener=runtime.push_event, status_cb=status_cb,
                )
            except Exception as e:
                runtime.push_event({"type": "error", "payload": {"detail": str(e)}, "round": -1, "timestamp": len(runtime.events)})
                runtime.set_status({"state": "done", "success": False})

        runtime.thread = threading.Thread(target=drive, daemon=True)
        return runtime

    def _create_grid(self, eid: str, spec: dict, roster_spec: dict, humans: list[str]) -> EpisodeRuntime:
        grid_spec = spec.get("grid", {})
        instance = gridpath.generate_instance(
            seed=int(spec.get("seed", 0)),
            size=tuple(grid_spec.get("size", (10, 10, 10))),
            n_obstacles=int(grid_spec.get("n_obstacles", 20)),
            n_agents=int(grid_spec.get("n_agents", 4)),
        )
        if not roster_spec:
            roster_spec = {"planner": {"kind": "scripted", "policy_id": "oracle:grid"}}
        planner_name = next(iter(roster_spec))
        backends = self._backends_for(roster_spec)
        backend = backends[planner_name]
        max_attempts = int(spec.get("max_attempts", 5))
        runtime = EpisodeRuntime(
            id=eid, kind="grid", task_id="grid", roster=(planner_name,),
            human_agent=humans[0] if humans else None, backends=backends,
        )
        log_path = os.path.join(self.log_dir, f"{eid}.jsonl")

        def drive():
            sink = EventSink(log_path, runtime.push_event)
            sink.emit("scene", {"task_id": "grid", "grid": instance.to_dict()}, 0)
            awaiting = "awaiting_human" if isinstance(backend, HumanBackend) else "awaiting_agent"

            class _StatusBackend:
                def respond(self, ctx):
                    runtime.set_status({"state": awaiting, "agent": planner_name})
                    text = backend.respond(ctx)
                    runtime.set_status({"state": "planning"})
                    return text

            attempt_no = [0]

            def on_attempt(attempt):
                i = attempt_no[0]
                attempt_no[0] += 1
                sink.emit("message", {"speaker": planner_name, "text": attempt.response}, i)
                sink.emit(
                    "plan",
                    {
                        "paths": gridpath.multipath_to_dict(attempt.paths) if attempt.paths else None,
                        "report": attempt.report_dict,
                        "parse_error": attempt.parse_error,
                    },
                    i,
                )
                if attempt.feedback:
                    sink.emit(
                        "feedback",
                        {"text": attempt.feedback, "structured": attempt.report_dict or {}},
                        i,
                    )

            try:
                log = gridpath.run_grid_attempts(
                    instance, _StatusBackend(), max_attempts=max_attempts, on_attempt=on_attempt
                )
                sink.emit("reward", {"value": 1 if log.success else 0}, log.n_attempts)
                sink.emit(
                    "metrics",
                    {"success": log.success, "attempts": log.n_attempts},
                    log.n_attempts,
                )
                runtime.set_status({"state": "done", "success": log.success})
            except Exception as e:
                sink.emit("error", {"detail": str(e)}, -1)
                runtime.set_status({"state": "done", "success": False})
            finally:
                sink.close()

        runtime.thread = threading.Thread(target=drive, daemon=True)
        return runtime

    def get(self, eid: str) -> EpisodeRuntime | None:
        with self._lock:
            return self.episodes.get(eid)

    def get_events(self, eid: str, since: int, timeout: float) -> dict | None:
        runtime = self.get(eid)
        if runtime is None:
            return None
        deadline = timeout
        with runtime.cond:
            if len(runtime.events) <= since and deadline > 0:
                runtime.cond.wait(timeout=min(deadline, LONG_POLL_MAX_S))
            events = runtime.events[since:]
            return {
                "events": events,
                "next": since + len(events),
                "status": dict(runtime.status),
            }

    def post_human(self, eid: str, agent: str, text: str) -> tuple[int, dict]:
        runtime = self.get(eid)
        if runtime is None:
            return 404, {"error": "unknown episode"}
        with runtime.lock:
            status = dict(runtime.status)
        if status.get("state") != "awaiting_human" or status.get("agent") != agent:
            return 409, {"error": "not this agent's turn", "status": status}
        backend = runtime.backends.get(agent)
        if not isinstance(backend, HumanBackend):
            return 409, {"error": f"{agent} is not a human agent", "status": status}
        backend.deliver(text)
        return 200, {"ok": True}


class _Handler(BaseHTTPRequestHandler):
    manager: EpisodeManager = None  # type: ignore[assignment]
    static_dir: str | None = None

    def log_message(self, fmt, *args):  # quiet
        pass

    def _json(self, code: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0") or "0")
        if not length:
            return {}
        try:
            return json.loads(self.rfile.read(length).decode())
        except json.JSONDecodeError:
            return {}

    def do_POST(self):
        parts = [p for p in urlparse(self.path).path.split("/") if p]
        if parts == ["episodes"]:
            try:
                runtime = self.manager.create_episode(self._read_body())
            except ValueError as e:
                self._json(400, {"error": str(e)})
                return
            self._json(200, {"id": runtime.id, "status": runtime.status})
            return
        if len(parts) == 3 and parts[0] == "episodes" and parts[2] == "human":
            body = self._read_body()
            code, payload = self.manager.post_human(parts[1], body.get("agent", ""), body.get("text", ""))
            self._json(code, payload)
            return
        self._json(404, {"error": "no such endpoint"})

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        if len(parts) >= 1 and parts[0] == "episodes":
            if len(parts) == 2:
                runtime = self.manager.get(parts[1])
                if runtime is None:
                    self._json(404, {"error": "unknown episode"})
                    return
                with runtime.lock:
                    self._json(
                        200,
                        {
                            "id": runtime.id,
                            "kind": runtime.kind,
                            "task": runtime.task_id,
                            "roster": list(runtime.roster),
                            "human": runtime.human_agent,
                            "status": dict(runtime.status),
                            "snapshot": runtime.snapshot,
                        },
                    )
                return
            if len(parts) == 3 and parts[2] == "events":
                qs = parse_qs(url.query)
                since = int(qs.get("since", ["0"])[0])
                timeout = float(qs.get("timeout", [str(LONG_POLL_MAX_S)])[0])
                result = self.manager.get_events(parts[1], since, timeout)
                if result is None:
                    self._json(404, {"error": "unknown episode"})
                    return
                self._json(200, result)
                return
        self._serve_static(url.path)

    def _serve_static(self, path: str) -> None:
        if not self.static_dir:
            self._json(404, {"error": "no such endpoint"})
            return
        rel = path.lstrip("/") or "index.html"
        full = os.path.normpath(os.path.join(self.static_dir, rel))
        if not full.startswith(os.path.abspath(self.static_dir)) or not os.path.isfile(full):
            self._json(404, {"error": "not found"})
            return
        ctype = {
            ".html": "text/html",
            ".js": "text/javascript",
            ".css": "text/css",
            ".map": "application/json",
        }.get(os.path.splitext(full)[1], "application/octet-stream")
        with open(full, "rb") as f:
            body = f.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def build_server(port: int = 8080, log_dir: str = "service_logs", static_dir: str | None = None) -> ThreadingHTTPServer:
    manager = EpisodeManager(log_dir=log_dir)
    handler = type(
        "Handler",
        (_Handler,),
        {"manager": manager, "static_dir": os.path.abspath(static_dir) if static_dir else None},
    )
    server = ThreadingHTTPServer(("0.0.0.0", port), handler)
    server.manager = manager  # type: ignore[attr-defined]
    return server


def serve(port: int = 8080, log_dir: str = "service_logs", static_dir: str | None = None) -> None:
    server = build_server(port, log_dir, static_dir)
    print(f"serving on http://0.0.0.0:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
