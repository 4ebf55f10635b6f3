"""HTTP session service for interactive teaching.

One session is one teacher/learner loop: the teacher submits
demonstrations, the learner answers queries for labeling, and at any
point the current belief or a best-effort task execution can be
requested.  Every mutation re-runs inference on the full accumulated
dataset, appends to a per-session JSON-lines event log (which doubles as
the persistence format), and is broadcast on a server-sent-events
channel so a UI can animate executions step by step.

Within a session, mutating requests serialize on a lock; sessions are
independent.  Reloading the service over the same data directory
restores every session from its log.
"""

from __future__ import annotations

import json
import queue
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .belief import Belief, entropy
from .domains import build_named_domain, named_domain_spec, restricted_universe
from .inference import Dataset, InferenceConfig, LabeledTrace, infer_posterior
from .ltl import PropositionSet, Trace, format_formula
from .machine import MachineSizeError, compile_belief, select_query
from .planner import (
    PlannerConfig,
    ProductMDP,
    plan,
    reachable_machine_states,
    rollout,
)
from .seeds import derive_seed

# session profile: a small, multi-chain posterior keeps interactive
# machines compact and the belief concentrated on the leading modes
SESSION_INFERENCE = InferenceConfig(support_k=16, chains=4)

PHASES = ("collecting-demos", "querying", "reviewing")


class SessionConfigPayload(BaseModel):
    inference: dict = {}
    planner: dict = {}
    clauses: Optional[list[str]] = None
    state_cap: int = 100_000


class CreateSessionPayload(BaseModel):
    domain: str = "dinner5"
    seed: int = 0
    config: SessionConfigPayload = SessionConfigPayload()


class DemonstrationPayload(BaseModel):
    steps: list[list[int]]


class LabelPayload(BaseModel):
    label: int


@dataclass
class Session:
    id: str
    domain: str
    seed: int
    config: SessionConfigPayload
    env: object
    universe: object
    inference: InferenceConfig
    planner: PlannerConfig
    items: list[LabeledTrace] = field(default_factory=list)
    belief: Optional[Belief] = None
    phase: str = "collecting-demos"
    pending_query: Optional[Trace] = None
    round_index: int = 0
    events: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    subscribers: list = field(default_factory=list)

    @property
    def props(self) -> PropositionSet:
        return self.env.props


def _session_from_payload(session_id: str, payload: CreateSessionPayload) -> Session:
    try:
        env, universe = build_named_domain(payload.domain)
        if payload.config.clauses is not None:
            universe = restricted_universe(env.props, tuple(payload.config.clauses))
        inference = InferenceConfig(
            **{**SESSION_INFERENCE.__dict__, **payload.config.inference}
        )
        planner = PlannerConfig(**payload.config.planner)
    except (TypeError, ValueError) as err:
        raise HTTPException(status_code=400, detail=str(err))
    return Session(
        id=session_id,
        domain=payload.domain,
        seed=payload.seed,
        config=payload.config,
        env=env,
        universe=universe,
        inference=inference,
        planner=planner,
    )


class SessionStore:
    def __init__(self, data_dir: str | None):
        self.data_dir = Path(data_dir) if data_dir else None
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        if self.data_dir:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            for log in sorted(self.data_dir.glob("*.jsonl")):
                self._replay(log)

    def create(self, payload: CreateSessionPayload) -> Session:
        session = _session_from_payload(uuid.uuid4().hex[:12], payload)
        with self.lock:
            self.sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")

    def append_event(self, session: Session, event: dict) -> dict:
        event = {"seq": len(session.events), **event}
        session.events.append(event)
        if self.data_dir:
            with open(self.data_dir / f"{session.id}.jsonl", "a") as fh:
                fh.write(json.dumps(event) + "\n")
                fh.flush()
        for q in list(session.subscribers):
            q.put(event)
        return event

    def _replay(self, log_path: Path) -> None:
        """Rebuild a session from its event log."""
        session = None
        for line in log_path.read_text().splitlines():
            event = json.loads(line)
            kind = event["event"]
            if kind == "created":
                payload = CreateSessionPayload(
                    domain=event["domain"],
                    seed=event["seed"],
                    config=SessionConfigPayload(**event["config"]),
                )
                session = _session_from_payload(event["id"], payload)
            elif kind == "demonstration":
                session.items.append(LabeledTrace(_trace(session, event["steps"]), 1))
            elif kind == "query":
                session.pending_query = _trace(session, event["steps"])
            elif kind == "label":
                session.items.append(
                    LabeledTrace(session.pending_query, event["label"])
                )
                session.pending_query = None
            elif kind == "belief":
                session.belief = Belief.from_json_dict(event["belief"])
                session.round_index = event["round"]
            elif kind == "phase":
                session.phase = event["phase"]
            session.events.append(event)
        if session is not None:
            self.sessions[session.id] = session


def _trace(session: Session, steps) -> Trace:
    try:
        return Trace(
            session.props, tuple(tuple(bool(v) for v in step) for step in steps)
        )
    except ValueError as err:
        raise HTTPException(status_code=400, detail=str(err))


def _validate_execution(session: Session, trace: Trace) -> None:
    """Demonstrations must be realizable: monotone, one object per step."""
    prev = [False] * session.props.n_prop
    for step in trace.steps:
        dropped = [n for n, (a, b) in zip(session.props.names, zip(prev, step)) if a and not b]
        if dropped:
            raise HTTPException(
                status_code=400,
                detail=f"objects cannot be removed once placed: {dropped}",
            )
        added = sum(1 for a, b in zip(prev, step) if b and not a)
        if added > 1:
            raise HTTPException(
                status_code=400, detail="at most one object may be placed per step"
            )
        prev = step


def belief_seed(session_seed: int, round_index: int) -> int:
    return derive_seed(session_seed, "infer", round_index)


def _reinfer(store: SessionStore, session: Session) -> None:
    session.round_index += 1
    cfg = session.inference.with_seed(belief_seed(session.seed, session.round_index))
    session.belief = infer_posterior(session.universe, Dataset(tuple(session.items)), cfg)
    store.append_event(
        session,
        {
            "event": "belief",
            "round": session.round_index,
            "n_executions": len(session.items),
            "entropy": entropy(session.belief),
            "belief": session.belief.to_json_dict(),
        },
    )


def _set_phase(store: SessionStore, session: Session, phase: str) -> None:
    if session.phase != phase:
        session.phase = phase
        store.append_event(session, {"event": "phase", "phase": phase})


def _belief_summary(session: Session) -> dict:
    doc = {
        "session": session.id,
        "phase": session.phase,
        "n_executions": len(session.items),
        "pending_query": session.pending_query is not None,
        "round": session.round_index,
    }
    if session.belief is not None:
        b = session.belief
        order = sorted(range(len(b.support)), key=lambda i: (-b.probs[i], i))
        doc["entropy"] = entropy(b)
        doc["belief"] = b.to_json_dict()
        doc["top"] = [
            {
                "formula": b.support[i].text(b.props),
                "prob": b.probs[i],
                "clauses": [
                    format_formula(c, b.props)
                    for c in sorted(b.support[i].clauses(), key=str)
                ],
            }
            for i in order[:5]
        ]
    return doc


def _machine_for(session: Session):
    try:
        return compile_belief(session.belief, session.config.state_cap)
    except MachineSizeError as err:
        raise HTTPException(status_code=409, detail=str(err))


def _publish_execution(store, session, source: str, trace: Trace) -> None:
    for i, step in enumerate(trace.steps):
        store.append_event(
            session,
            {
                "event": "execution_step",
                "source": source,
                "step_index": i,
                "assignment": [int(v) for v in step],
            },
        )
    store.append_event(
        session,
        {"event": "execution_end", "source": source, "n_steps": len(trace.steps)},
    )


def create_app(data_dir: str | None = None, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="specification-learning sessions")
    store = SessionStore(data_dir)
    app.state.store = store

    @app.post("/sessions", status_code=201)
    def create_session(payload: CreateSessionPayload):
        session = store.create(payload)
        store.append_event(
            session,
            {
                "event": "created",
                "id": session.id,
                "domain": session.domain,
                "seed": session.seed,
                "config": json.loads(session.config.model_dump_json()),
                "props": list(session.props.names),
            },
        )
        return {
            "id": session.id,
            "domain": session.domain,
            "props": list(session.props.names),
            "phase": session.phase,
        }

    @app.post("/sessions/{session_id}/demonstrations")
    def submit_demonstration(session_id: str, payload: DemonstrationPayload):
        session = store.get(session_id)
        with session.lock:
            if session.pending_query is not None:
                raise HTTPException(
                    status_code=409,
                    detail="label the pending query before adding demonstrations",
                )
            trace = _trace(session, payload.steps)
            _validate_execution(session, trace)
            session.items.append(LabeledTrace(trace, 1))
            store.append_event(
                session,
                {"event": "demonstration", "steps": payload.steps},
            )
            _publish_execution(store, session, "demonstration", trace)
            _reinfer(store, session)
            return _belief_summary(session)

    @app.post("/sessions/{session_id}/queries")
    def request_query(session_id: str):
        session = store.get(session_id)
        with session.lock:
            if not session.items:
                raise HTTPException(status_code=409, detail="no demonstrations yet")
            if session.pending_query is not None:
                raise HTTPException(status_code=409, detail="a query is already pending")
            machine = _machine_for(session)
            scout = ProductMDP(session.env, machine, "min_regret")
            target = select_query(machine, candidates=reachable_machine_states(scout))
            product = ProductMDP(session.env, machine, "shaped", target)
            policy = plan(
                product,
                session.planner,
                derive_seed(session.seed, "plan", session.round_index),
            )
            trace = rollout(
                product,
                policy,
                rng_seed=derive_seed(session.seed, "roll", session.round_index),
                tie_break="random",
            )
            session.pending_query = trace
            store.append_event(
                session,
                {
                    "event": "query",
                    "steps": [[int(v) for v in s] for s in trace.steps],
                },
            )
            _set_phase(store, session, "querying")
            _publish_execution(store, session, "query", trace)
            return {
                "steps": [[int(v) for v in s] for s in trace.steps],
                "props": list(session.props.names),
            }

    @app.post("/sessions/{session_id}/labels")
    def submit_label(session_id: str, payload: LabelPayload):
        session = store.get(session_id)
        if payload.label not in (0, 1):
            raise HTTPException(status_code=400, detail="label must be 0 or 1")
        with session.lock:
            if session.pending_query is None:
                raise HTTPException(status_code=409, detail="no pending query to label")
            session.items.append(LabeledTrace(session.pending_query, payload.label))
            session.pending_query = None
            store.append_event(session, {"event": "label", "label": payload.label})
            _reinfer(store, session)
            return _belief_summary(session)

    @app.get("/sessions/{session_id}/belief")
    def get_belief(session_id: str):
        session = store.get(session_id)
        with session.lock:
            if session.belief is None:
                raise HTTPException(status_code=409, detail="no demonstrations yet")
            return _belief_summary(session)

    @app.post("/sessions/{session_id}/rollouts")
    def request_rollout(session_id: str):
        session = store.get(session_id)
        with session.lock:
            if session.belief is None:
                raise HTTPException(status_code=409, detail="no demonstrations yet")
            machine = _machine_for(session)
            product = ProductMDP(session.env, machine, "min_regret")
            policy = plan(
                product,
                session.planner,
                derive_seed(session.seed, "task-plan", session.round_index),
            )
            trace = rollout(product, policy, rng_seed=0, tie_break="first")
            store.append_event(
                session,
                {
                    "event": "rollout",
                    "steps": [[int(v) for v in s] for s in trace.steps],
                },
            )
            _set_phase(store, session, "reviewing")
            _publish_execution(store, session, "rollout", trace)
            return {
                "steps": [[int(v) for v in s] for s in trace.steps],
                "props": list(session.props.names),
            }

    @app.get("/sessions/{session_id}/log")
    def get_log(session_id: str):
        session = store.get(session_id)
        with session.lock:
            return {"events": list(session.events)}

    @app.get("/sessions/{session_id}/events")
    def event_stream(session_id: str, after: int = -1):
        session = store.get(session_id)

        def generate():
            q: queue.Queue = queue.Queue()
            with session.lock:
                history = list(session.events)
                session.subscribers.append(q)
            try:
                for event in history:
                    if event["seq"] > after:
                        yield _sse(event)
                while True:
                    try:
                        event = q.get(timeout=30.0)
                    except queue.Empty:
                        yield ": keep-alive\n\n"
                        continue
                    yield _sse(event)
            finally:
                session.subscribers.remove(q)

        return StreamingResponse(generate(), media_type="text/event-stream")

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _sse(event: dict) -> str:
    return f"id: {event['seq']}\nevent: {event['event']}\ndata: {json.dumps(event)}\n\n"
