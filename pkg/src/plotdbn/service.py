"""Long-running session service: monitoring, what-if scoring, persistence.

Sessions are event-sourced: every accepted observation is appended to a
per-session log, with periodic belief snapshots.  Restarting the service
replays the logs and reproduces each session's belief bit-exactly, which is
also the durability test.  A server-sent-event stream pushes belief updates
to subscribed clients.

Endpoint payload schemas are documented in docs/api.md; all timestamps are
the model's integer time index.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import uuid
from pathlib import Path
from typing import Mapping

import numpy as np
from fastapi import Depends, FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, ConfigDict, Field

from . import library as libmod
from . import model_io
from .errors import (ConfigurationError, InconsistentEvidenceError,
                     LibraryError, NonAncestralDataError, PlotDbnError,
                     SecureTableError)
from .inference import (BeliefState, filter_mixture, filter_step, init_belief,
                        prior_from_spec)
from .interventions import seu
from .learning import (CompletedIncident, check_ancestral, harvest_counts,
                       update_from_incidents)
from .records import ObservationRecord, record_from_obj

API_VERSION = "v1"
SNAPSHOT_EVERY = 20


# ---------------------------------------------------------------------------
# Session state
# ---------------------------------------------------------------------------


class Session:
    def __init__(self, session_id: str, entry_id: str, models: dict,
                 beliefs: dict[str, BeliefState], weights: dict[str, float],
                 prior_spec: Mapping | None):
        self.id = session_id
        self.entry_id = entry_id
        self.models = models              # category -> PlotModel
        self.beliefs = beliefs            # category -> BeliefState
        self.weights = dict(weights)
        self.prior_spec = prior_spec
        self.seq = 0
        self.closed = False
        self.lock = asyncio.Lock()
        self.subscribers: list[asyncio.Queue] = []

    @property
    def t(self) -> int:
        return next(iter(self.beliefs.values())).t

    @property
    def is_mixture(self) -> bool:
        return len(self.models) > 1

    def state_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(str(self.t).encode())
        for category in sorted(self.beliefs):
            belief = self.beliefs[category]
            digest.update(category.encode())
            digest.update(belief.joint.tobytes())
            digest.update(np.float64(belief.log_likelihood).tobytes())
            for arr in belief.lag_state:
                digest.update(arr.tobytes())
            digest.update(np.float64(self.weights[category]).tobytes())
        return digest.hexdigest()

    def belief_payload(self, *, include_joint: bool = False) -> dict:
        reference = next(iter(self.models.values()))
        phase_labels = reference.phase_space.labels
        mixture_phase = np.zeros(len(phase_labels))
        per_category = {}
        for category in sorted(self.models):
            model = self.models[category]
            belief = self.beliefs[category]
            weight = self.weights[category]
            phase = belief.phase_marginal()
            mixture_phase += weight * phase
            tasks = {}
            for axis, name in enumerate(model.task_graph.order):
                alphabet = model.task_graph.alphabet(name)
                tasks[name] = dict(zip(alphabet, map(float, belief.task_marginal_at(axis))))
            per_category[category] = {
                "phase_marginals": dict(zip(model.phase_space.labels, map(float, phase))),
                "task_marginals": tasks,
                "log_likelihood": belief.log_likelihood,
            }
            if include_joint:
                per_category[category]["joint"] = belief.joint.tolist()
        return {
            "session": self.id,
            "entry": self.entry_id,
            "t": self.t,
            "closed": self.closed,
            "phase_marginals": dict(zip(phase_labels, map(float, mixture_phase))),
            "category_weights": {c: float(w) for c, w in sorted(self.weights.items())},
            "per_category": per_category,
            "state_hash": self.state_hash(),
        }


class ServiceState:
    """All mutable state plus its on-disk mirror."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.library_dir = self.data_dir / "library"
        self.sessions_dir = self.data_dir / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.library: libmod.Library | None = None
        if (self.library_dir / "index.json").exists():
            self.library = libmod.load_library(self.library_dir)
        self.sessions: dict[str, Session] = {}
        self.library_lock = asyncio.Lock()
        self._recover()

    # -- library access ----------------------------------------------------

    def require_library(self) -> libmod.Library:
        if self.library is None:
            raise HTTPException(404, detail={"code": "no-library",
                                             "message": "no library is loaded"})
        return self.library

    def model_for(self, entry_id: str, category: str):
        lib = self.require_library()
        try:
            return libmod.variant_model(lib, entry_id, category)
        except LibraryError as exc:
            raise HTTPException(404, detail={"code": "unknown-entry-or-category",
                                             "message": str(exc)}) from exc

    # -- persistence ---------------------------------------------------------

    def _session_dir(self, session_id: str) -> Path:
        return self.sessions_dir / session_id

    def _append_event(self, session: Session, kind: str, payload: dict) -> None:
        session.seq += 1
        line = json.dumps({"seq": session.seq, "kind": kind, "payload": payload},
                          sort_keys=True)
        path = self._session_dir(session.id) / "events.jsonl"
        with path.open("a") as handle:
            handle.write(line + "\n")
            handle.flush()

    def _write_snapshot(self, session: Session) -> None:
        snapshot = {
            "seq": session.seq,
            "weights": session.weights,
            "beliefs": {c: b.to_payload() for c, b in session.beliefs.items()},
        }
        path = self._session_dir(session.id) / "snapshots.jsonl"
        with path.open("a") as handle:
            handle.write(json.dumps(snapshot, sort_keys=True) + "\n")

    def _build_session(self, session_id: str, payload: Mapping) -> Session:
        entry_id = payload["entry"]
        weights = dict(payload["weights"])
        models = {c: self.model_for(entry_id, c) for c in weights}
        labels = {m.phase_space.labels for m in models.values()}
        if len(labels) != 1:
            raise HTTPException(409, detail={
                "code": "mixture-misaligned",
                "message": "mixture categories must share the phase template"})
        prior_spec = payload.get("prior")
        beliefs = {}
        for category, model in models.items():
            base = init_belief(model, prior_from_spec(model, prior_spec))
            beliefs[category] = BeliefState(t=0, joint=base.joint,
                                            category_weights=weights,
                                            lag_state=base.lag_state)
        return Session(session_id, entry_id, models, beliefs, weights, prior_spec)

    def _advance(self, session: Session, record: ObservationRecord) -> dict[str, float]:
        """Filter one step in place; returns per-category evidence."""
        if session.is_mixture:
            step = filter_mixture(session.beliefs, session.models, record,
                                  weights=session.weights)
            session.beliefs = dict(step.beliefs)
            session.weights = dict(step.weights)
            return dict(step.evidences)
        (category, model), = session.models.items()
        step = filter_step(session.beliefs[category], model, record)
        session.beliefs = {category: step.belief}
        return {category: step.evidence}

    def _recover(self) -> None:
        for session_dir in sorted(self.sessions_dir.iterdir()):
            events_path = session_dir / "events.jsonl"
            if not events_path.is_file():
                continue
            events = [json.loads(line) for line in events_path.read_text().splitlines() if line]
            if not events or events[0]["kind"] != "created":
                continue
            session = self._build_session(session_dir.name, events[0]["payload"])
            session.seq = events[-1]["seq"]
            snapshot = None
            snapshots_path = session_dir / "snapshots.jsonl"
            if snapshots_path.is_file():
                for line in snapshots_path.read_text().splitlines():
                    if line:
                        candidate = json.loads(line)
                        if candidate["seq"] <= session.seq:
                            snapshot = candidate
            replay_from = 0
            if snapshot is not None:
                session.weights = dict(snapshot["weights"])
                session.beliefs = {c: BeliefState.from_payload(p)
                                   for c, p in snapshot["beliefs"].items()}
                replay_from = snapshot["seq"]
            for event in events:
                if event["seq"] <= replay_from:
                    continue
                if event["kind"] == "observation":
                    self._advance(session, record_from_obj(event["payload"]))
                elif event["kind"] == "closed":
                    session.closed = True
            self.sessions[session_dir.name] = session

    def create_session(self, payload: Mapping) -> Session:
        session_id = uuid.uuid4().hex[:12]
        session = self._build_session(session_id, payload)
        self._session_dir(session_id).mkdir(parents=True, exist_ok=True)
        self._append_event(session, "created", dict(payload))
        self.sessions[session_id] = session
        return session

    def get_session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, detail={"code": "unknown-session",
                                             "message": f"no session {session_id!r}"})
        return session


# ---------------------------------------------------------------------------
# Request schemas (unknown fields rejected)
# ---------------------------------------------------------------------------


class PriorSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: str
    phase: str | None = None
    tasks: dict[str, str] | None = None
    probs: dict[str, float] | None = None

    def as_mapping(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.phase is not None:
            out["phase"] = self.phase
        if self.tasks is not None:
            out["tasks"] = self.tasks
        if self.probs is not None:
            out["probs"] = self.probs
        return out


class CreateSessionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    entry: str
    category: str | None = None
    mixture: dict[str, float] | None = None
    prior: PriorSpec | None = None


class ObservationRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    t: int
    channels: dict[str, str | None] = Field(default_factory=dict)


class WhatIfRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    decisions: list[str]
    utility: str
    horizon: int


class CloseIncidentRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    records: list[dict]
    category: str | None = None


class AddEntryRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    document: dict
    novelty_declaration: list[str] | None = None


# ---------------------------------------------------------------------------
# Application
# ---------------------------------------------------------------------------


def create_app(data_dir: str | Path, *, token: str | None = None,
               console_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="plotdbn service", version=API_VERSION)
    state = ServiceState(data_dir)
    app.state.svc = state

    async def authorized(authorization: str | None = Header(default=None)):
        if token is None:
            return
        if authorization != f"Bearer {token}":
            raise HTTPException(401, detail={"code": "unauthorized",
                                             "message": "missing or bad token"})

    @app.exception_handler(PlotDbnError)
    async def on_engine_error(_: Request, exc: PlotDbnError):
        mapping = {
            InconsistentEvidenceError: (409, "inconsistent-evidence"),
            NonAncestralDataError: (409, "non-ancestral"),
            SecureTableError: (409, "secure-table"),
            ConfigurationError: (422, "bad-configuration"),
            LibraryError: (404, "library-error"),
        }
        for cls, (status, code) in mapping.items():
            if isinstance(exc, cls):
                return JSONResponse(status_code=status,
                                    content={"error": {"code": code, "message": str(exc)}})
        return JSONResponse(status_code=400,
                            content={"error": {"code": "engine-error", "message": str(exc)}})

    @app.exception_handler(HTTPException)
    async def on_http_error(_: Request, exc: HTTPException):
        detail = exc.detail if isinstance(exc.detail, dict) else {"code": "error",
                                                                  "message": str(exc.detail)}
        return JSONResponse(status_code=exc.status_code, content={"error": detail})

    # -- sessions ------------------------------------------------------------

    @app.post(f"/{API_VERSION}/sessions", dependencies=[Depends(authorized)])
    async def create_session(request: CreateSessionRequest):
        if (request.category is None) == (request.mixture is None):
            raise HTTPException(422, detail={
                "code": "bad-request",
                "message": "give exactly one of category or mixture"})
        if request.mixture is not None:
            total = sum(request.mixture.values())
            if abs(total - 1.0) > 1e-12:
                raise HTTPException(422, detail={
                    "code": "bad-request",
                    "message": f"mixture weights sum to {total:.12g}, expected 1"})
            weights = request.mixture
        else:
            weights = {request.category: 1.0}
        payload = {"entry": request.entry, "weights": weights,
                   "prior": request.prior.as_mapping() if request.prior else None}
        session = state.create_session(payload)
        return session.belief_payload()

    @app.get(f"/{API_VERSION}/sessions/{{session_id}}/belief",
             dependencies=[Depends(authorized)])
    async def get_belief(session_id: str, include_joint: bool = False):
        return state.get_session(session_id).belief_payload(include_joint=include_joint)

    @app.post(f"/{API_VERSION}/sessions/{{session_id}}/observations",
              dependencies=[Depends(authorized)])
    async def post_observation(session_id: str, request: ObservationRequest):
        session = state.get_session(session_id)
        async with session.lock:
            if session.closed:
                raise HTTPException(409, detail={"code": "session-closed",
                                                 "message": "the incident is closed"})
            if request.t == session.t and session.t > 0:
                return {"duplicate": True, **session.belief_payload()}
            if request.t != session.t + 1:
                raise HTTPException(409, detail={
                    "code": "out-of-order",
                    "message": f"expected t={session.t + 1}, got t={request.t}"})
            record = ObservationRecord(t=request.t, channels=request.channels)
            evidences = state._advance(session, record)
            state._append_event(session, "observation",
                                {"t": record.t, "channels": dict(record.channels)})
            if session.seq % SNAPSHOT_EVERY == 0:
                state._write_snapshot(session)
        payload = {
            "evidence": {c: float(v) for c, v in sorted(evidences.items())},
            **session.belief_payload(),
        }
        for queue in list(session.subscribers):
            queue.put_nowait(payload)
        return payload

    @app.post(f"/{API_VERSION}/sessions/{{session_id}}/what-if",
              dependencies=[Depends(authorized)])
    async def what_if(session_id: str, request: WhatIfRequest):
        session = state.get_session(session_id)
        before = session.state_hash()
        scores: dict[str, float] = {}
        reference = next(iter(session.models.values()))
        if request.utility not in reference.utilities:
            raise HTTPException(404, detail={"code": "unknown-utility",
                                             "message": f"no utility {request.utility!r}"})
        decisions = []
        for decision_id in request.decisions:
            if decision_id not in reference.decisions:
                raise HTTPException(404, detail={"code": "unknown-decision",
                                                 "message": f"no decision {decision_id!r}"})
            decisions.append(decision_id)
        for decision_id in decisions:
            total = 0.0
            for category, model in session.models.items():
                decision = model.decisions[decision_id]
                utility = model.utilities[request.utility]
                total += session.weights[category] * seu(
                    model, session.beliefs[category], decision, utility, request.horizon)
            scores[decision_id] = total
        ranking = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        state._append_event(session, "what_if",
                            {"decisions": decisions, "utility": request.utility,
                             "horizon": request.horizon})
        return {"session": session.id,
                "ranking": [{"decision": d, "score": s} for d, s in ranking],
                "state_hash": session.state_hash(),
                "state_unchanged": session.state_hash() == before}

    @app.post(f"/{API_VERSION}/sessions/{{session_id}}/close",
              dependencies=[Depends(authorized)])
    async def close_incident(session_id: str, request: CloseIncidentRequest):
        session = state.get_session(session_id)
        async with session.lock:
            if session.closed:
                raise HTTPException(409, detail={"code": "session-closed",
                                                 "message": "already closed"})
            category = request.category or sorted(session.models)[0]
            if category not in session.models:
                raise HTTPException(404, detail={"code": "unknown-category",
                                                 "message": f"no category {category!r}"})
            model = session.models[category]
            incident = CompletedIncident(
                records=tuple(record_from_obj(obj) for obj in request.records),
                category=category, incident_id=session.id)
            ok, violator = check_ancestral(incident, model)
            if not ok:
                raise HTTPException(409, detail={
                    "code": "non-ancestral",
                    "message": f"incident is not ancestral, first violation at {violator}"})
            async with state.library_lock:
                priors = libmod.load_posteriors(state.library_dir, session.entry_id, model)
                posterior = update_from_incidents(priors, [incident], model)
                libmod.save_posteriors(state.library_dir, session.entry_id, posterior)
            counts = harvest_counts(incident, model)
            receipt = _count_receipt(counts)
            session.closed = True
            state._append_event(session, "closed",
                                {"category": category, "rows": receipt})
        return {"session": session.id, "closed": True, "category": category,
                "updated_rows": receipt, "state_hash": session.state_hash()}

    @app.get(f"/{API_VERSION}/sessions/{{session_id}}/timeline",
             dependencies=[Depends(authorized)])
    async def timeline(session_id: str):
        """Per-step phase marginals, replayed from the session's audit log."""
        session = state.get_session(session_id)
        events_path = state._session_dir(session_id) / "events.jsonl"
        events = [json.loads(line) for line in events_path.read_text().splitlines() if line]
        replay = state._build_session(session_id, events[0]["payload"])
        columns = [replay.belief_payload()]
        for event in events:
            if event["kind"] == "observation":
                state._advance(replay, record_from_obj(event["payload"]))
                columns.append(replay.belief_payload())
        return {"session": session.id, "columns": columns,
                "state_hash": session.state_hash()}

    @app.get(f"/{API_VERSION}/sessions/{{session_id}}/stream",
             dependencies=[Depends(authorized)])
    async def stream(session_id: str):
        session = state.get_session(session_id)
        queue: asyncio.Queue = asyncio.Queue()
        session.subscribers.append(queue)

        async def generate():
            try:
                yield f"data: {json.dumps(session.belief_payload())}\n\n"
                while True:
                    payload = await queue.get()
                    yield f"data: {json.dumps(payload)}\n\n"
            finally:
                session.subscribers.remove(queue)

        return StreamingResponse(generate(), media_type="text/event-stream")

    # -- library -------------------------------------------------------------

    @app.get(f"/{API_VERSION}/library", dependencies=[Depends(authorized)])
    async def library_index():
        lib = state.require_library()
        return {"side": lib.side, "iteration": lib.iteration, "order": list(lib.ids),
                "novelty": {eid: {tag: list(names) for tag, names in tags.items()}
                            for eid, tags in lib.novelty.items()}}

    @app.get(f"/{API_VERSION}/library/entries/{{entry_id}}",
             dependencies=[Depends(authorized)])
    async def get_entry(entry_id: str):
        lib = state.require_library()
        return model_io.model_to_doc(lib.entry(entry_id))

    @app.post(f"/{API_VERSION}/library/entries", dependencies=[Depends(authorized)])
    async def add_library_entry(request: AddEntryRequest):
        async with state.library_lock:
            lib = state.library if state.library is not None else libmod.Library(side="B")
            model = model_io.model_from_doc(request.document)
            lib, report = libmod.add_entry(lib, model, request.novelty_declaration)
            libmod.save_library(lib, state.library_dir)
            state.library = lib
        return {"entry": report.entry_id,
                "novel": {tag: list(names) for tag, names in report.novel.items()},
                "reused": list(report.reused),
                "declared_mismatch": list(report.declared_mismatch)}

    @app.delete(f"/{API_VERSION}/library/entries/{{entry_id}}",
                dependencies=[Depends(authorized)])
    async def delete_entry(entry_id: str):
        async with state.library_lock:
            lib = state.require_library()
            if entry_id not in lib.ids:
                raise HTTPException(404, detail={"code": "unknown-entry",
                                                 "message": f"no entry {entry_id!r}"})
            import dataclasses
            remaining = tuple(m for m in lib.entries if m.id != entry_id)
            novelty = {k: dict(v) for k, v in lib.novelty.items() if k != entry_id}
            lib = dataclasses.replace(lib, entries=remaining, novelty=novelty)
            libmod.save_library(lib, state.library_dir)
            state.library = lib
        return {"deleted": entry_id}

    @app.get(f"/{API_VERSION}/library/export/sanitized",
             dependencies=[Depends(authorized)])
    async def sanitized_export():
        lib = state.require_library()
        export = libmod.sanitize_export(lib)
        return export.document

    if console_dir is not None and Path(console_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/console", StaticFiles(directory=str(console_dir), html=True),
                  name="console")

    return app


def _count_receipt(counts) -> list[dict]:
    receipt = []
    for i, row in sorted(counts.transition.items()):
        added = float(np.sum(row))
        if added:
            receipt.append({"vertex": "W", "row": i, "added": added})
    for name, blocks in sorted(counts.tasks.items()):
        for block, table in sorted(blocks.items()):
            for r, row in enumerate(np.asarray(table)):
                added = float(np.sum(row))
                if added:
                    receipt.append({"vertex": name, "block": block, "row": r, "added": added})
    for name, table in sorted(counts.channels.items()):
        for r, row in enumerate(np.asarray(table)):
            added = float(np.sum(row))
            if added:
                receipt.append({"vertex": name, "row": r, "added": added})
    return receipt
