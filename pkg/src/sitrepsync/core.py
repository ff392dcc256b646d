"""Server core: per-document serialized command streams over the store.

Each document gets an actor-style mutex; every mutating command (desktop
sync, lock/task operations) runs alone against that document, appends to the
command log, and persists the snapshot. Separate documents proceed in
parallel. Transport layers (HTTP/WS, the simulator, tests) all drive the
same Hub API, so wire handling stays free of consistency logic.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from .diffsync import (
    Role,
    ShadowDesync,
    SyncPayload,
    SyncSession,
    apply_inbound,
    new_session,
    prepare_outbound,
    reinitialize,
)
from .locks import MobileLock, adjust_locks, filter_edits, lock_to_json
from .store import CommandKind, CommandRecord, Document, DocumentStore
from .tasks import MobileUser, Task, TaskService
from .textops import apply_strict, compute_diff, encode_script, is_noop
from .util import rfc3339

SESSION_IDLE_SECONDS = 1800.0  # drop desktop sessions idle this long


class ProtocolError(Exception):
    """Malformed sync frame; the client should reinitialize its session."""


@dataclass
class DocumentActor:
    """One document plus its desktop sessions, guarded by a single mutex."""

    doc: Document
    mutex: threading.Lock = field(default_factory=threading.Lock)
    sessions: dict[str, SyncSession] = field(default_factory=dict)
    last_seen: dict[str, float] = field(default_factory=dict)
    # Last reset_id issued per session; lives outside SyncSession so it
    # survives session reinitialization and keeps ids strictly increasing.
    reset_seq: dict[str, int] = field(default_factory=dict)
    # Outstanding (reset_id, acked) per session, kept until the client sends
    # a frame in the new epoch.  Triggers while it is outstanding re-send the
    # SAME id and acked: arming a fresh reset would renumber acked against a
    # session already reinitialized, telling the client to replay edits the
    # authoritative text still contains (duplication) or to skip ones it
    # does not (loss).
    reset_pending: dict[str, tuple[int, int]] = field(default_factory=dict)


class Hub:
    """Front door for every document-mutating command."""

    def __init__(self, store: DocumentStore, now=time.time):
        self.store = store
        self.now = now
        state = store.load_state("tasks")
        self.service = TaskService.from_state(state) if state else TaskService()
        self._actors: dict[str, DocumentActor] = {}
        self._registry = threading.Lock()

    # ----- documents --------------------------------------------------------

    def create_document(self, template_id: Optional[str] = None) -> Document:
        doc = self.store.create_document(template_id, self.now())
        with self._registry:
            self._actors[doc.doc_id] = DocumentActor(doc=doc)
        return doc

    def _actor(self, doc_id: str) -> DocumentActor:
        with self._registry:
            actor = self._actors.get(doc_id)
            if actor is None:
                actor = DocumentActor(doc=self.store.recover(doc_id))
                self._actors[doc_id] = actor
            return actor

    def get_document(self, doc_id: str) -> Document:
        return self._actor(doc_id).doc

    def list_documents(self) -> list[str]:
        return self.store.list_documents()

    # ----- desktop sync -----------------------------------------------------

    def handle_sync(self, doc_id: str, payload: SyncPayload) -> SyncPayload:
        actor = self._actor(doc_id)
        with actor.mutex:
            self._gc_sessions(actor)
            session = actor.sessions.get(payload.session_id)
            if session is None:
                session = new_session(payload.session_id, Role.SERVER)
                actor.sessions[payload.session_id] = session
            actor.last_seen[payload.session_id] = self.now()
            sid = payload.session_id
            epoch = actor.reset_seq.get(sid, 0)
            if payload.epoch > epoch:
                # The client honoured a reset we no longer remember (our
                # counter was lost to a restart); resume numbering above it.
                epoch = payload.epoch
                actor.reset_seq[sid] = epoch
            if payload.epoch == epoch:
                # The client reached the current epoch, so the outstanding
                # reset (if any) was applied; future resets start fresh.
                actor.reset_pending.pop(sid, None)
            if payload.reset_request or payload.epoch != epoch:
                # Stale-epoch frames carry version numbers from an earlier
                # session incarnation; answer with a reset instead of mixing
                # the epochs.
                return self._reset_frame(actor, session)
            try:
                new_live, _status = apply_inbound(session, payload,
                                                 actor.doc.text)
            except ShadowDesync:
                return self._reset_frame(actor, session)
            self._absorb_live_change(actor, new_live)
            response = prepare_outbound(session, actor.doc.text)
            response.epoch = epoch
            return response

    def _absorb_live_change(self, actor: DocumentActor, new_live: str) -> None:
        doc = actor.doc
        if new_live == doc.text:
            return
        raw = compute_diff(doc.text, new_live)
        filtered = filter_edits(raw, doc.locks)
        if is_noop(filtered):
            return
        authoritative = apply_strict(doc.text, filtered)
        adjust_locks(doc.locks, filtered)
        doc.text = authoritative
        doc.revision += 1
        self.store.history_append(
            doc.doc_id,
            CommandRecord(doc.revision, CommandKind.SYNC,
                          {"script": encode_script(filtered)}),
        )
        self.store.persist(doc)

    def _reset_frame(self, actor: DocumentActor,
                     session: SyncSession) -> SyncPayload:
        sid = session.session_id
        pending = actor.reset_pending.get(sid)
        if pending is None:
            # First reset since the client last caught up: freeze the count
            # of its edits we incorporated, numbered in its current epoch.
            # The millisecond clock floor keeps ids increasing even across a
            # server restart, so a reconnecting client never sees a smaller
            # id than one it already honoured.
            acked = session.remote_version
            reset_id = max(actor.reset_seq.get(sid, 0) + 1,
                           int(self.now() * 1000))
            actor.reset_seq[sid] = reset_id
            actor.reset_pending[sid] = (reset_id, acked)
        else:
            reset_id, acked = pending
        reinitialize(session, actor.doc.text)
        return SyncPayload(sid, ack_version=acked, edits=[],
                           reset=actor.doc.text, reset_id=reset_id)

    def _gc_sessions(self, actor: DocumentActor) -> None:
        cutoff = self.now() - SESSION_IDLE_SECONDS
        for sid, seen in list(actor.last_seen.items()):
            if seen < cutoff:
                actor.sessions.pop(sid, None)
                actor.last_seen.pop(sid, None)
                actor.reset_seq.pop(sid, None)
                actor.reset_pending.pop(sid, None)

    # ----- users, tasks and locks ------------------------------------------

    def _save_service(self) -> None:
        self.store.save_state("tasks", self.service.to_state())

    def register_user(self, display_name: str) -> MobileUser:
        user = self.service.register_user(display_name)
        self._save_service()
        return user

    def assign_task(self, doc_id: str, start: int, end: int,
                    description: str, owner: str) -> tuple[Task, MobileLock]:
        actor = self._actor(doc_id)
        with actor.mutex:
            task, lock = self.service.assign_task(
                actor.doc, start, end, description, owner, self.now()
            )
            doc = actor.doc
            doc.revision += 1
            self.store.history_append(
                doc_id,
                CommandRecord(doc.revision, CommandKind.LOCK_ACQUIRE,
                              {"lock": lock_to_json(lock)}),
            )
            self.store.persist(doc)
            self._save_service()
            return task, lock

    def sync_task(self, task_id: str, user_id: str, notes: Optional[str],
                  location: Optional[tuple[float, float]],
                  idempotency_key: Optional[str] = None) -> dict:
        task = self.service.require_task(task_id)
        actor = self._actor(task.doc_id)
        with actor.mutex:
            replayed = (idempotency_key is not None
                        and idempotency_key in self.service.sync_acks)
            now = self.now()
            ack, script = self.service.sync_task(
                actor.doc, user_id, task_id, notes, location, now,
                idempotency_key=idempotency_key,
            )
            doc = actor.doc
            if script is not None or not replayed:
                doc.revision += 1
                self.store.history_append(
                    doc.doc_id,
                    CommandRecord(
                        doc.revision, CommandKind.TASK_SYNC,
                        {"lock": task_id,
                         "notes": notes if script is not None else None,
                         "at": rfc3339(now)},
                    ),
                )
                self.store.persist(doc)
            self._save_service()
            return ack

    def list_tasks(self, user_id: str) -> list[Task]:
        return self.service.list_tasks(user_id)

    def revoke_lock(self, lock_id: str) -> Task:
        task = self.service.require_task(lock_id)
        actor = self._actor(task.doc_id)
        with actor.mutex:
            self.service.revoke_task(actor.doc, lock_id, self.now())
            doc = actor.doc
            doc.revision += 1
            self.store.history_append(
                doc.doc_id,
                CommandRecord(doc.revision, CommandKind.LOCK_REVOKE,
                              {"lock": lock_id}),
            )
            self.store.persist(doc)
            self._save_service()
            return task

    def dismiss_lock(self, lock_id: str, by: str) -> Task:
        task = self.service.require_task(lock_id)
        actor = self._actor(task.doc_id)
        with actor.mutex:
            self.service.dismiss_task(actor.doc, lock_id, by, self.now())
            doc = actor.doc
            doc.revision += 1
            self.store.history_append(
                doc.doc_id,
                CommandRecord(doc.revision, CommandKind.LOCK_DISMISS,
                              {"lock": lock_id}),
            )
            self.store.persist(doc)
            self._save_service()
            return task

    def poll_notifications(self, user_id: str, since: float):
        return self.service.poll_notifications(user_id, since)

    def presence(self, doc_id: str) -> list[MobileUser]:
        return self.service.presence(self._actor(doc_id).doc)
