"""Field-side client: durable note drafts, periodic sync, task refresh.

The session is single-threaded: user actions and clock ticks arrive as one
ordered stream. Drafts are persisted locally before any network send, so a
crash or dropped channel never loses typed notes. Each draft revision gets a
stable idempotency key so a retried push can splice the document at most once.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .locks import LockNotActive, LockState
from .store import Document
from .tasks import TaskService

AUTO_SYNC_INTERVAL = 300.0  # seconds between automatic sync attempts


class ChannelDown(Exception):
    """The transport could not reach the server; retry later."""


class TaskRejected(Exception):
    """The server refused the sync because the task is no longer active."""

    def __init__(self, task_state: str):
        super().__init__(f"task is {task_state}")
        self.task_state = task_state


@dataclass
class TaskDraft:
    """Locally persisted notes for one task."""

    task_id: str
    notes: str = ""
    draft_version: int = 0
    dirty: bool = False
    synced_version: int = 0

    @property
    def idempotency_key(self) -> str:
        return f"{self.task_id}:{self.draft_version}"


@dataclass
class LocalTask:
    """The mobile session's view of an assigned task."""

    task_id: str
    description: str
    state: str = "active"
    assigned_at: Optional[str] = None
    last_sync_at: Optional[str] = None


class LocalTransport:
    """In-process transport binding a session directly to the task service.

    `connected` models the radio channel: while False every call raises
    ChannelDown. `drop_next` makes exactly the next call fail after the server
    has already processed it, which is how a lost acknowledgement looks from
    the handset.
    """

    def __init__(self, service: TaskService, get_doc: Callable[[str], Document],
                 now: Callable[[], float] = lambda: 0.0):
        self.service = service
        self.get_doc = get_doc
        self.now = now
        self.connected = True
        self.drop_next_ack = False
        self.on_commit: Optional[Callable[[Document, list], None]] = None

    def _check(self) -> None:
        if not self.connected:
            raise ChannelDown("channel down")

    def _maybe_drop_ack(self) -> None:
        if self.drop_next_ack:
            self.drop_next_ack = False
            raise ChannelDown("response lost")

    def list_tasks(self, user_id: str) -> list[dict]:
        self._check()
        from .tasks import task_to_json

        return [task_to_json(t) for t in self.service.list_tasks(user_id)]

    def sync(self, user_id: str, task_id: str, notes: Optional[str],
             location: Optional[tuple[float, float]],
             idempotency_key: Optional[str]) -> dict:
        self._check()
        task = self.service.require_task(task_id)
        doc = self.get_doc(task.doc_id)
        try:
            ack, script = self.service.sync_task(
                doc, user_id, task_id, notes, location, self.now(),
                idempotency_key=idempotency_key,
            )
        except LockNotActive:
            raise TaskRejected(self.service.require_task(task_id).state.value)
        if script is not None and self.on_commit is not None:
            self.on_commit(doc, script)
        self._maybe_drop_ack()
        return ack

    def notifications(self, user_id: str, since: float) -> list[dict]:
        self._check()
        from .tasks import notification_to_json

        return [
            notification_to_json(n)
            for n in self.service.poll_notifications(user_id, since)
        ]

    def dismiss(self, task_id: str, user_id: str) -> None:
        self._check()
        task = self.service.require_task(task_id)
        self.service.dismiss_task(self.get_doc(task.doc_id), task_id,
                                  user_id, self.now())


class MobileSession:
    """One handset: tracks tasks, drafts notes offline, syncs periodically."""

    def __init__(self, user_id: str, transport, draft_dir: Optional[Path] = None,
                 now: float = 0.0, auto_interval: float = AUTO_SYNC_INTERVAL):
        self.user_id = user_id
        self.transport = transport
        self.auto_interval = auto_interval
        self.draft_dir = Path(draft_dir) if draft_dir is not None else None
        self.tasks: dict[str, LocalTask] = {}
        self.task_order: list[str] = []
        self.drafts: dict[str, TaskDraft] = {}
        self.location: Optional[tuple[float, float]] = None
        self.last_auto_attempt = now
        self.last_notification_poll = 0.0
        self.seen_notifications: set[tuple[str, str]] = set()
        self.log: list[str] = []
        self._load_drafts()

    # ----- draft durability ------------------------------------------------

    def _draft_path(self) -> Optional[Path]:
        if self.draft_dir is None:
            return None
        return self.draft_dir / f"{self.user_id}.drafts.json"

    def _load_drafts(self) -> None:
        path = self._draft_path()
        if path is None or not path.exists():
            return
        data = json.loads(path.read_text(encoding="utf-8"))
        for task_id, raw in data.items():
            self.drafts[task_id] = TaskDraft(
                task_id=task_id,
                notes=raw["notes"],
                draft_version=raw["draft_version"],
                dirty=raw["dirty"],
                synced_version=raw["synced_version"],
            )

    def _persist_drafts(self) -> None:
        path = self._draft_path()
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        body = {
            d.task_id: {
                "notes": d.notes,
                "draft_version": d.draft_version,
                "dirty": d.dirty,
                "synced_version": d.synced_version,
            }
            for d in self.drafts.values()
        }
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(body, sort_keys=True), encoding="utf-8")
        os.replace(tmp, path)

    # ----- user actions ----------------------------------------------------

    def edit_notes(self, task_id: str, notes: str) -> TaskDraft:
        draft = self.drafts.get(task_id)
        if draft is None:
            draft = TaskDraft(task_id=task_id)
            self.drafts[task_id] = draft
        if notes != draft.notes:
            draft.notes = notes
            draft.draft_version += 1
            draft.dirty = True
        self._persist_drafts()
        return draft

    def update_location(self, latitude: float, longitude: float) -> None:
        self.location = (latitude, longitude)

    def dismiss(self, task_id: str) -> None:
        self.transport.dismiss(task_id, self.user_id)
        local = self.tasks.get(task_id)
        if local is not None:
            local.state = LockState.DISMISSED.value
        draft = self.drafts.get(task_id)
        if draft is not None:
            draft.dirty = False
            self._persist_drafts()

    # ----- refresh and notifications ---------------------------------------

    def refresh_tasks(self) -> list[LocalTask]:
        listed = self.transport.list_tasks(self.user_id)
        active_ids = set()
        order: list[str] = []
        for raw in listed:
            task_id = raw["task_id"]
            active_ids.add(task_id)
            order.append(task_id)
            local = self.tasks.get(task_id)
            if local is None:
                local = LocalTask(task_id=task_id, description=raw["description"])
                self.tasks[task_id] = local
            local.description = raw["description"]
            local.state = raw["state"]
            local.assigned_at = raw.get("assigned_at")
            local.last_sync_at = raw.get("last_sync_at")
        for task_id, local in self.tasks.items():
            if task_id not in active_ids and local.state == "active":
                # Gone from the active list without a dismissal on this side:
                # the desk must have revoked or released it.
                local.state = LockState.REVOKED.value
        self.task_order = order
        return [self.tasks[t] for t in order]

    def poll_notifications(self, now: float) -> list[dict]:
        raw = self.transport.notifications(self.user_id,
                                           self.last_notification_poll)
        self.last_notification_poll = now
        fresh = []
        for item in raw:
            key = (item["task_id"], item["kind"])
            if key in self.seen_notifications:
                continue
            self.seen_notifications.add(key)
            fresh.append(item)
            if item["kind"] == "revoked":
                local = self.tasks.get(item["task_id"])
                if local is not None:
                    local.state = LockState.REVOKED.value
        return fresh

    def active_tasks(self) -> list[LocalTask]:
        return [
            self.tasks[t] for t in self.task_order
            if self.tasks[t].state == "active"
        ]

    # ----- synchronization --------------------------------------------------

    def _sync_one(self, task_id: str) -> bool:
        """Push one task's draft (or a heartbeat when clean). True on ack."""
        draft = self.drafts.get(task_id)
        dirty = draft is not None and draft.dirty
        if dirty:
            version_sent = draft.draft_version
            self._persist_drafts()
            notes = draft.notes
            key = draft.idempotency_key
        else:
            version_sent = 0
            notes = None
            key = None
        try:
            ack = self.transport.sync(self.user_id, task_id, notes,
                                      self.location, key)
        except TaskRejected as exc:
            local = self.tasks.get(task_id)
            if local is not None:
                local.state = exc.task_state
            if draft is not None:
                draft.dirty = False
                self._persist_drafts()
            self.log.append(f"sync {task_id}: task {exc.task_state}")
            return False
        if dirty:
            draft.synced_version = version_sent
            draft.dirty = draft.draft_version > draft.synced_version
            self._persist_drafts()
        local = self.tasks.get(task_id)
        if local is not None:
            local.last_sync_at = ack.get("server_time")
        return True

    def sync_now(self, task_id: Optional[str] = None) -> dict[str, bool]:
        """Push immediately; ChannelDown is reported, never loses drafts."""
        targets = [task_id] if task_id is not None else [
            t.task_id for t in self.active_tasks()
        ]
        results: dict[str, bool] = {}
        for target in targets:
            try:
                results[target] = self._sync_one(target)
            except ChannelDown:
                results[target] = False
                self.log.append(f"sync {target}: channel down")
        return results

    def auto_sync_tick(self, now: float) -> bool:
        """Run the periodic sync if the fixed interval has elapsed.

        Returns True when an attempt was made. Network failures are swallowed
        and the next attempt stays on the fixed cadence.
        """
        if now - self.last_auto_attempt < self.auto_interval:
            return False
        self.last_auto_attempt = now
        try:
            self.refresh_tasks()
            self.poll_notifications(now)
        except ChannelDown:
            self.log.append("auto-sync: refresh failed, channel down")
        for local in list(self.tasks.values()):
            if local.state != "active":
                continue
            try:
                self._sync_one(local.task_id)
            except ChannelDown:
                self.log.append(f"auto-sync {local.task_id}: channel down")
        return True
