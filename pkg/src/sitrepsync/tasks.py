"""Server-side mobile task lifecycle.

Assigning a task locks a document region to a mobile user and queues a
notification; the user's pushed notes replace the locked region via a commit
splice.  Pushes carry idempotency keys so a retry over a flaky link can never
splice twice, and every successful push updates the user's last known
location and freshness timestamps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .locks import (
    LockNotActive,
    LockState,
    MobileLock,
    NotOwner,
    acquire_lock,
    commit_lock_content,
    dismiss_lock,
    find_lock,
    revoke_lock,
)
from .store import Document
from .util import new_id, parse_rfc3339, rfc3339


class TaskError(Exception):
    pass


class UnknownUser(TaskError):
    pass


class UnknownTask(TaskError):
    pass


class BadLocation(TaskError):
    pass


class NotificationKind(str, Enum):
    ASSIGNED = "assigned"
    REVOKED = "revoked"


@dataclass
class MobileUser:
    user_id: str
    display_name: str
    last_location: tuple[float, float] | None = None  # (latitude, longitude)
    last_seen: float | None = None


@dataclass
class Task:
    task_id: str  # equals the lock id
    doc_id: str
    owner: str
    description: str
    assigned_at: float
    last_sync_at: float | None = None
    state: LockState = LockState.ACTIVE


@dataclass(frozen=True)
class Notification:
    kind: NotificationKind
    task_id: str
    description: str
    issued_at: float
    owner: str


def _validate_location(location: tuple[float, float] | None) -> None:
    if location is None:
        return
    lat, lon = location
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise BadLocation(f"coordinates out of range: {lat}, {lon}")


class TaskService:
    """Registry of mobile users, their tasks, notifications, and push acks."""

    def __init__(self) -> None:
        self.users: dict[str, MobileUser] = {}
        self.tasks: dict[str, Task] = {}
        self.notifications: list[Notification] = []
        self.sync_acks: dict[str, dict] = {}

    # -- users --------------------------------------------------------------

    def register_user(self, display_name: str) -> MobileUser:
        user = MobileUser(user_id=new_id("user"), display_name=display_name)
        self.users[user.user_id] = user
        return user

    def require_user(self, user_id: str) -> MobileUser:
        try:
            return self.users[user_id]
        except KeyError:
            raise UnknownUser(f"no user {user_id!r}") from None

    # -- assignment ---------------------------------------------------------

    def assign_task(
        self,
        doc: Document,
        start: int,
        end: int,
        description: str,
        owner: str,
        now: float,
    ) -> tuple[Task, MobileLock]:
        self.require_user(owner)
        lock = acquire_lock(
            doc.locks, len(doc.text), start, end, description, owner, now
        )
        task = Task(
            task_id=lock.lock_id,
            doc_id=doc.doc_id,
            owner=owner,
            description=description,
            assigned_at=now,
        )
        self.tasks[task.task_id] = task
        self.notifications.append(
            Notification(
                NotificationKind.ASSIGNED, task.task_id, description, now, owner
            )
        )
        return task, lock

    def list_tasks(self, user_id: str) -> list[Task]:
        self.require_user(user_id)
        mine = [
            t
            for t in self.tasks.values()
            if t.owner == user_id and t.state is LockState.ACTIVE
        ]
        return sorted(mine, key=lambda t: t.assigned_at, reverse=True)

    def require_task(self, task_id: str) -> Task:
        try:
            return self.tasks[task_id]
        except KeyError:
            raise UnknownTask(f"no task {task_id!r}") from None

    # -- push synchronization -----------------------------------------------

    def sync_task(
        self,
        doc: Document,
        user_id: str,
        task_id: str,
        notes: str | None,
        location: tuple[float, float] | None,
        now: float,
        idempotency_key: str | None = None,
    ) -> tuple[dict, list | None]:
        """Fold one mobile push into the document.

        Returns (ack, splice script or None).  A replayed idempotency key
        returns the stored ack and never touches the document; a clean-draft
        heartbeat (notes None) refreshes location and freshness only.
        """
        task = self.require_task(task_id)
        user = self.require_user(user_id)
        if task.owner != user_id:
            raise NotOwner(f"task {task_id} belongs to {task.owner!r}")
        _validate_location(location)

        if idempotency_key and idempotency_key in self.sync_acks:
            return dict(self.sync_acks[idempotency_key]), None

        lock = find_lock(doc.locks, task_id)
        if lock.state is not LockState.ACTIVE:
            task.state = lock.state
            raise LockNotActive(
                f"task {task_id} is {lock.state.value}", state=lock.state.value
            )

        script = None
        if notes is not None:
            doc.text, script = commit_lock_content(
                doc.text, doc.locks, task_id, notes, user_id, now
            )
        else:
            lock.last_sync_at = now
        task.last_sync_at = now
        if location is not None:
            user.last_location = location
        user.last_seen = now

        ack = {"server_time": rfc3339(now), "task_state": lock.state.value}
        if idempotency_key:
            self.sync_acks[idempotency_key] = dict(ack)
        return ack, script

    # -- release propagation ------------------------------------------------

    def revoke_task(self, doc: Document, task_id: str, now: float) -> Task:
        task = self.require_task(task_id)
        revoke_lock(doc.locks, task_id)
        task.state = LockState.REVOKED
        self.notifications.append(
            Notification(
                NotificationKind.REVOKED, task_id, task.description, now, task.owner
            )
        )
        return task

    def dismiss_task(self, doc: Document, task_id: str, by: str, now: float) -> Task:
        task = self.require_task(task_id)
        dismiss_lock(doc.locks, task_id, by)
        task.state = LockState.DISMISSED
        return task

    # -- notifications and presence -----------------------------------------

    def poll_notifications(self, user_id: str, since: float) -> list[Notification]:
        """At-least-once delivery: the boundary instant is included."""
        self.require_user(user_id)
        mine = [
            n
            for n in self.notifications
            if n.owner == user_id and n.issued_at >= since
        ]
        return sorted(mine, key=lambda n: n.issued_at)

    def presence(self, doc: Document) -> list[MobileUser]:
        owners = {k.owner for k in doc.locks}
        return [self.users[uid] for uid in sorted(owners) if uid in self.users]

    # -- persistence --------------------------------------------------------

    def to_state(self) -> dict:
        return {
            "users": [
                {
                    "id": u.user_id,
                    "name": u.display_name,
                    "location": list(u.last_location) if u.last_location else None,
                    "last_seen": rfc3339(u.last_seen) if u.last_seen else None,
                }
                for u in self.users.values()
            ],
            "tasks": [
                {
                    "id": t.task_id,
                    "doc": t.doc_id,
                    "owner": t.owner,
                    "description": t.description,
                    "assigned_at": rfc3339(t.assigned_at),
                    "last_sync_at": (
                        rfc3339(t.last_sync_at) if t.last_sync_at else None
                    ),
                    "state": t.state.value,
                }
                for t in self.tasks.values()
            ],
            "notifications": [
                {
                    "kind": n.kind.value,
                    "task": n.task_id,
                    "description": n.description,
                    "issued_at": rfc3339(n.issued_at),
                    "owner": n.owner,
                }
                for n in self.notifications
            ],
            "sync_acks": self.sync_acks,
        }

    @classmethod
    def from_state(cls, state: dict) -> TaskService:
        service = cls()
        for item in state.get("users", []):
            service.users[item["id"]] = MobileUser(
                user_id=item["id"],
                display_name=item["name"],
                last_location=(
                    tuple(item["location"]) if item.get("location") else None
                ),
                last_seen=(
                    parse_rfc3339(item["last_seen"])
                    if item.get("last_seen")
                    else None
                ),
            )
        for item in state.get("tasks", []):
            service.tasks[item["id"]] = Task(
                task_id=item["id"],
                doc_id=item["doc"],
                owner=item["owner"],
                description=item["description"],
                assigned_at=parse_rfc3339(item["assigned_at"]),
                last_sync_at=(
                    parse_rfc3339(item["last_sync_at"])
                    if item.get("last_sync_at")
                    else None
                ),
                state=LockState(item["state"]),
            )
        for item in state.get("notifications", []):
            service.notifications.append(
                Notification(
                    NotificationKind(item["kind"]),
                    item["task"],
                    item["description"],
                    parse_rfc3339(item["issued_at"]),
                    item["owner"],
                )
            )
        service.sync_acks = dict(state.get("sync_acks", {}))
        return service


def task_to_json(task: Task) -> dict:
    return {
        "task_id": task.task_id,
        "doc_id": task.doc_id,
        "owner": task.owner,
        "description": task.description,
        "assigned_at": rfc3339(task.assigned_at),
        "last_sync_at": (
            rfc3339(task.last_sync_at) if task.last_sync_at is not None else None
        ),
        "state": task.state.value,
    }


def notification_to_json(notification: Notification) -> dict:
    return {
        "kind": notification.kind.value,
        "task_id": notification.task_id,
        "description": notification.description,
        "issued_at": rfc3339(notification.issued_at),
    }


def user_to_json(user: MobileUser) -> dict:
    return {
        "user_id": user.user_id,
        "display_name": user.display_name,
        "last_location": (
            {"lat": user.last_location[0], "lon": user.last_location[1]}
            if user.last_location is not None
            else None
        ),
        "last_seen": (
            rfc3339(user.last_seen) if user.last_seen is not None else None
        ),
    }
