"""Region locks owned by mobile users.

A lock marks a half-open span [start, end) of a document as writable only by
its owner.  Desktop edit scripts are filtered so they cannot touch any active
interior, lock positions shift automatically as surrounding text changes, and
the owner's pushed content replaces the interior in a single splice.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .textops import (
    DiffOp,
    OpKind,
    canonicalize,
    delete,
    equal,
    insert,
    map_position,
)
from .util import new_id, parse_rfc3339, rfc3339

DiffScript = list[DiffOp]

# Distinguishable display colors; assignment wraps past twelve owners.
PALETTE = [
    "#e6194b",
    "#3cb44b",
    "#ffe119",
    "#4363d8",
    "#f58231",
    "#911eb4",
    "#46f0f0",
    "#f032e6",
    "#bcf60c",
    "#fabebe",
    "#008080",
    "#e6beff",
]


def set_palette(colors: list[str]) -> None:
    """Replace the display palette (deployment config; affects new locks)."""
    if not colors:
        raise ValueError("palette must not be empty")
    PALETTE[:] = list(colors)


class LockState(str, Enum):
    ACTIVE = "active"
    DISMISSED = "dismissed"
    REVOKED = "revoked"


class LockError(Exception):
    """Base class for lock failures."""


class OverlapsExistingLock(LockError):
    pass


class EmptySelection(LockError):
    pass


class RangeOutOfBounds(LockError):
    pass


class UnknownLock(LockError):
    pass


class LockNotActive(LockError):
    """Raised on operations against a revoked or dismissed lock.

    ``state`` carries the terminal state so error payloads can tell the
    caller why no further work on the task is needed.
    """

    def __init__(self, message: str, state: str | None = None):
        super().__init__(message)
        self.state = state


class NotOwner(LockError):
    pass


@dataclass
class MobileLock:
    lock_id: str
    owner: str
    start: int
    end: int
    description: str
    color: str
    state: LockState = LockState.ACTIVE
    created_at: float = 0.0
    last_sync_at: float | None = None

    @property
    def interior(self) -> tuple[int, int]:
        return self.start, self.end


def active_locks(locks: list[MobileLock]) -> list[MobileLock]:
    return [k for k in locks if k.state is LockState.ACTIVE]


def find_lock(locks: list[MobileLock], lock_id: str) -> MobileLock:
    for lock in locks:
        if lock.lock_id == lock_id:
            return lock
    raise UnknownLock(f"no lock {lock_id!r}")


def pick_color(locks: list[MobileLock], owner: str) -> str:
    """Reuse the owner's active color, else the first color no other active
    owner is using (wrapping when more than twelve owners hold locks)."""
    taken: dict[str, str] = {}
    for lock in active_locks(locks):
        taken[lock.owner] = lock.color
    if owner in taken:
        return taken[owner]
    in_use = set(taken.values())
    for color in PALETTE:
        if color not in in_use:
            return color
    return PALETTE[len(taken) % len(PALETTE)]


def _check_disjoint(locks: list[MobileLock]) -> None:
    spans = sorted((k.start, k.end) for k in active_locks(locks))
    for (_, prev_end), (next_start, _) in zip(spans, spans[1:]):
        if next_start < prev_end:
            raise LockError(
                f"active locks overlap: boundary {prev_end} vs {next_start}"
            )


def acquire_lock(
    locks: list[MobileLock],
    doc_length: int,
    start: int,
    end: int,
    description: str,
    owner: str,
    now: float,
) -> MobileLock:
    """Create an active lock over [start, end); the selection must be
    non-empty, in bounds, and disjoint from every other active lock."""
    if start == end:
        raise EmptySelection("selection is empty")
    if start < 0 or end > doc_length or start > end:
        raise RangeOutOfBounds(
            f"[{start},{end}) outside document of length {doc_length}"
        )
    for other in active_locks(locks):
        if start < other.end and other.start < end:
            raise OverlapsExistingLock(
                f"[{start},{end}) overlaps lock {other.lock_id} "
                f"[{other.start},{other.end})"
            )
    lock = MobileLock(
        lock_id=new_id("lock"),
        owner=owner,
        start=start,
        end=end,
        description=description,
        color=pick_color(locks, owner),
        created_at=now,
    )
    locks.append(lock)
    _check_disjoint(locks)
    return lock


def filter_edits(script: DiffScript, locks: list[MobileLock]) -> DiffScript:
    """Strip the parts of a desktop edit script that touch active interiors.

    Inserts whose insertion point falls strictly inside an interior are
    dropped; delete spans are split so interior text survives as EQUAL runs.
    Edits exactly at a lock boundary count as outside.  The result applies
    strictly to the same source text.
    """
    interiors = sorted(k.interior for k in active_locks(locks))
    if not interiors:
        return canonicalize(script)

    def strictly_inside(pos: int) -> bool:
        return any(start < pos < end for start, end in interiors)

    out: DiffScript = []
    cursor = 0
    for op in script:
        if op.kind is OpKind.EQUAL:
            out.append(op)
            cursor += len(op.text)
        elif op.kind is OpKind.INSERT:
            if not strictly_inside(cursor):
                out.append(op)
        else:
            span_start, span_end = cursor, cursor + len(op.text)
            piece = span_start
            for lk_start, lk_end in interiors:
                lo, hi = max(span_start, lk_start), min(span_end, lk_end)
                if lo >= hi:
                    continue
                if piece < lo:
                    out.append(delete(op.text[piece - cursor : lo - cursor]))
                out.append(equal(op.text[lo - cursor : hi - cursor]))
                piece = hi
            if piece < span_end:
                out.append(delete(op.text[piece - cursor : span_end - cursor]))
            cursor = span_end
    return canonicalize(out)


def adjust_locks(locks: list[MobileLock], script: DiffScript) -> list[MobileLock]:
    """Shift active lock ranges through an already-filtered edit script.

    Starts map with right bias and ends with left bias, so text inserted at
    either boundary lands outside the lock and the interior bytes are
    untouched.  Terminal locks keep their frozen ranges.
    """
    for lock in active_locks(locks):
        lock.start = map_position(script, lock.start, bias="right")
        lock.end = map_position(script, lock.end, bias="left")
        if lock.end < lock.start:  # fully deleted surroundings collapse
            lock.end = lock.start
    _check_disjoint(locks)
    return locks


def commit_lock_content(
    text: str,
    locks: list[MobileLock],
    lock_id: str,
    new_text: str,
    owner: str,
    now: float,
) -> tuple[str, DiffScript]:
    """Replace a lock's interior with its owner's pushed content.

    Returns the new document text and the splice as a diff script (for
    history and for broadcast to desktop sessions).  The lock stays ACTIVE so
    the owner can push again; its end moves to fit the new content and later
    locks shift by the length change.
    """
    lock = find_lock(locks, lock_id)
    if lock.state is not LockState.ACTIVE:
        raise LockNotActive(
            f"lock {lock_id} is {lock.state.value}", state=lock.state.value
        )
    if lock.owner != owner:
        raise NotOwner(f"lock {lock_id} belongs to {lock.owner!r}")
    old_interior = text[lock.start : lock.end]
    script = canonicalize(
        [
            equal(text[: lock.start]),
            delete(old_interior),
            insert(new_text),
            equal(text[lock.end :]),
        ]
    )
    new_doc = text[: lock.start] + new_text + text[lock.end :]
    start = lock.start
    for other in active_locks(locks):
        if other is lock:
            continue
        other.start = map_position(script, other.start, bias="right")
        other.end = map_position(script, other.end, bias="left")
    lock.start = start
    lock.end = start + len(new_text)
    lock.last_sync_at = now
    _check_disjoint(locks)
    return new_doc, script


def revoke_lock(locks: list[MobileLock], lock_id: str) -> MobileLock:
    """Desktop-side cancellation: the range is frozen and released."""
    lock = find_lock(locks, lock_id)
    if lock.state is not LockState.ACTIVE:
        raise LockNotActive(
            f"lock {lock_id} is {lock.state.value}", state=lock.state.value
        )
    lock.state = LockState.REVOKED
    return lock


def dismiss_lock(locks: list[MobileLock], lock_id: str, by: str) -> MobileLock:
    """Owner-side release: no more information will be provided."""
    lock = find_lock(locks, lock_id)
    if lock.state is not LockState.ACTIVE:
        raise LockNotActive(
            f"lock {lock_id} is {lock.state.value}", state=lock.state.value
        )
    if lock.owner != by:
        raise NotOwner(f"lock {lock_id} belongs to {lock.owner!r}")
    lock.state = LockState.DISMISSED
    return lock


def lock_to_json(lock: MobileLock) -> dict:
    return {
        "id": lock.lock_id,
        "owner": lock.owner,
        "start": lock.start,
        "end": lock.end,
        "description": lock.description,
        "color": lock.color,
        "state": lock.state.value,
        "created_at": rfc3339(lock.created_at),
        "last_sync_at": (
            rfc3339(lock.last_sync_at) if lock.last_sync_at is not None else None
        ),
    }


def lock_from_json(data: dict) -> MobileLock:
    return MobileLock(
        lock_id=data["id"],
        owner=data["owner"],
        start=data["start"],
        end=data["end"],
        description=data["description"],
        color=data["color"],
        state=LockState(data["state"]),
        created_at=parse_rfc3339(data["created_at"]),
        last_sync_at=(
            parse_rfc3339(data["last_sync_at"])
            if data.get("last_sync_at") is not None
            else None
        ),
    )
