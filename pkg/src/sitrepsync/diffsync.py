"""Differential synchronization with guaranteed delivery.

Each endpoint keeps a shadow copy of the peer's last-acknowledged text plus a
stack of outbound versioned edits.  Every cycle re-sends the entire stack, so
lost, duplicated, or reordered payloads are survivable: duplicates are skipped
by version, losses are covered by the next retransmission, and a server that
discovers its last response never arrived rolls its shadow back to a backup
and regenerates a cumulative diff.

Cycles are half-duplex and client-initiated: the client sends a payload, the
server applies it and answers with one payload of its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .textops import (
    BaseMismatch,
    DiffOp,
    apply_fuzzy,
    apply_strict,
    compute_diff,
    decode_script,
    encode_script,
    is_noop,
    to_patches,
)

DiffScript = list[DiffOp]


class Role(str, Enum):
    CLIENT = "client"
    SERVER = "server"


class SyncStatus(str, Enum):
    APPLIED = "applied"
    DUPLICATE_ONLY = "duplicate_only"
    ROLLED_BACK = "rolled_back"


class ShadowDesync(Exception):
    """Strict application to the shadow failed; the session must be
    reinitialized from authoritative text on both ends."""


@dataclass(frozen=True)
class VersionedEdit:
    version: int
    script: DiffScript


@dataclass
class SyncPayload:
    """One wire frame: the sender's full outbound stack plus its ack.

    ``reset`` (server to client) carries authoritative text after a desync;
    ``reset_request`` (client to server) asks for one.  Peers that do not
    understand either field ignore them.

    ``reset_id`` orders reset frames: each one a server issues for a session
    carries a strictly larger id, and clients discard any reset whose id is
    not above the last one they applied.  Without this, a duplicated or
    late-arriving reset re-seeds the client from stale authoritative text,
    after which both sides can settle into a version-consistent keepalive
    loop with silently divergent shadows.

    ``epoch`` stamps ordinary frames with the reset_id in force when they
    were built (0 before any reset).  Both version counters restart at zero
    after a reset, so without the stamp a frame from before the reset can
    slip into the new session under a colliding version number and corrupt
    a shadow without failing strict application.
    """

    session_id: str
    ack_version: int
    edits: list[VersionedEdit] = field(default_factory=list)
    reset: str | None = None
    reset_id: int = 0
    reset_request: bool = False
    epoch: int = 0

    def __post_init__(self) -> None:
        self.edits = sorted(self.edits, key=lambda e: e.version)


@dataclass
class SyncSession:
    """Per-peer synchronization state for one document.

    ``local_version`` counts edits this side has produced; ``remote_version``
    counts peer edits incorporated.  Only the SERVER role maintains the backup
    shadow (and its version) used for rollback.
    """

    session_id: str
    role: Role
    shadow: str = ""
    backup_shadow: str = ""
    local_version: int = 0
    remote_version: int = 0
    backup_local_version: int = 0
    outbound: list[VersionedEdit] = field(default_factory=list)


def new_session(session_id: str, role: Role, text: str = "") -> SyncSession:
    """Create a session whose shadow starts at ``text``.

    Fresh sessions normally start empty on both ends; the first round trip
    then carries the document content in the response diff.  A client joining
    an existing document must therefore start with empty live text as well,
    or the bootstrap diff would duplicate the document.
    """
    return SyncSession(
        session_id=session_id, role=role, shadow=text, backup_shadow=text
    )


def reinitialize(session: SyncSession, authoritative: str) -> SyncSession:
    """Reset a desynchronized session to known-identical state (versions 0/0)."""
    session.shadow = authoritative
    session.backup_shadow = authoritative
    session.local_version = 0
    session.remote_version = 0
    session.backup_local_version = 0
    session.outbound.clear()
    return session


def salvage_reset(
    session: SyncSession, authoritative: str, live_text: str, acked: int = 0
) -> str:
    """Recover from a desync: reset to authoritative text, keeping local edits.

    Local changes the peer never incorporated live in two places: outbound
    edits with version >= ``acked`` (the peer's count of our edits it did
    apply), and any not-yet-prepared difference between shadow and live text.
    Replaying those fuzzily on top of the authoritative text preserves them
    without discarding peer content the old shadow never saw.  Returns the
    new live text.
    """
    scripts = [e.script for e in session.outbound if e.version >= acked]
    scripts.append(compute_diff(session.shadow, live_text))
    reinitialize(session, authoritative)
    new_live = authoritative
    for script in scripts:
        if not is_noop(script):
            new_live, _ = apply_fuzzy(new_live, to_patches(script))
    return new_live


def prepare_outbound(session: SyncSession, current_text: str) -> SyncPayload:
    """Diff the live text against the shadow and emit the full outbound stack.

    A changed text always appends a new versioned edit.  An unchanged text
    appends an empty keepalive edit only when the stack is empty, so idle
    cycles still move the version pair without re-sending old content.  The
    payload always carries the entire stack: retransmission is the delivery
    guarantee.
    """
    script = compute_diff(session.shadow, current_text)
    changed = not is_noop(script)
    if changed or not session.outbound:
        if session.role is Role.SERVER:
            session.backup_shadow = session.shadow
            session.backup_local_version = session.local_version
        session.outbound.append(
            VersionedEdit(session.local_version, script if changed else [])
        )
        session.shadow = current_text
        session.local_version += 1
    return SyncPayload(
        session_id=session.session_id,
        ack_version=session.remote_version,
        edits=list(session.outbound),
    )


def apply_inbound(
    session: SyncSession, payload: SyncPayload, live_text: str
) -> tuple[str, SyncStatus]:
    """Fold one inbound payload into the session and the live text.

    Steps: roll the shadow back to the backup if the peer's ack shows it never
    received our last response (SERVER role); drop outbound edits the ack
    covers; skip inbound edits already incorporated; apply each fresh edit
    strictly to the shadow and fuzzily to the live text.

    Delivering the same payload more than once leaves state unchanged after
    the first delivery.  Raises ShadowDesync when a fresh edit does not fit
    the shadow (or arrives with a version gap); the session is rolled back to
    its state at entry — the frame applies all-or-nothing, so the version
    pair never counts an edit whose content was discarded — and the caller
    must reinitialize both ends from authoritative text.
    """
    if payload.session_id != session.session_id:
        raise ValueError(
            f"payload for session {payload.session_id!r} "
            f"delivered to {session.session_id!r}"
        )

    if session.role is Role.CLIENT and payload.ack_version != session.local_version:
        # A response that does not acknowledge our latest request was diffed
        # against an older shadow than ours (it straggled in after we moved
        # on).  Applying it would corrupt the shadow; dropping it is safe
        # because the server rolls back and regenerates a cumulative diff
        # when our next request shows the response went unseen.
        return live_text, SyncStatus.DUPLICATE_ONLY

    entry = (
        session.shadow,
        session.backup_shadow,
        session.local_version,
        session.remote_version,
        session.backup_local_version,
        list(session.outbound),
    )
    try:
        return _apply_inbound_edits(session, payload, live_text)
    except ShadowDesync:
        (
            session.shadow,
            session.backup_shadow,
            session.local_version,
            session.remote_version,
            session.backup_local_version,
            session.outbound,
        ) = entry
        raise


def _apply_inbound_edits(
    session: SyncSession, payload: SyncPayload, live_text: str
) -> tuple[str, SyncStatus]:
    newest = max((e.version for e in payload.edits), default=-1)
    rolled = False
    if (
        session.role is Role.SERVER
        and newest >= session.remote_version
        and payload.ack_version != session.local_version
        and payload.ack_version == session.backup_local_version
    ):
        # The peer built fresh edits against the backup shadow (it never saw
        # our last response): restore that shadow so they apply cleanly, and
        # regenerate a cumulative diff on the next prepare.  A frame with no
        # fresh edits (``newest < remote_version``) must NOT roll back: it is
        # a duplicate in flight, its response may still arrive, and re-issuing
        # its version number with different content would let the two shadows
        # diverge while the version pair stays consistent.
        session.shadow = session.backup_shadow
        session.local_version = session.backup_local_version
        session.outbound.clear()
        rolled = True

    session.outbound = [
        e for e in session.outbound if e.version >= payload.ack_version
    ]

    fresh = 0
    for edit in payload.edits:
        if edit.version < session.remote_version:
            continue  # duplicate of an edit we already incorporated
        if edit.version > session.remote_version:
            raise ShadowDesync(
                f"version gap: expected edit {session.remote_version}, "
                f"got {edit.version}"
            )
        if edit.script:
            try:
                session.shadow = apply_strict(session.shadow, edit.script)
            except BaseMismatch as exc:
                raise ShadowDesync(
                    f"edit {edit.version} does not fit the shadow: {exc}"
                ) from exc
            live_text, _ = apply_fuzzy(live_text, to_patches(edit.script))
        session.remote_version += 1
        fresh += 1

    if rolled:
        status = SyncStatus.ROLLED_BACK
    elif fresh:
        status = SyncStatus.APPLIED
    else:
        status = SyncStatus.DUPLICATE_ONLY
    return live_text, status


# ---------------------------------------------------------------------------
# Wire form


def encode_payload(payload: SyncPayload) -> dict:
    """JSON-ready form: {"session", "ack", "edits":[{"v", "script"}]}."""
    out: dict = {
        "session": payload.session_id,
        "ack": payload.ack_version,
        "edits": [
            {"v": e.version, "script": encode_script(e.script)}
            for e in payload.edits
        ],
    }
    if payload.reset is not None:
        out["reset"] = payload.reset
        out["reset_id"] = payload.reset_id
    if payload.reset_request:
        out["reset_request"] = True
    if payload.epoch:
        out["epoch"] = payload.epoch
    return out


def decode_payload(data: object) -> SyncPayload:
    """Parse and validate a wire payload; raises ValueError on malformed input."""
    if not isinstance(data, dict):
        raise ValueError("payload must be an object")
    session_id = data.get("session")
    if not isinstance(session_id, str) or not session_id:
        raise ValueError("payload needs a non-empty 'session' string")
    ack = data.get("ack")
    if not isinstance(ack, int) or isinstance(ack, bool) or ack < 0:
        raise ValueError("payload 'ack' must be a non-negative integer")
    raw_edits = data.get("edits", [])
    if not isinstance(raw_edits, list):
        raise ValueError("payload 'edits' must be a list")
    edits = []
    for item in raw_edits:
        if not isinstance(item, dict):
            raise ValueError("each edit must be an object")
        version = item.get("v")
        if not isinstance(version, int) or isinstance(version, bool) or version < 0:
            raise ValueError("edit 'v' must be a non-negative integer")
        edits.append(VersionedEdit(version, decode_script(item.get("script"))))
    reset = data.get("reset")
    if reset is not None and not isinstance(reset, str):
        raise ValueError("'reset' must be a string when present")
    reset_id = data.get("reset_id", 0)
    if not isinstance(reset_id, int) or isinstance(reset_id, bool) or reset_id < 0:
        raise ValueError("'reset_id' must be a non-negative integer")
    epoch = data.get("epoch", 0)
    if not isinstance(epoch, int) or isinstance(epoch, bool) or epoch < 0:
        raise ValueError("'epoch' must be a non-negative integer")
    reset_request = bool(data.get("reset_request", False))
    return SyncPayload(
        session_id=session_id,
        ack_version=ack,
        edits=edits,
        reset=reset,
        reset_id=reset_id,
        reset_request=reset_request,
        epoch=epoch,
    )
