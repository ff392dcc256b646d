"""Scripted desktop client: one editing session over an injectable transport.

The transport is any callable taking a request frame and returning the
server's response frame (in-process hub call, HTTP POST, or the simulator's
faulty channel). The client owns the local text buffer and the client half of
the sync session, including desync recovery via reset frames.
"""

from __future__ import annotations

from typing import Callable, Optional

from .diffsync import (
    Role,
    ShadowDesync,
    SyncPayload,
    SyncStatus,
    apply_inbound,
    new_session,
    prepare_outbound,
    salvage_reset,
)

DEFAULT_SYNC_INTERVAL_MS = 500  # cadence used by the long-running CLI client


class DesktopClient:
    """Local text buffer plus the client side of a differential sync loop."""

    def __init__(self, session_id: str,
                 send: Callable[[SyncPayload], SyncPayload], text: str = ""):
        self.session = new_session(session_id, Role.CLIENT, text)
        self.text = text
        self.send = send
        self.want_reset = False
        self.resets = 0
        self.last_reset_id = 0

    def edit(self, new_text: str) -> None:
        self.text = new_text

    def sync(self) -> Optional[SyncStatus]:
        """Run one request/response cycle; returns the apply status.

        Returns None when the response was a reset frame (session was
        reinitialized and local edits salvaged onto the authoritative text).
        The transport may raise; the caller decides how to handle outages —
        session state is only advanced by a delivered response.
        """
        request = prepare_outbound(self.session, self.text)
        request.epoch = self.last_reset_id
        if self.want_reset:
            request.reset_request = True
        response = self.send(request)
        if response is None:  # transport ate the frame (simulated loss)
            return None
        return self.receive(response)

    def receive(self, response: SyncPayload) -> Optional[SyncStatus]:
        if response.reset is not None:
            # A duplicated or late reset frame would re-seed this session
            # from stale authoritative text; only ever move forward.
            if response.reset_id <= self.last_reset_id:
                return None
            self.last_reset_id = response.reset_id
            self.text = salvage_reset(self.session, response.reset, self.text,
                                      acked=response.ack_version)
            self.want_reset = False
            self.resets += 1
            return None
        if response.epoch != self.last_reset_id:
            # Ordinary frame from a different session incarnation; its
            # version numbers are meaningless here.
            return None
        try:
            self.text, status = apply_inbound(self.session, response,
                                              self.text)
        except ShadowDesync:
            # Keep asking for a reset until one arrives; ordinary frames can
            # apply vacuously (keepalives) without proving the shadows match.
            self.want_reset = True
            return None
        return status

    @property
    def idle(self) -> bool:
        """True when there is nothing left to deliver or confirm."""
        return not self.session.outbound and self.text == self.session.shadow
