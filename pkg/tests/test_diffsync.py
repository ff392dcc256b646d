"""Shadow-based sync sessions: stacking, acks, rollback, convergence."""

from __future__ import annotations

import json
import random

import pytest

from sitrepsync.diffsync import (
    Role,
    ShadowDesync,
    SyncPayload,
    SyncStatus,
    VersionedEdit,
    apply_inbound,
    decode_payload,
    encode_payload,
    new_session,
    prepare_outbound,
    reinitialize,
    salvage_reset,
)
from sitrepsync.textops import compute_diff, insert


class Endpoint:
    """One side of a session: sync state, live text, and reset recovery.

    Mirrors the guards real endpoints use: reset frames carry increasing ids
    so duplicates and stragglers are dropped, and ordinary frames are stamped
    with the epoch (last reset id) they belong to so frames from an earlier
    session incarnation are ignored rather than folded in.
    """

    def __init__(self, name: str, role: Role, text: str = ""):
        self.session = new_session(name, role)
        self.text = text
        self.send_reset = False  # server: answer the next send with a reset
        self.reset_pending: tuple[int, int] | None = None  # (id, acked)
        self.want_reset = False  # client: next request asks for a reset
        self.desyncs = 0
        self.epoch = 0  # client: last reset applied; server: last issued

    def _arm_reset(self) -> None:
        # Arm once per epoch departure and re-send the same id and acked
        # until the client catches up; a fresh arm would renumber acked
        # against the already-reinitialized session.
        if self.reset_pending is None:
            self.epoch += 1
            self.reset_pending = (self.epoch, self.session.remote_version)
        self.send_reset = True
        reinitialize(self.session, self.text)

    def send(self) -> dict:
        if self.send_reset and self.reset_pending is not None:
            self.send_reset = False
            reset_id, acked = self.reset_pending
            return encode_payload(
                SyncPayload(self.session.session_id, acked, [],
                            reset=self.text, reset_id=reset_id)
            )
        payload = prepare_outbound(self.session, self.text)
        payload.reset_request = self.want_reset
        payload.epoch = self.epoch
        return encode_payload(payload)

    def receive(self, wire: dict) -> SyncStatus:
        payload = decode_payload(json.loads(json.dumps(wire)))
        if payload.reset is not None:
            if payload.reset_id <= self.epoch:  # duplicate or straggler
                return SyncStatus.DUPLICATE_ONLY
            self.epoch = payload.reset_id
            self.text = salvage_reset(
                self.session, payload.reset, self.text, payload.ack_version
            )
            self.want_reset = False
            return SyncStatus.APPLIED
        if self.session.role is Role.SERVER:
            if payload.epoch > self.epoch:
                self.epoch = payload.epoch
            if payload.epoch == self.epoch:
                self.reset_pending = None  # client reached this epoch
            if payload.reset_request or payload.epoch != self.epoch:
                self._arm_reset()
                return SyncStatus.DUPLICATE_ONLY
        elif payload.epoch != self.epoch:
            return SyncStatus.DUPLICATE_ONLY
        try:
            self.text, status = apply_inbound(self.session, payload, self.text)
        except ShadowDesync:
            self.desyncs += 1
            if self.session.role is Role.SERVER:
                self._arm_reset()
            else:
                self.want_reset = True
            status = SyncStatus.DUPLICATE_ONLY
        return status


def lossless_cycle(client: Endpoint, server: Endpoint) -> None:
    server.receive(client.send())
    client.receive(server.send())


# ---------------------------------------------------------------------------
# prepare_outbound


def test_prepare_keepalive_on_fresh_empty_session():
    s = new_session("s1", Role.CLIENT)
    payload = prepare_outbound(s, "")
    assert [(e.version, e.script) for e in payload.edits] == [(0, [])]
    assert payload.ack_version == 0
    assert s.local_version == 1
    assert s.shadow == ""


def test_prepare_first_edit():
    s = new_session("s1", Role.CLIENT)
    payload = prepare_outbound(s, "abc")
    assert [(e.version, e.script) for e in payload.edits] == [(0, [insert("abc")])]
    assert payload.ack_version == 0
    assert s.shadow == "abc"


def test_prepare_stacks_without_ack():
    s = new_session("s1", Role.CLIENT)
    prepare_outbound(s, "abc")
    payload = prepare_outbound(s, "abcd")
    assert [e.version for e in payload.edits] == [0, 1]
    assert s.local_version == 2


def test_prepare_no_keepalive_when_stack_nonempty():
    s = new_session("s1", Role.CLIENT)
    prepare_outbound(s, "abc")
    payload = prepare_outbound(s, "abc")  # unchanged, stack not yet acked
    assert [e.version for e in payload.edits] == [0]
    assert s.local_version == 1


# ---------------------------------------------------------------------------
# apply_inbound basics


def test_apply_single_fresh_edit():
    s = new_session("s1", Role.SERVER)
    payload = SyncPayload("s1", 0, [VersionedEdit(0, [insert("abc")])])
    text, status = apply_inbound(s, payload, "")
    assert (text, status) == ("abc", SyncStatus.APPLIED)
    assert s.remote_version == 1
    assert s.shadow == "abc"


def test_apply_same_payload_twice_is_duplicate():
    s = new_session("s1", Role.SERVER)
    payload = SyncPayload("s1", 0, [VersionedEdit(0, [insert("abc")])])
    text, _ = apply_inbound(s, payload, "")
    text2, status = apply_inbound(s, payload, text)
    assert status == SyncStatus.DUPLICATE_ONLY
    assert text2 == text == "abc"
    assert s.remote_version == 1


def test_apply_rejects_wrong_session():
    s = new_session("s1", Role.SERVER)
    with pytest.raises(ValueError):
        apply_inbound(s, SyncPayload("other", 0, []), "")


def test_ack_trims_outbound():
    s = new_session("s1", Role.CLIENT)
    prepare_outbound(s, "a")
    prepare_outbound(s, "ab")
    apply_inbound(s, SyncPayload("s1", 2, []), "ab")
    assert s.outbound == []
    apply_inbound(s, SyncPayload("s1", 2, []), "ab")  # idempotent
    assert s.outbound == []


def test_version_gap_raises_desync():
    s = new_session("s1", Role.SERVER)
    payload = SyncPayload("s1", 0, [VersionedEdit(3, [insert("x")])])
    with pytest.raises(ShadowDesync):
        apply_inbound(s, payload, "")


def test_bad_edit_against_shadow_raises_desync():
    s = new_session("s1", Role.SERVER)
    s.shadow = "something else"
    payload = SyncPayload("s1", 0, [VersionedEdit(0, [insert("x")])])
    with pytest.raises(ShadowDesync):
        apply_inbound(s, payload, "irrelevant")


def test_reinitialize():
    s = new_session("s1", Role.SERVER)
    prepare_outbound(s, "abc")
    reinitialize(s, "fresh")
    assert (s.shadow, s.backup_shadow) == ("fresh", "fresh")
    assert (s.local_version, s.remote_version) == (0, 0)
    assert s.outbound == []
    reinitialize(s, "")
    assert s.shadow == "" and s.outbound == []


# ---------------------------------------------------------------------------
# Bootstrap and plain round trips


def test_first_round_trip_downloads_document():
    client = Endpoint("s1", Role.CLIENT)
    server = Endpoint("s1", Role.SERVER, text="Roads: TBD")
    lossless_cycle(client, server)
    assert client.text == "Roads: TBD"
    assert client.session.shadow == "Roads: TBD"


def test_bidirectional_edits_converge_losslessly():
    client = Endpoint("s1", Role.CLIENT)
    server = Endpoint("s1", Role.SERVER, text="alpha beta")
    lossless_cycle(client, server)
    client.text = client.text.replace("alpha", "ALPHA")
    server.text = server.text + " gamma"
    lossless_cycle(client, server)
    lossless_cycle(client, server)
    assert client.text == server.text == "ALPHA beta gamma"


# ---------------------------------------------------------------------------
# Guaranteed delivery: the lost-response trace


def test_lost_response_rollback_no_double_apply():
    client = Endpoint("s1", Role.CLIENT)
    server = Endpoint("s1", Role.SERVER)
    client.text = "abc"

    # Cycle 1: request arrives, response is lost in transit.
    assert server.receive(client.send()) == SyncStatus.APPLIED
    assert server.text == "abc"
    server.text = "abc!"  # server-side change rides the (lost) response
    lost = server.send()
    assert lost["ack"] == 1

    # Cycle 2: client re-sends its whole stack plus a new edit.
    client.text = "abcd"
    wire = client.send()
    assert [e["v"] for e in wire["edits"]] == [0, 1]
    assert wire["ack"] == 0
    status = server.receive(wire)
    assert status == SyncStatus.ROLLED_BACK
    assert server.text == "abcd!"
    client.receive(server.send())
    assert client.text == "abcd!"
    assert server.text == client.text
    # No phantom duplication of either side's content.
    assert client.text.count("d") == 1 and client.text.count("!") == 1

    # A further straggler copy of the old request changes nothing.
    server.receive(wire)
    lossless_cycle(client, server)
    assert client.text == server.text == "abcd!"


def test_duplicate_request_after_successful_cycle_is_harmless():
    client = Endpoint("s1", Role.CLIENT)
    server = Endpoint("s1", Role.SERVER, text="base ")
    lossless_cycle(client, server)
    client.text += "one "
    first_request = client.send()
    server.receive(first_request)
    client.receive(server.send())
    # Duplicate of the request arrives late; server must stay consistent.
    server.receive(first_request)
    client.text += "two "
    lossless_cycle(client, server)
    lossless_cycle(client, server)
    assert client.text == server.text
    assert server.text.count("one") == 1 and server.text.count("two") == 1


def test_pure_duplicate_request_does_not_roll_back():
    # A frame whose edits were all incorporated must not trigger rollback:
    # rolling back would discard the already-sent response and re-issue its
    # version number with different content, letting the shadows diverge.
    client = new_session("s1", Role.CLIENT)
    server = new_session("s1", Role.SERVER)
    request = prepare_outbound(client, "base one")
    live, status = apply_inbound(server, request, "")
    assert status is SyncStatus.APPLIED
    prepare_outbound(server, live)  # response pushed; backup now pre-response
    before = (
        server.shadow,
        server.local_version,
        server.remote_version,
        [e.version for e in server.outbound],
    )
    live_after, status = apply_inbound(server, request, live)
    assert status is SyncStatus.DUPLICATE_ONLY
    assert live_after == live
    assert (
        server.shadow,
        server.local_version,
        server.remote_version,
        [e.version for e in server.outbound],
    ) == before


def test_desync_leaves_session_at_entry_state():
    # When one edit of a frame fails against the shadow, nothing from the
    # frame may stick: a half-counted remote_version would make the follow-up
    # reset tell the peer not to replay an edit whose content was discarded.
    server = new_session("s1", Role.SERVER, "abc")
    frame = SyncPayload(
        "s1",
        0,
        [
            VersionedEdit(0, compute_diff("abc", "abcX")),
            VersionedEdit(1, compute_diff("zzz", "zzzQ")),
        ],
    )
    with pytest.raises(ShadowDesync):
        apply_inbound(server, frame, "abc")
    assert server.remote_version == 0
    assert server.shadow == "abc"
    assert server.local_version == 0


def test_stale_reset_frame_is_dropped():
    client = Endpoint("s1", Role.CLIENT)
    server = Endpoint("s1", Role.SERVER, text="shared text")
    lossless_cycle(client, server)
    server.session.shadow = "corrupted"
    client.text = "shared text plus"
    server.receive(client.send())
    reset_wire = server.send()
    assert "reset" in reset_wire and reset_wire["reset_id"] == 1
    assert client.receive(reset_wire) is SyncStatus.APPLIED
    text_after = client.text
    epoch_after = client.epoch
    # A duplicated copy of the same reset straggles in: ignored outright.
    assert client.receive(reset_wire) is SyncStatus.DUPLICATE_ONLY
    assert client.text == text_after and client.epoch == epoch_after
    lossless_cycle(client, server)
    lossless_cycle(client, server)
    assert client.text == server.text == "shared text plus"


def test_frame_from_older_epoch_is_ignored():
    client = Endpoint("s1", Role.CLIENT)
    server = Endpoint("s1", Role.SERVER, text="shared text")
    lossless_cycle(client, server)
    stale_response = server.send()  # built in epoch 0, delivery delayed
    server.session.shadow = "corrupted"
    client.text = "shared text plus"
    server.receive(client.send())
    client.receive(server.send())  # reset moves both sides to epoch 1
    lossless_cycle(client, server)
    snapshot = (client.text, client.session.local_version,
                client.session.remote_version)
    # The epoch-0 straggler arrives after the reset; its version numbers
    # collide with the new incarnation and must not be folded in.
    assert client.receive(stale_response) is SyncStatus.DUPLICATE_ONLY
    assert (client.text, client.session.local_version,
            client.session.remote_version) == snapshot
    lossless_cycle(client, server)
    assert client.text == server.text == "shared text plus"


# ---------------------------------------------------------------------------
# Randomized two-process convergence under loss, duplication, reordering


def mutate(rng: random.Random, text: str, token: str) -> str:
    pos = rng.randrange(0, len(text) + 1)
    if text and rng.random() < 0.3:
        end = min(len(text), pos + rng.randrange(1, 4))
        return text[:pos] + text[end:]
    return text[:pos] + token + text[pos:]


def run_lossy_session(
    seed: int, steps: int, loss: float, dup: float, reorder: float
) -> tuple[Endpoint, Endpoint, dict[str, int]]:
    """Drive two endpoints over a faulty channel; returns the endpoints and
    a per-token budget: how many copies of each token the random editing
    itself created.  (A deletion can join surrounding characters into a
    second token-shaped substring, so the budget is not always 1.)  The
    protocol may only ever propagate copies, so a converged count above the
    budget is a double-applied edit."""
    rng = random.Random(seed)
    client = Endpoint("s1", Role.CLIENT)
    server = Endpoint("s1", Role.SERVER, text="seed text. ")
    to_server: list[dict] = []
    to_client: list[dict] = []
    budget: dict[str, int] = {
        f"{tag}{step}.": 0 for tag in "cs" for step in range(steps)
    }

    def edit(endpoint: Endpoint, token: str) -> None:
        before = {t: endpoint.text.count(t) for t in budget}
        endpoint.text = mutate(rng, endpoint.text, token)
        for t in budget:
            grown = endpoint.text.count(t) - before[t]
            if grown > 0:
                budget[t] += grown

    def post(queue: list[dict], wire: dict) -> None:
        if rng.random() < loss:
            return
        copies = 2 if rng.random() < dup else 1
        for _ in range(copies):
            queue.insert(rng.randrange(0, len(queue) + 1), wire)

    def drain(queue: list[dict], endpoint: Endpoint) -> list[dict]:
        responses = []
        while queue and rng.random() < (0.8 if reorder else 1.0):
            wire = queue.pop(rng.randrange(len(queue)) if reorder else 0)
            endpoint.receive(wire)
            if endpoint.session.role is Role.SERVER:
                responses.append(endpoint.send())
        return responses

    for step in range(steps):
        if rng.random() < 0.5:
            edit(client, f"c{step}.")
        if rng.random() < 0.3:
            edit(server, f"s{step}.")
        post(to_server, client.send())
        for resp in drain(to_server, server):
            post(to_client, resp)
        drain(to_client, client)

    # Edits cease; flush stragglers, then finish with lossless cycles.
    while to_server or to_client:
        for resp in drain(to_server, server):
            to_client.append(resp)
        drain(to_client, client)
    for _ in range(3):
        lossless_cycle(client, server)
    return client, server, budget


def test_convergence_under_lossy_channel():
    for seed in range(8):
        client, server, _ = run_lossy_session(
            seed, steps=40, loss=0.3, dup=0.2, reorder=0.5
        )
        assert client.text == server.text, f"diverged with seed {seed}"


def test_no_phantom_edits_under_lossy_channel():
    for seed in range(12):
        client, server, budget = run_lossy_session(
            100 + seed, steps=30, loss=0.3, dup=0.2, reorder=0.5
        )
        assert client.text == server.text
        for token, created in budget.items():
            count = client.text.count(token)
            assert count <= created, (
                f"token {token} appears {count}x but editing only created "
                f"{created} (seed {seed}): a frame was applied twice"
            )


def test_insert_only_edits_never_duplicated():
    # With no deleting mutations, any token seen twice after convergence
    # would be a double-applied edit.  (A token can still be *absent*: a
    # concurrent insert landing inside a pending patch's context makes the
    # fuzzy application skip, and the absence then propagates — best-effort
    # patching, not a delivery failure.)
    for seed in range(6):
        rng = random.Random(900 + seed)
        client = Endpoint("s1", Role.CLIENT)
        server = Endpoint("s1", Role.SERVER, text="start. ")
        to_server: list[dict] = []
        to_client: list[dict] = []
        tokens: list[str] = []

        def post(queue: list[dict], wire: dict) -> None:
            if rng.random() < 0.3:
                return
            for _ in range(2 if rng.random() < 0.2 else 1):
                queue.insert(rng.randrange(0, len(queue) + 1), wire)

        for step in range(25):
            for endpoint, tag in ((client, "c"), (server, "s")):
                if rng.random() < 0.4:
                    token = f"{tag}{step:03d}."
                    tokens.append(token)
                    pos = rng.randrange(0, len(endpoint.text) + 1)
                    endpoint.text = endpoint.text[:pos] + token + endpoint.text[pos:]
            post(to_server, client.send())
            while to_server and rng.random() < 0.8:
                server.receive(to_server.pop(rng.randrange(len(to_server))))
                post(to_client, server.send())
            while to_client and rng.random() < 0.8:
                client.receive(to_client.pop(rng.randrange(len(to_client))))

        while to_server or to_client:
            while to_server:
                server.receive(to_server.pop(rng.randrange(len(to_server))))
                post(to_client, server.send())
            while to_client:
                client.receive(to_client.pop(rng.randrange(len(to_client))))
        for _ in range(3):
            lossless_cycle(client, server)

        assert client.text == server.text, f"diverged with seed {seed}"
        for token in tokens:
            count = client.text.count(token)
            assert count <= 1, (
                f"token {token} seen {count} times with seed {seed}"
            )


def test_stack_boundedness():
    client = Endpoint("s1", Role.CLIENT)
    server = Endpoint("s1", Role.SERVER)
    for i in range(5):
        client.text += f"chunk{i} "
        wire = client.send()
        server.receive(wire)
        response = server.send()
        client.receive(response)
        assert all(
            e.version >= response["ack"] for e in client.session.outbound
        )
        assert client.session.outbound == []  # everything acked each cycle


# ---------------------------------------------------------------------------
# Wire form


def test_payload_wire_round_trip():
    payload = SyncPayload(
        "s9", 4, [VersionedEdit(7, [insert("hi")]), VersionedEdit(6, [])]
    )
    wire = encode_payload(payload)
    assert wire["session"] == "s9" and wire["ack"] == 4
    decoded = decode_payload(json.loads(json.dumps(wire)))
    assert [e.version for e in decoded.edits] == [6, 7]  # sorted ascending
    assert decoded.edits[1].script == [insert("hi")]


def test_payload_reset_fields_round_trip():
    wire = encode_payload(
        SyncPayload("s1", 0, [], reset="authoritative", reset_id=7)
    )
    assert wire["reset"] == "authoritative"
    decoded = decode_payload(wire)
    assert decoded.reset == "authoritative"
    assert decoded.reset_id == 7
    wire = encode_payload(SyncPayload("s1", 0, [], reset_request=True))
    assert decode_payload(wire).reset_request is True
    wire = encode_payload(SyncPayload("s1", 0, [], epoch=3))
    assert decode_payload(wire).epoch == 3
    plain = encode_payload(SyncPayload("s1", 0, []))
    assert "reset" not in plain and "reset_request" not in plain
    assert "epoch" not in plain
    assert decode_payload(plain).epoch == 0


@pytest.mark.parametrize(
    "bad",
    [
        None,
        [],
        {},
        {"session": "", "ack": 0, "edits": []},
        {"session": "s1", "ack": -1, "edits": []},
        {"session": "s1", "ack": True, "edits": []},
        {"session": "s1", "ack": 0, "edits": {}},
        {"session": "s1", "ack": 0, "edits": [{"v": -2, "script": []}]},
        {"session": "s1", "ack": 0, "edits": [{"v": 0, "script": [["?", "x"]]}]},
        {"session": "s1", "ack": 0, "edits": [], "reset_id": -1},
        {"session": "s1", "ack": 0, "edits": [], "reset_id": "7"},
        {"session": "s1", "ack": 0, "edits": [], "epoch": -1},
        {"session": "s1", "ack": 0, "edits": [], "epoch": 1.5},
    ],
)
def test_decode_payload_rejects_malformed(bad):
    with pytest.raises(ValueError):
        decode_payload(bad)


def test_desync_triggers_reset_recovery_keeping_local_edits():
    client = Endpoint("s1", Role.CLIENT)
    server = Endpoint("s1", Role.SERVER, text="shared text")
    lossless_cycle(client, server)
    server.session.shadow = "corrupted"  # simulate state damage
    client.text = "shared text plus"
    server.receive(client.send())
    assert server.desyncs == 1
    # The server answers with a full-text reset; the client salvages its
    # unacknowledged edit on top and the next cycles reconverge.
    client.receive(server.send())
    lossless_cycle(client, server)
    lossless_cycle(client, server)
    assert client.text == server.text == "shared text plus"


def test_salvage_reset_preserves_unseen_peer_content():
    s = new_session("s1", Role.CLIENT)
    s.shadow = "alpha beta"
    live = "alpha MINE beta"
    # Authoritative text moved on with peer content this client never saw.
    new_live = salvage_reset(s, "alpha beta THEIRS", live)
    assert "MINE" in new_live and "THEIRS" in new_live
    assert s.shadow == "alpha beta THEIRS"
    assert (s.local_version, s.remote_version) == (0, 0)
