"""Deterministic network simulator: faulty channels over a virtual clock.

Scenario files script desktop edits, mobile drafting, task assignment, and
channel outages against one simulated server. Frames between desktops and
the server traverse a channel that can drop, duplicate, and delay whole
frames (reordering is extra latency), all driven by one seeded RNG so a
given (scenario, profile) pair always yields the same transcript.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from .client import DesktopClient
from .core import Hub
from .locks import LockNotActive
from .mobile import ChannelDown, MobileSession, TaskRejected
from .store import MemoryStore
from .tasks import task_to_json

DEFAULT_CADENCE_MS = 500
REORDER_EXTRA_MS = 100  # extra delay span added to "reordered" frames


class ScenarioParseError(Exception):
    pass


@dataclass(frozen=True)
class FaultProfile:
    """Channel behavior knobs; same seed means same delivery schedule."""

    loss_prob: float = 0.0
    dup_prob: float = 0.0
    reorder_prob: float = 0.0
    latency_ms: tuple[int, int] = (10, 50)
    seed: int = 0

    def __post_init__(self):
        for name in ("loss_prob", "dup_prob", "reorder_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be within [0, 1]")
        lo, hi = self.latency_ms
        if lo < 0 or hi < lo:
            raise ValueError("latency_ms must be (min, max) with 0 <= min <= max")


class StepAction(str, Enum):
    EDIT = "EDIT"
    SYNC = "SYNC"
    ASSIGN = "ASSIGN"
    COMMIT = "COMMIT"
    DISMISS = "DISMISS"
    REVOKE = "REVOKE"
    CHANNEL_DOWN = "CHANNEL_DOWN"
    CHANNEL_UP = "CHANNEL_UP"
    TICK = "TICK"


@dataclass
class Step:
    at_ms: int
    actor: str
    action: StepAction
    args: dict


@dataclass
class Actor:
    actor_id: str
    kind: str  # "desktop" | "mobile"


@dataclass
class Scenario:
    actors: list[Actor]
    horizon_ms: int
    steps: list[Step]
    template: Optional[str] = None
    cadence_ms: int = DEFAULT_CADENCE_MS


@dataclass
class Transcript:
    converged: bool
    non_quiescent: bool
    convergence_ms: Optional[int]
    final_texts: dict[str, str]
    server_text: str
    mobile_drafts: dict[str, dict[str, str]]
    events: list[dict]
    metrics: dict

    def to_json(self) -> dict:
        def entry(text: str) -> dict:
            digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
            return {"text": text, "sha256": digest}

        return {
            "converged": self.converged,
            "non_quiescent": self.non_quiescent,
            "convergence_ms": self.convergence_ms,
            "final": {actor: entry(text)
                      for actor, text in self.final_texts.items()},
            "server": entry(self.server_text),
            "mobile_drafts": self.mobile_drafts,
            "events": self.events,
            "metrics": self.metrics,
        }


# ---------------------------------------------------------------------------
# scenario parsing


def parse_scenario(data: object) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioParseError("scenario must be a JSON object")
    header = data.get("header")
    if not isinstance(header, dict):
        raise ScenarioParseError("scenario needs a 'header' object")
    raw_actors = header.get("actors")
    if not isinstance(raw_actors, list) or not raw_actors:
        raise ScenarioParseError("header 'actors' must be a non-empty list")
    actors = []
    seen = set()
    for item in raw_actors:
        if (not isinstance(item, dict) or not isinstance(item.get("id"), str)
                or item.get("kind") not in ("desktop", "mobile")):
            raise ScenarioParseError(
                "each actor needs an 'id' and a kind of 'desktop' or 'mobile'"
            )
        if item["id"] in seen:
            raise ScenarioParseError(f"duplicate actor id {item['id']!r}")
        seen.add(item["id"])
        actors.append(Actor(item["id"], item["kind"]))
    horizon = header.get("horizon_ms")
    if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon <= 0:
        raise ScenarioParseError("header 'horizon_ms' must be a positive integer")
    template = header.get("template")
    if template is not None and not isinstance(template, str):
        raise ScenarioParseError("header 'template' must be a string")
    cadence = header.get("cadence_ms", DEFAULT_CADENCE_MS)
    if not isinstance(cadence, int) or isinstance(cadence, bool) or cadence <= 0:
        raise ScenarioParseError("header 'cadence_ms' must be a positive integer")

    raw_steps = data.get("steps")
    if not isinstance(raw_steps, list):
        raise ScenarioParseError("scenario needs a 'steps' list")
    steps = []
    previous = 0
    for index, item in enumerate(raw_steps):
        if not isinstance(item, dict):
            raise ScenarioParseError(f"step {index} must be an object")
        at = item.get("at")
        if not isinstance(at, int) or isinstance(at, bool) or at < 0:
            raise ScenarioParseError(f"step {index}: 'at' must be >= 0 ms")
        if at < previous:
            raise ScenarioParseError(f"step {index}: timestamps must not decrease")
        previous = at
        actor = item.get("actor")
        if actor not in seen:
            raise ScenarioParseError(f"step {index}: undeclared actor {actor!r}")
        try:
            action = StepAction(item.get("action"))
        except ValueError:
            raise ScenarioParseError(
                f"step {index}: unknown action {item.get('action')!r}"
            ) from None
        args = item.get("args", {})
        if not isinstance(args, dict):
            raise ScenarioParseError(f"step {index}: 'args' must be an object")
        steps.append(Step(at, actor, action, args))
    return Scenario(actors=actors, horizon_ms=horizon, steps=steps,
                    template=template, cadence_ms=cadence)


def load_scenario(path: str | Path) -> Scenario:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioParseError(f"cannot read scenario: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"scenario is not valid JSON: {exc}") from exc
    return parse_scenario(data)


def _edit_position(spec: dict, length: int) -> int:
    if "at" in spec:
        pos = int(spec["at"])
    elif "frac" in spec:
        pos = round(float(spec["frac"]) * length)
    else:
        pos = length
    return max(0, min(pos, length))


def apply_edit_args(text: str, args: dict) -> str:
    """Interpret a desktop EDIT step's args against the current text.

    Forms: {"set": str} replaces everything; {"insert": {"text", "at"|"frac"}}
    splices in text; {"delete": {"at"|"frac", "len"}} removes a span.
    Positions clamp to the text; "frac" scales by current length so scripted
    edits stay meaningful as the document grows.
    """
    if "set" in args:
        return str(args["set"])
    if "insert" in args:
        spec = args["insert"]
        pos = _edit_position(spec, len(text))
        return text[:pos] + str(spec.get("text", "")) + text[pos:]
    if "delete" in args:
        spec = args["delete"]
        pos = _edit_position(spec, len(text))
        span = max(0, int(spec.get("len", 1)))
        return text[:pos] + text[pos + span:]
    raise ScenarioParseError(
        "desktop EDIT args need 'set', 'insert', or 'delete'"
    )


# ---------------------------------------------------------------------------
# simulation engine


class _SimMobileTransport:
    """Mobile request/response channel with outage, loss, and duplication."""

    def __init__(self, sim: "_Simulation"):
        self.sim = sim

    def _gate(self, actor_id: str) -> None:
        if self.sim.link_down.get(actor_id):
            raise ChannelDown("channel down")

    def list_tasks(self, user_id: str) -> list[dict]:
        self._gate(self.sim.mobile_actor_of[user_id])
        return [task_to_json(t) for t in self.sim.hub.list_tasks(user_id)]

    def sync(self, user_id, task_id, notes, location, idempotency_key):
        actor_id = self.sim.mobile_actor_of[user_id]
        self._gate(actor_id)
        rng = self.sim.rng
        profile = self.sim.profile
        roll = rng.random()
        if roll < profile.loss_prob / 2:
            # Request lost before reaching the server.
            self.sim.metrics["mobile_frames_lost"] += 1
            raise ChannelDown("request lost")
        calls = 2 if rng.random() < profile.dup_prob else 1
        ack = None
        for _ in range(calls):
            try:
                ack = self.sim.hub.sync_task(
                    task_id, user_id, notes, location,
                    idempotency_key=idempotency_key,
                )
            except LockNotActive as exc:
                raise TaskRejected(exc.state or "inactive")
        if roll < profile.loss_prob:
            # Server applied the push but the acknowledgement never arrived.
            self.sim.metrics["mobile_frames_lost"] += 1
            raise ChannelDown("response lost")
        return ack

    def notifications(self, user_id: str, since: float) -> list[dict]:
        self._gate(self.sim.mobile_actor_of[user_id])
        from .tasks import notification_to_json

        return [
            notification_to_json(n)
            for n in self.sim.hub.poll_notifications(user_id, since)
        ]

    def dismiss(self, task_id: str, user_id: str) -> None:
        self._gate(self.sim.mobile_actor_of[user_id])
        self.sim.hub.dismiss_lock(task_id, user_id)


@dataclass
class _Desk:
    client: DesktopClient
    cadence_due: int = 0


class _Simulation:
    def __init__(self, scenario: Scenario, profile: FaultProfile):
        self.scenario = scenario
        self.profile = profile
        self.rng = random.Random(profile.seed)
        self.now_ms = 0
        self.hub = Hub(MemoryStore(), now=lambda: self.now_ms / 1000.0)
        self.doc = self.hub.create_document(scenario.template)
        self.link_down: dict[str, bool] = {}
        self.desks: dict[str, _Desk] = {}
        self.mobiles: dict[str, MobileSession] = {}
        self.mobile_actor_of: dict[str, str] = {}  # user_id -> actor_id
        self.task_refs: dict[str, str] = {}  # scenario label -> task_id
        self.latest_task: dict[str, str] = {}  # actor_id -> task_id
        self.events: list[dict] = []
        self.metrics = {
            "frames_sent": 0,
            "frames_lost": 0,
            "frames_duplicated": 0,
            "frames_delivered": 0,
            "desk_syncs": 0,
            "mobile_frames_lost": 0,
            "resets": 0,
        }
        self._queue: list[tuple[int, int, str, object]] = []
        self._seq = itertools.count()
        self._steps_left = 0
        self.stopped = False
        self.texts_equal_since: Optional[int] = None
        self.last_content_step_ms = 0
        transport = _SimMobileTransport(self)

        for actor in scenario.actors:
            self.link_down[actor.actor_id] = False
            if actor.kind == "desktop":
                client = DesktopClient(
                    actor.actor_id,
                    self._make_desk_send(actor.actor_id),
                )
                self.desks[actor.actor_id] = _Desk(client=client)
                self._push(0, "cadence", actor.actor_id)
            else:
                user = self.hub.register_user(actor.actor_id)
                self.mobile_actor_of[user.user_id] = actor.actor_id
                self.mobiles[actor.actor_id] = MobileSession(
                    user.user_id, transport, draft_dir=None, now=0.0
                )
        for step in scenario.steps:
            self._push(step.at_ms, "step", step)
            self._steps_left += 1

    # -- event queue ---------------------------------------------------------

    def _push(self, at_ms: int, kind: str, payload: object) -> None:
        heapq.heappush(self._queue, (at_ms, next(self._seq), kind, payload))

    def _log(self, actor: str, event: str, **detail) -> None:
        entry = {"at": self.now_ms, "actor": actor, "event": event}
        if detail:
            entry.update(detail)
        self.events.append(entry)

    # -- desktop channel -----------------------------------------------------

    def _make_desk_send(self, actor_id: str):
        def send(frame):
            self._channel_send(actor_id, "req", frame)
            return None  # responses arrive asynchronously

        return send

    def _channel_send(self, actor_id: str, direction: str, frame) -> None:
        self.metrics["frames_sent"] += 1
        if self.link_down[actor_id]:
            self.metrics["frames_lost"] += 1
            return
        if self.rng.random() < self.profile.loss_prob:
            self.metrics["frames_lost"] += 1
            return
        deliveries = 1
        if self.rng.random() < self.profile.dup_prob:
            deliveries = 2
            self.metrics["frames_duplicated"] += 1
        for _ in range(deliveries):
            lo, hi = self.profile.latency_ms
            delay = self.rng.uniform(lo, hi)
            if self.rng.random() < self.profile.reorder_prob:
                delay += self.rng.uniform(0, hi + REORDER_EXTRA_MS)
            self._push(self.now_ms + int(delay) + 1, f"deliver_{direction}",
                       (actor_id, frame))

    def _deliver_request(self, actor_id: str, frame) -> None:
        if self.link_down[actor_id]:
            self.metrics["frames_lost"] += 1
            return
        self.metrics["frames_delivered"] += 1
        response = self.hub.handle_sync(self.doc.doc_id, frame)
        if response.reset is not None:
            self.metrics["resets"] += 1
            self._log(actor_id, "server_reset")
        self._channel_send(actor_id, "resp", response)

    def _deliver_response(self, actor_id: str, frame) -> None:
        if self.link_down[actor_id]:
            self.metrics["frames_lost"] += 1
            return
        self.metrics["frames_delivered"] += 1
        self.desks[actor_id].client.receive(frame)

    # -- desk behavior -------------------------------------------------------

    def _desk_sync(self, actor_id: str) -> None:
        self.metrics["desk_syncs"] += 1
        self.desks[actor_id].client.sync()

    def _cadence(self, actor_id: str) -> None:
        if self.stopped:
            return
        self._desk_sync(actor_id)
        self._push(self.now_ms + self.scenario.cadence_ms, "cadence", actor_id)

    # -- scripted steps ------------------------------------------------------

    def _resolve_task(self, actor_id: str, args: dict) -> str:
        ref = args.get("ref")
        if ref is not None:
            try:
                return self.task_refs[ref]
            except KeyError:
                raise ScenarioParseError(f"unknown task ref {ref!r}") from None
        try:
            return self.latest_task[actor_id]
        except KeyError:
            raise ScenarioParseError(
                f"no task on record for actor {actor_id!r}"
            ) from None

    def _desk_edit(self, actor_id: str, args: dict) -> None:
        client = self.desks[actor_id].client
        client.edit(apply_edit_args(client.text, args))

    def _run_step(self, step: Step) -> None:
        self._steps_left -= 1
        actor_id = step.actor
        action = step.action
        args = step.args
        kind = ("desktop" if actor_id in self.desks else "mobile")

        if action is StepAction.CHANNEL_DOWN:
            self.link_down[actor_id] = True
            self._log(actor_id, "channel_down")
            return
        if action is StepAction.CHANNEL_UP:
            self.link_down[actor_id] = False
            self._log(actor_id, "channel_up")
            return

        if kind == "desktop":
            if action is StepAction.EDIT:
                self._desk_edit(actor_id, args)
                self.last_content_step_ms = self.now_ms
                self._log(actor_id, "edit")
            elif action is StepAction.SYNC:
                self._desk_sync(actor_id)
                self._log(actor_id, "sync")
            elif action is StepAction.ASSIGN:
                owner_actor = args.get("owner")
                session = self.mobiles.get(owner_actor)
                if session is None:
                    raise ScenarioParseError(
                        f"ASSIGN owner must be a mobile actor, got {owner_actor!r}"
                    )
                task, _lock = self.hub.assign_task(
                    self.doc.doc_id, int(args["start"]), int(args["end"]),
                    str(args.get("description", "task")), session.user_id,
                )
                if "ref" in args:
                    self.task_refs[str(args["ref"])] = task.task_id
                self.latest_task[owner_actor] = task.task_id
                self.latest_task[actor_id] = task.task_id
                self.last_content_step_ms = self.now_ms
                self._log(actor_id, "assign", owner=owner_actor,
                          description=task.description)
            elif action is StepAction.REVOKE:
                task_id = self._resolve_task(actor_id, args)
                self.hub.revoke_lock(task_id)
                self._log(actor_id, "revoke")
            else:
                raise ScenarioParseError(
                    f"action {action.value} not valid for desktop actors"
                )
            return

        session = self.mobiles[actor_id]
        if action is StepAction.EDIT:
            task_id = self._resolve_task(actor_id, args)
            session.edit_notes(task_id, str(args.get("notes", "")))
            self._log(actor_id, "draft")
        elif action is StepAction.COMMIT:
            task_id = self._resolve_task(actor_id, args)
            if "notes" in args:
                session.edit_notes(task_id, str(args["notes"]))
            session.sync_now(task_id)
            self.last_content_step_ms = self.now_ms
            self._log(actor_id, "commit")
        elif action is StepAction.SYNC:
            session.sync_now()
            self._log(actor_id, "sync")
        elif action is StepAction.DISMISS:
            task_id = self._resolve_task(actor_id, args)
            try:
                session.dismiss(task_id)
            except ChannelDown:
                self._log(actor_id, "dismiss_failed")
                return
            self._log(actor_id, "dismiss")
        elif action is StepAction.TICK:
            session.auto_sync_tick(self.now_ms / 1000.0)
            self._log(actor_id, "tick")
        else:
            raise ScenarioParseError(
                f"action {action.value} not valid for mobile actors"
            )

    # -- quiescence ----------------------------------------------------------

    def _frames_in_flight(self) -> bool:
        return any(kind.startswith("deliver") for _, _, kind, _ in self._queue)

    def _texts_equal(self) -> bool:
        server = self.hub.get_document(self.doc.doc_id).text
        return all(d.client.text == server for d in self.desks.values())

    def _quiescent(self) -> bool:
        if self._steps_left or self._frames_in_flight():
            return False
        if not self._texts_equal():
            return False
        server = self.hub.get_document(self.doc.doc_id).text
        actor = self.hub._actor(self.doc.doc_id)
        for desk_id, desk in self.desks.items():
            if not desk.client.idle or desk.client.want_reset:
                return False
            server_session = actor.sessions.get(desk_id)
            if server_session is not None and server_session.shadow != server:
                return False
        return True

    def _after_event(self) -> None:
        if self._texts_equal():
            if self.texts_equal_since is None:
                self.texts_equal_since = self.now_ms
        else:
            self.texts_equal_since = None
        if not self.stopped and self._quiescent():
            self.stopped = True

    # -- main loop -----------------------------------------------------------

    def run(self) -> Transcript:
        self._after_event()
        while self._queue and not self.stopped:
            at_ms, _seq, kind, payload = heapq.heappop(self._queue)
            if at_ms > self.scenario.horizon_ms:
                break
            self.now_ms = at_ms
            if kind == "step":
                self._run_step(payload)
            elif kind == "cadence":
                self._cadence(payload)
            elif kind == "deliver_req":
                self._deliver_request(*payload)
            elif kind == "deliver_resp":
                self._deliver_response(*payload)
            self._after_event()

        converged = self.stopped and self._texts_equal()
        self.metrics["client_resets"] = sum(
            d.client.resets for d in self.desks.values()
        )
        convergence_ms = self.texts_equal_since if converged else None
        return Transcript(
            converged=converged,
            non_quiescent=not converged,
            convergence_ms=convergence_ms,
            final_texts={aid: d.client.text for aid, d in self.desks.items()},
            server_text=self.hub.get_document(self.doc.doc_id).text,
            mobile_drafts={
                aid: {
                    # Keyed by task description: scenario-authored and stable,
                    # unlike generated task ids, so transcripts stay identical
                    # across runs.
                    self.hub.service.require_task(tid).description: draft.notes
                    for tid, draft in session.drafts.items()
                }
                for aid, session in self.mobiles.items()
            },
            events=self.events,
            metrics=dict(self.metrics),
        )


def run_scenario(scenario: Scenario, profile: FaultProfile) -> Transcript:
    return _Simulation(scenario, profile).run()


# ---------------------------------------------------------------------------
# random-scenario builder (drives the convergence soak tests)


def build_random_scenario(
    n_desks: int = 3,
    edits_per_desk: int = 200,
    seed: int = 0,
    cadence_ms: int = DEFAULT_CADENCE_MS,
    horizon_ms: int = 600_000,
    step_ms: int = 100,
) -> Scenario:
    """Random typing from several desks: inserts and deletes at random spots.

    The edit stream is derived from ``seed`` alone; the fault profile has its
    own seed, so channel behavior and workload vary independently.
    """
    rng = random.Random(seed)
    actors = [Actor(f"desk-{i + 1}", "desktop") for i in range(n_desks)]
    alphabet = "abcdefghijklmnopqrstuvwxyz QRSTUVWXYZ.,;:!?-\n"
    steps = []
    at = cadence_ms  # let the first sync round land before typing starts
    remaining = {actor.actor_id: edits_per_desk for actor in actors}
    while any(remaining.values()):
        candidates = [a for a, n in remaining.items() if n]
        actor_id = rng.choice(candidates)
        remaining[actor_id] -= 1
        if rng.random() < 0.7:
            text = "".join(
                rng.choice(alphabet) for _ in range(rng.randint(1, 8))
            )
            args = {"insert": {"frac": rng.random(), "text": text}}
        else:
            args = {"delete": {"frac": rng.random(),
                               "len": rng.randint(1, 6)}}
        steps.append(Step(at, actor_id, StepAction.EDIT, args))
        at += rng.randint(0, step_ms)
    return Scenario(actors=actors, horizon_ms=horizon_ms, steps=steps,
                    cadence_ms=cadence_ms)
