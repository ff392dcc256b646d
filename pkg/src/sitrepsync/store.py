"""Document lifecycle, sitrep templates, and durable persistence.

Each document persists as a snapshot file plus an append-only command log.
Snapshots are written atomically (temp file, then rename) and carry a CRC32C
checksum; the log holds one JSON record per applied command so that replaying
it reproduces the live text and lock set, which doubles as a recovery path
after a crash.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .locks import (
    MobileLock,
    adjust_locks,
    commit_lock_content,
    dismiss_lock,
    lock_from_json,
    lock_to_json,
    revoke_lock,
)
from .textops import apply_strict, decode_script, encode_script
from .util import crc32c, new_id, parse_rfc3339, rfc3339

MAX_TEXT_BYTES = 1_048_576


class StoreError(Exception):
    pass


class UnknownTemplate(StoreError):
    pass


class UnknownDocument(StoreError):
    pass


class CorruptSnapshot(StoreError):
    pass


class StorageUnavailable(StoreError):
    pass


@dataclass(frozen=True)
class SitrepTemplate:
    template_id: str
    title: str
    sections: tuple[tuple[str, str], ...]

    def render(self) -> str:
        return "".join(
            f"{heading}:\n{placeholder}\n\n"
            for heading, placeholder in self.sections
        )


SITREP_HEADINGS = (
    "Report version number",
    "Date and time",
    "Type of incident",
    "Location of incident",
    "Contact details",
    "Casualties",
    "Situation and damage",
    "Actions in progress",
    "Assistance required",
    "Future intentions",
    "Prognosis",
)

TEMPLATES: dict[str, SitrepTemplate] = {
    "sitrep-au": SitrepTemplate(
        "sitrep-au",
        "Situation report",
        tuple((heading, "TBD") for heading in SITREP_HEADINGS),
    ),
}


@dataclass
class Document:
    doc_id: str
    text: str = ""
    locks: list[MobileLock] = field(default_factory=list)
    revision: int = 0
    created_at: float = 0.0
    template_id: str | None = None


class CommandKind(str, Enum):
    SYNC = "sync"
    LOCK_ACQUIRE = "lock_acquire"
    LOCK_COMMIT = "lock_commit"
    LOCK_REVOKE = "lock_revoke"
    LOCK_DISMISS = "lock_dismiss"
    TASK_SYNC = "task_sync"


@dataclass(frozen=True)
class CommandRecord:
    revision: int
    kind: CommandKind
    payload: dict


def _canonical(body: dict) -> bytes:
    return json.dumps(
        body, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def document_to_json(doc: Document) -> dict:
    """Wire shape for a document snapshot (checksum-free)."""
    return _snapshot_body(doc)


def _snapshot_body(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "text": doc.text,
        "locks": [lock_to_json(k) for k in doc.locks],
        "revision": doc.revision,
        "created_at": rfc3339(doc.created_at),
        "template_id": doc.template_id,
    }


def apply_record(
    text: str, locks: list[MobileLock], record: CommandRecord
) -> str:
    """Re-execute one logged command against (text, locks); returns new text.

    The lock list is mutated in place.  Used both for full-log replay and for
    rolling a lagging snapshot forward after a restart.
    """
    payload = record.payload
    if record.kind is CommandKind.SYNC:
        script = decode_script(payload["script"])
        text = apply_strict(text, script)
        adjust_locks(locks, script)
    elif record.kind is CommandKind.LOCK_ACQUIRE:
        locks.append(lock_from_json(payload["lock"]))
    elif record.kind in (CommandKind.LOCK_COMMIT, CommandKind.TASK_SYNC):
        lock_id = payload["lock"]
        lock = next(k for k in locks if k.lock_id == lock_id)
        if payload["notes"] is None:
            # Heartbeat: freshness only, no content splice.
            lock.last_sync_at = parse_rfc3339(payload["at"])
        else:
            text, _ = commit_lock_content(
                text, locks, lock_id, payload["notes"], lock.owner,
                parse_rfc3339(payload["at"]),
            )
    elif record.kind is CommandKind.LOCK_REVOKE:
        revoke_lock(locks, payload["lock"])
    elif record.kind is CommandKind.LOCK_DISMISS:
        lock_id = payload["lock"]
        owner = next(k.owner for k in locks if k.lock_id == lock_id)
        dismiss_lock(locks, lock_id, owner)
    else:  # pragma: no cover - enum is exhaustive
        raise StoreError(f"unknown command kind {record.kind}")
    return text


class DocumentStore:
    """Filesystem-backed store: one snapshot + one log file per document."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc

    # -- paths --------------------------------------------------------------

    def _snapshot_path(self, doc_id: str) -> Path:
        return self.root / f"{doc_id}.snapshot.json"

    def _log_path(self, doc_id: str) -> Path:
        return self.root / f"{doc_id}.log.ndjson"

    # -- documents ----------------------------------------------------------

    def create_document(
        self, template_id: str | None = None, now: float = 0.0
    ) -> Document:
        if template_id is not None and template_id not in TEMPLATES:
            raise UnknownTemplate(f"no template {template_id!r}")
        text = TEMPLATES[template_id].render() if template_id else ""
        doc = Document(
            doc_id=new_id("doc"),
            text=text,
            revision=0,
            created_at=now,
            template_id=template_id,
        )
        self.persist(doc)
        return doc

    def persist(self, doc: Document) -> None:
        if len(doc.text.encode("utf-8")) > MAX_TEXT_BYTES:
            raise StoreError("document exceeds the 1 MiB text limit")
        body = _snapshot_body(doc)
        body["checksum"] = f"{crc32c(_canonical(_snapshot_body(doc))):08x}"
        path = self._snapshot_path(doc.doc_id)
        tmp = path.with_suffix(".json.tmp")
        try:
            tmp.write_text(
                json.dumps(body, ensure_ascii=False, indent=0), encoding="utf-8"
            )
            os.replace(tmp, path)
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc

    def load(self, doc_id: str) -> Document:
        path = self._snapshot_path(doc_id)
        if not path.exists():
            raise UnknownDocument(f"no document {doc_id!r}")
        try:
            raw = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc
        try:
            body = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CorruptSnapshot(f"unreadable snapshot for {doc_id}") from exc
        stored_sum = body.pop("checksum", None)
        actual = f"{crc32c(_canonical(body)):08x}"
        if stored_sum != actual:
            raise CorruptSnapshot(
                f"checksum mismatch for {doc_id}: {stored_sum} != {actual}"
            )
        return Document(
            doc_id=body["doc_id"],
            text=body["text"],
            locks=[lock_from_json(item) for item in body["locks"]],
            revision=body["revision"],
            created_at=parse_rfc3339(body["created_at"]),
            template_id=body.get("template_id"),
        )

    def list_documents(self) -> list[str]:
        return sorted(
            p.name.removesuffix(".snapshot.json")
            for p in self.root.glob("*.snapshot.json")
        )

    # -- history ------------------------------------------------------------

    def history_append(self, doc_id: str, record: CommandRecord) -> None:
        line = json.dumps(
            {
                "rev": record.revision,
                "kind": record.kind.value,
                "payload": record.payload,
            },
            ensure_ascii=False,
        )
        try:
            with open(self._log_path(doc_id), "a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()
                os.fsync(handle.fileno())
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc

    def history_read(self, doc_id: str) -> list[CommandRecord]:
        path = self._log_path(doc_id)
        if not path.exists():
            return []
        records = []
        try:
            for line in path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                item = json.loads(line)
                records.append(
                    CommandRecord(
                        item["rev"], CommandKind(item["kind"]), item["payload"]
                    )
                )
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc
        return records

    # -- replay and recovery ------------------------------------------------

    def replay(self, doc_id: str) -> Document:
        """Rebuild the document from its creation baseline plus the full log."""
        snapshot = self.load(doc_id)
        text = (
            TEMPLATES[snapshot.template_id].render()
            if snapshot.template_id
            else ""
        )
        locks: list[MobileLock] = []
        revision = 0
        for record in self.history_read(doc_id):
            text = apply_record(text, locks, record)
            revision = record.revision
        return Document(
            doc_id=doc_id,
            text=text,
            locks=locks,
            revision=revision,
            created_at=snapshot.created_at,
            template_id=snapshot.template_id,
        )

    def recover(self, doc_id: str) -> Document:
        """Load the snapshot, then roll forward any log records it lags."""
        doc = self.load(doc_id)
        for record in self.history_read(doc_id):
            if record.revision > doc.revision:
                doc.text = apply_record(doc.text, doc.locks, record)
                doc.revision = record.revision
        return doc

    # -- sidecar state (service-level, non-document) ------------------------

    def save_state(self, name: str, data: dict) -> None:
        path = self.root / f"{name}.state.json"
        tmp = path.with_suffix(".json.tmp")
        try:
            tmp.write_text(
                json.dumps(data, ensure_ascii=False, indent=0), encoding="utf-8"
            )
            os.replace(tmp, path)
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc

    def load_state(self, name: str) -> dict:
        path = self.root / f"{name}.state.json"
        if not path.exists():
            return {}
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise StorageUnavailable(str(exc)) from exc


class MemoryStore(DocumentStore):
    """Store interface on plain dicts: no disk, no fsync.

    Used by the network simulator, where thousands of tiny commands per run
    would otherwise be dominated by filesystem flushes.  Durability behavior
    has its own tests against the filesystem store.
    """

    def __init__(self):  # deliberately no super().__init__ — no root dir
        self._snapshots: dict[str, dict] = {}
        self._logs: dict[str, list[CommandRecord]] = {}
        self._states: dict[str, dict] = {}

    def persist(self, doc: Document) -> None:
        if len(doc.text.encode("utf-8")) > MAX_TEXT_BYTES:
            raise StoreError("document exceeds the 1 MiB text limit")
        self._snapshots[doc.doc_id] = _snapshot_body(doc)

    def load(self, doc_id: str) -> Document:
        if doc_id not in self._snapshots:
            raise UnknownDocument(f"no document {doc_id!r}")
        body = self._snapshots[doc_id]
        return Document(
            doc_id=body["doc_id"],
            text=body["text"],
            locks=[lock_from_json(item) for item in body["locks"]],
            revision=body["revision"],
            created_at=parse_rfc3339(body["created_at"]),
            template_id=body["template_id"],
        )

    def list_documents(self) -> list[str]:
        return sorted(self._snapshots)

    def history_append(self, doc_id: str, record: CommandRecord) -> None:
        self._logs.setdefault(doc_id, []).append(record)

    def history_read(self, doc_id: str) -> list[CommandRecord]:
        return list(self._logs.get(doc_id, []))

    def save_state(self, name: str, data: dict) -> None:
        self._states[name] = data

    def load_state(self, name: str) -> dict:
        return self._states.get(name, {})


def encode_sync_record(revision: int, script) -> CommandRecord:
    return CommandRecord(
        revision, CommandKind.SYNC, {"script": encode_script(script)}
    )
