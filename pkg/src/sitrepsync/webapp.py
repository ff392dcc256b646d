"""HTTP/WebSocket surface over the hub.

Routes never hold consistency logic; they decode JSON, call the hub, and map
domain errors onto statuses: 404 unknown ids, 409 overlap/terminal-state
conflicts, 403 wrong owner, 422 malformed input. Desktop editors may sync
over a persistent WebSocket or plain POST with the same frame format.
"""

from __future__ import annotations

from typing import Optional

from fastapi import Body, FastAPI, Header, Query, Request, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .core import Hub, ProtocolError
from .diffsync import decode_payload, encode_payload
from .locks import (
    EmptySelection,
    LockNotActive,
    NotOwner,
    OverlapsExistingLock,
    RangeOutOfBounds,
    UnknownLock,
    lock_to_json,
)
from .store import (
    StorageUnavailable,
    UnknownDocument,
    UnknownTemplate,
    document_to_json,
)
from .tasks import (
    BadLocation,
    UnknownTask,
    UnknownUser,
    notification_to_json,
    task_to_json,
    user_to_json,
)
from .util import parse_rfc3339

_NOT_FOUND = (UnknownDocument, UnknownTemplate, UnknownLock, UnknownTask,
              UnknownUser)
_CONFLICT = (OverlapsExistingLock, LockNotActive)
_FORBIDDEN = (NotOwner,)
_UNPROCESSABLE = (EmptySelection, RangeOutOfBounds, BadLocation, ProtocolError)


class _BadRequest(Exception):
    """Schema problem in a request body; mapped to 422."""


def _error_body(exc: Exception) -> dict:
    body = {"error": str(exc)}
    if isinstance(exc, LockNotActive) and exc.state is not None:
        body["task_state"] = exc.state
    if isinstance(exc, ProtocolError):
        body["hint"] = "reinitialize session"
    return body


def _require_str(data: dict, key: str) -> str:
    value = data.get(key)
    if not isinstance(value, str) or not value:
        raise _BadRequest(f"'{key}' must be a non-empty string")
    return value


def _require_int(data: dict, key: str) -> int:
    value = data.get(key)
    if not isinstance(value, int) or isinstance(value, bool):
        raise _BadRequest(f"'{key}' must be an integer")
    return value


def _parse_location(raw: object) -> Optional[tuple[float, float]]:
    if raw is None:
        return None
    if (not isinstance(raw, dict) or not isinstance(raw.get("lat"), (int, float))
            or not isinstance(raw.get("lon"), (int, float))):
        raise _BadRequest("'location' must be {\"lat\": .., \"lon\": ..} or null")
    return (float(raw["lat"]), float(raw["lon"]))


def _parse_since(raw: Optional[str]) -> float:
    if raw is None or raw == "":
        return 0.0
    try:
        return float(raw)
    except ValueError:
        pass
    try:
        return parse_rfc3339(raw)
    except ValueError:
        raise _BadRequest("'since' must be epoch seconds or an RFC 3339 time")


def _caller(authorization: Optional[str], body: Optional[dict] = None) -> str:
    """Stub identity: bearer token is the user id; body 'user' also accepted."""
    if authorization and authorization.lower().startswith("bearer "):
        token = authorization[7:].strip()
        if token:
            return token
    if body is not None and isinstance(body.get("user"), str) and body["user"]:
        return body["user"]
    raise _BadRequest("caller identity required (bearer token or 'user' field)")


def create_app(hub: Hub) -> FastAPI:
    # The API itself owns /docs, so the interactive docs UI must move aside.
    app = FastAPI(title="sitrepsync", docs_url=None, redoc_url=None,
                  openapi_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"],
    )

    def _handler(status: int):
        async def handle(_request: Request, exc: Exception) -> JSONResponse:
            return JSONResponse(_error_body(exc), status_code=status)

        return handle

    for exc_type in _NOT_FOUND:
        app.add_exception_handler(exc_type, _handler(404))
    for exc_type in _CONFLICT:
        app.add_exception_handler(exc_type, _handler(409))
    for exc_type in _FORBIDDEN:
        app.add_exception_handler(exc_type, _handler(403))
    for exc_type in _UNPROCESSABLE:
        app.add_exception_handler(exc_type, _handler(422))
    app.add_exception_handler(_BadRequest, _handler(422))
    app.add_exception_handler(StorageUnavailable, _handler(503))

    # -- users ---------------------------------------------------------------

    @app.post("/users", status_code=201)
    def register_user(body: dict = Body(...)) -> dict:
        return user_to_json(hub.register_user(_require_str(body, "display_name")))

    # -- documents -----------------------------------------------------------

    @app.post("/docs", status_code=201)
    def create_doc(body: Optional[dict] = Body(None)) -> dict:
        template = (body or {}).get("template")
        if template is not None and not isinstance(template, str):
            raise _BadRequest("'template' must be a string when present")
        doc = hub.create_document(template)
        return {"doc_id": doc.doc_id}

    @app.get("/docs")
    def list_docs() -> dict:
        return {"docs": hub.list_documents()}

    @app.get("/docs/{doc_id}")
    def get_doc(doc_id: str) -> dict:
        return document_to_json(hub.get_document(doc_id))

    # -- desktop sync --------------------------------------------------------

    @app.post("/docs/{doc_id}/sync")
    def sync_doc(doc_id: str, body: dict = Body(...)) -> dict:
        try:
            payload = decode_payload(body)
        except ValueError as exc:
            raise ProtocolError(str(exc)) from exc
        return encode_payload(hub.handle_sync(doc_id, payload))

    @app.websocket("/docs/{doc_id}/sync")
    async def sync_doc_ws(websocket: WebSocket, doc_id: str) -> None:
        await websocket.accept()
        try:
            while True:
                raw = await websocket.receive_json()
                try:
                    payload = decode_payload(raw)
                except ValueError as exc:
                    await websocket.send_json(
                        {"error": str(exc), "hint": "reinitialize session"}
                    )
                    continue
                try:
                    response = hub.handle_sync(doc_id, payload)
                except UnknownDocument as exc:
                    await websocket.send_json({"error": str(exc)})
                    await websocket.close(code=4404)
                    return
                await websocket.send_json(encode_payload(response))
        except WebSocketDisconnect:
            return

    # -- locks / task assignment --------------------------------------------

    @app.post("/docs/{doc_id}/locks", status_code=201)
    def acquire(doc_id: str, body: dict = Body(...)) -> dict:
        start = _require_int(body, "start")
        end = _require_int(body, "end")
        description = _require_str(body, "description")
        owner = _require_str(body, "owner")
        _task, lock = hub.assign_task(doc_id, start, end, description, owner)
        return lock_to_json(lock)

    @app.delete("/locks/{lock_id}")
    def revoke(lock_id: str) -> dict:
        return task_to_json(hub.revoke_lock(lock_id))

    @app.post("/locks/{lock_id}/dismiss")
    def dismiss(lock_id: str, body: Optional[dict] = Body(None),
                authorization: Optional[str] = Header(None)) -> dict:
        return task_to_json(hub.dismiss_lock(lock_id, _caller(authorization, body)))

    # -- mobile tasks --------------------------------------------------------

    @app.get("/tasks")
    def tasks(user: str = Query(...)) -> list[dict]:
        return [task_to_json(t) for t in hub.list_tasks(user)]

    @app.post("/tasks/{task_id}/sync")
    def sync_task(task_id: str, body: dict = Body(...),
                  authorization: Optional[str] = Header(None)) -> dict:
        if "task" in body and body["task"] != task_id:
            raise _BadRequest("body 'task' does not match the path task id")
        notes = body.get("notes")
        if notes is not None and not isinstance(notes, str):
            raise _BadRequest("'notes' must be a string or null")
        key = body.get("idempotency_key")
        if key is not None and not isinstance(key, str):
            raise _BadRequest("'idempotency_key' must be a string when present")
        location = _parse_location(body.get("location"))
        caller = _caller(authorization, body)
        return hub.sync_task(task_id, caller, notes, location,
                             idempotency_key=key)

    @app.get("/notifications")
    def notifications(user: str = Query(...),
                      since: Optional[str] = Query(None)) -> list[dict]:
        return [
            notification_to_json(n)
            for n in hub.poll_notifications(user, _parse_since(since))
        ]

    @app.get("/docs/{doc_id}/presence")
    def presence(doc_id: str) -> list[dict]:
        return [user_to_json(u) for u in hub.presence(doc_id)]

    return app
